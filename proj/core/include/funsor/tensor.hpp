#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "funsor/domains.hpp"
#include "funsor/ops.hpp"

namespace funsor {

// A dense array of 64-bit floats indexed by named bounded-integer inputs, with
// trailing axes for an array-valued output. Values of a bounded output are
// stored as integral doubles.
//
// The data lives in one shared buffer; slices, permutations, renames and
// broadcasts are strided views over it.
class TensorAtom {
 public:
  TensorAtom();
  // Contiguous row-major data over (inputs..., output shape...).
  TensorAtom(TypeContext inputs, Domain output, std::vector<double> data);

  static TensorAtom scalar(double value);
  static TensorAtom filled(TypeContext inputs, Domain output, double value);
  // (v:Z_n) -> Z_n, the identity on its input.
  static TensorAtom arange(const Name& v, std::int64_t n);
  // Ground bounded-integer value.
  static TensorAtom index_value(std::int64_t value, std::int64_t bound);

  const TypeContext& inputs() const { return inputs_; }
  const Domain& output() const { return output_; }

  std::size_t batch_ndim() const { return inputs_.size(); }
  std::size_t ndim() const { return strides_.size(); }
  // Batch extents followed by the output shape.
  std::vector<std::int64_t> shape() const;
  std::vector<std::int64_t> batch_shape() const;
  std::int64_t numel() const;
  std::int64_t batch_numel() const;
  std::int64_t output_numel() const;
  const std::vector<std::ptrdiff_t>& strides() const { return strides_; }
  std::ptrdiff_t offset() const { return offset_; }
  const double* base() const { return buffer_->data(); }
  const std::shared_ptr<const std::vector<double>>& buffer() const { return buffer_; }

  double at(std::span<const std::int64_t> index) const;
  // Value of a ground scalar.
  double item() const;
  // Row-major copy of all elements.
  std::vector<double> values() const;
  bool is_contiguous() const;
  TensorAtom contiguous() const;
  bool shares_buffer_with(const TensorAtom& other) const { return buffer_ == other.buffer_; }

  // Zero-copy renaming of one input.
  TensorAtom rename(const Name& from, const Name& to) const;

  // Internal constructor for views.
  TensorAtom(TypeContext inputs, Domain output, std::shared_ptr<const std::vector<double>> buffer,
             std::ptrdiff_t offset, std::vector<std::ptrdiff_t> strides);

 private:
  TypeContext inputs_;
  Domain output_;
  std::shared_ptr<const std::vector<double>> buffer_;
  std::ptrdiff_t offset_ = 0;
  std::vector<std::ptrdiff_t> strides_;
};

// A strided view with explicit extents, used for broadcast-ready operands.
struct StridedView {
  std::shared_ptr<const std::vector<double>> owner;
  std::ptrdiff_t offset = 0;
  std::vector<std::int64_t> shape;
  std::vector<std::ptrdiff_t> strides;
};

struct Aligned {
  TypeContext inputs;
  StridedView lhs;
  StridedView rhs;
};

// Permutes and unit-extends both operands over the union of their inputs.
Aligned align(const TensorAtom& a, const TensorAtom& b);

// Zero-copy view of t over a larger context (missing axes get stride 0).
TensorAtom broadcast_to(const TensorAtom& t, const TypeContext& inputs);

TensorAtom tensor_apply(LiftedOp op, std::span<const TensorAtom> args);
TensorAtom tensor_apply(LiftedOp op, const TensorAtom& a);
TensorAtom tensor_apply(LiftedOp op, const TensorAtom& a, const TensorAtom& b);

TensorAtom tensor_reduce(ReduceOp op, const TensorAtom& t, const Name& v);

// Simultaneous gather: every bound input is replaced by the values of its
// index tensor. Unknown names are ignored.
struct IndexBinding {
  Name name;
  TensorAtom index;
};
TensorAtom tensor_index(const TensorAtom& t, std::span<const IndexBinding> bindings);
TensorAtom tensor_index(const TensorAtom& t, const Name& v, const TensorAtom& index);

// Strided slice along input v (zero-copy). The input keeps its name.
TensorAtom tensor_slice(const TensorAtom& t, const Name& v, std::int64_t start, std::int64_t stop,
                        std::int64_t stride);
TensorAtom tensor_cat(const Name& over, std::span<const TensorAtom> parts);

// Number of elements in range(start, stop, stride).
std::int64_t slice_length(std::int64_t start, std::int64_t stop, std::int64_t stride);

double log_sum_exp(std::span<const double> xs);

// For every row-major position over `full`, the row-major position of the
// matching element over `sub` (a subset of `full`).
std::vector<std::int64_t> flat_index_map(const TypeContext& full, const TypeContext& sub);

}  // namespace funsor
