#pragma once

#include "funsor/domains.hpp"
#include "funsor/tensor.hpp"

namespace funsor {

// A point mass at `point` for variable `name`, normalized to integrate (or sum)
// to one. The point may be batched over bounded variables other than `name`.
class DeltaAtom {
 public:
  DeltaAtom(Name name, TensorAtom point);

  const Name& name() const { return name_; }
  const TensorAtom& point() const { return point_; }
  const Domain& domain() const { return point_.output(); }
  // Batch variables of the point followed by the delta's own variable.
  TypeContext inputs() const;

 private:
  Name name_;
  TensorAtom point_;
};

// Log-density of a bounded delta at `value`: 0 where value equals the point,
// -inf elsewhere.
TensorAtom delta_indicator(const DeltaAtom& d, const TensorAtom& value);

DeltaAtom delta_index_batch(const DeltaAtom& d, std::span<const IndexBinding> bindings);
DeltaAtom delta_rename(const DeltaAtom& d, const Name& to);

}  // namespace funsor
