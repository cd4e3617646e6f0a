#include "funsor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace funsor {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::shared_ptr<const std::vector<double>> make_buffer(std::vector<double> data) {
  stats().buffers_allocated.fetch_add(1, std::memory_order_relaxed);
  stats().elements_allocated.fetch_add(data.size(), std::memory_order_relaxed);
  return std::make_shared<const std::vector<double>>(std::move(data));
}

std::vector<std::ptrdiff_t> row_major_strides(const std::vector<std::int64_t>& shape) {
  std::vector<std::ptrdiff_t> strides(shape.size());
  std::ptrdiff_t acc = 1;
  for (std::size_t k = shape.size(); k-- > 0;) {
    strides[k] = acc;
    acc *= shape[k];
  }
  return strides;
}

std::vector<std::int64_t> full_shape(const TypeContext& inputs, const Domain& output) {
  std::vector<std::int64_t> shape;
  for (const auto& e : inputs) shape.push_back(e.domain.size());
  for (auto s : output.shape()) shape.push_back(s);
  return shape;
}

std::int64_t product(const std::vector<std::int64_t>& xs) {
  return std::accumulate(xs.begin(), xs.end(), std::int64_t{1}, std::multiplies<>());
}

// Visits every multi-index of `shape` in row-major order, passing one flat
// offset per operand.
template <class F>
void for_each_offset(const std::vector<std::int64_t>& shape,
                     const std::vector<const std::vector<std::ptrdiff_t>*>& strides,
                     std::vector<std::ptrdiff_t> offsets, F&& f) {
  const std::size_t nd = shape.size();
  const std::size_t nops = strides.size();
  for (auto s : shape) {
    if (s == 0) return;
  }
  if (nd == 0) {
    f(offsets);
    return;
  }
  std::vector<std::int64_t> idx(nd, 0);
  std::vector<std::ptrdiff_t> inner_stride(nops);
  for (std::size_t n = 0; n < nops; ++n) inner_stride[n] = (*strides[n])[nd - 1];
  const std::int64_t inner = shape[nd - 1];
  std::vector<std::ptrdiff_t> cur(nops);
  while (true) {
    cur = offsets;
    for (std::int64_t k = 0; k < inner; ++k) {
      f(cur);
      for (std::size_t n = 0; n < nops; ++n) cur[n] += inner_stride[n];
    }
    std::ptrdiff_t d = static_cast<std::ptrdiff_t>(nd) - 2;
    for (; d >= 0; --d) {
      ++idx[d];
      for (std::size_t n = 0; n < nops; ++n) offsets[n] += (*strides[n])[d];
      if (idx[d] < shape[d]) break;
      for (std::size_t n = 0; n < nops; ++n) offsets[n] -= (*strides[n])[d] * shape[d];
      idx[d] = 0;
    }
    if (d < 0) break;
  }
}

double log_add_exp(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
  const double m = std::max(a, b);
  if (m == -kInf) return -kInf;
  if (m == kInf) return kInf;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double apply_binary(LiftedOp op, double a, double b) {
  switch (op) {
    case LiftedOp::Add: return a + b;
    case LiftedOp::Sub: return a - b;
    case LiftedOp::Mul: return a * b;
    case LiftedOp::Max: return (std::isnan(a) || std::isnan(b)) ? std::numeric_limits<double>::quiet_NaN() : std::max(a, b);
    case LiftedOp::Min: return (std::isnan(a) || std::isnan(b)) ? std::numeric_limits<double>::quiet_NaN() : std::min(a, b);
    case LiftedOp::LogAddExp: return log_add_exp(a, b);
    default: break;
  }
  fail(ErrorCode::TypeError, "not a binary elementwise op: " + std::string(op_name(op)));
}

double apply_unary(LiftedOp op, double a) {
  switch (op) {
    case LiftedOp::Neg: return -a;
    case LiftedOp::Exp: return std::exp(a);
    case LiftedOp::Log: return std::log(a);  // log(0) = -inf, log(<0) = NaN
    default: break;
  }
  fail(ErrorCode::TypeError, "not a unary op: " + std::string(op_name(op)));
}

// Strides of t mapped onto the axes of `inputs` followed by `out_axes` output
// axes; missing batch axes and a scalar output broadcast with stride 0.
std::vector<std::ptrdiff_t> mapped_strides(const TensorAtom& t, const TypeContext& inputs,
                                           std::size_t out_axes) {
  std::vector<std::ptrdiff_t> s;
  s.reserve(inputs.size() + out_axes);
  for (const auto& e : inputs) {
    auto k = t.inputs().index_of(e.name);
    s.push_back(k ? t.strides()[*k] : 0);
  }
  const std::size_t own_out = t.ndim() - t.batch_ndim();
  for (std::size_t k = 0; k < out_axes; ++k) {
    s.push_back(own_out == out_axes ? t.strides()[t.batch_ndim() + k] : 0);
  }
  return s;
}

TensorAtom finish(TypeContext inputs, Domain output, std::vector<double> data) {
  stats().kernel_calls.fetch_add(1, std::memory_order_relaxed);
  return TensorAtom(std::move(inputs), std::move(output), std::move(data));
}

}  // namespace

// ---------------------------------------------------------------------------
// ops.hpp helpers

int arity(LiftedOp op) {
  switch (op) {
    case LiftedOp::Neg:
    case LiftedOp::Exp:
    case LiftedOp::Log:
      return 1;
    default:
      return 2;
  }
}

std::string_view op_name(LiftedOp op) {
  switch (op) {
    case LiftedOp::Add: return "add";
    case LiftedOp::Sub: return "sub";
    case LiftedOp::Mul: return "mul";
    case LiftedOp::Neg: return "neg";
    case LiftedOp::Exp: return "exp";
    case LiftedOp::Log: return "log";
    case LiftedOp::LogAddExp: return "logaddexp";
    case LiftedOp::Max: return "max";
    case LiftedOp::Min: return "min";
    case LiftedOp::Take: return "take";
  }
  return "?";
}

std::string_view reduce_name(ReduceOp op) {
  switch (op) {
    case ReduceOp::LogSumExp: return "logsumexp";
    case ReduceOp::Add: return "add";
    case ReduceOp::Max: return "max";
  }
  return "?";
}

double reduce_identity(ReduceOp op) {
  return op == ReduceOp::Add ? 0.0 : -kInf;
}

Stats& stats() {
  static Stats s;
  return s;
}

double log_sum_exp(std::span<const double> xs) {
  double m = -kInf;
  for (double x : xs) {
    if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
    m = std::max(m, x);
  }
  if (m == -kInf || m == kInf) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

// ---------------------------------------------------------------------------
// TensorAtom

TensorAtom::TensorAtom() : TensorAtom(TypeContext{}, Domain::real(), std::vector<double>{0.0}) {}

TensorAtom::TensorAtom(TypeContext inputs, Domain output, std::vector<double> data)
    : inputs_(std::move(inputs)), output_(std::move(output)) {
  for (const auto& e : inputs_) {
    if (!e.domain.is_bounded()) {
      fail(ErrorCode::TypeError, "tensor input " + e.name + " must be bounded, got " + e.domain.to_string());
    }
  }
  auto shape = full_shape(inputs_, output_);
  if (static_cast<std::int64_t>(data.size()) != product(shape)) {
    fail(ErrorCode::TypeError, "tensor data has " + std::to_string(data.size()) + " elements but " +
                                   inputs_.to_string() + " -> " + output_.to_string() + " needs " +
                                   std::to_string(product(shape)));
  }
  strides_ = row_major_strides(shape);
  buffer_ = make_buffer(std::move(data));
}

TensorAtom::TensorAtom(TypeContext inputs, Domain output, std::shared_ptr<const std::vector<double>> buffer,
                       std::ptrdiff_t offset, std::vector<std::ptrdiff_t> strides)
    : inputs_(std::move(inputs)),
      output_(std::move(output)),
      buffer_(std::move(buffer)),
      offset_(offset),
      strides_(std::move(strides)) {}

TensorAtom TensorAtom::scalar(double value) {
  return TensorAtom(TypeContext{}, Domain::real(), std::vector<double>{value});
}

TensorAtom TensorAtom::filled(TypeContext inputs, Domain output, double value) {
  auto n = product(full_shape(inputs, output));
  return TensorAtom(std::move(inputs), std::move(output), std::vector<double>(n, value));
}

TensorAtom TensorAtom::arange(const Name& v, std::int64_t n) {
  std::vector<double> data(n);
  std::iota(data.begin(), data.end(), 0.0);
  return TensorAtom(TypeContext{{v, Domain::bint(n)}}, Domain::bint(n), std::move(data));
}

TensorAtom TensorAtom::index_value(std::int64_t value, std::int64_t bound) {
  if (value < 0 || value >= bound) {
    fail(ErrorCode::IndexOutOfRange, std::to_string(value) + " outside ℤ" + std::to_string(bound));
  }
  return TensorAtom(TypeContext{}, Domain::bint(bound), std::vector<double>{static_cast<double>(value)});
}

std::vector<std::int64_t> TensorAtom::shape() const { return full_shape(inputs_, output_); }

std::vector<std::int64_t> TensorAtom::batch_shape() const {
  std::vector<std::int64_t> s;
  for (const auto& e : inputs_) s.push_back(e.domain.size());
  return s;
}

std::int64_t TensorAtom::numel() const { return product(shape()); }
std::int64_t TensorAtom::batch_numel() const { return product(batch_shape()); }
std::int64_t TensorAtom::output_numel() const { return product(output_.shape()); }

double TensorAtom::at(std::span<const std::int64_t> index) const {
  if (index.size() != strides_.size()) fail(ErrorCode::BoundsError, "wrong index rank");
  auto shp = shape();
  std::ptrdiff_t off = offset_;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= shp[k]) fail(ErrorCode::BoundsError, "index out of bounds");
    off += index[k] * strides_[k];
  }
  return (*buffer_)[off];
}

double TensorAtom::item() const {
  if (numel() != 1) fail(ErrorCode::NotClosed, "item() of tensor with inputs " + inputs_.to_string());
  return (*buffer_)[offset_];
}

bool TensorAtom::is_contiguous() const {
  return offset_ == 0 && strides_ == row_major_strides(shape()) &&
         static_cast<std::int64_t>(buffer_->size()) == numel();
}

std::vector<double> TensorAtom::values() const {
  if (is_contiguous()) return *buffer_;
  std::vector<double> out;
  out.reserve(numel());
  const auto* data = buffer_->data();
  for_each_offset(shape(), {&strides_}, {offset_}, [&](const std::vector<std::ptrdiff_t>& o) {
    out.push_back(data[o[0]]);
  });
  return out;
}

TensorAtom TensorAtom::contiguous() const {
  if (is_contiguous()) return *this;
  return TensorAtom(inputs_, output_, values());
}

TensorAtom TensorAtom::rename(const Name& from, const Name& to) const {
  if (from == to || !inputs_.contains(from)) return *this;
  if (inputs_.contains(to)) fail(ErrorCode::TypeConflict, "rename target " + to + " already an input");
  std::vector<ContextEntry> entries = inputs_.entries();
  for (auto& e : entries) {
    if (e.name == from) e.name = to;
  }
  return TensorAtom(TypeContext(std::move(entries)), output_, buffer_, offset_, strides_);
}

// ---------------------------------------------------------------------------
// Alignment and broadcasting


Aligned align(const TensorAtom& a, const TensorAtom& b) {
  Aligned out;
  out.inputs = context_union(a.inputs(), b.inputs());
  auto view_of = [&](const TensorAtom& t) {
    StridedView v;
    v.owner = t.buffer();
    v.offset = t.offset();
    for (const auto& e : out.inputs) {
      auto k = t.inputs().index_of(e.name);
      v.shape.push_back(k ? e.domain.size() : 1);
      v.strides.push_back(k ? t.strides()[*k] : 0);
    }
    for (std::size_t k = t.batch_ndim(); k < t.ndim(); ++k) {
      v.shape.push_back(t.output().shape()[k - t.batch_ndim()]);
      v.strides.push_back(t.strides()[k]);
    }
    return v;
  };
  out.lhs = view_of(a);
  out.rhs = view_of(b);
  return out;
}

TensorAtom broadcast_to(const TensorAtom& t, const TypeContext& inputs) {
  for (const auto& e : t.inputs()) {
    const auto* d = inputs.find(e.name);
    if (!d) fail(ErrorCode::ContextMismatch, "broadcast target lacks input " + e.name);
    if (*d != e.domain) fail(ErrorCode::TypeConflict, "broadcast changes type of " + e.name);
  }
  if (t.inputs() == inputs) return t;
  for (const auto& e : inputs) {
    if (!e.domain.is_bounded()) fail(ErrorCode::TypeError, "tensor inputs must be bounded: " + e.name);
  }
  auto strides = mapped_strides(t, inputs, t.ndim() - t.batch_ndim());
  return TensorAtom(inputs, t.output(), t.buffer(), t.offset(), std::move(strides));
}

// ---------------------------------------------------------------------------
// Elementwise kernels

namespace {

TensorAtom apply_take(const TensorAtom& a, const TensorAtom& b) {
  const auto& ashape = a.output().shape();
  if (!a.output().is_real() || ashape.empty()) {
    fail(ErrorCode::TypeError, "take needs a real array, got " + a.output().to_string());
  }
  if (!b.output().is_bounded() || b.output().size() != ashape[0]) {
    fail(ErrorCode::TypeError, "take index must be ℤ" + std::to_string(ashape[0]) + ", got " +
                                   b.output().to_string());
  }
  TypeContext inputs = context_union(a.inputs(), b.inputs());
  std::vector<std::int64_t> rest(ashape.begin() + 1, ashape.end());
  Domain out_dom = Domain::reals(rest);
  const std::int64_t block = product(rest);
  const std::ptrdiff_t lead_stride = a.strides()[a.batch_ndim()];

  std::vector<std::int64_t> bshape;
  for (const auto& e : inputs) bshape.push_back(e.domain.size());
  auto sa = mapped_strides(a, inputs, 0);
  auto sb = mapped_strides(b, inputs, 0);
  std::vector<std::ptrdiff_t> rest_strides(a.strides().begin() + a.batch_ndim() + 1, a.strides().end());

  std::vector<double> out;
  out.reserve(product(bshape) * block);
  const double* pa = a.base();
  const double* pb = b.base();
  const std::int64_t n = ashape[0];
  for_each_offset(bshape, {&sa, &sb}, {a.offset(), b.offset()}, [&](const std::vector<std::ptrdiff_t>& o) {
    const double raw = pb[o[1]];
    const auto k = static_cast<std::int64_t>(raw);
    if (raw != static_cast<double>(k) || k < 0 || k >= n) {
      fail(ErrorCode::IndexOutOfRange, "take index " + std::to_string(raw) + " outside ℤ" + std::to_string(n));
    }
    const std::ptrdiff_t base = o[0] + k * lead_stride;
    if (rest.empty()) {
      out.push_back(pa[base]);
    } else {
      for_each_offset(rest, {&rest_strides}, {base},
                      [&](const std::vector<std::ptrdiff_t>& r) { out.push_back(pa[r[0]]); });
    }
  });
  return finish(std::move(inputs), std::move(out_dom), std::move(out));
}

}  // namespace

TensorAtom tensor_apply(LiftedOp op, const TensorAtom& a) {
  if (arity(op) != 1) fail(ErrorCode::TypeError, std::string(op_name(op)) + " is not unary");
  if (!a.output().is_real()) {
    fail(ErrorCode::TypeError, std::string(op_name(op)) + " needs a real operand, got " + a.output().to_string());
  }
  std::vector<double> out;
  out.reserve(a.numel());
  const double* p = a.base();
  for_each_offset(a.shape(), {&a.strides()}, {a.offset()},
                  [&](const std::vector<std::ptrdiff_t>& o) { out.push_back(apply_unary(op, p[o[0]])); });
  return finish(a.inputs(), a.output(), std::move(out));
}

TensorAtom tensor_apply(LiftedOp op, const TensorAtom& a, const TensorAtom& b) {
  if (op == LiftedOp::Take) return apply_take(a, b);
  if (arity(op) != 2) fail(ErrorCode::TypeError, std::string(op_name(op)) + " is not binary");
  if (!a.output().is_real() || !b.output().is_real()) {
    fail(ErrorCode::TypeError, std::string(op_name(op)) + " needs real operands, got " + a.output().to_string() +
                                   " and " + b.output().to_string());
  }
  const auto& as = a.output().shape();
  const auto& bs = b.output().shape();
  if (as != bs && !as.empty() && !bs.empty()) {
    fail(ErrorCode::TypeError, std::string(op_name(op)) + " shape mismatch " + a.output().to_string() + " vs " +
                                   b.output().to_string());
  }
  Domain out_dom = as.empty() ? b.output() : a.output();
  TypeContext inputs = context_union(a.inputs(), b.inputs());
  std::vector<std::int64_t> shp = full_shape(inputs, out_dom);
  const std::size_t out_axes = out_dom.shape().size();
  auto sa = mapped_strides(a, inputs, out_axes);
  auto sb = mapped_strides(b, inputs, out_axes);
  std::vector<double> out;
  out.reserve(product(shp));
  const double* pa = a.base();
  const double* pb = b.base();
  for_each_offset(shp, {&sa, &sb}, {a.offset(), b.offset()}, [&](const std::vector<std::ptrdiff_t>& o) {
    out.push_back(apply_binary(op, pa[o[0]], pb[o[1]]));
  });
  return finish(std::move(inputs), std::move(out_dom), std::move(out));
}

TensorAtom tensor_apply(LiftedOp op, std::span<const TensorAtom> args) {
  if (static_cast<int>(args.size()) != arity(op)) {
    fail(ErrorCode::TypeError, std::string(op_name(op)) + " expects " + std::to_string(arity(op)) + " arguments");
  }
  return args.size() == 1 ? tensor_apply(op, args[0]) : tensor_apply(op, args[0], args[1]);
}

// ---------------------------------------------------------------------------
// Reductions

TensorAtom tensor_reduce(ReduceOp op, const TensorAtom& t, const Name& v) {
  auto axis = t.inputs().index_of(v);
  if (!axis) fail(ErrorCode::NameAbsent, "reduce over " + v + " absent from " + t.inputs().to_string());
  if (op != ReduceOp::Max && !t.output().is_real()) {
    fail(ErrorCode::TypeError, "cannot reduce a bounded-valued tensor with " + std::string(reduce_name(op)));
  }
  TypeContext inputs = context_remove(t.inputs(), v);
  std::vector<std::int64_t> shp = full_shape(inputs, t.output());
  std::vector<std::ptrdiff_t> s;
  for (std::size_t k = 0; k < t.ndim(); ++k) {
    if (k != *axis) s.push_back(t.strides()[k]);
  }
  const std::int64_t n = t.inputs()[*axis].domain.size();
  const std::ptrdiff_t step = t.strides()[*axis];
  const double* p = t.base();
  std::vector<double> out;
  out.reserve(product(shp));
  std::vector<double> buf(n);
  for_each_offset(shp, {&s}, {t.offset()}, [&](const std::vector<std::ptrdiff_t>& o) {
    for (std::int64_t k = 0; k < n; ++k) buf[k] = p[o[0] + k * step];
    switch (op) {
      case ReduceOp::LogSumExp:
        out.push_back(log_sum_exp(buf));
        break;
      case ReduceOp::Add: {
        double acc = 0.0;
        for (double x : buf) acc += x;
        out.push_back(acc);
        break;
      }
      case ReduceOp::Max: {
        double m = -kInf;
        for (double x : buf) {
          if (std::isnan(x)) {
            m = x;
            break;
          }
          m = std::max(m, x);
        }
        out.push_back(m);
        break;
      }
    }
  });
  return finish(std::move(inputs), t.output(), std::move(out));
}

// ---------------------------------------------------------------------------
// Indexing

namespace {

// A single 1-D index whose values form start + k*step, over a name not already
// present in t, can be served as a strided view.
std::optional<TensorAtom> index_as_view(const TensorAtom& t, const Name& v, const TensorAtom& idx) {
  if (idx.inputs().size() != 1) return std::nullopt;
  const auto& u = idx.inputs()[0];
  if (u.name != v && t.inputs().contains(u.name)) return std::nullopt;
  const std::int64_t m = u.domain.size();
  const std::int64_t bound = t.inputs().at(v).size();
  const double* p = idx.base();
  const std::ptrdiff_t s = idx.strides()[0];
  const double first = p[idx.offset()];
  double step = 0.0;
  if (m > 1) step = p[idx.offset() + s] - first;
  if (first != std::floor(first) || step != std::floor(step) || (m > 1 && step < 1)) return std::nullopt;
  for (std::int64_t k = 0; k < m; ++k) {
    if (p[idx.offset() + k * s] != first + k * step) return std::nullopt;
  }
  const double last = first + (m - 1) * step;
  if (first < 0 || last >= static_cast<double>(bound)) {
    fail(ErrorCode::IndexOutOfRange, "index values outside ℤ" + std::to_string(bound));
  }
  const auto axis = *t.inputs().index_of(v);
  std::vector<ContextEntry> entries = t.inputs().entries();
  entries[axis] = {u.name, u.domain};
  auto strides = t.strides();
  const std::ptrdiff_t off = t.offset() + static_cast<std::ptrdiff_t>(first) * strides[axis];
  strides[axis] *= static_cast<std::ptrdiff_t>(step == 0.0 ? 1 : step);
  if (m == 1) strides[axis] = 0;
  return TensorAtom(TypeContext(std::move(entries)), t.output(), t.buffer(), off, std::move(strides));
}

}  // namespace

TensorAtom tensor_index(const TensorAtom& t, std::span<const IndexBinding> bindings) {
  std::vector<const IndexBinding*> active;
  for (const auto& b : bindings) {
    const auto* d = t.inputs().find(b.name);
    if (!d) continue;
    if (!b.index.output().is_bounded() || b.index.output() != *d) {
      fail(ErrorCode::TypeError, "index for " + b.name + " must have type " + d->to_string() + ", got " +
                                     b.index.output().to_string());
    }
    active.push_back(&b);
  }
  if (active.empty()) return t;
  if (active.size() == 1) {
    if (auto view = index_as_view(t, active[0]->name, active[0]->index)) return *view;
  }

  TypeContext inputs;
  for (const auto& e : t.inputs()) {
    bool bound = std::any_of(active.begin(), active.end(), [&](const IndexBinding* b) { return b->name == e.name; });
    if (!bound) inputs.add(e.name, e.domain);
  }
  for (const auto* b : active) inputs = context_union(inputs, b->index.inputs());

  std::vector<std::int64_t> bshape;
  for (const auto& e : inputs) bshape.push_back(e.domain.size());

  // Operand 0 walks t's remaining axes; operands 1.. walk the index tensors.
  std::vector<std::vector<std::ptrdiff_t>> strides;
  std::vector<std::ptrdiff_t> offsets;
  {
    std::vector<std::ptrdiff_t> s0;
    for (const auto& e : inputs) {
      auto k = t.inputs().index_of(e.name);
      bool bound = k && std::any_of(active.begin(), active.end(), [&](const IndexBinding* b) { return b->name == e.name; });
      s0.push_back(k && !bound ? t.strides()[*k] : 0);
    }
    strides.push_back(std::move(s0));
    offsets.push_back(t.offset());
  }
  std::vector<std::ptrdiff_t> axis_stride;
  std::vector<std::int64_t> axis_bound;
  for (const auto* b : active) {
    strides.push_back(mapped_strides(b->index, inputs, 0));
    offsets.push_back(b->index.offset());
    auto k = *t.inputs().index_of(b->name);
    axis_stride.push_back(t.strides()[k]);
    axis_bound.push_back(t.inputs()[k].domain.size());
  }
  std::vector<const std::vector<std::ptrdiff_t>*> sp;
  for (const auto& s : strides) sp.push_back(&s);

  std::vector<std::int64_t> oshape(t.output().shape().begin(), t.output().shape().end());
  std::vector<std::ptrdiff_t> ostrides(t.strides().begin() + t.batch_ndim(), t.strides().end());
  const double* p = t.base();
  std::vector<double> out;
  out.reserve(product(bshape) * t.output_numel());
  for_each_offset(bshape, sp, offsets, [&](const std::vector<std::ptrdiff_t>& o) {
    std::ptrdiff_t src = o[0];
    for (std::size_t j = 0; j < active.size(); ++j) {
      const double raw = active[j]->index.base()[o[j + 1]];
      const auto k = static_cast<std::int64_t>(raw);
      if (raw != static_cast<double>(k) || k < 0 || k >= axis_bound[j]) {
        fail(ErrorCode::IndexOutOfRange,
             "index " + std::to_string(raw) + " outside ℤ" + std::to_string(axis_bound[j]));
      }
      src += k * axis_stride[j];
    }
    if (oshape.empty()) {
      out.push_back(p[src]);
    } else {
      for_each_offset(oshape, {&ostrides}, {src}, [&](const std::vector<std::ptrdiff_t>& r) { out.push_back(p[r[0]]); });
    }
  });
  return finish(std::move(inputs), t.output(), std::move(out));
}

TensorAtom tensor_index(const TensorAtom& t, const Name& v, const TensorAtom& index) {
  IndexBinding b{v, index};
  return tensor_index(t, std::span<const IndexBinding>(&b, 1));
}

// ---------------------------------------------------------------------------
// Slicing and concatenation

std::int64_t slice_length(std::int64_t start, std::int64_t stop, std::int64_t stride) {
  if (stride < 1) fail(ErrorCode::BoundsError, "slice stride must be >= 1");
  if (stop <= start) return 0;
  return (stop - start + stride - 1) / stride;
}

TensorAtom tensor_slice(const TensorAtom& t, const Name& v, std::int64_t start, std::int64_t stop,
                        std::int64_t stride) {
  auto axis = t.inputs().index_of(v);
  if (!axis) fail(ErrorCode::NameAbsent, "slice over absent input " + v);
  const std::int64_t n = t.inputs()[*axis].domain.size();
  if (start < 0 || stop > n || start > stop) {
    fail(ErrorCode::BoundsError, "slice [" + std::to_string(start) + ", " + std::to_string(stop) + ") of ℤ" +
                                     std::to_string(n));
  }
  const std::int64_t len = slice_length(start, stop, stride);
  if (len < 1) fail(ErrorCode::BoundsError, "empty slice");
  std::vector<ContextEntry> entries = t.inputs().entries();
  entries[*axis].domain = Domain::bint(len);
  auto strides = t.strides();
  const std::ptrdiff_t off = t.offset() + start * strides[*axis];
  strides[*axis] *= stride;
  return TensorAtom(TypeContext(std::move(entries)), t.output(), t.buffer(), off, std::move(strides));
}

TensorAtom tensor_cat(const Name& over, std::span<const TensorAtom> parts) {
  if (parts.empty()) fail(ErrorCode::TypeError, "cat of no parts");
  std::int64_t total = 0;
  TypeContext rest;
  for (const auto& p : parts) {
    const auto* d = p.inputs().find(over);
    if (!d) fail(ErrorCode::NameAbsent, "cat part lacks input " + over);
    if (p.output() != parts[0].output()) {
      fail(ErrorCode::TypeError, "cat parts disagree on output: " + parts[0].output().to_string() + " vs " +
                                     p.output().to_string());
    }
    total += d->size();
  }
  // Result inputs follow the first part's order with `over` resized. Parts
  // missing a variable are broadcast along it.
  TypeContext inputs;
  for (const auto& p : parts) {
    for (const auto& e : p.inputs()) {
      const auto d = e.name == over ? Domain::bint(total) : e.domain;
      if (const auto* seen = inputs.find(e.name); seen && *seen != d) {
        fail(ErrorCode::ContextMismatch, "cat parts disagree on " + e.name);
      }
      inputs.add(e.name, d);
    }
  }
  auto shp = full_shape(inputs, parts[0].output());
  auto dst_strides = row_major_strides(shp);
  const auto over_axis = *inputs.index_of(over);
  std::vector<double> out(product(shp), 0.0);
  std::int64_t pos = 0;
  for (const auto& p : parts) {
    const std::int64_t len = p.inputs().at(over).size();
    std::vector<ContextEntry> entries = inputs.entries();
    entries[over_axis].domain = Domain::bint(len);
    TypeContext pctx(std::move(entries));
    auto src_strides = mapped_strides(p, pctx, p.ndim() - p.batch_ndim());
    auto pshape = full_shape(pctx, p.output());
    const double* src = p.base();
    for_each_offset(pshape, {&src_strides, &dst_strides}, {p.offset(), pos * dst_strides[over_axis]},
                    [&](const std::vector<std::ptrdiff_t>& o) { out[o[1]] = src[o[0]]; });
    pos += len;
  }
  return finish(std::move(inputs), parts[0].output(), std::move(out));
}

}  // namespace funsor

namespace funsor {

std::vector<std::int64_t> flat_index_map(const TypeContext& full, const TypeContext& sub) {
  std::vector<std::int64_t> shape;
  for (const auto& e : full) shape.push_back(e.domain.size());
  std::vector<std::int64_t> sub_shape;
  for (const auto& e : sub) {
    const auto* d = full.find(e.name);
    if (!d) fail(ErrorCode::ContextMismatch, "index map: " + e.name + " missing from " + full.to_string());
    if (*d != e.domain) fail(ErrorCode::TypeConflict, "index map: type of " + e.name + " differs");
    sub_shape.push_back(e.domain.size());
  }
  auto sub_strides = row_major_strides(sub_shape);
  std::vector<std::ptrdiff_t> s;
  for (const auto& e : full) {
    auto k = sub.index_of(e.name);
    s.push_back(k ? sub_strides[*k] : 0);
  }
  std::vector<std::int64_t> out;
  out.reserve(product(shape));
  for_each_offset(shape, {&s}, {0}, [&](const std::vector<std::ptrdiff_t>& o) { out.push_back(o[0]); });
  return out;
}

}  // namespace funsor
