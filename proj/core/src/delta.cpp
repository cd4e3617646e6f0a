#include "funsor/delta.hpp"

#include <limits>

namespace funsor {

DeltaAtom::DeltaAtom(Name name, TensorAtom point) : name_(std::move(name)), point_(std::move(point)) {
  if (point_.inputs().contains(name_)) {
    fail(ErrorCode::TypeError, "delta point may not depend on its own variable " + name_);
  }
}

TypeContext DeltaAtom::inputs() const {
  TypeContext out = point_.inputs();
  out.add(name_, point_.output());
  return out;
}

TensorAtom delta_indicator(const DeltaAtom& d, const TensorAtom& value) {
  if (!d.domain().is_bounded()) fail(ErrorCode::TypeError, "indicator of a real delta");
  if (value.output() != d.domain()) {
    fail(ErrorCode::TypeError, "value for " + d.name() + " has type " + value.output().to_string());
  }
  TypeContext inputs = context_union(d.point().inputs(), value.inputs());
  auto p = broadcast_to(d.point(), inputs).values();
  auto v = broadcast_to(value, inputs).values();
  std::vector<double> out(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    out[k] = p[k] == v[k] ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  stats().kernel_calls.fetch_add(1, std::memory_order_relaxed);
  return TensorAtom(std::move(inputs), Domain::real(), std::move(out));
}

DeltaAtom delta_index_batch(const DeltaAtom& d, std::span<const IndexBinding> bindings) {
  return DeltaAtom(d.name(), tensor_index(d.point(), bindings));
}

DeltaAtom delta_rename(const DeltaAtom& d, const Name& to) { return DeltaAtom(to, d.point()); }

}  // namespace funsor
