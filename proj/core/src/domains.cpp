#include "funsor/domains.hpp"

#include <algorithm>
#include <sstream>

namespace funsor {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::TypeConflict: return "TypeConflict";
    case ErrorCode::NameAbsent: return "NameAbsent";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::FuelExhausted: return "FuelExhausted";
    case ErrorCode::StackUnderflow: return "StackUnderflow";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::RealVarNotSupported: return "RealVarNotSupported";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::BoundsError: return "BoundsError";
    case ErrorCode::ContextMismatch: return "ContextMismatch";
    case ErrorCode::MissingAssignment: return "MissingAssignment";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotAffine: return "NotAffine";
    case ErrorCode::InvalidMatching: return "InvalidMatching";
    case ErrorCode::InvalidSubstitution: return "InvalidSubstitution";
    case ErrorCode::InvalidName: return "InvalidName";
    case ErrorCode::NotClosed: return "NotClosed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
  }
  return "Unknown";
}

Domain::Domain(Bounded b) : value_(b) {
  if (b.size < 1) fail(ErrorCode::TypeError, "bounded domain needs size >= 1, got " + std::to_string(b.size));
}

Domain::Domain(Reals r) : value_(std::move(r)) {
  for (auto s : std::get<Reals>(value_).shape) {
    if (s < 1) fail(ErrorCode::TypeError, "real array extents must be >= 1");
  }
}

std::int64_t Domain::size() const {
  if (!is_bounded()) fail(ErrorCode::TypeError, "size() of real domain " + to_string());
  return std::get<Bounded>(value_).size;
}

const std::vector<std::int64_t>& Domain::shape() const {
  static const std::vector<std::int64_t> kEmpty;
  if (is_bounded()) return kEmpty;
  return std::get<Reals>(value_).shape;
}

std::string Domain::to_string() const {
  if (is_bounded()) return "ℤ" + std::to_string(size());
  const auto& s = shape();
  if (s.empty()) return "ℝ";
  std::string out = "ℝ^{";
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k) out += "×";
    out += std::to_string(s[k]);
  }
  return out + "}";
}

std::int64_t num_elements(const Domain& d) {
  if (d.is_bounded()) return d.size();
  std::int64_t n = 1;
  for (auto s : d.shape()) n *= s;
  return n;
}

TypeContext::TypeContext(std::initializer_list<ContextEntry> entries) {
  for (const auto& e : entries) {
    if (contains(e.name)) fail(ErrorCode::TypeConflict, "duplicate name " + e.name);
    entries_.push_back(e);
  }
}

TypeContext::TypeContext(std::vector<ContextEntry> entries) {
  for (auto& e : entries) {
    if (contains(e.name)) fail(ErrorCode::TypeConflict, "duplicate name " + e.name);
    entries_.push_back(std::move(e));
  }
}

std::optional<std::size_t> TypeContext::index_of(const Name& name) const {
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (entries_[k].name == name) return k;
  }
  return std::nullopt;
}

const Domain* TypeContext::find(const Name& name) const {
  auto k = index_of(name);
  return k ? &entries_[*k].domain : nullptr;
}

const Domain& TypeContext::at(const Name& name) const {
  if (const auto* d = find(name)) return *d;
  fail(ErrorCode::NameAbsent, "variable " + name + " not in context " + to_string());
}

void TypeContext::add(const Name& name, const Domain& domain) {
  if (const auto* d = find(name)) {
    if (*d != domain) {
      fail(ErrorCode::TypeConflict,
           "variable " + name + " has types " + d->to_string() + " and " + domain.to_string());
    }
    return;
  }
  entries_.push_back({name, domain});
}

std::vector<Name> TypeContext::names() const {
  std::vector<Name> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

bool TypeContext::set_equal(const TypeContext& other) const {
  if (size() != other.size()) return false;
  return std::all_of(entries_.begin(), entries_.end(), [&](const ContextEntry& e) {
    const auto* d = other.find(e.name);
    return d && *d == e.domain;
  });
}

std::string TypeContext::to_string() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (k) os << ", ";
    os << entries_[k].name << ":" << entries_[k].domain.to_string();
  }
  os << ")";
  return os.str();
}

TypeContext context_union(const TypeContext& a, const TypeContext& b) {
  TypeContext out = a;
  for (const auto& e : b) out.add(e.name, e.domain);
  return out;
}

TypeContext context_remove(const TypeContext& g, const Name& v) {
  if (!g.contains(v)) fail(ErrorCode::NameAbsent, "cannot remove " + v + " from " + g.to_string());
  std::vector<ContextEntry> kept;
  for (const auto& e : g) {
    if (e.name != v) kept.push_back(e);
  }
  return TypeContext(std::move(kept));
}

void validate_user_name(const Name& name) {
  if (name.empty()) fail(ErrorCode::InvalidName, "empty variable name");
  if (name.find('#') != Name::npos) {
    fail(ErrorCode::InvalidName, "'#' is reserved for generated names: " + name);
  }
}

}  // namespace funsor
