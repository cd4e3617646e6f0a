#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "funsor/error.hpp"

namespace funsor {

using Name = std::string;

struct Bounded {
  std::int64_t size;
  bool operator==(const Bounded&) const = default;
};

struct Reals {
  std::vector<std::int64_t> shape;  // empty means the scalar real line
  bool operator==(const Reals&) const = default;
};

// The type of a variable or of a term's output: a bounded integer Z_n or a
// real array R^{s1 x ... x sk}.
class Domain {
 public:
  Domain(Bounded b);
  Domain(Reals r);

  static Domain bint(std::int64_t n) { return Domain(Bounded{n}); }
  static Domain real() { return Domain(Reals{}); }
  static Domain reals(std::vector<std::int64_t> shape) { return Domain(Reals{std::move(shape)}); }

  bool is_bounded() const { return std::holds_alternative<Bounded>(value_); }
  bool is_real() const { return !is_bounded(); }
  bool is_real_scalar() const { return is_real() && shape().empty(); }

  // Bounded size; throws TypeError on a real domain.
  std::int64_t size() const;
  // Real array shape; empty for bounded domains.
  const std::vector<std::int64_t>& shape() const;

  std::string to_string() const;

  bool operator==(const Domain& o) const { return value_ == o.value_; }
  bool operator!=(const Domain& o) const { return !(*this == o); }

 private:
  std::variant<Bounded, Reals> value_;
};

// Bounded(n) -> n, Reals(shape) -> product of shape (1 for scalars).
std::int64_t num_elements(const Domain& d);

struct ContextEntry {
  Name name;
  Domain domain;
  bool operator==(const ContextEntry&) const = default;
};

// An ordered set of (name, domain) pairs. Equality as a set ignores order; the
// stored order is the order of first appearance while building.
class TypeContext {
 public:
  TypeContext() = default;
  TypeContext(std::initializer_list<ContextEntry> entries);
  explicit TypeContext(std::vector<ContextEntry> entries);

  const std::vector<ContextEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const ContextEntry& operator[](std::size_t k) const { return entries_[k]; }

  bool contains(const Name& name) const { return index_of(name).has_value(); }
  std::optional<std::size_t> index_of(const Name& name) const;
  const Domain* find(const Name& name) const;
  // Throws NameAbsent.
  const Domain& at(const Name& name) const;

  // Appends a new entry; throws TypeConflict on a name clash with a different
  // domain, and is a no-op for an identical entry.
  void add(const Name& name, const Domain& domain);

  std::vector<Name> names() const;
  bool set_equal(const TypeContext& other) const;
  bool operator==(const TypeContext& other) const { return entries_ == other.entries_; }

  std::string to_string() const;

 private:
  std::vector<ContextEntry> entries_;
};

// Union keeping a's order followed by b's new names. Throws TypeConflict.
TypeContext context_union(const TypeContext& a, const TypeContext& b);
// Removes v, preserving the order of the rest. Throws NameAbsent.
TypeContext context_remove(const TypeContext& g, const Name& v);

// Names containing '#' are reserved for generated fresh names.
void validate_user_name(const Name& name);

}  // namespace funsor
