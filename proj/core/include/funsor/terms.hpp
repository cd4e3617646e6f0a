#pragma once

#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "funsor/delta.hpp"
#include "funsor/domains.hpp"
#include "funsor/gaussian.hpp"
#include "funsor/ops.hpp"
#include "funsor/tensor.hpp"

namespace funsor {

class TermNode;
using Term = std::shared_ptr<const TermNode>;

struct TensorLeaf {
  TensorAtom atom;
};
struct GaussianLeaf {
  GaussianAtom atom;
};
struct DeltaLeaf {
  DeltaAtom atom;
};
struct VariableNode {
  Name name;
  Domain domain;
};
struct ApplyNode {
  LiftedOp op;
  std::vector<Term> args;
};
struct Binding {
  Name name;
  Term value;
};
struct SubstNode {
  Term base;
  std::vector<Binding> bindings;  // applied simultaneously
};
struct ReduceNode {
  ReduceOp op;
  Name var;
  Term body;
};
// Pairs (prev, curr) linking consecutive time steps.
struct StepMatching {
  std::vector<std::pair<Name, Name>> pairs;
};
struct MarkovNode {
  Name time;
  StepMatching step;
  Term body;
  // The semiring sum used to eliminate the linking variables.
  ReduceOp sum_op = ReduceOp::LogSumExp;
};
// (over : Z_len) |- Z_bound, the values start, start+stride, ... < stop.
struct SliceNode {
  Name over;
  std::int64_t start;
  std::int64_t stop;
  std::int64_t stride;
  std::int64_t bound;
};
struct CatNode {
  Name over;
  std::vector<Term> parts;
};

enum class Kind { Tensor, Gaussian, Delta, Variable, Apply, Subst, Reduce, Markov, Slice, Cat };
std::string_view kind_name(Kind k);

struct Judgement {
  TypeContext context;
  Domain output;
};

class TermNode {
 public:
  using Variant = std::variant<TensorLeaf, GaussianLeaf, DeltaLeaf, VariableNode, ApplyNode, SubstNode, ReduceNode,
                               MarkovNode, SliceNode, CatNode>;

  explicit TermNode(Variant node) : node_(std::move(node)) {}

  Kind kind() const { return static_cast<Kind>(node_.index()); }
  const Variant& node() const { return node_; }
  template <class T>
  const T* as() const {
    return std::get_if<T>(&node_);
  }

  // Free variables; tolerant of ill-typed subterms (first type wins).
  const TypeContext& free_vars() const;
  // Strict typing judgement; throws TypeError (cached, including failures).
  const Judgement& type() const;

 private:
  Variant node_;
  mutable std::once_flag fv_once_;
  mutable TypeContext fv_;
  mutable std::once_flag ty_once_;
  mutable std::optional<Judgement> ty_;
  mutable std::exception_ptr ty_error_;
};

// Constructors.
Term tensor(TensorAtom atom);
Term number(double value);
Term gaussian(GaussianAtom atom);
Term delta(DeltaAtom atom);
Term variable(const Name& name, const Domain& domain);
Term apply(LiftedOp op, std::vector<Term> args);
Term add(const Term& a, const Term& b);
Term subst(const Term& base, std::vector<Binding> bindings);
Term reduce(ReduceOp op, const Name& var, const Term& body);
// Nested reductions over several variables; names not free in the body are
// dropped, real variables are reduced innermost.
Term reduce(ReduceOp op, const std::vector<Name>& vars, const Term& body);
// Reduces over every free variable.
Term reduce_all(ReduceOp op, const Term& body);
Term markov(const Name& time, StepMatching step, const Term& body, ReduceOp sum_op = ReduceOp::LogSumExp);
Term slice(const Name& over, std::int64_t start, std::int64_t stop, std::int64_t stride, std::int64_t bound);
Term cat(const Name& over, std::vector<Term> parts);

// Left-nested sum of the given terms (number(0) when empty).
Term sum_of(const std::vector<Term>& parts);

const TypeContext& free_vars(const Term& t);
Judgement infer_type(const Term& t);
bool is_ground(const Term& t);

// Fresh names "base#k" from a process-wide atomic counter.
Name fresh_name(const Name& base);

// Renames the binder at the head of t (Reduce var or Markov time variable).
Term alpha_rename(const Term& t, const Name& old);

// Capture-avoiding simultaneous substitution, pushed down to leaves. Leaves,
// slices and concatenations over a bound name keep an explicit Subst node.
Term substitute(const Term& t, const std::vector<Binding>& bindings);
Term substitute(const Term& t, const Name& name, const Term& value);

// Checks the Markov matching conditions against the body's context; throws
// InvalidMatching naming the violated condition.
void validate_step(const TypeContext& body_context, const Name& time, const StepMatching& step);

bool structurally_equal(const Term& a, const Term& b);
std::string to_string(const Term& t);

// Terms compare structurally; numerical data compare by value.
bool atoms_equal(const TensorAtom& a, const TensorAtom& b);

}  // namespace funsor
