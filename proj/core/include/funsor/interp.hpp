#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "funsor/terms.hpp"

namespace funsor {

class Evaluator;

// A handler returns an evaluated term, or nullopt to decline the match.
using Handler = std::function<std::optional<Term>(const Term&, Evaluator&)>;

enum class Phase {
  Pre,   // sees the node before its children are evaluated
  Post,  // sees the node after its children are evaluated
};

struct Rule {
  std::string name;
  Kind head;
  std::function<bool(const Term&)> guard;  // optional pattern predicate
  Handler handler;
  Phase phase = Phase::Post;
};

// An ordered rule set; the first matching rule wins, then the fallback's rules
// are tried, and a node nobody rewrites is reflected (kept lazily).
class Interpretation {
 public:
  explicit Interpretation(std::string name, const Interpretation* fallback = nullptr)
      : name_(std::move(name)), fallback_(fallback) {}

  void add_rule(Rule rule) { rules_.push_back(std::move(rule)); }
  const std::string& name() const { return name_; }
  const Interpretation* fallback() const { return fallback_; }
  const std::vector<Rule>& rules() const { return rules_; }

 private:
  std::string name_;
  const Interpretation* fallback_;
  std::vector<Rule> rules_;
};

const Interpretation& lazy();
const Interpretation& exact();
const Interpretation& optimize();
const Interpretation& moment_matching();
const Interpretation& monte_carlo();

// Reproducible sampling state: each draw uses (seed, counter) and then bumps
// the counter.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
};

enum class MarkovScan { Parallel, Sequential };

struct EvalOptions {
  std::uint64_t fuel = 0;  // 0 means the default (FUNSOR_FUEL or 10000)
  MarkovScan scan = MarkovScan::Parallel;
  RngState rng{};
};

struct EvalStats {
  std::uint64_t rewrites = 0;
  std::int64_t markov_levels = -1;  // levels of the last parallel Markov product
};

std::uint64_t default_fuel();

class Evaluator {
 public:
  explicit Evaluator(const Interpretation& interp, EvalOptions options = {});

  // Evaluates under this evaluator's budget.
  Term eval(const Term& t);
  // Evaluates with a fresh rewrite budget; used by driver loops whose total
  // work grows with the problem size.
  Term sub(const Term& t);
  // Same shared state, different interpretation.
  Evaluator with(const Interpretation& interp) const;

  const Interpretation& interpretation() const { return *interp_; }
  EvalOptions& options();
  EvalStats& stats();
  RngState& rng();

 private:
  struct Shared;
  Evaluator(const Interpretation* interp, std::shared_ptr<Shared> shared) : interp_(interp), shared_(std::move(shared)) {}
  std::optional<Term> try_rules(const Term& t, Phase phase);
  Term rebuild(const Term& t);

  const Interpretation* interp_;
  std::shared_ptr<Shared> shared_;
};

// Type-checks, then evaluates.
Term interpret(const Interpretation& interp, const Term& t, EvalOptions options = {});
// Uses the innermost pushed interpretation (Exact by default).
Term interpret(const Term& t);

void push_interpretation(const Interpretation& interp);
void pop_interpretation();
const Interpretation& current_interpretation();

class InterpretationGuard {
 public:
  explicit InterpretationGuard(const Interpretation& interp) { push_interpretation(interp); }
  ~InterpretationGuard() { pop_interpretation(); }
  InterpretationGuard(const InterpretationGuard&) = delete;
  InterpretationGuard& operator=(const InterpretationGuard&) = delete;
};

// A log-space sum of deltas, at most one tensor, at most one Gaussian, and
// terms no rule could absorb.
struct NormalForm {
  std::vector<DeltaAtom> deltas;
  std::optional<TensorAtom> tensor;
  std::optional<GaussianAtom> gaussian;
  std::vector<Term> lazy_rest;

  bool closed() const { return lazy_rest.empty(); }
};

NormalForm normalize(const Term& t, Evaluator& ev);
NormalForm normalize(const Term& t);
// Canonical sum: deltas, tensor, Gaussian, then lazy parts.
Term to_term(const NormalForm& nf);
void add_tensor(NormalForm& nf, const TensorAtom& t);
void add_gaussian(NormalForm& nf, const GaussianAtom& g);

// Delta(v, x) + other  ->  Delta(v, x) + other[v := x]; nullopt if v is not
// free in other.
std::optional<Term> delta_product_trigger(const DeltaAtom& d, const Term& other, Evaluator& ev);
// sum_v Delta(v, x) + rest  ->  rest; nullopt if v is free in rest.
std::optional<Term> delta_sum_eliminate(const DeltaAtom& d, const std::optional<Term>& rest);

// Affine decision procedure: real Variables and constant Tensors joined by
// add, sub, neg, take (constant index) and multiplication by constants.
bool is_affine(const Term& expr);
// Extracts target = constant + sum coeff * input by probing expr at zero and
// at unit vectors of each real input.
AffineBinding extract_affine(const Name& target, const Term& expr, Evaluator& ev);
TensorGaussian affine_substitute(const GaussianAtom& g, const Name& v, const Term& expr, Evaluator& ev);

// Scalar value of a closed, evaluated term; throws NotClosed otherwise.
double scalar_value(const Term& t);

}  // namespace funsor
