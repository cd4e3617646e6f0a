#pragma once

#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "funsor/interp.hpp"

namespace funsor {

struct PlanStep {
  // Positions in the working factor list at the time of the step. The fused
  // factor is placed at the front; the others keep their relative order.
  std::vector<std::size_t> fuse;
  std::vector<Name> reduce;
};

struct ContractionPlan {
  std::vector<PlanStep> steps;
  // Largest element count of any fused (pre-reduction) intermediate context.
  std::int64_t estimated_cost = 0;
};

// Element-count proxy: product of bounds times (flattened real dim + 1)^2 per
// real variable.
std::int64_t context_cost(const TypeContext& ctx);

// Reduces every variable private to one factor inside that factor. Returns the
// rewritten (unevaluated) factors and the residual shared variables.
std::pair<std::vector<Term>, std::set<Name>> push_singleton_sums(std::vector<Term> factors, const std::set<Name>& vars,
                                                                 ReduceOp op = ReduceOp::LogSumExp);

ContractionPlan greedy_plan(const std::vector<Term>& factors, const std::set<Name>& vars);

// Runs the plan, evaluating each fuse-then-reduce step with ev.
Term execute_plan(const ContractionPlan& plan, std::vector<Term> factors, ReduceOp op, Evaluator& ev);
Term execute_plan(const ContractionPlan& plan, std::vector<Term> factors, ReduceOp op = ReduceOp::LogSumExp);

// Splits a real-scalar sum into its summands.
std::vector<Term> flatten_product(const Term& t);

}  // namespace funsor
