#include "funsor/optimize.hpp"

#include <algorithm>
#include <limits>

namespace funsor {

std::int64_t context_cost(const TypeContext& ctx) {
  std::int64_t cost = 1;
  for (const auto& e : ctx) {
    const auto f = e.domain.is_bounded() ? e.domain.size() : (num_elements(e.domain) + 1) * (num_elements(e.domain) + 1);
    cost = cost > std::numeric_limits<std::int64_t>::max() / std::max<std::int64_t>(f, 1)
               ? std::numeric_limits<std::int64_t>::max()
               : cost * f;
  }
  return cost;
}

std::vector<Term> flatten_product(const Term& t) {
  std::vector<Term> out;
  const auto* a = t->as<ApplyNode>();
  if (a && a->op == LiftedOp::Add && t->type().output.is_real_scalar()) {
    for (const auto& arg : a->args) {
      auto sub = flatten_product(arg);
      out.insert(out.end(), sub.begin(), sub.end());
    }
  } else {
    out.push_back(t);
  }
  return out;
}

std::pair<std::vector<Term>, std::set<Name>> push_singleton_sums(std::vector<Term> factors, const std::set<Name>& vars,
                                                                 ReduceOp op) {
  std::set<Name> residual;
  std::vector<std::vector<Name>> private_vars(factors.size());
  for (const auto& v : vars) {
    std::vector<std::size_t> owners;
    for (std::size_t k = 0; k < factors.size(); ++k) {
      if (factors[k]->free_vars().contains(v)) owners.push_back(k);
    }
    if (owners.size() == 1) {
      private_vars[owners[0]].push_back(v);
    } else if (owners.size() > 1) {
      residual.insert(v);
    }
  }
  for (std::size_t k = 0; k < factors.size(); ++k) {
    if (!private_vars[k].empty()) factors[k] = reduce(op, private_vars[k], factors[k]);
  }
  return {std::move(factors), std::move(residual)};
}

namespace {

struct Working {
  std::vector<TypeContext> contexts;
  std::set<Name> pending;
};

// Variables that become private once factors a and b are fused.
std::vector<Name> reducible_after(const Working& w, const std::vector<std::size_t>& fused) {
  std::vector<Name> out;
  for (const auto& v : w.pending) {
    bool inside = false;
    bool outside = false;
    for (std::size_t k = 0; k < w.contexts.size(); ++k) {
      const bool here = w.contexts[k].contains(v);
      if (std::find(fused.begin(), fused.end(), k) != fused.end()) {
        inside = inside || here;
      } else {
        outside = outside || here;
      }
    }
    if (inside && !outside) out.push_back(v);
  }
  return out;
}

TypeContext fused_context(const Working& w, const std::vector<std::size_t>& fused) {
  TypeContext ctx;
  for (auto k : fused) ctx = context_union(ctx, w.contexts[k]);
  return ctx;
}

TypeContext without(const TypeContext& ctx, const std::vector<Name>& names) {
  TypeContext out;
  for (const auto& e : ctx) {
    if (std::find(names.begin(), names.end(), e.name) == names.end()) out.add(e.name, e.domain);
  }
  return out;
}

void apply_step(Working& w, const PlanStep& step) {
  TypeContext ctx = without(fused_context(w, step.fuse), step.reduce);
  std::vector<TypeContext> next{ctx};
  for (std::size_t k = 0; k < w.contexts.size(); ++k) {
    if (std::find(step.fuse.begin(), step.fuse.end(), k) == step.fuse.end()) next.push_back(w.contexts[k]);
  }
  w.contexts = std::move(next);
  for (const auto& v : step.reduce) w.pending.erase(v);
}

}  // namespace

ContractionPlan greedy_plan(const std::vector<Term>& factors, const std::set<Name>& vars) {
  Working w;
  for (const auto& f : factors) w.contexts.push_back(f->free_vars());
  w.pending = vars;
  ContractionPlan plan;
  while (w.contexts.size() > 1) {
    PlanStep best;
    std::int64_t best_cost = std::numeric_limits<std::int64_t>::max();
    for (std::size_t a = 0; a < w.contexts.size(); ++a) {
      for (std::size_t b = a + 1; b < w.contexts.size(); ++b) {
        std::vector<std::size_t> pair{a, b};
        auto red = reducible_after(w, pair);
        const auto cost = context_cost(without(fused_context(w, pair), red));
        if (cost < best_cost) {
          best_cost = cost;
          best = {pair, red};
        }
      }
    }
    plan.estimated_cost = std::max(plan.estimated_cost, context_cost(fused_context(w, best.fuse)));
    apply_step(w, best);
    plan.steps.push_back(std::move(best));
  }
  if (!w.pending.empty() && w.contexts.size() == 1) {
    PlanStep last{{0}, std::vector<Name>(w.pending.begin(), w.pending.end())};
    plan.estimated_cost = std::max(plan.estimated_cost, context_cost(w.contexts[0]));
    apply_step(w, last);
    plan.steps.push_back(std::move(last));
  }
  return plan;
}

Term execute_plan(const ContractionPlan& plan, std::vector<Term> factors, ReduceOp op, Evaluator& ev) {
  for (const auto& step : plan.steps) {
    std::vector<Term> parts;
    std::vector<Term> rest;
    for (std::size_t k = 0; k < factors.size(); ++k) {
      if (std::find(step.fuse.begin(), step.fuse.end(), k) != step.fuse.end()) {
        parts.push_back(factors[k]);
      } else {
        rest.push_back(factors[k]);
      }
    }
    Term fused = ev.eval(reduce(op, step.reduce, sum_of(parts)));
    factors.clear();
    factors.push_back(fused);
    factors.insert(factors.end(), rest.begin(), rest.end());
  }
  if (factors.empty()) return number(0.0);
  return factors.size() == 1 ? ev.eval(factors[0]) : ev.eval(sum_of(factors));
}

Term execute_plan(const ContractionPlan& plan, std::vector<Term> factors, ReduceOp op) {
  Evaluator ev(exact());
  return execute_plan(plan, std::move(factors), op, ev);
}

namespace {

bool is_semiring_sum(ReduceOp op) { return op == ReduceOp::LogSumExp || op == ReduceOp::Max; }

std::optional<Term> optimize_reduce(const Term& t, Evaluator& ev) {
  const auto* r = t->as<ReduceNode>();
  const ReduceOp op = r->op;
  std::set<Name> vars;
  Term body = t;
  while (const auto* inner = body->as<ReduceNode>()) {
    if (inner->op != op) break;
    vars.insert(inner->var);
    body = inner->body;
  }
  auto raw = flatten_product(body);
  if (raw.size() < 2) return std::nullopt;

  std::vector<Term> factors;
  for (const auto& f : raw) {
    auto parts = flatten_product(ev.eval(f));
    factors.insert(factors.end(), parts.begin(), parts.end());
  }
  // Binders nested in the body may reuse names; keep only the ones in scope.
  std::set<Name> live;
  for (const auto& v : vars) {
    for (const auto& f : factors) {
      if (f->free_vars().contains(v)) live.insert(v);
    }
  }
  auto [pushed, shared] = push_singleton_sums(std::move(factors), live, op);
  Evaluator exact_ev = ev.with(exact());
  for (auto& f : pushed) f = exact_ev.eval(f);
  const auto plan = greedy_plan(pushed, shared);
  return execute_plan(plan, std::move(pushed), op, exact_ev);
}

Interpretation make_optimize() {
  Interpretation i("optimize", &exact());
  i.add_rule({"optimize.reduce", Kind::Reduce,
              [](const Term& t) { return is_semiring_sum(t->as<ReduceNode>()->op); }, optimize_reduce, Phase::Pre});
  return i;
}

}  // namespace

const Interpretation& optimize() {
  static const Interpretation i = make_optimize();
  return i;
}

}  // namespace funsor
