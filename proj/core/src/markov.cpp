#include "funsor/markov.hpp"

namespace funsor {

std::int64_t ceil_log2(std::int64_t n) {
  std::int64_t levels = 0;
  for (std::int64_t p = 1; p < n; p *= 2) ++levels;
  return levels;
}

namespace {

std::int64_t time_length(const Term& body, const Name& time) {
  const auto* d = body->free_vars().find(time);
  if (!d) fail(ErrorCode::InvalidMatching, "time variable '" + time + "' is not free in the body");
  if (!d->is_bounded() || d->size() < 1) fail(ErrorCode::TypeError, "time variable must be bounded with T >= 1");
  return d->size();
}

// Fresh stand-ins for the linking variables, typed like the prev side.
std::vector<Term> fresh_links(const Term& body, const StepMatching& step, std::vector<Name>& names) {
  std::vector<Term> out;
  for (const auto& [prev, curr] : step.pairs) {
    (void)curr;
    const Name w = fresh_name(prev);
    names.push_back(w);
    out.push_back(variable(w, body->free_vars().at(prev)));
  }
  return out;
}

Term at_time(std::int64_t k, std::int64_t n) { return tensor(TensorAtom::index_value(k, n)); }

}  // namespace

Term markov_sequential(const Term& body, const Name& time, const StepMatching& step, ReduceOp sum_op, Evaluator& ev) {
  validate_step(body->free_vars(), time, step);
  const auto n = time_length(body, time);
  Term acc = ev.sub(substitute(body, time, at_time(0, n)));
  for (std::int64_t k = 1; k < n; ++k) {
    std::vector<Name> names;
    const auto links = fresh_links(body, step, names);
    std::vector<Binding> to_prefix;
    std::vector<Binding> to_step{{time, at_time(k, n)}};
    for (std::size_t p = 0; p < step.pairs.size(); ++p) {
      to_prefix.push_back({step.pairs[p].second, links[p]});
      to_step.push_back({step.pairs[p].first, links[p]});
    }
    Term joined = add(substitute(acc, to_prefix), substitute(body, to_step));
    acc = ev.sub(reduce(sum_op, names, joined));
  }
  return acc;
}

Term markov_parallel(const Term& body, const Name& time, const StepMatching& step, ReduceOp sum_op, Evaluator& ev,
                     std::int64_t* levels) {
  validate_step(body->free_vars(), time, step);
  std::int64_t n = time_length(body, time);
  Term f = body;
  std::int64_t count = 0;
  while (n > 1) {
    const auto half = n / 2;
    std::vector<Name> names;
    const auto links = fresh_links(f, step, names);
    std::vector<Binding> even{{time, slice(time, 0, 2 * half, 2, n)}};
    std::vector<Binding> odd{{time, slice(time, 1, 2 * half, 2, n)}};
    for (std::size_t p = 0; p < step.pairs.size(); ++p) {
      even.push_back({step.pairs[p].second, links[p]});
      odd.push_back({step.pairs[p].first, links[p]});
    }
    Term contracted = reduce(sum_op, names, add(substitute(f, even), substitute(f, odd)));
    if (n % 2 == 1) {
      contracted = cat(time, {contracted, substitute(f, time, slice(time, n - 1, n, 1, n))});
    }
    f = ev.sub(contracted);
    n = (n + 1) / 2;
    ++count;
  }
  if (levels) *levels = count;
  return ev.sub(substitute(f, time, at_time(0, 1)));
}

}  // namespace funsor
