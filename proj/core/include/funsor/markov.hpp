#pragma once

#include <cstdint>

#include "funsor/interp.hpp"

namespace funsor {

std::int64_t ceil_log2(std::int64_t n);

// Reference semantics: fold the time steps left to right, eliminating the
// linking variables between the prefix and each new step.
Term markov_sequential(const Term& body, const Name& time, const StepMatching& step, ReduceOp sum_op, Evaluator& ev);

// Parallel scan: pairwise contraction of even and odd time slices, halving the
// time axis each level. Writes the number of levels to *levels if given.
Term markov_parallel(const Term& body, const Name& time, const StepMatching& step, ReduceOp sum_op, Evaluator& ev,
                     std::int64_t* levels = nullptr);

}  // namespace funsor
