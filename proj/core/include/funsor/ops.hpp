#pragma once

#include <atomic>
#include <cstdint>
#include <string_view>

namespace funsor {

// Lifted numerical functions that may appear in Apply nodes.
enum class LiftedOp { Add, Sub, Mul, Neg, Exp, Log, LogAddExp, Max, Min, Take };

int arity(LiftedOp op);
std::string_view op_name(LiftedOp op);

// The monoid used by a Reduce node. In log space LogSumExp is marginalization
// (sum over a discrete variable, integral over a real one), Add is the plated
// product, Max is the max-product semiring's sum.
enum class ReduceOp { LogSumExp, Add, Max };

std::string_view reduce_name(ReduceOp op);
double reduce_identity(ReduceOp op);

// Process-wide counters used by tests to assert cost claims (O(1) blocks per
// atom, no numerical work on ill-typed terms).
struct Stats {
  std::atomic<std::uint64_t> kernel_calls{0};
  std::atomic<std::uint64_t> elements_allocated{0};
  std::atomic<std::uint64_t> buffers_allocated{0};

  void reset() {
    kernel_calls = 0;
    elements_allocated = 0;
    buffers_allocated = 0;
  }
};

Stats& stats();

}  // namespace funsor
