#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace funsor::cli {

struct RunConfig {
  std::string model_path;
  std::optional<std::string> interpretation;  // default depends on the model family
  std::string semiring = "sumproduct";
  std::string scan = "parallel";
  std::uint64_t seed = 0;
  std::int64_t samples = 1000;
  bool timing = true;
};

// Prints one JSON object to out; returns the process exit code.
int cmd_run(const RunConfig& config, std::ostream& out);

struct BenchConfig {
  std::vector<std::int64_t> lengths;
  std::int64_t trials = 1;
  bool timing = true;
};

// Prints CSV rows to out and per-row agreement notes to log.
int cmd_bench_markov(const BenchConfig& config, std::ostream& out, std::ostream& log);

// "2,4,8" -> {2, 4, 8}; throws funsor::Error(ValidationError) on bad input.
std::vector<std::int64_t> parse_lengths(const std::string& text);

}  // namespace funsor::cli
