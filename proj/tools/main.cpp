#include <iostream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "funsor/error.hpp"
#include "json.hpp"

int main(int argc, char** argv) {
  using namespace funsor::cli;
  CLI::App app{"funsor: run probabilistic models through the term rewriting engine"};
  app.require_subcommand(1);

  RunConfig run;
  std::string interp;
  bool no_timing = false;
  auto* run_cmd = app.add_subcommand("run", "evaluate a model file and print one JSON object");
  run_cmd->add_option("file", run.model_path, "model JSON file")->required();
  run_cmd->add_option("--interp", interp, "exact | optimize | momentmatching | montecarlo");
  run_cmd->add_option("--semiring", run.semiring, "sumproduct | maxproduct");
  run_cmd->add_option("--scan", run.scan, "parallel | sequential");
  run_cmd->add_option("--seed", run.seed, "seed for montecarlo");
  run_cmd->add_option("--samples", run.samples, "sample count for montecarlo");
  run_cmd->add_flag("--no-timing", no_timing, "report wall_ms as 0 for reproducible output");

  auto* bench_cmd = app.add_subcommand("bench", "benchmarks");
  bench_cmd->require_subcommand(1);
  std::string lengths;
  BenchConfig bench;
  bool bench_no_timing = false;
  auto* markov_cmd = bench_cmd->add_subcommand("markov", "sequential vs parallel Markov products, CSV output");
  markov_cmd->add_option("--lengths", lengths, "comma-separated chain lengths")->required();
  markov_cmd->add_option("--trials", bench.trials, "repetitions per length");
  markov_cmd->add_flag("--no-timing", bench_no_timing, "report timings as 0");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (run_cmd->parsed()) {
    if (!interp.empty()) run.interpretation = interp;
    run.timing = !no_timing;
    return cmd_run(run, std::cout);
  }
  try {
    bench.lengths = parse_lengths(lengths);
  } catch (const funsor::Error& e) {
    nlohmann::ordered_json err;
    err["error"] = std::string(funsor::error_code_name(e.code()));
    err["detail"] = e.detail();
    std::cout << err.dump() << "\n";
    return 1;
  }
  bench.timing = !bench_no_timing;
  return cmd_bench_markov(bench, std::cout, std::cerr);
}
