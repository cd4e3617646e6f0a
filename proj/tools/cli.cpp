#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "funsor/funsor.hpp"
#include "json.hpp"

namespace funsor::cli {

namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

[[noreturn]] void invalid(const std::string& what) { fail(ErrorCode::ValidationError, what); }

void check_keys(const json& j, const std::set<std::string>& required, const std::set<std::string>& optional) {
  for (const auto& k : required) {
    if (!j.contains(k)) invalid("missing field '" + k + "'");
  }
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (!required.count(k) && !optional.count(k)) invalid("unknown field '" + k + "'");
  }
}

double number_at(const json& j, const std::string& what) {
  if (!j.is_number()) invalid(what + " must be a number");
  return j.get<double>();
}

Eigen::VectorXd vector_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) invalid(what + " must be a nonempty array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) v(k) = number_at(j[k], what);
  return v;
}

Eigen::MatrixXd matrix_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) invalid(what + " must be a nonempty array of rows");
  const auto rows = j.size();
  if (!j[0].is_array() || j[0].empty()) invalid(what + " rows must be nonempty arrays");
  const auto cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) invalid(what + " must be rectangular");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = number_at(j[r][c], what);
  }
  return m;
}

std::vector<Eigen::MatrixXd> matrices_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) invalid(what + " must be a nonempty array of matrices");
  std::vector<Eigen::MatrixXd> out;
  for (const auto& m : j) out.push_back(matrix_of(m, what));
  return out;
}

struct LoadedModel {
  std::string family;
  Term term;
  bool discrete_only = false;
  std::string default_interp;
};

LoadedModel load_model(const json& j, ReduceOp sum_op) {
  if (!j.is_object() || !j.contains("model") || !j["model"].is_string()) {
    invalid("model file needs a top-level \"model\" string");
  }
  const auto family = j["model"].get<std::string>();
  if (family == "hmm") {
    check_keys(j, {"model", "transition", "emission"}, {"initial"});
    HmmSpec spec;
    spec.transition = matrix_of(j["transition"], "transition");
    const Eigen::MatrixXd emission = matrix_of(j["emission"], "emission");
    if ((emission.array() < 0).any()) invalid("emission likelihoods must be nonnegative");
    spec.K = spec.transition.rows();
    spec.T = emission.rows();
    spec.emission_logp = emission.array().log().matrix();
    if (j.contains("initial")) spec.initial = vector_of(j["initial"], "initial");
    return {family, build_hmm(spec, sum_op), true, "exact"};
  }
  if (family == "kalman") {
    check_keys(j, {"model", "F", "H", "Q", "R", "observations"}, {"init_mean", "init_cov", "bias", "B"});
    KalmanSpec spec;
    spec.F = matrix_of(j["F"], "F");
    spec.H = matrix_of(j["H"], "H");
    spec.Q = matrix_of(j["Q"], "Q");
    spec.R = matrix_of(j["R"], "R");
    spec.observations = matrix_of(j["observations"], "observations");
    if (j.contains("init_mean")) spec.init_mean = vector_of(j["init_mean"], "init_mean");
    if (j.contains("init_cov")) spec.init_cov = matrix_of(j["init_cov"], "init_cov");
    if (j.contains("bias")) {
      if (!j["bias"].is_boolean()) invalid("bias must be true or false");
      spec.bias = j["bias"].get<bool>();
    }
    if (spec.bias != j.contains("B")) invalid("B is required exactly when bias is true");
    if (spec.bias) spec.B = matrix_of(j["B"], "B");
    return {family, build_kalman(spec), false, "exact"};
  }
  if (family == "slds") {
    check_keys(j, {"model", "transition", "init_mean", "init_cov", "A", "Q", "H", "R", "observations"}, {"window"});
    SldsSpec spec;
    spec.transition = matrix_of(j["transition"], "transition");
    spec.K = spec.transition.rows();
    spec.init_mean = vector_of(j["init_mean"], "init_mean");
    spec.init_cov = matrix_of(j["init_cov"], "init_cov");
    spec.A = matrices_of(j["A"], "A");
    spec.Q = matrices_of(j["Q"], "Q");
    spec.H = matrices_of(j["H"], "H");
    spec.R = matrices_of(j["R"], "R");
    if (j.contains("window")) {
      if (!j["window"].is_number_integer()) invalid("window must be an integer");
      spec.window = j["window"].get<std::int64_t>();
    }
    return {family, build_slds_marginal(spec, matrix_of(j["observations"], "observations")), false, "momentmatching"};
  }
  if (family == "gmm") {
    check_keys(j, {"model", "weights", "data", "prior_mean", "prior_cov", "noise_cov"}, {});
    const auto weights = vector_of(j["weights"], "weights");
    const auto data = matrix_of(j["data"], "data");
    const auto mean = vector_of(j["prior_mean"], "prior_mean");
    if (data.cols() != mean.size()) invalid("data columns must match prior_mean");
    auto spec = gmm_from_moments(weights, data, mean, matrix_of(j["prior_cov"], "prior_cov"),
                                 matrices_of(j["noise_cov"], "noise_cov"));
    return {family, build_gmm(spec), false, "momentmatching"};
  }
  invalid("unknown model family '" + family + "'");
}

const Interpretation& interpretation_named(const std::string& name) {
  if (name == "exact") return exact();
  if (name == "optimize") return optimize();
  if (name == "momentmatching") return moment_matching();
  if (name == "montecarlo") return monte_carlo();
  invalid("unknown interpretation '" + name + "'");
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

void print_error(std::ostream& out, const std::string& code, const std::string& detail) {
  ojson e;
  e["error"] = code;
  e["detail"] = detail;
  out << e.dump() << "\n";
}

double log_mean_exp(const std::vector<double>& xs) {
  return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

}  // namespace

std::vector<std::int64_t> parse_lengths(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      invalid("bad length '" + item + "'");
    }
    if (used != item.size() || v < 1) invalid("lengths must be positive integers, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) invalid("lengths must be nonempty");
  return out;
}

int cmd_run(const RunConfig& config, std::ostream& out) {
  try {
    if (config.semiring != "sumproduct" && config.semiring != "maxproduct") {
      invalid("semiring must be sumproduct or maxproduct");
    }
    if (config.scan != "parallel" && config.scan != "sequential") invalid("scan must be parallel or sequential");
    std::ifstream in(config.model_path);
    if (!in) fail(ErrorCode::ParseError, "cannot read " + config.model_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorCode::ParseError, e.what());
    }
    const ReduceOp sum_op = config.semiring == "maxproduct" ? ReduceOp::Max : ReduceOp::LogSumExp;
    const auto model = load_model(j, sum_op);
    if (sum_op == ReduceOp::Max && !model.discrete_only) invalid("maxproduct is only valid for discrete-only models");
    const auto interp_name = config.interpretation.value_or(model.default_interp);
    const auto& interp = interpretation_named(interp_name);
    if (interp_name == "montecarlo" && config.samples < 1) invalid("montecarlo needs samples >= 1");
    if (interp_name == "montecarlo" && sum_op == ReduceOp::Max) invalid("montecarlo estimates sums, not maxima");
    infer_type(model.term);

    EvalOptions opts;
    opts.scan = config.scan == "parallel" ? MarkovScan::Parallel : MarkovScan::Sequential;
    opts.rng.seed = config.seed;
    const auto start = std::chrono::steady_clock::now();
    double value = 0.0;
    std::int64_t levels = -1;
    std::optional<double> std_error;
    if (interp_name == "montecarlo") {
      std::vector<double> draws;
      for (std::int64_t k = 0; k < config.samples; ++k) {
        EvalOptions o = opts;
        o.rng.counter = static_cast<std::uint64_t>(k) << 32;
        Evaluator ev(interp, o);
        draws.push_back(scalar_value(ev.eval(model.term)));
        levels = ev.stats().markov_levels;
      }
      value = log_mean_exp(draws);
      // standard error of the linear-space mean, reported relative to it
      double var = 0.0;
      for (double d : draws) var += std::pow(std::exp(d - value) - 1.0, 2);
      std_error = draws.size() > 1 ? std::sqrt(var / static_cast<double>(draws.size() - 1) / draws.size()) : 0.0;
    } else {
      Evaluator ev(interp, opts);
      value = scalar_value(ev.eval(model.term));
      levels = ev.stats().markov_levels;
    }
    const double wall = config.timing ? elapsed_ms(start) : 0.0;

    ojson o;
    o["model"] = model.family;
    o["interpretation"] = interp_name;
    o["semiring"] = config.semiring;
    o["scan"] = config.scan;
    o["log_value"] = value;
    o["wall_ms"] = wall;
    if (levels >= 0 && opts.scan == MarkovScan::Parallel) o["levels"] = levels;
    if (std_error) {
      o["samples"] = config.samples;
      o["seed"] = config.seed;
      o["relative_std_error"] = *std_error;
    }
    out << o.dump() << "\n";
    return 0;
  } catch (const Error& e) {
    print_error(out, std::string(error_code_name(e.code())), e.detail());
  } catch (const std::exception& e) {
    print_error(out, "InternalError", e.what());
  }
  return 1;
}

namespace {

// Random chain body over (t : T, i : K, j : K) reduced over both boundaries.
Term bench_chain(std::int64_t T, std::int64_t K, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> vals(T * K * K);
  for (auto& v : vals) v = nd(rng);
  Term body = tensor(TensorAtom(
      TypeContext{{"t", Domain::bint(T)}, {"i", Domain::bint(K)}, {"j", Domain::bint(K)}}, Domain::real(), vals));
  return reduce(ReduceOp::LogSumExp, std::vector<Name>{"i", "j"}, markov("t", StepMatching{{{"i", "j"}}}, body));
}

}  // namespace

int cmd_bench_markov(const BenchConfig& config, std::ostream& out, std::ostream& log) {
  try {
    if (config.lengths.empty()) invalid("lengths must be nonempty");
    if (config.trials < 1) invalid("trials must be >= 1");
    for (auto T : config.lengths) {
      if (T < 1) invalid("lengths must be positive");
    }
    std::ostringstream csv;
    csv << "T,levels,wall_ms_sequential,wall_ms_parallel\n";
    std::mt19937_64 rng(12345);
    for (auto T : config.lengths) {
      const Term chain = bench_chain(T, 3, rng);
      double seq_ms = 0.0;
      double par_ms = 0.0;
      double seq_val = 0.0;
      double par_val = 0.0;
      std::int64_t levels = 0;
      for (std::int64_t k = 0; k < config.trials; ++k) {
        EvalOptions s;
        s.scan = MarkovScan::Sequential;
        auto t0 = std::chrono::steady_clock::now();
        seq_val = scalar_value(Evaluator(exact(), s).eval(chain));
        seq_ms += elapsed_ms(t0);
        Evaluator ev(exact());
        t0 = std::chrono::steady_clock::now();
        par_val = scalar_value(ev.eval(chain));
        par_ms += elapsed_ms(t0);
        levels = std::max<std::int64_t>(ev.stats().markov_levels, 0);
      }
      if (!config.timing) seq_ms = par_ms = 0.0;
      const double diff = std::abs(seq_val - par_val);
      log << "T=" << T << " sequential=" << std::setprecision(17) << seq_val << " parallel=" << par_val
          << " abs_diff=" << diff << (diff <= 1e-8 * std::max(1.0, std::abs(seq_val)) ? " ok" : " MISMATCH") << "\n";
      csv << T << "," << levels << "," << std::fixed << std::setprecision(3) << seq_ms / config.trials << ","
          << par_ms / config.trials << "\n";
      csv.unsetf(std::ios::floatfield);
    }
    out << csv.str();
    return 0;
  } catch (const Error& e) {
    print_error(out, std::string(error_code_name(e.code())), e.detail());
  } catch (const std::exception& e) {
    print_error(out, "InternalError", e.what());
  }
  return 1;
}

}  // namespace funsor::cli
