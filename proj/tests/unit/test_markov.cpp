#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "funsor/funsor.hpp"
#include "ground_eval.hpp"
#include "oracles.hpp"

using namespace funsor;

namespace {

const StepMatching kIJ{{{"i", "j"}}};

Term chain_body(const std::vector<Eigen::MatrixXd>& mats) {
  const auto T = static_cast<std::int64_t>(mats.size());
  const auto K = mats[0].rows();
  std::vector<double> data;
  for (const auto& m : mats)
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) data.push_back(std::log(m(i, j)));
  return tensor(TensorAtom(TypeContext{{"t", Domain::bint(T)}, {"i", Domain::bint(K)}, {"j", Domain::bint(K)}},
                           Domain::real(), std::move(data)));
}

double at_ij(const Term& t, int i, int j) {
  return oracle::ground_eval(t, oracle::Ground{{"i", {double(i)}}, {"j", {double(j)}}});
}

// Scalar random walk: x_curr = a_t x_prev + N(0, q_t) together with a
// pseudo-observation factor N(x_curr; y_t, r).
Term gaussian_walk(std::int64_t T, const std::vector<double>& a, const std::vector<double>& q, const std::vector<double>& y,
                   double r) {
  const TypeContext batch{{"t", Domain::bint(T)}};
  std::vector<LinearGaussianSlice> trans, obs;
  for (std::int64_t t = 0; t < T; ++t) {
    trans.push_back({{Eigen::MatrixXd::Constant(1, 1, a[t])}, Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, q[t])});
    obs.push_back({{}, Eigen::VectorXd::Constant(1, y[t]), Eigen::MatrixXd::Constant(1, 1, r)});
  }
  return add(mvn_conditional(batch, "x_curr", {"x_prev"}, trans), mvn_conditional(batch, "x_curr", {}, obs));
}

}  // namespace

TEST_CASE("ceil_log2") {
  CHECK(ceil_log2(1) == 0);
  CHECK(ceil_log2(2) == 1);
  CHECK(ceil_log2(3) == 2);
  CHECK(ceil_log2(4) == 2);
  CHECK(ceil_log2(5) == 3);
  CHECK(ceil_log2(1024) == 10);
  CHECK(ceil_log2(1025) == 11);
}

TEST_CASE("a single step is the body at t = 0") {
  std::mt19937_64 rng(1);
  const Term body = chain_body({oracle::random_stochastic(3, rng)});
  const Term want = interpret(exact(), substitute(body, "t", tensor(TensorAtom::index_value(0, 1))));
  for (auto scan : {MarkovScan::Sequential, MarkovScan::Parallel}) {
    EvalOptions o;
    o.scan = scan;
    const Term got = interpret(exact(), markov("t", kIJ, body), o);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(at_ij(got, i, j) == doctest::Approx(at_ij(want, i, j)).epsilon(1e-15));
  }
}

TEST_CASE("an empty matching is the plated product") {
  const TypeContext ctx{{"t", Domain::bint(4)}, {"a", Domain::bint(2)}};
  const Term body = tensor(TensorAtom(ctx, Domain::real(), {1, 2, 3, 4, 5, 6, 7, 8}));
  const Term got = interpret(exact(), markov("t", StepMatching{}, body));
  CHECK(oracle::ground_eval(got, {{"a", {0.0}}}) == 1 + 3 + 5 + 7);
  CHECK(oracle::ground_eval(got, {{"a", {1.0}}}) == 2 + 4 + 6 + 8);
}

TEST_CASE("2x2 chain equals the matrix product") {
  Eigen::MatrixXd m0(2, 2), m1(2, 2), m2(2, 2), m3(2, 2);
  m0 << 0.9, 0.1, 0.2, 0.8;
  m1 << 0.5, 0.5, 0.3, 0.7;
  m2 << 0.6, 0.4, 0.1, 0.9;
  m3 << 0.25, 0.75, 0.5, 0.5;
  const Eigen::MatrixXd prod = m0 * m1 * m2 * m3;
  for (auto scan : {MarkovScan::Sequential, MarkovScan::Parallel}) {
    EvalOptions o;
    o.scan = scan;
    const Term got = interpret(exact(), markov("t", kIJ, chain_body({m0, m1, m2, m3})), o);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(at_ij(got, i, j) == doctest::Approx(std::log(prod(i, j))).epsilon(1e-10));
  }
}

TEST_CASE("identity transitions stay the identity") {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
  const Term got = interpret(exact(), markov("t", kIJ, chain_body({I, I, I, I, I})));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j) {
        CHECK(at_ij(got, i, j) == 0.0);
      } else {
        CHECK(at_ij(got, i, j) == -std::numeric_limits<double>::infinity());
      }
    }
  }
}

TEST_CASE("parallel and sequential scans agree; level counts") {
  std::mt19937_64 rng(2);
  for (std::int64_t T : {2, 3, 4, 7, 9, 16}) {
    std::vector<Eigen::MatrixXd> ms;
    for (std::int64_t t = 0; t < T; ++t) ms.push_back(oracle::random_stochastic(3, rng));
    const Term body = chain_body(ms);
    Evaluator ev(exact());
    std::int64_t levels = -1;
    const Term par = markov_parallel(body, "t", kIJ, ReduceOp::LogSumExp, ev, &levels);
    const Term seq = markov_sequential(body, "t", kIJ, ReduceOp::LogSumExp, ev);
    CHECK(levels == ceil_log2(T));
    Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(3, 3);
    for (const auto& m : ms) prod = prod * m;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        CHECK(at_ij(par, i, j) == doctest::Approx(at_ij(seq, i, j)).epsilon(1e-9));
        CHECK(at_ij(seq, i, j) == doctest::Approx(std::log(prod(i, j))).epsilon(1e-9));
      }
    }
  }
  // the interpretation reports the level count of the last parallel product
  std::vector<Eigen::MatrixXd> ms;
  for (int t = 0; t < 7; ++t) ms.push_back(oracle::random_stochastic(2, rng));
  Evaluator ev(exact());
  ev.eval(markov("t", kIJ, chain_body(ms)));
  CHECK(ev.stats().markov_levels == 3);
}

TEST_CASE("max-product chain") {
  std::mt19937_64 rng(3);
  std::vector<Eigen::MatrixXd> ms;
  for (int t = 0; t < 5; ++t) ms.push_back(oracle::random_stochastic(2, rng));
  const Term got = interpret(exact(), markov("t", kIJ, chain_body(ms), ReduceOp::Max));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      for (int path = 0; path < 16; ++path) {
        int prev = i;
        double s = 0;
        for (int t = 0; t < 5; ++t) {
          const int next = t == 4 ? j : (path >> t) & 1;
          s += std::log(ms[t](prev, next));
          prev = next;
        }
        best = std::max(best, s);
      }
      CHECK(at_ij(got, i, j) == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("gaussian random walk matches a Kalman filter") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  const std::int64_t T = 50;
  const double q = 0.3, r = 0.5, p0 = 2.0;
  Eigen::MatrixXd obs(T, 1);
  for (std::int64_t t = 0; t < T; ++t) obs(t, 0) = (t > 0 ? obs(t - 1, 0) : 0.0) + nd(rng);
  std::vector<double> a(T - 1, 1.0), qs(T - 1, q), ys;
  for (std::int64_t t = 1; t < T; ++t) ys.push_back(obs(t, 0));
  const Term steps = markov("t", StepMatching{{{"x_prev", "x_curr"}}}, gaussian_walk(T - 1, a, qs, ys, r));
  const auto one = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
  const Term first = add(mvn_conditional(TypeContext{}, "x_prev", {}, {{{}, Eigen::VectorXd::Zero(1), one(p0)}}),
                         mvn_conditional(TypeContext{}, "x_prev", {}, {{{}, Eigen::VectorXd::Constant(1, obs(0, 0)), one(r)}}));
  const Term total = reduce(ReduceOp::LogSumExp, std::vector<Name>{"x_prev", "x_curr"}, add(first, steps));
  const double want = oracle::kalman_filter(one(1), one(1), one(q), one(r), Eigen::VectorXd::Zero(1), one(p0), obs);
  for (auto scan : {MarkovScan::Sequential, MarkovScan::Parallel}) {
    EvalOptions o;
    o.scan = scan;
    CHECK(scalar_value(interpret(exact(), total, o)) == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("random gaussian bodies: scans agree pointwise") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.2, 1.5);
  for (std::int64_t T : {2, 3, 5, 6, 11}) {
    std::vector<double> a, q, y;
    for (std::int64_t t = 0; t < T; ++t) {
      a.push_back(nd(rng));
      q.push_back(ud(rng));
      y.push_back(nd(rng));
    }
    const Term body = gaussian_walk(T, a, q, y, ud(rng));
    Evaluator ev(exact());
    std::int64_t levels = -1;
    const StepMatching step{{{"x_prev", "x_curr"}}};
    const Term par = markov_parallel(body, "t", step, ReduceOp::LogSumExp, ev, &levels);
    const Term seq = markov_sequential(body, "t", step, ReduceOp::LogSumExp, ev);
    CHECK(levels == ceil_log2(T));
    for (double x0 : {-1.0, 0.0, 0.7}) {
      for (double x1 : {-0.4, 1.3}) {
        const oracle::Ground g{{"x_prev", {x0}}, {"x_curr", {x1}}};
        CHECK(oracle::ground_eval(to_term(normalize(par)), g) ==
              doctest::Approx(oracle::ground_eval(to_term(normalize(seq)), g)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("substitution into a Markov product") {
  std::mt19937_64 rng(6);
  const TypeContext ctx{{"t", Domain::bint(3)}, {"i", Domain::bint(2)}, {"j", Domain::bint(2)}, {"a", Domain::bint(2)}};
  std::vector<double> v(24);
  std::normal_distribution<double> nd;
  for (auto& x : v) x = nd(rng);
  const Term m = markov("t", kIJ, tensor(TensorAtom(ctx, Domain::real(), v)));
  CHECK(free_vars(m).contains("i"));
  CHECK_FALSE(free_vars(m).contains("t"));
  for (const char* bad : {"i", "j"}) {
    try {
      substitute(m, bad, tensor(TensorAtom::index_value(0, 2)));
      FAIL("expected InvalidSubstitution");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidSubstitution);
    }
  }
  CHECK_THROWS_AS(substitute(m, "a", variable("i", Domain::bint(2))), Error);
  // an unmatched variable goes through
  const Term s = interpret(exact(), substitute(m, "a", tensor(TensorAtom::index_value(1, 2))));
  const Term direct = interpret(exact(), m);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double w = oracle::ground_eval(direct, {{"i", {double(i)}}, {"j", {double(j)}}, {"a", {1.0}}});
      CHECK(at_ij(s, i, j) == doctest::Approx(w).epsilon(1e-12));
    }
}

TEST_CASE("malformed matchings are type errors") {
  const TypeContext ctx{{"t", Domain::bint(3)}, {"i", Domain::bint(2)}, {"j", Domain::bint(3)}};
  const Term body = tensor(TensorAtom::filled(ctx, Domain::real(), 0.0));
  CHECK_THROWS_AS(infer_type(markov("t", kIJ, body)), Error);
  CHECK_THROWS_AS(infer_type(markov("t", StepMatching{{{"i", "k"}}}, body)), Error);
}
