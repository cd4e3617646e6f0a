#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "doctest.h"
#include "funsor/funsor.hpp"
#include "oracles.hpp"

using namespace funsor;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

// Mixture over v:Z_K of Gaussians over x:R^d given in moment form.
struct Mixture {
  std::vector<double> logw;
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> cov;
};

std::pair<TensorAtom, GaussianAtom> to_atoms(const Mixture& m) {
  const auto K = static_cast<std::int64_t>(m.mean.size());
  const auto d = m.mean[0].size();
  std::vector<double> info, prec;
  for (std::int64_t k = 0; k < K; ++k) {
    const Eigen::MatrixXd P = m.cov[k].inverse();
    const Eigen::VectorXd i = P * m.mean[k];
    info.insert(info.end(), i.data(), i.data() + d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) prec.push_back(P(r, c));
  }
  const TypeContext batch{{"v", Domain::bint(K)}};
  const Domain xd = d == 1 ? Domain::real() : Domain::reals({d});
  return {TensorAtom(batch, Domain::real(), m.logw),
          GaussianAtom({{"x", xd}}, TensorAtom(batch, Domain::reals({d}), info), TensorAtom(batch, Domain::reals({d, d}), prec))};
}

// log of the integral of exp(i'x - x'Px/2) for the moment-form component.
double component_log_mass(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  const auto d = static_cast<double>(mu.size());
  const Eigen::MatrixXd P = cov.inverse();
  return 0.5 * d * std::log(2 * std::numbers::pi) + 0.5 * std::log(cov.determinant()) + 0.5 * mu.dot(P * mu);
}

Eigen::VectorXd matched_mean(const GaussianAtom& g) { return g.prec(0).inverse() * g.info(0); }
Eigen::MatrixXd matched_cov(const GaussianAtom& g) { return g.prec(0).inverse(); }

// One draw, evaluated to its scalar value with a fresh rewrite budget.
double draw(const TensorAtom& w, const std::optional<Term>& rest, RngState& rng) {
  Evaluator ev(exact());
  return scalar_value(ev.eval(mc_sample_discrete(w, "v", rest, rng, ev)));
}
double draw(const GaussianAtom& g, const std::optional<Term>& rest, RngState& rng) {
  Evaluator ev(exact());
  return scalar_value(ev.eval(*mc_sample_gaussian(g, "x", rest, rng, ev)));
}

}  // namespace

TEST_CASE("moment matching: symmetric pair") {
  Mixture m{{std::log(0.5), std::log(0.5)},
            {Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)},
            {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)}};
  const auto [t, g] = to_atoms(m);
  const auto [g2, w] = moment_match(t, g, "v");
  CHECK(g2.batch().size() == 0);
  CHECK(std::abs(matched_mean(g2)(0)) <= 1e-12);
  CHECK(matched_cov(g2)(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  // each component integrates to sqrt(2 pi) e^{1/2}; the match to sqrt(4 pi)
  CHECK(w.item() == doctest::Approx(0.5 - 0.5 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("moment matching: a single component is unchanged") {
  std::mt19937_64 rng(1);
  const Eigen::VectorXd mu = oracle::random_matrix(2, 1, rng);
  const Eigen::MatrixXd cov = oracle::random_spd(2, rng);
  const auto [t, g] = to_atoms(Mixture{{0.3}, {mu}, {cov}});
  const auto [g2, w] = moment_match(t, g, "v");
  CHECK((g2.info(0) - g.info(0)).norm() <= 1e-10);
  CHECK((g2.prec(0) - g.prec(0)).norm() <= 1e-10);
  CHECK(w.item() == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("moment matching: identical components") {
  std::mt19937_64 rng(2);
  const Eigen::VectorXd mu = oracle::random_matrix(2, 1, rng);
  const Eigen::MatrixXd cov = oracle::random_spd(2, rng);
  const auto [t, g] = to_atoms(Mixture{{std::log(0.2), std::log(0.8)}, {mu, mu}, {cov, cov}});
  const auto [g2, w] = moment_match(t, g, "v");
  CHECK((g2.info(0) - g.info(0)).norm() <= 1e-10);
  CHECK((g2.prec(0) - g.prec(0)).norm() <= 1e-10);
  CHECK(std::abs(w.item()) <= 1e-10);
}

TEST_CASE("moment matching: random 2-D mixture vs samples and quadrature") {
  std::mt19937_64 rng(3);
  Mixture m;
  for (int k = 0; k < 2; ++k) {
    m.logw.push_back(std::log(0.3 + 0.4 * k));
    m.mean.push_back(oracle::random_matrix(2, 1, rng, 1.5));
    m.cov.push_back(oracle::random_spd(2, rng));
  }
  const auto [t, g] = to_atoms(m);
  const auto [g2, w] = moment_match(t, g, "v");
  const Eigen::VectorXd mu = matched_mean(g2);
  const Eigen::MatrixXd S = matched_cov(g2);

  // component weights include each Gaussian's mass
  std::vector<double> lm;
  for (int k = 0; k < 2; ++k) lm.push_back(m.logw[k] + component_log_mass(m.mean[k], m.cov[k]));
  const double total = oracle::lse(lm);

  const int N = 1000000;
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  const double p0 = std::exp(lm[0] - total);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol{m.cov[0].llt(), m.cov[1].llt()};
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(2, 2), s4 = Eigen::MatrixXd::Zero(2, 2);
  std::vector<Eigen::Vector2d> xs(N);
  for (int n = 0; n < N; ++n) {
    const int k = ud(rng) < p0 ? 0 : 1;
    const Eigen::Vector2d e(nd(rng), nd(rng));
    xs[n] = m.mean[k] + chol[k].matrixL() * e;
    s1 += xs[n];
  }
  const Eigen::VectorXd smean = s1 / N;
  for (const auto& x : xs) {
    const Eigen::Vector2d c = x - smean;
    const Eigen::Matrix2d o = c * c.transpose();
    s2 += o;
    s4 += o.cwiseProduct(o);
  }
  const Eigen::MatrixXd scov = s2 / N;
  for (int r = 0; r < 2; ++r) {
    CHECK(std::abs(mu(r) - smean(r)) <= 3 * std::sqrt(S(r, r) / N));
    for (int c = 0; c < 2; ++c) {
      const double se = std::sqrt((s4(r, c) / N - scov(r, c) * scov(r, c)) / N);
      CHECK(std::abs(S(r, c) - scov(r, c)) <= 3 * se);
    }
  }

  // mass: grid quadrature of the original mixture
  const double h = 0.02;
  double q = 0;
  for (double a = -14; a <= 14; a += h) {
    for (double b = -14; b <= 14; b += h) {
      const Eigen::Vector2d x(a, b);
      for (int k = 0; k < 2; ++k) q += std::exp(lm[k] + oracle::mvn_logpdf(x, m.mean[k], m.cov[k]));
    }
  }
  const double quad = std::log(q * h * h);
  const double matched = w.item() + gaussian_log_normalizer(g2).item();
  CHECK(matched == doctest::Approx(total).epsilon(1e-10));
  CHECK(std::abs(matched - quad) <= 1e-3);
}

TEST_CASE("moment matching rejects a singular component") {
  const TypeContext batch{{"v", Domain::bint(2)}};
  const GaussianAtom g({{"x", Domain::real()}}, TensorAtom(batch, Domain::reals({1}), {0.0, 0.0}),
                       TensorAtom(batch, Domain::reals({1, 1}), {1.0, 0.0}));
  try {
    moment_match(TensorAtom(batch, Domain::real(), {0.0, 0.0}), g, "v");
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
}

TEST_CASE("rng state") {
  RngState a{42, 7}, b{42, 7};
  auto ea = rng_engine(a);
  auto eb = rng_engine(b);
  CHECK(a.counter == 8);
  for (int k = 0; k < 10; ++k) CHECK(ea() == eb());
  // both advanced to counter 8; a different counter is a different stream
  RngState c{42, 9}, d{42, 8};
  CHECK(rng_engine(a)() == rng_engine(b)());
  CHECK(rng_engine(c)() != rng_engine(d)());
}

TEST_CASE("discrete sampling") {
  const TypeContext vc{{"v", Domain::bint(3)}};
  const Term rest = tensor(TensorAtom(vc, Domain::real(), {10, 20, 30}));
  RngState rng{5, 0};
  for (int k = 0; k < 20; ++k) {
    const double r = draw(TensorAtom(vc, Domain::real(), {-kInf, std::log(0.3), -kInf}), rest, rng);
    CHECK(r == doctest::Approx(std::log(0.3) + 20).epsilon(1e-15));
  }
  CHECK(rng.counter == 20);

  // w_D contributes nothing to the value
  const double bare = draw(TensorAtom(vc, Domain::real(), {0.1, 0.2, 0.3}), std::nullopt, rng);
  CHECK(bare == doctest::Approx(oracle::lse({0.1, 0.2, 0.3})).epsilon(1e-15));

  // unbiased in linear space
  const TypeContext v4{{"v", Domain::bint(4)}};
  const TensorAtom w(v4, Domain::real(), {0, 0, 0, 0});
  const Term r4 = tensor(TensorAtom(v4, Domain::real(), {0.0, -1.0, -2.0, 0.5}));
  const double exact_lin = std::exp(oracle::lse({0.0, -1.0, -2.0, 0.5}));
  const int N = 100000;
  double s = 0, s2 = 0;
  RngState r{2024, 0};
  std::vector<double> first;
  for (int n = 0; n < N; ++n) {
    const double e = std::exp(draw(w, r4, r));
    if (n < 50) first.push_back(e);
    s += e;
    s2 += e * e;
  }
  const double mean = s / N;
  const double se = std::sqrt((s2 / N - mean * mean) / N);
  CHECK(std::abs(mean - exact_lin) <= 3 * se);

  RngState again{2024, 0};
  for (int n = 0; n < 50; ++n) CHECK(std::exp(draw(w, r4, again)) == first[n]);
}

TEST_CASE("gaussian sampling") {
  const auto one = [](double v) { return TensorAtom(TypeContext{}, Domain::reals({1}), {v}); };
  const auto sq = [](double v) { return TensorAtom(TypeContext{}, Domain::reals({1, 1}), {v}); };
  const GaussianAtom g({{"x", Domain::real()}}, one(1.2), sq(2.0));
  const double wn = gaussian_log_normalizer(g).item();
  RngState rng{9, 0};

  // without rest the estimate is exactly the normalizer
  for (int k = 0; k < 5; ++k) CHECK(draw(g, std::nullopt, rng) == wn);

  // sample mean of the location
  const Term loc = variable("x", Domain::real());
  const int N = 100000;
  double s = 0;
  for (int n = 0; n < N; ++n) s += draw(g, loc, rng) - wn;
  CHECK(std::abs(s / N - 0.6) <= 3 * std::sqrt(0.5 / N));

  // standard normal times exp(-x^2/2): mean of exp(estimate) is sqrt(pi)
  const GaussianAtom sn({{"x", Domain::real()}}, one(0.0), sq(1.0));
  const Term rest = gaussian(sn);
  double m = 0, m2 = 0;
  for (int n = 0; n < N; ++n) {
    const double e = std::exp(draw(sn, rest, rng));
    m += e;
    m2 += e * e;
  }
  const double mean = m / N;
  const double want = std::exp(gaussian_log_normalizer(gaussian_fuse(sn, sn)).item());
  CHECK(want == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-12));
  CHECK(std::abs(mean - want) <= 3 * std::sqrt((m2 / N - mean * mean) / N));

  // two real variables: declines
  const GaussianAtom two({{"x", Domain::real()}, {"y", Domain::real()}}, TensorAtom(TypeContext{}, Domain::reals({2}), {0, 0}),
                         TensorAtom(TypeContext{}, Domain::reals({2, 2}), {1, 0, 0, 1}));
  Evaluator ev(exact());
  CHECK_FALSE(mc_sample_gaussian(two, "x", std::nullopt, rng, ev).has_value());
}

TEST_CASE("interpretations on a closed mixture") {
  // sum_c sum_x w_c N(x; mu_c, 1): MM and Exact give the same total mass
  const TypeContext vc{{"v", Domain::bint(2)}};
  const GaussianAtom g({{"x", Domain::real()}}, TensorAtom(vc, Domain::reals({1}), {-1.0, 2.0}),
                       TensorAtom(vc, Domain::reals({1, 1}), {1.0, 1.0}));
  const Term t = reduce(ReduceOp::LogSumExp, std::vector<Name>{"v", "x"},
                        add(tensor(TensorAtom(vc, Domain::real(), {std::log(0.4), std::log(0.6)})), gaussian(g)));
  const double want = std::log(std::sqrt(2 * std::numbers::pi)) + oracle::lse({std::log(0.4) + 0.5, std::log(0.6) + 2.0});
  CHECK(scalar_value(interpret(exact(), t)) == doctest::Approx(want).epsilon(1e-12));
  CHECK(scalar_value(interpret(moment_matching(), t)) == doctest::Approx(want).epsilon(1e-10));
  EvalOptions o;
  o.rng = {3, 0};
  const double a = scalar_value(interpret(monte_carlo(), t, o));
  const double b = scalar_value(interpret(monte_carlo(), t, o));
  CHECK(a == b);
  CHECK(std::isfinite(a));
}
