#pragma once

// Independent reference computations used as test oracles. They work on
// plain Eigen arrays and never touch the term language.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double lse(const std::vector<double>& xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd r = x - mean;
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * r.dot(llt.solve(r)) - 0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI) + logdet);
}

// Log-space forward algorithm; use_max gives the Viterbi score.
inline double hmm_forward(const Eigen::VectorXd& init, const Eigen::MatrixXd& trans, const Eigen::MatrixXd& emit,
                          bool use_max = false) {
  const auto K = trans.rows();
  auto combine = [&](const std::vector<double>& xs) {
    return use_max ? *std::max_element(xs.begin(), xs.end()) : lse(xs);
  };
  std::vector<double> alpha(K);
  for (int k = 0; k < K; ++k) alpha[k] = std::log(init(k)) + emit(0, k);
  for (int t = 1; t < emit.rows(); ++t) {
    std::vector<double> next(K);
    for (int j = 0; j < K; ++j) {
      std::vector<double> terms(K);
      for (int i = 0; i < K; ++i) terms[i] = alpha[i] + std::log(trans(i, j));
      next[j] = combine(terms) + emit(t, j);
    }
    alpha = next;
  }
  return combine(alpha);
}

// Moment-form Kalman filter with per-step parameters; returns log p(y_0..y_{T-1}).
struct StepParams {
  Eigen::MatrixXd F, Q, H, R;
};

inline double kalman_filter(const Eigen::VectorXd& m0, const Eigen::MatrixXd& p0,
                            const std::function<StepParams(int)>& params, const Eigen::MatrixXd& obs) {
  Eigen::VectorXd m = m0;
  Eigen::MatrixXd P = p0;
  double ll = 0;
  for (int t = 0; t < obs.rows(); ++t) {
    const auto p = params(t);
    if (t > 0) {
      m = p.F * m;
      P = p.F * P * p.F.transpose() + p.Q;
    }
    const Eigen::VectorXd y = obs.row(t).transpose();
    const Eigen::MatrixXd S = p.H * P * p.H.transpose() + p.R;
    ll += mvn_logpdf(y, p.H * m, S);
    const Eigen::MatrixXd G = P * p.H.transpose() * S.inverse();
    m = m + G * (y - p.H * m);
    P = P - G * p.H * P;
    P = 0.5 * (P + P.transpose()).eval();
  }
  return ll;
}

inline double kalman_filter(const Eigen::MatrixXd& F, const Eigen::MatrixXd& H, const Eigen::MatrixXd& Q,
                            const Eigen::MatrixXd& R, const Eigen::VectorXd& m0, const Eigen::MatrixXd& p0,
                            const Eigen::MatrixXd& obs) {
  return kalman_filter(m0, p0, [&](int) { return StepParams{F, Q, H, R}; }, obs);
}

// Persistent additive bias beta ~ N(0, B) folded into an augmented state.
inline double kalman_filter_bias(const Eigen::MatrixXd& F, const Eigen::MatrixXd& H, const Eigen::MatrixXd& Q,
                                 const Eigen::MatrixXd& R, const Eigen::MatrixXd& B, const Eigen::VectorXd& m0,
                                 const Eigen::MatrixXd& p0, const Eigen::MatrixXd& obs) {
  const auto nz = F.rows();
  const auto nx = H.rows();
  Eigen::MatrixXd Fa = Eigen::MatrixXd::Identity(nz + nx, nz + nx);
  Fa.topLeftCorner(nz, nz) = F;
  Eigen::MatrixXd Qa = Eigen::MatrixXd::Zero(nz + nx, nz + nx);
  Qa.topLeftCorner(nz, nz) = Q;
  Eigen::MatrixXd Ha(nx, nz + nx);
  Ha << H, Eigen::MatrixXd::Identity(nx, nx);
  Eigen::MatrixXd Pa = Eigen::MatrixXd::Zero(nz + nx, nz + nx);
  Pa.topLeftCorner(nz, nz) = p0;
  Pa.bottomRightCorner(nx, nx) = B;
  Eigen::VectorXd ma = Eigen::VectorXd::Zero(nz + nx);
  ma.head(nz) = m0;
  return kalman_filter(Fa, Ha, Qa, R, ma, Pa, obs);
}

// Switching linear dynamical system by enumerating all K^T label sequences.
inline double slds_enumerate(const Eigen::MatrixXd& trans, const Eigen::VectorXd& m0, const Eigen::MatrixXd& p0,
                             const std::vector<Eigen::MatrixXd>& A, const std::vector<Eigen::MatrixXd>& Q,
                             const std::vector<Eigen::MatrixXd>& H, const std::vector<Eigen::MatrixXd>& R,
                             const Eigen::MatrixXd& obs) {
  const int K = static_cast<int>(trans.rows());
  const int T = static_cast<int>(obs.rows());
  std::vector<int> s(T, 0);
  std::vector<double> terms;
  while (true) {
    double lp = 0;
    int prev = 0;
    for (int t = 0; t < T; ++t) {
      lp += std::log(trans(prev, s[t]));
      prev = s[t];
    }
    lp += kalman_filter(m0, p0, [&](int t) { return StepParams{A[s[t]], Q[s[t]], H[s[t]], R[s[t]]}; }, obs);
    terms.push_back(lp);
    int k = 0;
    while (k < T && ++s[k] == K) s[k++] = 0;
    if (k == T) break;
  }
  return lse(terms);
}

// Mixture of Gaussians with K latent means z_k ~ N(m, P) and x_j = z_{c_j} + noise:
// enumerates all assignments of points to components.
inline double gmm_enumerate(const Eigen::VectorXd& w, const Eigen::MatrixXd& data, const Eigen::VectorXd& m,
                            const Eigen::MatrixXd& P, const std::vector<Eigen::MatrixXd>& noise) {
  const int K = static_cast<int>(w.size());
  const int N = static_cast<int>(data.rows());
  const int D = static_cast<int>(data.cols());
  std::vector<int> c(N, 0);
  std::vector<double> terms;
  Eigen::VectorXd x(N * D);
  for (int j = 0; j < N; ++j) x.segment(j * D, D) = data.row(j).transpose();
  while (true) {
    double lp = 0;
    Eigen::VectorXd mean(N * D);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(N * D, N * D);
    for (int j = 0; j < N; ++j) {
      lp += std::log(w(c[j]));
      mean.segment(j * D, D) = m;
      for (int k = 0; k < N; ++k) {
        if (c[j] == c[k]) cov.block(j * D, k * D, D, D) = P;
      }
      cov.block(j * D, j * D, D, D) += noise[c[j]];
    }
    terms.push_back(lp + mvn_logpdf(x, mean, cov));
    int k = 0;
    while (k < N && ++c[k] == K) c[k++] = 0;
    if (k == N) break;
  }
  return lse(terms);
}

// Random symmetric positive-definite matrix with eigenvalues bounded away from 0.
inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double floor = 0.5) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) a(r, c) = nd(rng);
  }
  return a * a.transpose() / n + floor * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXd a(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) a(i, j) = nd(rng);
  }
  return a;
}

inline Eigen::MatrixXd random_stochastic(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd a(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) a(i, j) = u(rng);
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

}  // namespace oracle
