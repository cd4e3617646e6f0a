#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "funsor/terms.hpp"

namespace funsor {

// Log-density of out ~ N(sum_k A_k in_k + b, C) for one batch slice.
struct LinearGaussianSlice {
  std::vector<Eigen::MatrixXd> coeffs;  // one per input, out_dim x in_dim
  Eigen::VectorXd bias;
  Eigen::MatrixXd cov;
};

// Tensor constant + Gaussian over (inputs..., out), batched over `batch` with
// one slice per batch element in row-major order.
Term mvn_conditional(const TypeContext& batch, const Name& out, const std::vector<Name>& inputs,
                     const std::vector<LinearGaussianSlice>& slices);

struct HmmSpec {
  std::int64_t K = 0;
  std::int64_t T = 0;
  Eigen::MatrixXd transition;     // K x K, rows sum to 1
  Eigen::MatrixXd emission_logp;  // T x K
  Eigen::VectorXd initial;        // K; empty means uniform
};

struct KalmanSpec {
  Eigen::MatrixXd F, H, Q, R;
  Eigen::MatrixXd observations;  // T x n_x
  Eigen::VectorXd init_mean;     // empty means zero
  Eigen::MatrixXd init_cov;      // empty means identity
  bool bias = false;
  Eigen::MatrixXd B;  // bias prior covariance
};

struct SldsSpec {
  std::int64_t K = 0;
  Eigen::MatrixXd transition;  // K x K; the first step uses row 0
  Eigen::VectorXd init_mean;
  Eigen::MatrixXd init_cov;
  std::vector<Eigen::MatrixXd> A, Q, H, R;  // per switching state
  std::int64_t window = 1;
};

struct GmmSpec {
  std::int64_t K = 0;
  Eigen::VectorXd weights;  // K, linear
  Eigen::MatrixXd data;     // N x D
  Eigen::VectorXd prior_info;
  Eigen::MatrixXd prior_precision;
  double prior_const = 0.0;  // log-density at z = 0
  // Joint information form over (z, x) per component: K x 2D and K x (2D x 2D).
  std::vector<Eigen::VectorXd> cond_info;
  std::vector<Eigen::MatrixXd> cond_precision;
  Eigen::VectorXd cond_const;  // K
};

// Moment-form convenience: z ~ N(mean, cov), x | z, c ~ N(z, noise_cov[c]).
GmmSpec gmm_from_moments(const Eigen::VectorXd& weights, const Eigen::MatrixXd& data, const Eigen::VectorXd& prior_mean,
                         const Eigen::MatrixXd& prior_cov, const std::vector<Eigen::MatrixXd>& noise_cov);

void validate(const HmmSpec& spec);
void validate(const KalmanSpec& spec);
void validate(const SldsSpec& spec, const Eigen::MatrixXd& observations);
void validate(const GmmSpec& spec);

// Closed terms whose value is the log marginal likelihood (or the MAP log
// value when sum_op is Max).
Term build_hmm(const HmmSpec& spec, ReduceOp sum_op = ReduceOp::LogSumExp);
Term build_kalman(const KalmanSpec& spec);
Term build_slds_marginal(const SldsSpec& spec, const Eigen::MatrixXd& observations);
Term build_gmm(const GmmSpec& spec);

}  // namespace funsor
