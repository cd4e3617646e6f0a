#include "funsor/models.hpp"

#include <cmath>
#include <string>

namespace funsor {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

[[noreturn]] void invalid(const std::string& what) { fail(ErrorCode::ValidationError, what); }

Domain vec(std::int64_t d) { return Domain::reals({d}); }

std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
  }
  return out;
}

std::vector<double> as_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Rows [from, rows) of m as a tensor over (over : rows - from) with vector output.
TensorAtom rows_tensor(const Eigen::MatrixXd& m, Eigen::Index from, const Name& over) {
  const Eigen::MatrixXd block = m.bottomRows(m.rows() - from);
  return TensorAtom(TypeContext{{over, Domain::bint(block.rows())}}, vec(block.cols()), row_major(block));
}

Term log_probs(const TypeContext& inputs, const Eigen::MatrixXd& probs) {
  return tensor(TensorAtom(inputs, Domain::real(), row_major(probs.array().log().matrix())));
}

void check_square(const Eigen::MatrixXd& m, Eigen::Index n, const std::string& what) {
  if (m.rows() != n || m.cols() != n) {
    invalid(what + " must be " + std::to_string(n) + "x" + std::to_string(n));
  }
}

void check_pd(const Eigen::MatrixXd& m, Eigen::Index n, const std::string& what) {
  check_square(m, n, what);
  if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    invalid(what + " must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) invalid(what + " must be positive definite");
}

void check_stochastic(const Eigen::MatrixXd& m, Eigen::Index k, const std::string& what) {
  check_square(m, k, what);
  for (Eigen::Index r = 0; r < k; ++r) {
    if ((m.row(r).array() < 0).any() || !m.row(r).allFinite()) invalid(what + " entries must be nonnegative");
    if (std::abs(m.row(r).sum() - 1.0) > 1e-9) invalid(what + " rows must sum to 1");
  }
}

void check_distribution(const Eigen::VectorXd& v, Eigen::Index k, const std::string& what) {
  if (v.size() != k) invalid(what + " must have " + std::to_string(k) + " entries");
  if ((v.array() < 0).any() || !v.allFinite() || std::abs(v.sum() - 1.0) > 1e-9) {
    invalid(what + " must be a probability vector");
  }
}

}  // namespace

Term mvn_conditional(const TypeContext& batch, const Name& out, const std::vector<Name>& inputs,
                     const std::vector<LinearGaussianSlice>& slices) {
  std::int64_t nb = 1;
  for (const auto& e : batch) nb *= e.domain.size();
  if (static_cast<std::int64_t>(slices.size()) != nb || slices.empty()) {
    fail(ErrorCode::ValidationError, "need one linear-Gaussian slice per batch element");
  }
  const auto dout = slices[0].bias.size();
  std::vector<ContextEntry> reals;
  std::int64_t dim = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    reals.push_back({inputs[k], vec(slices[0].coeffs.at(k).cols())});
    dim += slices[0].coeffs[k].cols();
  }
  reals.push_back({out, vec(dout)});
  dim += dout;

  std::vector<double> consts(nb);
  std::vector<double> info(nb * dim);
  std::vector<double> prec(nb * dim * dim);
  for (std::int64_t b = 0; b < nb; ++b) {
    const auto& s = slices[b];
    if (s.coeffs.size() != inputs.size() || s.bias.size() != dout) {
      fail(ErrorCode::ValidationError, "inconsistent linear-Gaussian slice shapes");
    }
    Eigen::MatrixXd J(dout, dim);
    Eigen::Index col = 0;
    for (const auto& a : s.coeffs) {
      if (a.rows() != dout) fail(ErrorCode::ValidationError, "coefficient rows must match the output size");
      J.middleCols(col, a.cols()) = -a;
      col += a.cols();
    }
    J.rightCols(dout).setIdentity();
    Eigen::LLT<Eigen::MatrixXd> llt(s.cov);
    if (llt.info() != Eigen::Success) fail(ErrorCode::ValidationError, "noise covariance must be positive definite");
    const Eigen::MatrixXd cinv_j = llt.solve(J);
    const Eigen::VectorXd cinv_b = llt.solve(s.bias);
    const Eigen::MatrixXd lam = J.transpose() * cinv_j;
    const Eigen::VectorXd iv = J.transpose() * cinv_b;
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    consts[b] = -0.5 * s.bias.dot(cinv_b) - 0.5 * (static_cast<double>(dout) * kLog2Pi + logdet);
    for (std::int64_t r = 0; r < dim; ++r) {
      info[b * dim + r] = iv(r);
      for (std::int64_t c = 0; c < dim; ++c) prec[(b * dim + r) * dim + c] = 0.5 * (lam(r, c) + lam(c, r));
    }
  }
  GaussianAtom g(std::move(reals), TensorAtom(batch, vec(dim), std::move(info)),
                 TensorAtom(batch, Domain::reals({dim, dim}), std::move(prec)));
  return add(tensor(TensorAtom(batch, Domain::real(), std::move(consts))), gaussian(std::move(g)));
}

// ---------------------------------------------------------------------------
// Validation

void validate(const HmmSpec& spec) {
  if (spec.K < 1 || spec.T < 1) invalid("HMM needs K >= 1 and T >= 1");
  check_stochastic(spec.transition, spec.K, "transition");
  if (spec.emission_logp.rows() != spec.T || spec.emission_logp.cols() != spec.K) {
    invalid("emission must be T x K");
  }
  for (Eigen::Index k = 0; k < spec.emission_logp.size(); ++k) {
    if (std::isnan(spec.emission_logp.data()[k]) || spec.emission_logp.data()[k] == HUGE_VAL) {
      invalid("emission log-likelihoods must not be NaN or +inf");
    }
  }
  if (spec.initial.size() > 0) check_distribution(spec.initial, spec.K, "initial");
}

void validate(const KalmanSpec& spec) {
  const auto nz = spec.F.rows();
  const auto nx = spec.H.rows();
  if (nz < 1 || nx < 1) invalid("Kalman model needs state and observation dimensions >= 1");
  check_square(spec.F, nz, "F");
  if (spec.H.cols() != nz) invalid("H must be n_x x n_z");
  check_pd(spec.Q, nz, "Q");
  check_pd(spec.R, nx, "R");
  if (spec.observations.rows() < 1 || spec.observations.cols() != nx) invalid("observations must be T x n_x, T >= 1");
  if (!spec.observations.allFinite()) invalid("observations must be finite");
  if (spec.init_mean.size() > 0 && spec.init_mean.size() != nz) invalid("init_mean must have n_z entries");
  if (spec.init_cov.size() > 0) check_pd(spec.init_cov, nz, "init_cov");
  if (spec.bias) check_pd(spec.B, nx, "B");
}

void validate(const SldsSpec& spec, const Eigen::MatrixXd& observations) {
  if (spec.K < 1) invalid("SLDS needs K >= 1");
  if (spec.window < 1) invalid("window length must be >= 1");
  check_stochastic(spec.transition, spec.K, "transition");
  const auto n = spec.init_mean.size();
  if (n < 1) invalid("init_mean must be nonempty");
  check_pd(spec.init_cov, n, "init_cov");
  const auto k = static_cast<std::size_t>(spec.K);
  if (spec.A.size() != k || spec.Q.size() != k || spec.H.size() != k || spec.R.size() != k) {
    invalid("A, Q, H, R need one matrix per switching state");
  }
  const auto m = spec.H[0].rows();
  for (std::size_t s = 0; s < k; ++s) {
    check_square(spec.A[s], n, "A");
    check_pd(spec.Q[s], n, "Q");
    if (spec.H[s].rows() != m || spec.H[s].cols() != n) invalid("H must be obs_dim x state_dim");
    check_pd(spec.R[s], m, "R");
  }
  if (observations.rows() < 1 || observations.cols() != m || !observations.allFinite()) {
    invalid("observations must be finite, T x obs_dim with T >= 1");
  }
}

void validate(const GmmSpec& spec) {
  if (spec.K < 1) invalid("GMM needs K >= 1");
  check_distribution(spec.weights, spec.K, "weights");
  const auto d = spec.data.cols();
  if (spec.data.rows() < 1 || d < 1 || !spec.data.allFinite()) invalid("data must be finite N x D");
  if (spec.prior_info.size() != d) invalid("prior must be over R^D");
  check_pd(spec.prior_precision, d, "prior precision");
  const auto k = static_cast<std::size_t>(spec.K);
  if (spec.cond_info.size() != k || spec.cond_precision.size() != k || spec.cond_const.size() != spec.K) {
    invalid("conditional needs one (info, precision, const) per component");
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (spec.cond_info[c].size() != 2 * d) invalid("conditional info must be over (z, x)");
    check_square(spec.cond_precision[c], 2 * d, "conditional precision");
  }
}

GmmSpec gmm_from_moments(const Eigen::VectorXd& weights, const Eigen::MatrixXd& data, const Eigen::VectorXd& prior_mean,
                         const Eigen::MatrixXd& prior_cov, const std::vector<Eigen::MatrixXd>& noise_cov) {
  GmmSpec spec;
  const auto d = prior_mean.size();
  spec.K = weights.size();
  spec.weights = weights;
  spec.data = data;
  check_pd(prior_cov, d, "prior_cov");
  Eigen::LLT<Eigen::MatrixXd> pl(prior_cov);
  spec.prior_precision = pl.solve(Eigen::MatrixXd::Identity(d, d));
  spec.prior_info = pl.solve(prior_mean);
  spec.prior_const = -0.5 * prior_mean.dot(spec.prior_info) -
                     0.5 * (static_cast<double>(d) * kLog2Pi + 2.0 * pl.matrixLLT().diagonal().array().log().sum());
  spec.cond_const.resize(spec.K);
  if (noise_cov.size() != static_cast<std::size_t>(spec.K)) invalid("noise_cov needs one matrix per component");
  for (std::int64_t c = 0; c < spec.K; ++c) {
    check_pd(noise_cov[c], d, "noise_cov");
    Eigen::LLT<Eigen::MatrixXd> nl(noise_cov[c]);
    const Eigen::MatrixXd p = nl.solve(Eigen::MatrixXd::Identity(d, d));
    Eigen::MatrixXd joint(2 * d, 2 * d);
    joint << p, -p, -p, p;
    spec.cond_precision.push_back(joint);
    spec.cond_info.push_back(Eigen::VectorXd::Zero(2 * d));
    spec.cond_const(c) = -0.5 * (static_cast<double>(d) * kLog2Pi + 2.0 * nl.matrixLLT().diagonal().array().log().sum());
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Builders

Term build_hmm(const HmmSpec& spec, ReduceOp sum_op) {
  validate(spec);
  const auto K = spec.K;
  const TypeContext i{{"i", Domain::bint(K)}};
  const Eigen::VectorXd init = spec.initial.size() ? spec.initial : Eigen::VectorXd::Constant(K, 1.0 / K);
  Term emit0 = tensor(TensorAtom(i, Domain::real(), as_vector(spec.emission_logp.row(0).transpose())));
  Term head = add(log_probs(i, init.transpose()), emit0);
  if (spec.T == 1) return reduce(sum_op, "i", head);

  Term trans = log_probs(TypeContext{{"i", Domain::bint(K)}, {"j", Domain::bint(K)}}, spec.transition);
  const Eigen::MatrixXd rest = spec.emission_logp.bottomRows(spec.T - 1);
  Term emit = tensor(
      TensorAtom(TypeContext{{"t", Domain::bint(spec.T - 1)}, {"j", Domain::bint(K)}}, Domain::real(), row_major(rest)));
  Term chain = markov("t", StepMatching{{{"i", "j"}}}, add(trans, emit), sum_op);
  return reduce(sum_op, std::vector<Name>{"i", "j"}, add(head, chain));
}

Term build_kalman(const KalmanSpec& spec) {
  validate(spec);
  const auto nz = spec.F.rows();
  const auto nx = spec.H.rows();
  const auto T = spec.observations.rows();
  const Eigen::VectorXd m0 = spec.init_mean.size() ? spec.init_mean : Eigen::VectorXd::Zero(nz);
  const Eigen::MatrixXd p0 = spec.init_cov.size() ? spec.init_cov : Eigen::MatrixXd::Identity(nz, nz);

  auto observe = [&](const Name& z) {
    std::vector<Name> ins{z};
    LinearGaussianSlice s{{spec.H}, Eigen::VectorXd::Zero(nx), spec.R};
    if (spec.bias) {
      ins.push_back("beta");
      s.coeffs.push_back(Eigen::MatrixXd::Identity(nx, nx));
    }
    return mvn_conditional({}, "x", ins, {s});
  };

  std::vector<Term> parts{mvn_conditional({}, "z_prev", {}, {{{}, m0, p0}})};
  const Eigen::VectorXd y0 = spec.observations.row(0).transpose();
  parts.push_back(subst(observe("z_prev"), {{"x", tensor(TensorAtom(TypeContext{}, vec(nx), as_vector(y0)))}}));
  if (spec.bias) parts.push_back(mvn_conditional({}, "beta", {}, {{{}, Eigen::VectorXd::Zero(nx), spec.B}}));
  std::vector<Name> vars{"z_prev", "beta"};
  if (T > 1) {
    Term trans = mvn_conditional({}, "z_curr", {"z_prev"}, {{{spec.F}, Eigen::VectorXd::Zero(nz), spec.Q}});
    Term obs = subst(observe("z_curr"), {{"x", tensor(rows_tensor(spec.observations, 1, "t"))}});
    parts.push_back(markov("t", StepMatching{{{"z_prev", "z_curr"}}}, add(trans, obs)));
    vars.push_back("z_curr");
  }
  return reduce(ReduceOp::LogSumExp, vars, sum_of(parts));
}

Term build_slds_marginal(const SldsSpec& spec, const Eigen::MatrixXd& observations) {
  validate(spec, observations);
  const auto K = spec.K;
  const auto n = spec.init_mean.size();
  const auto T = observations.rows();
  const auto L = spec.window;
  const TypeContext s_batch{{"s", Domain::bint(K)}};

  Term trans = log_probs(TypeContext{{"s_prev", Domain::bint(K)}, {"s_curr", Domain::bint(K)}}, spec.transition);
  Term x_init = mvn_conditional({}, "xc", {}, {{{}, spec.init_mean, spec.init_cov}});
  std::vector<LinearGaussianSlice> ts;
  std::vector<LinearGaussianSlice> ys;
  for (std::int64_t k = 0; k < K; ++k) {
    ts.push_back({{spec.A[k]}, Eigen::VectorXd::Zero(n), spec.Q[k]});
    ys.push_back({{spec.H[k]}, Eigen::VectorXd::Zero(spec.H[k].rows()), spec.R[k]});
  }
  Term x_trans = mvn_conditional(s_batch, "xc", {"xp"}, ts);
  Term y_dist = mvn_conditional(s_batch, "y", {"x"}, ys);

  auto s_var = [&](std::int64_t t) { return variable("s_" + std::to_string(t), Domain::bint(K)); };
  auto x_var = [&](std::int64_t t) { return variable("x_" + std::to_string(t), vec(n)); };
  auto names = [&](std::int64_t t) { return std::vector<Name>{"s_" + std::to_string(t), "x_" + std::to_string(t)}; };

  Term log_prob = number(0.0);
  for (std::int64_t t = 0; t < T; ++t) {
    Term prev = t == 0 ? tensor(TensorAtom::index_value(0, K)) : s_var(t - 1);
    log_prob = add(log_prob, subst(trans, {{"s_prev", prev}, {"s_curr", s_var(t)}}));
    if (t == 0) {
      log_prob = add(log_prob, subst(x_init, {{"xc", x_var(0)}}));
    } else {
      log_prob = add(log_prob, subst(x_trans, {{"s", s_var(t)}, {"xp", x_var(t - 1)}, {"xc", x_var(t)}}));
    }
    if (t > L - 1) log_prob = reduce(ReduceOp::LogSumExp, names(t - L), log_prob);
    const Eigen::VectorXd y = observations.row(t).transpose();
    Term obs = tensor(TensorAtom(TypeContext{}, vec(y.size()), as_vector(y)));
    log_prob = add(log_prob, subst(y_dist, {{"s", s_var(t)}, {"x", x_var(t)}, {"y", obs}}));
  }
  // The remaining window is reduced in one joint step so that every real is
  // integrated before any switching state is summed.
  std::vector<Name> rest;
  for (std::int64_t t = std::max<std::int64_t>(0, T - L); t < T; ++t) {
    for (const auto& v : names(t)) rest.push_back(v);
  }
  return reduce(ReduceOp::LogSumExp, rest, log_prob);
}

Term build_gmm(const GmmSpec& spec) {
  validate(spec);
  const auto K = spec.K;
  const auto N = spec.data.rows();
  const auto D = spec.data.cols();
  const TypeContext c_ctx{{"c", Domain::bint(K)}};

  Term logp_c = log_probs(c_ctx, spec.weights.transpose());
  std::vector<double> ci;
  std::vector<double> cp;
  for (std::int64_t c = 0; c < K; ++c) {
    auto a = as_vector(spec.cond_info[c]);
    auto b = row_major(spec.cond_precision[c]);
    ci.insert(ci.end(), a.begin(), a.end());
    cp.insert(cp.end(), b.begin(), b.end());
  }
  Term logp_xc =
      add(tensor(TensorAtom(c_ctx, Domain::real(), as_vector(spec.cond_const))),
          gaussian(GaussianAtom({{"z", vec(D)}, {"x", vec(D)}}, TensorAtom(c_ctx, vec(2 * D), std::move(ci)),
                                TensorAtom(c_ctx, Domain::reals({2 * D, 2 * D}), std::move(cp)))));
  Term logp_z = add(number(spec.prior_const),
                    gaussian(GaussianAtom({{"z", vec(D)}}, TensorAtom(TypeContext{}, vec(D), as_vector(spec.prior_info)),
                                          TensorAtom(TypeContext{}, Domain::reals({D, D}),
                                                     row_major(spec.prior_precision)))));

  Term z = variable("z", Domain::reals({K, D}));
  Term c = variable("c", Domain::bint(K));
  Term j = variable("j", Domain::bint(N));
  Term x = tensor(TensorAtom(TypeContext{}, Domain::reals({N, D}), row_major(spec.data)));
  Term z_c = apply(LiftedOp::Take, {z, c});

  Term per_point = reduce(ReduceOp::LogSumExp, "c",
                          add(logp_c, subst(logp_xc, {{"z", z_c}, {"x", apply(LiftedOp::Take, {x, j})}})));
  Term likelihood = reduce(ReduceOp::Add, "j", per_point);
  Term prior = reduce(ReduceOp::Add, "c", subst(logp_z, {{"z", z_c}}));
  return reduce(ReduceOp::LogSumExp, "z", add(likelihood, prior));
}

}  // namespace funsor
