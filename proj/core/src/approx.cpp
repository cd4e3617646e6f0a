#include "funsor/approx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace funsor {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

// Plain Cholesky with a pivot-ratio guard: no jitter, singular is an error.
Eigen::LLT<Eigen::MatrixXd> strict_cholesky(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  bool ok = llt.info() == Eigen::Success && m.allFinite();
  if (ok && m.rows() > 0) {
    const Eigen::VectorXd d = llt.matrixLLT().diagonal();
    ok = d.minCoeff() * d.minCoeff() > 1e-12 * d.maxCoeff() * d.maxCoeff();
  }
  if (!ok) fail(ErrorCode::RankDeficient, std::string(what) + ": singular component precision");
  return llt;
}

double half_logdet(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return llt.matrixLLT().diagonal().array().log().sum();
}

TypeContext with_last(const TypeContext& ctx, const Name& v, const Domain& d) {
  TypeContext out;
  for (const auto& e : ctx) {
    if (e.name != v) out.add(e.name, e.domain);
  }
  out.add(v, d);
  return out;
}

}  // namespace

std::pair<GaussianAtom, TensorAtom> moment_match(const TensorAtom& t, const GaussianAtom& g, const Name& v) {
  const Domain* vd = t.inputs().find(v);
  if (!vd) vd = g.batch().find(v);
  if (!vd) fail(ErrorCode::NameAbsent, "moment matching variable " + v + " is in neither factor");
  if (g.dim() == 0) fail(ErrorCode::TypeError, "moment matching needs a Gaussian with a real variable");
  if (!t.output().is_real_scalar()) fail(ErrorCode::TypeError, "mixture weights must be real scalars");
  const auto n = vd->size();
  const TypeContext full = with_last(context_union(t.inputs(), g.batch()), v, *vd);
  const TypeContext out = context_remove(full, v);

  const auto w = broadcast_to(t, full).values();
  const auto gb = gaussian_broadcast_batch(g, full);
  const auto nb = static_cast<std::int64_t>(w.size()) / n;
  const auto d = g.dim();

  std::vector<double> iv(nb * d);
  std::vector<double> pv(nb * d * d);
  std::vector<double> mass(nb);
  std::vector<double> logw(n);
  std::vector<Eigen::VectorXd> mu(n);
  std::vector<Eigen::MatrixXd> cov(n);
  for (std::int64_t b = 0; b < nb; ++b) {
    for (std::int64_t k = 0; k < n; ++k) {
      const auto s = b * n + k;
      auto llt = strict_cholesky(gb.prec(s), "moment_match");
      mu[k] = llt.solve(gb.info(s));
      cov[k] = llt.solve(Eigen::MatrixXd::Identity(d, d));
      logw[k] = w[s] + 0.5 * gb.info(s).dot(mu[k]) + 0.5 * d * kLog2Pi - half_logdet(llt);
    }
    const double total = log_sum_exp(logw);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
    std::vector<double> pi(n);
    for (std::int64_t k = 0; k < n; ++k) {
      pi[k] = std::isfinite(total) ? std::exp(logw[k] - total) : 1.0 / static_cast<double>(n);
      m += pi[k] * mu[k];
    }
    for (std::int64_t k = 0; k < n; ++k) {
      const Eigen::VectorXd dm = mu[k] - m;
      c += pi[k] * (cov[k] + dm * dm.transpose());
    }
    c = 0.5 * (c + c.transpose()).eval();
    auto cl = strict_cholesky(c, "moment_match covariance");
    Eigen::MatrixXd prec = cl.solve(Eigen::MatrixXd::Identity(d, d));
    prec = 0.5 * (prec + prec.transpose()).eval();
    const Eigen::VectorXd info = prec * m;
    // log of the matched Gaussian's integral: i'mu/2 + (d/2)log 2pi + logdet(cov)/2
    const double lognorm = 0.5 * info.dot(m) + 0.5 * d * kLog2Pi + half_logdet(cl);
    mass[b] = total - lognorm;
    for (std::int64_t r = 0; r < d; ++r) {
      iv[b * d + r] = info(r);
      for (std::int64_t q = 0; q < d; ++q) pv[(b * d + r) * d + q] = prec(r, q);
    }
  }
  GaussianAtom matched = GaussianAtom::unchecked(g.reals(), TensorAtom(out, Domain::reals({d}), std::move(iv)),
                                                 TensorAtom(out, Domain::reals({d, d}), std::move(pv)));
  return {std::move(matched), TensorAtom(out, Domain::real(), std::move(mass))};
}

std::mt19937_64 rng_engine(RngState& rng) {
  std::seed_seq seq{static_cast<std::uint32_t>(rng.seed), static_cast<std::uint32_t>(rng.seed >> 32),
                    static_cast<std::uint32_t>(rng.counter), static_cast<std::uint32_t>(rng.counter >> 32)};
  ++rng.counter;
  return std::mt19937_64(seq);
}

namespace {

// Uniform in [0, 1) from the top 53 bits; fully specified, unlike the
// standard distributions.
double uniform01(std::mt19937_64& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

// Box-Muller with explicit arithmetic so samples do not depend on the library.
double standard_normal(std::mt19937_64& eng) {
  const double u1 = 1.0 - uniform01(eng);
  const double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Term with_rest(Term head, const std::optional<Term>& rest, const Name& v, const TensorAtom& value, Evaluator& ev) {
  if (!rest) return ev.eval(head);
  return ev.eval(add(head, substitute(*rest, v, tensor(value))));
}

}  // namespace

Term mc_sample_discrete(const TensorAtom& w, const Name& v, const std::optional<Term>& rest, RngState& rng,
                        Evaluator& ev) {
  const auto& vd = w.inputs().at(v);
  const auto n = vd.size();
  const TypeContext full = with_last(w.inputs(), v, vd);
  const auto vals = broadcast_to(w, full).values();
  const auto nb = static_cast<std::int64_t>(vals.size()) / n;
  auto eng = rng_engine(rng);
  std::vector<double> norm(nb);
  std::vector<double> pick(nb);
  for (std::int64_t b = 0; b < nb; ++b) {
    std::span<const double> row(vals.data() + b * n, static_cast<std::size_t>(n));
    norm[b] = log_sum_exp(row);
    const double u = uniform01(eng);
    double acc = 0.0;
    std::int64_t chosen = -1;
    for (std::int64_t k = 0; k < n; ++k) {
      if (!std::isfinite(row[k])) continue;
      acc += std::exp(row[k] - norm[b]);
      chosen = k;
      if (u < acc) break;
    }
    pick[b] = static_cast<double>(std::max<std::int64_t>(chosen, 0));
  }
  const TypeContext out = context_remove(full, v);
  Term head = add(tensor(TensorAtom(out, Domain::real(), std::move(norm))), number(0.0));  // w_N + w_D
  return with_rest(head, rest, v, TensorAtom(out, vd, std::move(pick)), ev);
}

std::optional<Term> mc_sample_gaussian(const GaussianAtom& g, const Name& v, const std::optional<Term>& rest,
                                       RngState& rng, Evaluator& ev) {
  if (g.reals().size() != 1 || g.reals()[0].name != v) return std::nullopt;
  const auto d = g.dim();
  const auto nb = g.batch_numel();
  auto eng = rng_engine(rng);
  std::vector<double> sample(nb * d);
  for (std::int64_t b = 0; b < nb; ++b) {
    auto llt = strict_cholesky(g.prec(b), "mc_sample_gaussian");
    Eigen::VectorXd eps(d);
    for (std::int64_t k = 0; k < d; ++k) eps(k) = standard_normal(eng);
    const Eigen::VectorXd x = llt.solve(g.info(b)) + llt.matrixU().solve(eps);
    for (std::int64_t k = 0; k < d; ++k) sample[b * d + k] = x(k);
  }
  Term head = tensor(gaussian_log_normalizer(g));
  return with_rest(head, rest, v, TensorAtom(g.batch(), g.reals()[0].domain, std::move(sample)), ev);
}

// ---------------------------------------------------------------------------
// Interpretations

namespace {

bool is_lse(const Term& t) { return t->as<ReduceNode>()->op == ReduceOp::LogSumExp; }

bool mentions(const std::vector<Term>& parts, const Name& v) {
  return std::any_of(parts.begin(), parts.end(), [&](const Term& p) { return p->free_vars().contains(v); });
}

bool deltas_touch(const NormalForm& nf, const Name& v) {
  return std::any_of(nf.deltas.begin(), nf.deltas.end(),
                     [&](const DeltaAtom& d) { return d.name() == v || d.point().inputs().contains(v); });
}

std::optional<Term> mm_collapse(const Term& t, Evaluator& ev) {
  const auto* r = t->as<ReduceNode>();
  const auto* vd = r->body->free_vars().find(r->var);
  if (!vd || !vd->is_bounded()) return std::nullopt;
  NormalForm nf = normalize(r->body, ev);
  if (!nf.gaussian || !nf.gaussian->batch().contains(r->var)) return std::nullopt;
  if (mentions(nf.lazy_rest, r->var) || deltas_touch(nf, r->var)) return std::nullopt;
  try {
    auto [g, w] = moment_match(nf.tensor ? *nf.tensor : TensorAtom::scalar(0.0), *nf.gaussian, r->var);
    nf.gaussian = g;
    nf.tensor = w;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::RankDeficient) throw;
    return std::nullopt;
  }
  return to_term(nf);
}

// Pushes the closed factors into the first lazy inner sum that shares v, so
// each mixture is matched against everything already known about v.
std::optional<Term> mm_absorb(const Term& t, Evaluator& ev) {
  const auto* r = t->as<ReduceNode>();
  NormalForm nf = normalize(r->body, ev);
  if (!nf.deltas.empty() || (!nf.tensor && !nf.gaussian)) return std::nullopt;
  std::size_t pick = nf.lazy_rest.size();
  for (std::size_t k = 0; k < nf.lazy_rest.size(); ++k) {
    const auto* inner = nf.lazy_rest[k]->as<ReduceNode>();
    if (inner && inner->op == ReduceOp::LogSumExp && nf.lazy_rest[k]->free_vars().contains(r->var)) {
      pick = k;
      break;
    }
  }
  if (pick == nf.lazy_rest.size()) return std::nullopt;
  NormalForm closed;
  closed.tensor = nf.tensor;
  closed.gaussian = nf.gaussian;
  const Term known = to_term(closed);
  Term inner = nf.lazy_rest[pick];
  if (known->free_vars().contains(inner->as<ReduceNode>()->var)) inner = alpha_rename(inner, inner->as<ReduceNode>()->var);
  const auto* ir = inner->as<ReduceNode>();
  std::vector<Term> parts{reduce(ir->op, ir->var, add(ir->body, known))};
  for (std::size_t k = 0; k < nf.lazy_rest.size(); ++k) {
    if (k != pick) parts.push_back(nf.lazy_rest[k]);
  }
  return ev.eval(reduce(r->op, r->var, sum_of(parts)));
}

std::optional<Term> rest_without(NormalForm nf, bool drop_tensor, bool drop_gaussian) {
  if (drop_tensor) nf.tensor.reset();
  if (drop_gaussian) nf.gaussian.reset();
  if (nf.deltas.empty() && !nf.tensor && !nf.gaussian && nf.lazy_rest.empty()) return std::nullopt;
  return to_term(nf);
}

std::optional<Term> mc_discrete(const Term& t, Evaluator& ev) {
  const auto* r = t->as<ReduceNode>();
  const auto* vd = r->body->free_vars().find(r->var);
  if (!vd || !vd->is_bounded()) return std::nullopt;
  NormalForm nf = normalize(r->body, ev);
  if (std::any_of(nf.deltas.begin(), nf.deltas.end(), [&](const DeltaAtom& d) { return d.name() == r->var; })) {
    return std::nullopt;
  }
  if (nf.tensor && nf.tensor->inputs().contains(r->var)) {
    return mc_sample_discrete(*nf.tensor, r->var, rest_without(nf, true, false), ev.rng(), ev);
  }
  if (!nf.gaussian || !nf.gaussian->batch().contains(r->var)) return std::nullopt;
  // Uniform proposal when only the Gaussian depends on v.
  const TensorAtom flat = TensorAtom::filled(TypeContext{{r->var, *vd}}, Domain::real(), 0.0);
  return mc_sample_discrete(flat, r->var, rest_without(nf, false, false), ev.rng(), ev);
}

std::optional<Term> mc_gaussian(const Term& t, Evaluator& ev) {
  const auto* r = t->as<ReduceNode>();
  const auto* vd = r->body->free_vars().find(r->var);
  if (!vd || !vd->is_real()) return std::nullopt;
  NormalForm nf = normalize(r->body, ev);
  if (!nf.gaussian || !nf.gaussian->has_real(r->var)) return std::nullopt;
  if (std::any_of(nf.deltas.begin(), nf.deltas.end(), [&](const DeltaAtom& d) { return d.name() == r->var; })) {
    return std::nullopt;
  }
  return mc_sample_gaussian(*nf.gaussian, r->var, rest_without(nf, false, true), ev.rng(), ev);
}

Interpretation make_moment_matching() {
  Interpretation i("moment_matching", &exact());
  i.add_rule({"mm.reduce.collapse", Kind::Reduce, is_lse, mm_collapse});
  i.add_rule({"mm.reduce.absorb", Kind::Reduce, is_lse, mm_absorb});
  return i;
}

Interpretation make_monte_carlo() {
  Interpretation i("monte_carlo", &exact());
  i.add_rule({"mc.reduce.discrete", Kind::Reduce, is_lse, mc_discrete});
  i.add_rule({"mc.reduce.gaussian", Kind::Reduce, is_lse, mc_gaussian});
  return i;
}

}  // namespace

const Interpretation& moment_matching() {
  static const Interpretation i = make_moment_matching();
  return i;
}

const Interpretation& monte_carlo() {
  static const Interpretation i = make_monte_carlo();
  return i;
}

}  // namespace funsor
