#include "funsor/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace funsor {

namespace {

void count_kernel() { stats().kernel_calls.fetch_add(1, std::memory_order_relaxed); }

Domain vec_domain(std::int64_t d) { return Domain::reals({d}); }
Domain mat_domain(std::int64_t d) { return Domain::reals({d, d}); }

bool is_symmetric(const TensorAtom& prec, std::int64_t d) {
  const double* p = prec.base() + prec.offset();
  const std::int64_t n = prec.batch_numel();
  for (std::int64_t b = 0; b < n; ++b) {
    const double* m = p + b * d * d;
    for (std::int64_t r = 0; r < d; ++r) {
      for (std::int64_t c = r + 1; c < d; ++c) {
        if (m[r * d + c] != m[c * d + r]) return false;
      }
    }
  }
  return true;
}

TensorAtom symmetrized(const TensorAtom& prec, std::int64_t d) {
  auto v = prec.values();
  const std::int64_t n = prec.batch_numel();
  for (std::int64_t b = 0; b < n; ++b) {
    double* m = v.data() + b * d * d;
    for (std::int64_t r = 0; r < d; ++r) {
      for (std::int64_t c = r + 1; c < d; ++c) {
        const double s = 0.5 * (m[r * d + c] + m[c * d + r]);
        m[r * d + c] = s;
        m[c * d + r] = s;
      }
    }
  }
  return TensorAtom(prec.inputs(), prec.output(), std::move(v));
}

Eigen::MatrixXd symmetric_part(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

struct Layout {
  std::vector<ContextEntry> reals;
  std::vector<std::int64_t> offsets;
  std::int64_t dim = 0;
};

Layout layout_of(const std::vector<ContextEntry>& reals) {
  Layout l;
  l.reals = reals;
  for (const auto& e : reals) {
    l.offsets.push_back(l.dim);
    l.dim += num_elements(e.domain);
  }
  return l;
}

std::optional<std::size_t> find_real(const std::vector<ContextEntry>& reals, const Name& name) {
  for (std::size_t k = 0; k < reals.size(); ++k) {
    if (reals[k].name == name) return k;
  }
  return std::nullopt;
}

// Packs per-slice vectors/matrices into the tensor pair of a Gaussian.
GaussianAtom pack(const TypeContext& batch, const std::vector<ContextEntry>& reals,
                  const std::vector<Eigen::VectorXd>& infos, const std::vector<Eigen::MatrixXd>& precs) {
  const std::int64_t d = layout_of(reals).dim;
  std::vector<double> iv;
  std::vector<double> pv;
  iv.reserve(infos.size() * d);
  pv.reserve(infos.size() * d * d);
  for (std::size_t b = 0; b < infos.size(); ++b) {
    for (std::int64_t r = 0; r < d; ++r) iv.push_back(infos[b](r));
    for (std::int64_t r = 0; r < d; ++r) {
      for (std::int64_t c = 0; c < d; ++c) pv.push_back(precs[b](r, c));
    }
  }
  return GaussianAtom::unchecked(reals, TensorAtom(batch, vec_domain(d), std::move(iv)),
                                 TensorAtom(batch, mat_domain(d), std::move(pv)));
}

std::int64_t batch_size(const TypeContext& batch) {
  std::int64_t n = 1;
  for (const auto& e : batch) n *= e.domain.size();
  return n;
}

}  // namespace

Eigen::LLT<Eigen::MatrixXd> robust_cholesky(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-10 * (m.rows() ? m.diagonal().mean() : 0.0);
  if (jitter > 0) {
    llt.compute(m + jitter * Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    if (llt.info() == Eigen::Success) return llt;
  }
  fail(ErrorCode::RankDeficient, std::string(what) + ": precision block is not full rank");
}

// ---------------------------------------------------------------------------
// GaussianAtom

GaussianAtom::GaussianAtom(std::vector<ContextEntry> reals, TensorAtom info_vec, TensorAtom precision) {
  init(std::move(reals), std::move(info_vec), std::move(precision));
  if (!is_symmetric(precision_, dim_)) precision_ = symmetrized(precision_, dim_);
  for (std::int64_t b = 0; b < batch_numel(); ++b) {
    Eigen::MatrixXd m = prec(b);
    const double scale = std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
    Eigen::LLT<Eigen::MatrixXd> llt(m + 1e-8 * scale * Eigen::MatrixXd::Identity(dim_, dim_));
    if (llt.info() != Eigen::Success || !m.allFinite() || !info(b).allFinite()) {
      fail(ErrorCode::TypeError, "Gaussian precision is not positive semidefinite (batch slice " +
                                     std::to_string(b) + ")");
    }
  }
}

GaussianAtom GaussianAtom::unchecked(std::vector<ContextEntry> reals, TensorAtom info_vec, TensorAtom precision) {
  GaussianAtom g;
  g.init(std::move(reals), std::move(info_vec), std::move(precision));
  return g;
}

void GaussianAtom::init(std::vector<ContextEntry> reals, TensorAtom info_vec, TensorAtom precision) {
  if (reals.empty()) fail(ErrorCode::TypeError, "Gaussian needs at least one real variable");
  TypeContext seen;
  for (const auto& e : reals) {
    if (!e.domain.is_real()) fail(ErrorCode::TypeError, "Gaussian real input " + e.name + " has type " + e.domain.to_string());
    if (seen.contains(e.name)) fail(ErrorCode::TypeConflict, "duplicate real input " + e.name);
    seen.add(e.name, e.domain);
  }
  auto l = layout_of(reals);
  if (info_vec.output() != vec_domain(l.dim)) {
    fail(ErrorCode::TypeError, "info_vec must have output ℝ^{" + std::to_string(l.dim) + "}, got " +
                                   info_vec.output().to_string());
  }
  if (precision.output() != mat_domain(l.dim)) {
    fail(ErrorCode::TypeError, "precision must have output ℝ^{" + std::to_string(l.dim) + "×" +
                                   std::to_string(l.dim) + "}, got " + precision.output().to_string());
  }
  for (const auto& e : info_vec.inputs()) {
    if (seen.contains(e.name)) fail(ErrorCode::TypeConflict, e.name + " is both a batch and a real input");
  }
  if (!(info_vec.inputs() == precision.inputs())) {
    TypeContext batch = context_union(info_vec.inputs(), precision.inputs());
    info_vec = broadcast_to(info_vec, batch);
    precision = broadcast_to(precision, batch);
  }
  reals_ = std::move(l.reals);
  offsets_ = std::move(l.offsets);
  dim_ = l.dim;
  info_vec_ = info_vec.contiguous();
  precision_ = precision.contiguous();
}

TypeContext GaussianAtom::inputs() const {
  TypeContext out = batch();
  for (const auto& e : reals_) out.add(e.name, e.domain);
  return out;
}

bool GaussianAtom::has_real(const Name& name) const { return find_real(reals_, name).has_value(); }

std::int64_t GaussianAtom::real_offset(const Name& name) const {
  auto k = find_real(reals_, name);
  if (!k) fail(ErrorCode::NameAbsent, "Gaussian has no real input " + name);
  return offsets_[*k];
}

std::int64_t GaussianAtom::real_size(const Name& name) const { return num_elements(real_domain(name)); }

const Domain& GaussianAtom::real_domain(const Name& name) const {
  auto k = find_real(reals_, name);
  if (!k) fail(ErrorCode::NameAbsent, "Gaussian has no real input " + name);
  return reals_[*k].domain;
}

Eigen::Map<const Eigen::VectorXd> GaussianAtom::info(std::int64_t b) const {
  return Eigen::Map<const Eigen::VectorXd>(info_vec_.base() + b * dim_, dim_);
}

Eigen::Map<const Eigen::MatrixXd> GaussianAtom::prec(std::int64_t b) const {
  return Eigen::Map<const Eigen::MatrixXd>(precision_.base() + b * dim_ * dim_, dim_, dim_);
}

// ---------------------------------------------------------------------------
// Operations

double gaussian_eval(const GaussianAtom& g, const Assignment& assignment) {
  std::int64_t b = 0;
  for (const auto& e : g.batch()) {
    auto it = assignment.find(e.name);
    if (it == assignment.end()) fail(ErrorCode::MissingAssignment, "no value for " + e.name);
    if (it->second.size() != 1) fail(ErrorCode::TypeError, "bounded value for " + e.name + " must be a single entry");
    const double raw = it->second[0];
    const auto k = static_cast<std::int64_t>(raw);
    if (raw != static_cast<double>(k) || k < 0 || k >= e.domain.size()) {
      fail(ErrorCode::TypeError, "value " + std::to_string(raw) + " not in " + e.domain.to_string());
    }
    b = b * e.domain.size() + k;
  }
  Eigen::VectorXd x(g.dim());
  for (const auto& e : g.reals()) {
    auto it = assignment.find(e.name);
    if (it == assignment.end()) fail(ErrorCode::MissingAssignment, "no value for " + e.name);
    const auto n = num_elements(e.domain);
    if (static_cast<std::int64_t>(it->second.size()) != n) {
      fail(ErrorCode::TypeError, "value for " + e.name + " must have " + std::to_string(n) + " entries");
    }
    const auto off = g.real_offset(e.name);
    for (std::int64_t k = 0; k < n; ++k) x(off + k) = it->second[k];
  }
  return g.info(b).dot(x) - 0.5 * x.dot(g.prec(b) * x);
}

GaussianAtom gaussian_embed_reals(const GaussianAtom& g, const std::vector<ContextEntry>& reals) {
  if (reals == g.reals()) return g;
  auto l = layout_of(reals);
  std::vector<std::int64_t> map(g.dim());
  for (const auto& e : g.reals()) {
    auto k = find_real(reals, e.name);
    if (!k) fail(ErrorCode::ContextMismatch, "embedding target lacks real " + e.name);
    if (reals[*k].domain != e.domain) fail(ErrorCode::TypeConflict, "real " + e.name + " changes type");
    const auto src = g.real_offset(e.name);
    for (std::int64_t j = 0; j < num_elements(e.domain); ++j) map[src + j] = l.offsets[*k] + j;
  }
  const std::int64_t n = g.batch_numel();
  const std::int64_t d = g.dim();
  std::vector<double> iv(n * l.dim, 0.0);
  std::vector<double> pv(n * l.dim * l.dim, 0.0);
  for (std::int64_t b = 0; b < n; ++b) {
    auto i = g.info(b);
    auto p = g.prec(b);
    for (std::int64_t r = 0; r < d; ++r) {
      iv[b * l.dim + map[r]] = i(r);
      for (std::int64_t c = 0; c < d; ++c) pv[(b * l.dim + map[r]) * l.dim + map[c]] = p(r, c);
    }
  }
  return GaussianAtom::unchecked(reals, TensorAtom(g.batch(), vec_domain(l.dim), std::move(iv)),
                                 TensorAtom(g.batch(), mat_domain(l.dim), std::move(pv)));
}

GaussianAtom gaussian_broadcast_batch(const GaussianAtom& g, const TypeContext& batch) {
  if (g.batch() == batch) return g;
  return GaussianAtom::unchecked(g.reals(), broadcast_to(g.info_vec(), batch).contiguous(),
                                 broadcast_to(g.precision(), batch).contiguous());
}

GaussianAtom gaussian_fuse(const GaussianAtom& a, const GaussianAtom& b) {
  count_kernel();
  std::vector<ContextEntry> reals = a.reals();
  for (const auto& e : b.reals()) {
    if (auto k = find_real(reals, e.name)) {
      if (reals[*k].domain != e.domain) {
        fail(ErrorCode::TypeConflict, "real " + e.name + " has types " + reals[*k].domain.to_string() + " and " +
                                          e.domain.to_string());
      }
    } else {
      reals.push_back(e);
    }
  }
  for (const auto& e : reals) {
    if (a.batch().contains(e.name) || b.batch().contains(e.name)) {
      fail(ErrorCode::TypeConflict, e.name + " is real in one Gaussian and bounded in the other");
    }
  }
  auto ea = gaussian_embed_reals(a, reals);
  auto eb = gaussian_embed_reals(b, reals);
  auto info = tensor_apply(LiftedOp::Add, ea.info_vec(), eb.info_vec());
  auto prec = tensor_apply(LiftedOp::Add, ea.precision(), eb.precision());
  return GaussianAtom::unchecked(std::move(reals), std::move(info), std::move(prec));
}

TensorGaussian gaussian_marginalize(const GaussianAtom& g, std::span<const Name> vars) {
  count_kernel();
  std::vector<std::int64_t> vidx;
  std::vector<std::int64_t> uidx;
  std::vector<ContextEntry> kept;
  for (const auto& name : vars) {
    if (!g.has_real(name)) fail(ErrorCode::NameAbsent, "Gaussian has no real input " + name);
  }
  for (const auto& e : g.reals()) {
    const bool gone = std::find(vars.begin(), vars.end(), e.name) != vars.end();
    const auto off = g.real_offset(e.name);
    for (std::int64_t j = 0; j < num_elements(e.domain); ++j) (gone ? vidx : uidx).push_back(off + j);
    if (!gone) kept.push_back(e);
  }
  const auto dv = static_cast<std::int64_t>(vidx.size());
  const auto du = static_cast<std::int64_t>(uidx.size());
  const std::int64_t n = g.batch_numel();
  std::vector<double> w(n);
  std::vector<Eigen::VectorXd> infos;
  std::vector<Eigen::MatrixXd> precs;
  for (std::int64_t b = 0; b < n; ++b) {
    auto i = g.info(b);
    auto p = g.prec(b);
    Eigen::MatrixXd pvv(dv, dv);
    Eigen::VectorXd iv(dv);
    for (std::int64_t r = 0; r < dv; ++r) {
      iv(r) = i(vidx[r]);
      for (std::int64_t c = 0; c < dv; ++c) pvv(r, c) = p(vidx[r], vidx[c]);
    }
    auto llt = robust_cholesky(pvv, "marginalize");
    Eigen::VectorXd sol = llt.solve(iv);
    double logdet = 0.0;
    const Eigen::MatrixXd& L = llt.matrixLLT();
    for (std::int64_t k = 0; k < dv; ++k) logdet += 2.0 * std::log(L(k, k));
    w[b] = 0.5 * dv * std::log(2.0 * std::numbers::pi) - 0.5 * logdet + 0.5 * iv.dot(sol);
    if (du > 0) {
      Eigen::MatrixXd puv(du, dv);
      Eigen::MatrixXd puu(du, du);
      Eigen::VectorXd iu(du);
      for (std::int64_t r = 0; r < du; ++r) {
        iu(r) = i(uidx[r]);
        for (std::int64_t c = 0; c < dv; ++c) puv(r, c) = p(uidx[r], vidx[c]);
        for (std::int64_t c = 0; c < du; ++c) puu(r, c) = p(uidx[r], uidx[c]);
      }
      Eigen::MatrixXd k = llt.solve(puv.transpose());  // Lvv^-1 Lvu
      infos.push_back(iu - puv * sol);
      precs.push_back(symmetric_part(puu - puv * k));
    }
  }
  TensorGaussian out{TensorAtom(g.batch(), Domain::real(), std::move(w)), std::nullopt};
  if (du > 0) out.gaussian = pack(g.batch(), kept, infos, precs);
  return out;
}

TensorGaussian gaussian_marginalize(const GaussianAtom& g, const Name& v) {
  return gaussian_marginalize(g, std::span<const Name>(&v, 1));
}

TensorAtom gaussian_log_normalizer(const GaussianAtom& g) {
  std::vector<Name> all;
  for (const auto& e : g.reals()) all.push_back(e.name);
  return gaussian_marginalize(g, all).tensor;
}

TensorGaussian gaussian_substitute(const GaussianAtom& g, const Name& v, const TensorAtom& x) {
  AffineBinding b{v, x, {}};
  return gaussian_affine(g, std::span<const AffineBinding>(&b, 1));
}

GaussianAtom gaussian_plated_product(const GaussianAtom& g, const Name& v) {
  if (!g.batch().contains(v)) fail(ErrorCode::NameAbsent, "Gaussian batch lacks " + v);
  return GaussianAtom::unchecked(g.reals(), tensor_reduce(ReduceOp::Add, g.info_vec(), v),
                                 tensor_reduce(ReduceOp::Add, g.precision(), v));
}

GaussianAtom gaussian_scale(const GaussianAtom& g, double factor) {
  if (!(factor >= 0)) fail(ErrorCode::DomainError, "Gaussian scale factor must be nonnegative");
  auto s = TensorAtom::scalar(factor);
  return GaussianAtom::unchecked(g.reals(), tensor_apply(LiftedOp::Mul, g.info_vec(), s),
                                 tensor_apply(LiftedOp::Mul, g.precision(), s));
}

GaussianAtom gaussian_index_batch(const GaussianAtom& g, std::span<const IndexBinding> bindings) {
  for (const auto& b : bindings) {
    if (g.has_real(b.name)) fail(ErrorCode::TypeError, "cannot index real input " + b.name);
  }
  auto info = tensor_index(g.info_vec(), bindings);
  auto prec = tensor_index(g.precision(), bindings);
  for (const auto& e : info.inputs()) {
    if (g.has_real(e.name)) fail(ErrorCode::TypeConflict, e.name + " would be both bounded and real");
  }
  return GaussianAtom::unchecked(g.reals(), std::move(info), std::move(prec));
}

GaussianAtom gaussian_rename_reals(const GaussianAtom& g, const std::map<Name, Name>& renames) {
  std::vector<ContextEntry> reals = g.reals();
  TypeContext seen;
  for (auto& e : reals) {
    auto it = renames.find(e.name);
    if (it != renames.end()) e.name = it->second;
    if (seen.contains(e.name) || g.batch().contains(e.name)) {
      fail(ErrorCode::TypeConflict, "rename makes " + e.name + " ambiguous");
    }
    seen.add(e.name, e.domain);
  }
  return GaussianAtom::unchecked(std::move(reals), g.info_vec(), g.precision());
}

GaussianAtom gaussian_cat(const Name& over, std::span<const GaussianAtom> parts) {
  if (parts.empty()) fail(ErrorCode::TypeError, "cat of no Gaussians");
  std::vector<ContextEntry> reals;
  for (const auto& p : parts) {
    for (const auto& e : p.reals()) {
      if (auto k = find_real(reals, e.name)) {
        if (reals[*k].domain != e.domain) fail(ErrorCode::TypeConflict, "cat parts disagree on " + e.name);
      } else {
        reals.push_back(e);
      }
    }
  }
  std::vector<TensorAtom> infos;
  std::vector<TensorAtom> precs;
  for (const auto& p : parts) {
    auto e = gaussian_embed_reals(p, reals);
    infos.push_back(e.info_vec());
    precs.push_back(e.precision());
  }
  return GaussianAtom::unchecked(reals, tensor_cat(over, infos), tensor_cat(over, precs));
}

TensorGaussian gaussian_affine(const GaussianAtom& g, std::span<const AffineBinding> bindings) {
  count_kernel();
  std::vector<const AffineBinding*> active;
  for (const auto& b : bindings) {
    if (!g.has_real(b.target)) continue;
    const auto& dom = g.real_domain(b.target);
    if (b.constant.output() != dom) {
      fail(ErrorCode::TypeError, "substituted value for " + b.target + " has type " + b.constant.output().to_string() +
                                     ", expected " + dom.to_string());
    }
    active.push_back(&b);
  }
  auto is_bound = [&](const Name& n) {
    return std::any_of(active.begin(), active.end(), [&](const AffineBinding* b) { return b->target == n; });
  };

  // New real layout: remaining reals, then fresh inputs of the expressions.
  std::vector<ContextEntry> reals;
  for (const auto& e : g.reals()) {
    if (!is_bound(e.name)) reals.push_back(e);
  }
  TypeContext batch = g.batch();
  for (const auto* b : active) {
    batch = context_union(batch, b->constant.inputs());
    for (const auto& [u, coeff] : b->coeffs) {
      if (!u.domain.is_real()) fail(ErrorCode::TypeError, "affine input " + u.name + " must be real");
      const auto du = num_elements(u.domain);
      const auto dt = num_elements(g.real_domain(b->target));
      if (coeff.output() != Domain::reals({dt, du})) {
        fail(ErrorCode::TypeError, "affine coefficient for " + u.name + " has type " + coeff.output().to_string());
      }
      batch = context_union(batch, coeff.inputs());
      if (auto k = find_real(reals, u.name)) {
        if (reals[*k].domain != u.domain) fail(ErrorCode::TypeConflict, "real " + u.name + " changes type");
      } else {
        reals.push_back(u);
      }
    }
  }
  for (const auto& e : reals) {
    if (batch.contains(e.name)) fail(ErrorCode::TypeConflict, e.name + " is both bounded and real");
  }
  const auto lnew = layout_of(reals);
  const std::int64_t D = g.dim();
  const std::int64_t N = lnew.dim;
  const std::int64_t nb = batch_size(batch);

  auto gmap = flat_index_map(batch, g.batch());
  struct Src {
    std::vector<std::int64_t> map;
    const double* data;
    std::int64_t block;
  };
  std::vector<TensorAtom> keep;  // owns contiguous copies; buffers outlive vector moves
  auto src_of = [&](const TensorAtom& t) {
    auto c = t.contiguous();
    keep.push_back(c);
    return Src{flat_index_map(batch, c.inputs()), c.base() + c.offset(), c.output_numel()};
  };
  std::vector<Src> consts;
  std::vector<std::vector<Src>> coeffs;
  for (const auto* b : active) {
    consts.push_back(src_of(b->constant));
    coeffs.emplace_back();
    for (const auto& [u, coeff] : b->coeffs) coeffs.back().push_back(src_of(coeff));
  }

  std::vector<double> w(nb);
  std::vector<Eigen::VectorXd> infos;
  std::vector<Eigen::MatrixXd> precs;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(D, N);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(D);
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(lnew.reals.size()); ++k) {
    const auto& e = lnew.reals[k];
    if (g.has_real(e.name) && !is_bound(e.name)) {
      const auto src = g.real_offset(e.name);
      for (std::int64_t j = 0; j < num_elements(e.domain); ++j) M(src + j, lnew.offsets[k] + j) = 1.0;
    }
  }
  for (std::int64_t b = 0; b < nb; ++b) {
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto* bind = active[a];
      const auto off = g.real_offset(bind->target);
      const auto dt = num_elements(g.real_domain(bind->target));
      const double* c = consts[a].data + consts[a].map[b] * dt;
      for (std::int64_t r = 0; r < dt; ++r) {
        m(off + r) = c[r];
        M.row(off + r).setZero();
      }
      for (std::size_t j = 0; j < bind->coeffs.size(); ++j) {
        const auto& u = bind->coeffs[j].first;
        const auto du = num_elements(u.domain);
        const auto col = lnew.offsets[*find_real(lnew.reals, u.name)];
        const double* A = coeffs[a][j].data + coeffs[a][j].map[b] * dt * du;
        for (std::int64_t r = 0; r < dt; ++r) {
          for (std::int64_t q = 0; q < du; ++q) M(off + r, col + q) += A[r * du + q];
        }
      }
    }
    auto i = g.info(gmap[b]);
    auto p = g.prec(gmap[b]);
    Eigen::VectorXd pm = p * m;
    w[b] = i.dot(m) - 0.5 * m.dot(pm);
    if (N > 0) {
      infos.push_back(M.transpose() * (i - pm));
      precs.push_back(symmetric_part(M.transpose() * p * M));
    }
  }
  TensorGaussian out{TensorAtom(batch, Domain::real(), std::move(w)), std::nullopt};
  if (N > 0) out.gaussian = pack(batch, reals, infos, precs);
  return out;
}

}  // namespace funsor
