#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "funsor/domains.hpp"
#include "funsor/tensor.hpp"

namespace funsor {

// Unnormalized log-density g(x) = i'x - x'Lx/2 over the flattened concatenation
// x of its real variables, batched over bounded-integer variables. Stored
// canonically (g(0) = 0); constants live in separate tensors.
//
// info_vec has inputs = batch and output R^{D}; precision has inputs = batch
// and output R^{DxD}. Both are kept contiguous over the same batch order.
class GaussianAtom {
 public:
  // Checks symmetry (symmetrizing if needed) and positive semidefiniteness.
  GaussianAtom(std::vector<ContextEntry> reals, TensorAtom info_vec, TensorAtom precision);
  // Skips the symmetry and PSD checks; for results of closed operations.
  static GaussianAtom unchecked(std::vector<ContextEntry> reals, TensorAtom info_vec, TensorAtom precision);

  const TypeContext& batch() const { return info_vec_.inputs(); }
  const std::vector<ContextEntry>& reals() const { return reals_; }
  // Batch variables followed by real variables.
  TypeContext inputs() const;

  std::int64_t dim() const { return dim_; }
  bool has_real(const Name& name) const;
  std::int64_t real_offset(const Name& name) const;
  std::int64_t real_size(const Name& name) const;
  const Domain& real_domain(const Name& name) const;

  const TensorAtom& info_vec() const { return info_vec_; }
  const TensorAtom& precision() const { return precision_; }

  std::int64_t batch_numel() const { return info_vec_.batch_numel(); }
  Eigen::Map<const Eigen::VectorXd> info(std::int64_t b) const;
  Eigen::Map<const Eigen::MatrixXd> prec(std::int64_t b) const;

 private:
  GaussianAtom() = default;
  void init(std::vector<ContextEntry> reals, TensorAtom info_vec, TensorAtom precision);

  std::vector<ContextEntry> reals_;
  std::vector<std::int64_t> offsets_;
  std::int64_t dim_ = 0;
  TensorAtom info_vec_;
  TensorAtom precision_;
};

// A tensor factor plus an optional Gaussian factor; their log-space sum is the
// value of an operation that can leave a constant behind.
struct TensorGaussian {
  TensorAtom tensor;
  std::optional<GaussianAtom> gaussian;
};

// Ground values: one entry per bounded variable, flattened row-major values
// for each real variable.
using Assignment = std::map<Name, std::vector<double>>;

double gaussian_eval(const GaussianAtom& g, const Assignment& assignment);

GaussianAtom gaussian_fuse(const GaussianAtom& a, const GaussianAtom& b);

// Integrates out the given real variables (jointly).
TensorGaussian gaussian_marginalize(const GaussianAtom& g, std::span<const Name> vars);
TensorGaussian gaussian_marginalize(const GaussianAtom& g, const Name& v);
// log of the integral over all real variables, batched.
TensorAtom gaussian_log_normalizer(const GaussianAtom& g);

// Substitutes a ground (possibly batched) value for one real variable.
TensorGaussian gaussian_substitute(const GaussianAtom& g, const Name& v, const TensorAtom& x);

// Product over a batch variable: sums i and L along it.
GaussianAtom gaussian_plated_product(const GaussianAtom& g, const Name& v);
// Multiplies i and L by a positive constant (n-fold product of a factor).
GaussianAtom gaussian_scale(const GaussianAtom& g, double factor);

// Gathers along batch variables (simultaneously).
GaussianAtom gaussian_index_batch(const GaussianAtom& g, std::span<const IndexBinding> bindings);
// Zero-copy rename of real variables; targets must not clash with other reals.
GaussianAtom gaussian_rename_reals(const GaussianAtom& g, const std::map<Name, Name>& renames);
// Broadcasts over a batch context containing g's batch.
GaussianAtom gaussian_broadcast_batch(const GaussianAtom& g, const TypeContext& batch);
// Re-lays the real block over `reals` (a superset of g's reals), zero-padding
// variables g does not mention.
GaussianAtom gaussian_embed_reals(const GaussianAtom& g, const std::vector<ContextEntry>& reals);
GaussianAtom gaussian_cat(const Name& over, std::span<const GaussianAtom> parts);

// target = constant + sum_j coeff_j * input_j, where coeff_j has output
// R^{d_target x d_input}. Batched over any bounded variables.
struct AffineBinding {
  Name target;
  TensorAtom constant;
  std::vector<std::pair<ContextEntry, TensorAtom>> coeffs;
};

// Simultaneous affine change of variables. Input variables that are already
// reals of g are merged with them; new ones are appended after the remaining
// reals. The Gaussian part is absent when no reals remain.
TensorGaussian gaussian_affine(const GaussianAtom& g, std::span<const AffineBinding> bindings);

// Cholesky with one jittered retry; throws RankDeficient.
Eigen::LLT<Eigen::MatrixXd> robust_cholesky(const Eigen::MatrixXd& m, const char* what);

}  // namespace funsor
