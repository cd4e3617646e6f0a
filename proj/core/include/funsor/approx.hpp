#pragma once

#include <random>
#include <utility>

#include "funsor/interp.hpp"

namespace funsor {

// Collapses the mixture over discrete v into one Gaussian with the same mean
// and covariance. The tensor carries the remaining log mass so that the pair
// integrates to the mixture's total mass.
std::pair<GaussianAtom, TensorAtom> moment_match(const TensorAtom& t, const GaussianAtom& g, const Name& v);

// Engine for one draw site: (seed, counter), then the counter advances.
std::mt19937_64 rng_engine(RngState& rng);

// sum_v Tensor(w) + rest  ->  w_N + w_D + rest[v := e_s],  e_s ~ Categorical(w).
Term mc_sample_discrete(const TensorAtom& w, const Name& v, const std::optional<Term>& rest, RngState& rng,
                        Evaluator& ev);
// sum_v Gaussian + rest  ->  w_N + rest[v := e_s],  e_s ~ N(mu, Lambda^-1).
// Declines (nullopt) unless v is the Gaussian's only real variable.
std::optional<Term> mc_sample_gaussian(const GaussianAtom& g, const Name& v, const std::optional<Term>& rest,
                                       RngState& rng, Evaluator& ev);

}  // namespace funsor
