#pragma once

#include <random>

#include "mfh/tensor_core.hpp"

namespace mfh {

using Rng = std::mt19937_64;

// Trace-one positive state: random probability vector or random density matrix.
NBodyState random_physical(const SiteSpace& space, int sites, Rng& rng);
NBodyState random_symmetric_physical(const SiteSpace& space, int sites, Rng& rng);
// Real signed weights (classical) or a Hermitian matrix (quantum), entries O(1).
NBodyState random_hermitian(const SiteSpace& space, int sites, Rng& rng);
// Arbitrary complex coefficients (classical: still real).
NBodyState random_generic(const SiteSpace& space, int sites, Rng& rng);
// One-site Hermitian/signed state with zero trace and unit trace norm.
NBodyState random_traceless(const SiteSpace& space, Rng& rng);

}  // namespace mfh
