#pragma once

// Occupation-number representation of symmetric classical N-site states.
//
// A configuration (v_1..v_N) of N particles over m velocities belongs to the
// occupation class n = (n_0..n_{m-1}), n_a = #{k : v_k = a}. Classes are
// ordered lexicographically with n_0 descending: for m = 2, N = 2 the order
// is (2,0), (1,1), (0,2). A SymmetricClassicalState stores the probability
// mass of each whole class (the orbit weight), not the per-configuration
// value.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "mfh/tensor_core.hpp"

namespace mfh {

class OccupationBasis {
 public:
  OccupationBasis(int m, int N);

  int m() const noexcept { return m_; }
  int N() const noexcept { return N_; }
  std::size_t size() const noexcept { return size_; }

  std::span<const int> occupation(std::size_t index) const {
    return {occ_.data() + index * static_cast<std::size_t>(m_), static_cast<std::size_t>(m_)};
  }
  std::size_t index(std::span<const int> occupation) const;
  // log of N! / prod n_a!, the number of configurations in a class
  double log_multiplicity(std::size_t index) const;

 private:
  double count(int total, int parts) const;

  int m_;
  int N_;
  std::size_t size_;
  std::vector<int> occ_;
  std::vector<double> binom_;  // binom_[a * (m+1) + b] = C(a + b, b) for the rank formula
};

// Number of occupation classes C(N+m-1, m-1).
std::size_t occupation_class_count(int m, int N);

class SymmetricClassicalState {
 public:
  SymmetricClassicalState(SiteSpace space, int N);
  SymmetricClassicalState(SiteSpace space, int N, std::vector<double> mass);

  const SiteSpace& space() const noexcept { return space_; }
  int N() const noexcept { return basis_->N(); }
  const OccupationBasis& basis() const noexcept { return *basis_; }
  std::shared_ptr<const OccupationBasis> basis_ptr() const noexcept { return basis_; }

  std::span<const double> mass() const noexcept { return mass_; }
  std::span<double> mass() noexcept { return mass_; }
  double total_mass() const;

  // Mass of G^{ox N} for a one-site probability vector G.
  static SymmetricClassicalState product(const NBodyState& one_site, int N);

 private:
  SiteSpace space_;
  std::shared_ptr<const OccupationBasis> basis_;
  std::vector<double> mass_;
};

SymmetricClassicalState compress_symmetric(const NBodyState& f, double tol = 1e-12);
NBodyState decompress(const SymmetricClassicalState& s);

// j-site marginal of the symmetric state: for a j-configuration with
// occupation c, F_j = sum_n P(n) prod_a n_a^(c_a) / N^(j) (falling factorials).
NBodyState marginal_symmetric(const SymmetricClassicalState& s, int j);

// Generator (1/N) sum_{i<r} V_{i,r} restricted to the symmetric sector, acting
// on class masses. `pair_rates` is the m^2 x m^2 table R(in -> out) indexed by
// in = v*m + w and out = v'*m + w'.
Eigen::SparseMatrix<double, Eigen::RowMajor> symmetric_generator(const OccupationBasis& basis,
                                                                 const Eigen::MatrixXd& pair_rates);

}  // namespace mfh
