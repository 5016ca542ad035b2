#pragma once

// Finite-dimensional tensor algebra shared by the classical and quantum
// backends.
//
// Storage convention. An n-site state is a tensor over n "super-sites", each
// of local dimension d. For a classical site space of dimension m, d = m and
// the local index is the velocity label. For a quantum site space of
// dimension m, d = m*m and the local index of site k is l_k = a_k*m + b_k,
// where a_k (b_k) is the k-th digit of the row (column) multi-index of the
// density matrix. The flat index is sum_k l_k d^(n-k), i.e. site 1 is the
// slowest digit. Sites are 1-based in every public function.
//
// With this layout partial traces are contractions against a fixed trace
// vector, swaps are digit permutations and tensor products are Kronecker
// products, identically for both backends.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mfh {

using Complex = std::complex<double>;

enum class SiteKind { classical, quantum };

const char* to_string(SiteKind kind);

class SiteSpace {
 public:
  SiteSpace(SiteKind kind, int dim);

  SiteKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  // Dimension of one super-site: m (classical) or m*m (quantum).
  int local_dim() const noexcept { return kind_ == SiteKind::classical ? dim_ : dim_ * dim_; }
  bool is_quantum() const noexcept { return kind_ == SiteKind::quantum; }

  // Weights t_l such that Tr(G) = sum_l t_l G_l for a one-site G.
  std::vector<Complex> trace_weights() const;

  friend bool operator==(const SiteSpace&, const SiteSpace&) = default;

 private:
  SiteKind kind_;
  int dim_;
};

class NBodyState {
 public:
  // Zero state over n sites.
  NBodyState(SiteSpace space, int sites);
  NBodyState(SiteSpace space, int sites, std::vector<Complex> data);

  static NBodyState scalar(SiteSpace space, Complex value);
  // Classical state from real weights (length m^n).
  static NBodyState from_weights(SiteSpace space, int sites, std::span<const double> weights);
  // Quantum state from a density matrix indexed by (row multi-index, column multi-index).
  static NBodyState from_matrix(SiteSpace space, int sites, const Eigen::MatrixXcd& matrix);

  const SiteSpace& space() const noexcept { return space_; }
  int sites() const noexcept { return sites_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const Complex> data() const noexcept { return data_; }
  std::span<Complex> data() noexcept { return data_; }
  Complex operator[](std::size_t index) const { return data_[index]; }
  Complex& operator[](std::size_t index) { return data_[index]; }

  // Classical only: the (real) weights in flat order.
  std::vector<double> weights() const;
  // Quantum only: density matrix in (row multi-index, column multi-index) order.
  Eigen::MatrixXcd to_matrix() const;

  NBodyState& operator+=(const NBodyState& other);
  NBodyState& operator-=(const NBodyState& other);
  NBodyState& operator*=(Complex factor);
  // this += factor * other
  NBodyState& add_scaled(Complex factor, const NBodyState& other);

  friend NBodyState operator+(NBodyState a, const NBodyState& b) { return a += b; }
  friend NBodyState operator-(NBodyState a, const NBodyState& b) { return a -= b; }
  friend NBodyState operator*(Complex f, NBodyState a) { return a *= f; }
  friend NBodyState operator*(NBodyState a, Complex f) { return a *= f; }

 private:
  void require_compatible(const NBodyState& other) const;

  SiteSpace space_;
  int sites_;
  std::vector<Complex> data_;
};

std::size_t ipow(std::size_t base, int exponent);

// Dense local operator acting on `arity` consecutive super-sites; the matrix
// is indexed by the local multi-index (first acted site slowest).
class LocalOperator {
 public:
  struct Entry {
    int row;
    int col;
    Complex value;
  };

  LocalOperator(int arity, int local_dim, Eigen::MatrixXcd matrix);

  int arity() const noexcept { return arity_; }
  int local_dim() const noexcept { return local_dim_; }
  const Eigen::MatrixXcd& matrix() const noexcept { return matrix_; }
  const std::vector<Entry>& nonzeros() const noexcept { return nonzeros_; }
  bool is_zero() const noexcept { return nonzeros_.empty(); }
  // Induced 1-norm of the matrix (max column abs sum); an upper bound for the
  // classical 1-norm. Meaningful for the quantum trace norm only as a crude bound.
  double column_norm() const;

 private:
  int arity_;
  int local_dim_;
  Eigen::MatrixXcd matrix_;
  std::vector<Entry> nonzeros_;
};

NBodyState tensor_product(const NBodyState& a, const NBodyState& b);
NBodyState tensor_power(const NBodyState& one_site, int count);

NBodyState partial_trace_site(const NBodyState& f, int site);
NBodyState partial_trace_last(const NBodyState& f, int count);

NBodyState swap_sites(const NBodyState& f, int i, int j);
// Output site p (1-based) carries input site perm[p-1].
NBodyState permute_sites(const NBodyState& f, std::span<const int> perm);

// Places one-site `filler` on every slot listed in `filled_slots` (1-based,
// any order, no duplicates) and the sites of `body` on the remaining slots in
// increasing order. The result has `total_sites` sites.
NBodyState place(int total_sites, const NBodyState& filler, std::span<const int> filled_slots,
                 const NBodyState& body);
// Same with the filled slots given as a bitmask over {1..total_sites} (bit k-1 = slot k).
NBodyState place_mask(int total_sites, const NBodyState& filler, std::uint32_t mask,
                      const NBodyState& body);
// Inserts a one-site state at slot `slot` (1-based) of the output.
NBodyState insert_site(const NBodyState& body, int slot, const NBodyState& filler);

struct SlotFiller {
  int slot;
  const NBodyState* state;
};
// Like place, but with a possibly different one-site filler per slot.
NBodyState place_fillers(int total_sites, std::span<const SlotFiller> fillers, const NBodyState& body);

Complex trace(const NBodyState& f);
double trace_norm(const NBodyState& f);
double max_abs_diff(const NBodyState& a, const NBodyState& b);
double max_abs(const NBodyState& f);

struct SymmetryDefect {
  double value = 0.0;
  int i = 0;
  int j = 0;
};

// Largest entrywise change under an adjacent transposition (and its sites).
SymmetryDefect symmetry_defect(const NBodyState& f);
bool is_symmetric(const NBodyState& f, double tol);
// Average over the symmetric group, computed exactly by the coset recursion
// Sym_n = (1/n) sum_k (k n) Sym_{n-1}.
NBodyState symmetrize(const NBodyState& f);

struct PositivityReport {
  double floor = 0.0;        // min entry (classical) or min eigenvalue (quantum)
  double hermiticity = 0.0;  // max |rho - rho^dagger| (quantum), imaginary part (classical)
};

PositivityReport positivity(const NBodyState& f);
inline constexpr double kPositivityFloor = -1e-10;
bool is_physical(const NBodyState& f, double tol = 1e-9);

NBodyState apply_one_site(const NBodyState& f, const LocalOperator& op, int site);
// Applies a two-site operator with its first slot on site i and second on site r.
NBodyState apply_two_site(const NBodyState& f, const LocalOperator& op, int i, int r);
// out += factor * op_{i,r} f
void accumulate_two_site(NBodyState& out, const NBodyState& f, const LocalOperator& op, int i,
                         int r, Complex factor = 1.0);
void accumulate_one_site(NBodyState& out, const NBodyState& f, const LocalOperator& op, int site,
                         Complex factor = 1.0);

// Flat offsets of all multi-indices over `sites` super-sites of dimension d
// whose digits at the excluded sites are zero, in increasing order.
std::vector<std::size_t> base_offsets(int sites, std::size_t d, std::span<const int> excluded);

}  // namespace mfh
