#include "mfh/tensor_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "mfh/errors.hpp"

namespace mfh {

const char* to_string(SiteKind kind) {
  return kind == SiteKind::classical ? "classical" : "quantum";
}

SiteSpace::SiteSpace(SiteKind kind, int dim) : kind_(kind), dim_(dim) {
  if (dim < 2) throw ValidationError("site dimension must be >= 2, got " + std::to_string(dim));
}

std::vector<Complex> SiteSpace::trace_weights() const {
  std::vector<Complex> t(static_cast<std::size_t>(local_dim()), 0.0);
  if (kind_ == SiteKind::classical) {
    std::fill(t.begin(), t.end(), Complex(1.0));
  } else {
    for (int a = 0; a < dim_; ++a) t[static_cast<std::size_t>(a * dim_ + a)] = 1.0;
  }
  return t;
}

std::size_t ipow(std::size_t base, int exponent) {
  std::size_t r = 1;
  for (int k = 0; k < exponent; ++k) r *= base;
  return r;
}

NBodyState::NBodyState(SiteSpace space, int sites)
    : space_(space), sites_(sites) {
  if (sites < 0) throw StructuralError("negative site count");
  data_.assign(ipow(static_cast<std::size_t>(space_.local_dim()), sites), Complex(0.0));
}

NBodyState::NBodyState(SiteSpace space, int sites, std::vector<Complex> data)
    : space_(space), sites_(sites), data_(std::move(data)) {
  if (sites < 0) throw StructuralError("negative site count");
  if (data_.size() != ipow(static_cast<std::size_t>(space_.local_dim()), sites))
    throw StructuralError("data length does not match site count");
}

NBodyState NBodyState::scalar(SiteSpace space, Complex value) {
  return NBodyState(space, 0, std::vector<Complex>{value});
}

NBodyState NBodyState::from_weights(SiteSpace space, int sites, std::span<const double> weights) {
  if (space.is_quantum()) throw StructuralError("from_weights requires a classical site space");
  std::vector<Complex> data(weights.begin(), weights.end());
  return NBodyState(space, sites, std::move(data));
}

namespace {

// Row and column multi-indices of every flat quantum index.
void split_quantum_index(std::size_t flat, int sites, int m, std::size_t& row, std::size_t& col) {
  const std::size_t d = static_cast<std::size_t>(m) * m;
  row = 0;
  col = 0;
  std::size_t scale = 1;
  for (int k = 0; k < sites; ++k) {
    const std::size_t l = flat % d;
    flat /= d;
    row += (l / m) * scale;
    col += (l % m) * scale;
    scale *= m;
  }
}

}  // namespace

NBodyState NBodyState::from_matrix(SiteSpace space, int sites, const Eigen::MatrixXcd& matrix) {
  if (!space.is_quantum()) throw StructuralError("from_matrix requires a quantum site space");
  const auto dim = static_cast<Eigen::Index>(ipow(static_cast<std::size_t>(space.dim()), sites));
  if (matrix.rows() != dim || matrix.cols() != dim)
    throw StructuralError("density matrix has the wrong shape");
  NBodyState out(space, sites);
  for (std::size_t x = 0; x < out.size(); ++x) {
    std::size_t r, c;
    split_quantum_index(x, sites, space.dim(), r, c);
    out.data_[x] = matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return out;
}

std::vector<double> NBodyState::weights() const {
  if (space_.is_quantum()) throw StructuralError("weights() requires a classical state");
  std::vector<double> w(data_.size());
  std::transform(data_.begin(), data_.end(), w.begin(), [](Complex z) { return z.real(); });
  return w;
}

Eigen::MatrixXcd NBodyState::to_matrix() const {
  if (!space_.is_quantum()) throw StructuralError("to_matrix() requires a quantum state");
  const auto dim = static_cast<Eigen::Index>(ipow(static_cast<std::size_t>(space_.dim()), sites_));
  Eigen::MatrixXcd m(dim, dim);
  for (std::size_t x = 0; x < data_.size(); ++x) {
    std::size_t r, c;
    split_quantum_index(x, sites_, space_.dim(), r, c);
    m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data_[x];
  }
  return m;
}

void NBodyState::require_compatible(const NBodyState& other) const {
  if (!(space_ == other.space_)) throw StructuralError("mismatched site spaces");
  if (sites_ != other.sites_)
    throw StructuralError("mismatched site counts " + std::to_string(sites_) + " vs " +
                          std::to_string(other.sites_));
}

NBodyState& NBodyState::operator+=(const NBodyState& other) {
  require_compatible(other);
  for (std::size_t x = 0; x < data_.size(); ++x) data_[x] += other.data_[x];
  return *this;
}

NBodyState& NBodyState::operator-=(const NBodyState& other) {
  require_compatible(other);
  for (std::size_t x = 0; x < data_.size(); ++x) data_[x] -= other.data_[x];
  return *this;
}

NBodyState& NBodyState::operator*=(Complex factor) {
  for (auto& z : data_) z *= factor;
  return *this;
}

NBodyState& NBodyState::add_scaled(Complex factor, const NBodyState& other) {
  require_compatible(other);
  for (std::size_t x = 0; x < data_.size(); ++x) data_[x] += factor * other.data_[x];
  return *this;
}

LocalOperator::LocalOperator(int arity, int local_dim, Eigen::MatrixXcd matrix)
    : arity_(arity), local_dim_(local_dim), matrix_(std::move(matrix)) {
  const auto n = static_cast<Eigen::Index>(ipow(static_cast<std::size_t>(local_dim), arity));
  if (arity < 1 || arity > 2) throw StructuralError("local operators act on one or two sites");
  if (matrix_.rows() != n || matrix_.cols() != n)
    throw StructuralError("local operator matrix has the wrong shape");
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r)
      if (matrix_(r, c) != Complex(0.0))
        nonzeros_.push_back({static_cast<int>(r), static_cast<int>(c), matrix_(r, c)});
}

double LocalOperator::column_norm() const {
  double best = 0.0;
  for (Eigen::Index c = 0; c < matrix_.cols(); ++c) best = std::max(best, matrix_.col(c).cwiseAbs().sum());
  return best;
}

NBodyState tensor_product(const NBodyState& a, const NBodyState& b) {
  if (!(a.space() == b.space())) throw StructuralError("tensor_product: mismatched site spaces");
  NBodyState out(a.space(), a.sites() + b.sites());
  const std::size_t nb = b.size();
  for (std::size_t x = 0; x < a.size(); ++x) {
    const Complex ax = a[x];
    if (ax == Complex(0.0)) continue;
    for (std::size_t y = 0; y < nb; ++y) out[x * nb + y] = ax * b[y];
  }
  return out;
}

NBodyState tensor_power(const NBodyState& one_site, int count) {
  if (one_site.sites() != 1) throw StructuralError("tensor_power expects a one-site state");
  NBodyState out = NBodyState::scalar(one_site.space(), 1.0);
  for (int k = 0; k < count; ++k) out = tensor_product(out, one_site);
  return out;
}

NBodyState partial_trace_site(const NBodyState& f, int site) {
  const int n = f.sites();
  if (n < 1 || site < 1 || site > n)
    throw StructuralError("partial_trace_site: site " + std::to_string(site) + " out of range 1.." +
                          std::to_string(n));
  const std::size_t d = static_cast<std::size_t>(f.space().local_dim());
  const std::size_t outer = ipow(d, site - 1);
  const std::size_t inner = ipow(d, n - site);
  const auto t = f.space().trace_weights();
  NBodyState out(f.space(), n - 1);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < d; ++l) {
      if (t[l] == Complex(0.0)) continue;
      const std::size_t src = (o * d + l) * inner;
      const std::size_t dst = o * inner;
      for (std::size_t i = 0; i < inner; ++i) out[dst + i] += t[l] * f[src + i];
    }
  }
  return out;
}

NBodyState partial_trace_last(const NBodyState& f, int count) {
  if (count < 0 || count > f.sites())
    throw StructuralError("partial_trace_last: cannot trace " + std::to_string(count) + " of " +
                          std::to_string(f.sites()) + " sites");
  if (count == 0) return f;
  // Tracing the last c sites at once: contract the fast digits.
  const std::size_t d = static_cast<std::size_t>(f.space().local_dim());
  const std::size_t inner = ipow(d, count);
  const auto t = f.space().trace_weights();
  std::vector<Complex> weights(inner, 1.0);
  for (std::size_t y = 0; y < inner; ++y) {
    std::size_t rest = y;
    Complex w = 1.0;
    for (int k = 0; k < count; ++k) {
      w *= t[rest % d];
      rest /= d;
    }
    weights[y] = w;
  }
  NBodyState out(f.space(), f.sites() - count);
  for (std::size_t o = 0; o < out.size(); ++o) {
    Complex acc = 0.0;
    const std::size_t base = o * inner;
    for (std::size_t y = 0; y < inner; ++y)
      if (weights[y] != Complex(0.0)) acc += weights[y] * f[base + y];
    out[o] = acc;
  }
  return out;
}

NBodyState permute_sites(const NBodyState& f, std::span<const int> perm) {
  const int n = f.sites();
  if (static_cast<int>(perm.size()) != n) throw StructuralError("permute_sites: wrong permutation length");
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int p : perm) {
    if (p < 1 || p > n || seen[static_cast<std::size_t>(p - 1)])
      throw StructuralError("permute_sites: not a permutation");
    seen[static_cast<std::size_t>(p - 1)] = true;
  }
  const std::size_t d = static_cast<std::size_t>(f.space().local_dim());
  // stride of input site q in the output layout
  std::vector<std::size_t> out_stride(static_cast<std::size_t>(n));
  for (int p = 1; p <= n; ++p)
    out_stride[static_cast<std::size_t>(perm[static_cast<std::size_t>(p - 1)] - 1)] = ipow(d, n - p);
  NBodyState out(f.space(), n);
  std::vector<std::size_t> digit(static_cast<std::size_t>(n), 0);
  std::size_t y = 0;
  for (std::size_t x = 0; x < f.size(); ++x) {
    out[y] = f[x];
    // increment the input multi-index (site n fastest) and update y incrementally
    for (int q = n - 1; q >= 0; --q) {
      auto& dq = digit[static_cast<std::size_t>(q)];
      if (dq + 1 < d) {
        ++dq;
        y += out_stride[static_cast<std::size_t>(q)];
        break;
      }
      y -= dq * out_stride[static_cast<std::size_t>(q)];
      dq = 0;
    }
  }
  return out;
}

NBodyState swap_sites(const NBodyState& f, int i, int j) {
  const int n = f.sites();
  if (i < 1 || i > n || j < 1 || j > n)
    throw StructuralError("swap_sites: indices out of range");
  if (i == j) return f;
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 1);
  std::swap(perm[static_cast<std::size_t>(i - 1)], perm[static_cast<std::size_t>(j - 1)]);
  return permute_sites(f, perm);
}

NBodyState insert_site(const NBodyState& body, int slot, const NBodyState& filler) {
  if (filler.sites() != 1) throw StructuralError("insert_site: filler must be a one-site state");
  if (!(filler.space() == body.space())) throw StructuralError("insert_site: mismatched site spaces");
  const int n = body.sites();
  if (slot < 1 || slot > n + 1) throw StructuralError("insert_site: slot out of range");
  const std::size_t d = static_cast<std::size_t>(body.space().local_dim());
  const std::size_t outer = ipow(d, slot - 1);
  const std::size_t inner = ipow(d, n - slot + 1);
  NBodyState out(body.space(), n + 1);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < d; ++l) {
      const Complex fl = filler[l];
      if (fl == Complex(0.0)) continue;
      const std::size_t dst = (o * d + l) * inner;
      const std::size_t src = o * inner;
      for (std::size_t i = 0; i < inner; ++i) out[dst + i] = fl * body[src + i];
    }
  return out;
}

NBodyState place_mask(int total_sites, const NBodyState& filler, std::uint32_t mask,
                      const NBodyState& body) {
  const int filled = std::popcount(mask);
  if (total_sites < 0 || total_sites > 31 || (total_sites < 31 && (mask >> total_sites) != 0))
    throw StructuralError("place: filled slots exceed the total site count");
  if (body.sites() != total_sites - filled)
    throw StructuralError("place: body has " + std::to_string(body.sites()) + " sites, expected " +
                          std::to_string(total_sites - filled));
  NBodyState out = body;
  for (int s = 1; s <= total_sites; ++s)
    if (mask & (1u << (s - 1))) out = insert_site(out, s, filler);
  return out;
}

NBodyState place(int total_sites, const NBodyState& filler, std::span<const int> filled_slots,
                 const NBodyState& body) {
  std::uint32_t mask = 0;
  for (int s : filled_slots) {
    if (s < 1 || s > total_sites) throw StructuralError("place: slot out of range");
    if (mask & (1u << (s - 1))) throw StructuralError("place: repeated slot");
    mask |= 1u << (s - 1);
  }
  return place_mask(total_sites, filler, mask, body);
}

NBodyState place_fillers(int total_sites, std::span<const SlotFiller> fillers, const NBodyState& body) {
  std::vector<SlotFiller> sorted(fillers.begin(), fillers.end());
  std::sort(sorted.begin(), sorted.end(), [](const SlotFiller& a, const SlotFiller& b) { return a.slot < b.slot; });
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k].slot < 1 || sorted[k].slot > total_sites) throw StructuralError("place: slot out of range");
    if (k > 0 && sorted[k].slot == sorted[k - 1].slot) throw StructuralError("place: repeated slot");
  }
  if (body.sites() + static_cast<int>(sorted.size()) != total_sites)
    throw StructuralError("place: body arity does not match the number of free slots");
  NBodyState out = body;
  for (const auto& sf : sorted) out = insert_site(out, sf.slot, *sf.state);
  return out;
}

Complex trace(const NBodyState& f) { return partial_trace_last(f, f.sites())[0]; }

double max_abs_diff(const NBodyState& a, const NBodyState& b) {
  if (!(a.space() == b.space()) || a.sites() != b.sites())
    throw StructuralError("max_abs_diff: incompatible states");
  double m = 0.0;
  for (std::size_t x = 0; x < a.size(); ++x) m = std::max(m, std::abs(a[x] - b[x]));
  return m;
}

double max_abs(const NBodyState& f) {
  double m = 0.0;
  for (auto z : f.data()) m = std::max(m, std::abs(z));
  return m;
}

namespace {

double hermiticity_defect(const Eigen::MatrixXcd& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace

double trace_norm(const NBodyState& f) {
  if (!f.space().is_quantum() || f.sites() == 0) {
    double s = 0.0;
    for (auto z : f.data()) s += std::abs(z);
    return s;
  }
  const Eigen::MatrixXcd m = f.to_matrix();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (hermiticity_defect(m) <= 1e-14 * scale) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m);
  return svd.singularValues().sum();
}

SymmetryDefect symmetry_defect(const NBodyState& f) {
  SymmetryDefect worst;
  for (int k = 1; k < f.sites(); ++k) {
    const double v = max_abs_diff(swap_sites(f, k, k + 1), f);
    if (v > worst.value) worst = {v, k, k + 1};
  }
  return worst;
}

bool is_symmetric(const NBodyState& f, double tol) { return symmetry_defect(f).value <= tol; }

NBodyState symmetrize(const NBodyState& f) {
  NBodyState s = f;
  for (int k = 2; k <= f.sites(); ++k) {
    NBodyState acc = s;
    for (int i = 1; i < k; ++i) acc += swap_sites(s, i, k);
    acc *= Complex(1.0 / k);
    s = std::move(acc);
  }
  return s;
}

PositivityReport positivity(const NBodyState& f) {
  PositivityReport rep;
  if (!f.space().is_quantum() || f.sites() == 0) {
    rep.floor = f.size() ? f[0].real() : 0.0;
    for (auto z : f.data()) {
      rep.floor = std::min(rep.floor, z.real());
      rep.hermiticity = std::max(rep.hermiticity, std::abs(z.imag()));
    }
    return rep;
  }
  const Eigen::MatrixXcd m = f.to_matrix();
  rep.hermiticity = hermiticity_defect(m);
  const Eigen::MatrixXcd h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
  rep.floor = es.eigenvalues().minCoeff();
  return rep;
}

bool is_physical(const NBodyState& f, double tol) {
  const auto rep = positivity(f);
  return std::abs(trace(f) - Complex(1.0)) <= tol && rep.floor >= kPositivityFloor &&
         rep.hermiticity <= tol;
}

std::vector<std::size_t> base_offsets(int sites, std::size_t d, std::span<const int> excluded) {
  std::vector<std::size_t> strides;
  for (int s = 1; s <= sites; ++s)
    if (std::find(excluded.begin(), excluded.end(), s) == excluded.end())
      strides.push_back(ipow(d, sites - s));
  const std::size_t count = ipow(d, static_cast<int>(strides.size()));
  std::vector<std::size_t> out(count);
  std::vector<std::size_t> digit(strides.size(), 0);
  std::size_t off = 0;
  for (std::size_t c = 0; c < count; ++c) {
    out[c] = off;
    for (int q = static_cast<int>(strides.size()) - 1; q >= 0; --q) {
      auto& dq = digit[static_cast<std::size_t>(q)];
      if (dq + 1 < d) {
        ++dq;
        off += strides[static_cast<std::size_t>(q)];
        break;
      }
      off -= dq * strides[static_cast<std::size_t>(q)];
      dq = 0;
    }
  }
  return out;
}

namespace {

void check_operator(const NBodyState& f, const LocalOperator& op) {
  if (op.local_dim() != f.space().local_dim())
    throw StructuralError("local operator dimension does not match the site space");
}

}  // namespace

void accumulate_one_site(NBodyState& out, const NBodyState& f, const LocalOperator& op, int site,
                         Complex factor) {
  check_operator(f, op);
  if (op.arity() != 1) throw StructuralError("expected a one-site operator");
  const int n = f.sites();
  if (site < 1 || site > n) throw StructuralError("apply_one_site: site out of range");
  if (out.sites() != n) throw StructuralError("apply_one_site: output arity mismatch");
  if (op.is_zero()) return;
  const std::size_t d = static_cast<std::size_t>(f.space().local_dim());
  const std::size_t stride = ipow(d, n - site);
  const int excl[] = {site};
  for (std::size_t base : base_offsets(n, d, excl))
    for (const auto& e : op.nonzeros())
      out[base + static_cast<std::size_t>(e.row) * stride] +=
          factor * e.value * f[base + static_cast<std::size_t>(e.col) * stride];
}

void accumulate_two_site(NBodyState& out, const NBodyState& f, const LocalOperator& op, int i,
                         int r, Complex factor) {
  check_operator(f, op);
  if (op.arity() != 2) throw StructuralError("expected a two-site operator");
  const int n = f.sites();
  if (i < 1 || i > n || r < 1 || r > n || i == r)
    throw StructuralError("apply_two_site: invalid site pair (" + std::to_string(i) + "," +
                          std::to_string(r) + ") for " + std::to_string(n) + " sites");
  if (out.sites() != n) throw StructuralError("apply_two_site: output arity mismatch");
  if (op.is_zero()) return;
  const std::size_t d = static_cast<std::size_t>(f.space().local_dim());
  const std::size_t si = ipow(d, n - i);
  const std::size_t sr = ipow(d, n - r);
  std::vector<std::size_t> local(d * d);
  for (std::size_t p = 0; p < d * d; ++p) local[p] = (p / d) * si + (p % d) * sr;
  const int excl[] = {i, r};
  for (std::size_t base : base_offsets(n, d, excl))
    for (const auto& e : op.nonzeros())
      out[base + local[static_cast<std::size_t>(e.row)]] +=
          factor * e.value * f[base + local[static_cast<std::size_t>(e.col)]];
}

NBodyState apply_one_site(const NBodyState& f, const LocalOperator& op, int site) {
  NBodyState out(f.space(), f.sites());
  accumulate_one_site(out, f, op, site);
  return out;
}

NBodyState apply_two_site(const NBodyState& f, const LocalOperator& op, int i, int r) {
  NBodyState out(f.space(), f.sites());
  accumulate_two_site(out, f, op, i, r);
  return out;
}

}  // namespace mfh
