#include "mfh/symmetric_sector.hpp"

#include <cmath>
#include <string>

#include "mfh/errors.hpp"

namespace mfh {

namespace {

constexpr std::size_t kMaxClasses = std::size_t{1} << 27;

// Occupation of a flat classical configuration index.
void configuration_occupation(std::size_t x, int sites, int m, std::vector<int>& occ) {
  std::fill(occ.begin(), occ.end(), 0);
  for (int k = 0; k < sites; ++k) {
    ++occ[x % static_cast<std::size_t>(m)];
    x /= static_cast<std::size_t>(m);
  }
}

}  // namespace

std::size_t occupation_class_count(int m, int N) {
  // C(N+m-1, m-1) with an overflow guard
  double c = 1.0;
  for (int k = 1; k < m; ++k) c = c * (N + k) / k;
  if (c > static_cast<double>(kMaxClasses))
    throw CapacityError("symmetric sector with m=" + std::to_string(m) + ", N=" + std::to_string(N) +
                        " has too many occupation classes");
  return static_cast<std::size_t>(std::llround(c));
}

OccupationBasis::OccupationBasis(int m, int N) : m_(m), N_(N) {
  if (m < 2) throw ValidationError("occupation basis needs m >= 2");
  if (N < 0) throw StructuralError("negative particle count");
  size_ = occupation_class_count(m, N);
  binom_.assign(static_cast<std::size_t>(N + 1) * (m + 1), 0.0);
  for (int total = 0; total <= N; ++total)
    for (int parts = 1; parts <= m; ++parts) {
      double c = 1.0;
      for (int k = 1; k < parts; ++k) c = c * (total + k) / k;
      binom_[static_cast<std::size_t>(total) * (m + 1) + parts] = std::round(c);
    }

  occ_.reserve(size_ * static_cast<std::size_t>(m));
  std::vector<int> cur(static_cast<std::size_t>(m), 0);
  // depth-first, each digit descending
  auto rec = [&](auto&& self, int pos, int rem) -> void {
    if (pos == m - 1) {
      cur[static_cast<std::size_t>(pos)] = rem;
      occ_.insert(occ_.end(), cur.begin(), cur.end());
      return;
    }
    for (int v = rem; v >= 0; --v) {
      cur[static_cast<std::size_t>(pos)] = v;
      self(self, pos + 1, rem - v);
    }
  };
  rec(rec, 0, N);
}

double OccupationBasis::count(int total, int parts) const {
  return binom_[static_cast<std::size_t>(total) * (m_ + 1) + parts];
}

std::size_t OccupationBasis::index(std::span<const int> occupation) const {
  if (static_cast<int>(occupation.size()) != m_) throw StructuralError("occupation has wrong length");
  int rem = N_;
  double rank = 0.0;
  for (int p = 0; p < m_ - 1; ++p) {
    const int np = occupation[static_cast<std::size_t>(p)];
    if (np < 0 || np > rem) throw StructuralError("invalid occupation vector");
    for (int v = np + 1; v <= rem; ++v) rank += count(rem - v, m_ - p - 1);
    rem -= np;
  }
  if (occupation[static_cast<std::size_t>(m_ - 1)] != rem)
    throw StructuralError("occupation does not sum to N");
  return static_cast<std::size_t>(rank);
}

double OccupationBasis::log_multiplicity(std::size_t index) const {
  double r = std::lgamma(N_ + 1.0);
  for (int n : occupation(index)) r -= std::lgamma(n + 1.0);
  return r;
}

SymmetricClassicalState::SymmetricClassicalState(SiteSpace space, int N)
    : space_(space), basis_(std::make_shared<OccupationBasis>(space.dim(), N)) {
  if (space.is_quantum()) throw UnsupportedModeError("symmetric sector is classical only");
  mass_.assign(basis_->size(), 0.0);
}

SymmetricClassicalState::SymmetricClassicalState(SiteSpace space, int N, std::vector<double> mass)
    : SymmetricClassicalState(space, N) {
  if (mass.size() != mass_.size()) throw StructuralError("mass vector has the wrong length");
  mass_ = std::move(mass);
}

double SymmetricClassicalState::total_mass() const {
  double s = 0.0;
  for (double v : mass_) s += v;
  return s;
}

SymmetricClassicalState SymmetricClassicalState::product(const NBodyState& one_site, int N) {
  if (one_site.sites() != 1 || one_site.space().is_quantum())
    throw StructuralError("product state needs a classical one-site state");
  SymmetricClassicalState s(one_site.space(), N);
  const int m = one_site.space().dim();
  std::vector<double> logg(static_cast<std::size_t>(m));
  for (int a = 0; a < m; ++a) {
    const double g = one_site[static_cast<std::size_t>(a)].real();
    if (g < 0.0) throw PreconditionError("product state needs nonnegative weights");
    logg[static_cast<std::size_t>(a)] = g > 0.0 ? std::log(g) : -INFINITY;
  }
  for (std::size_t c = 0; c < s.basis().size(); ++c) {
    double l = s.basis().log_multiplicity(c);
    bool zero = false;
    const auto occ = s.basis().occupation(c);
    for (int a = 0; a < m; ++a) {
      const int n = occ[static_cast<std::size_t>(a)];
      if (n == 0) continue;
      if (std::isinf(logg[static_cast<std::size_t>(a)])) {
        zero = true;
        break;
      }
      l += n * logg[static_cast<std::size_t>(a)];
    }
    s.mass_[c] = zero ? 0.0 : std::exp(l);
  }
  return s;
}

SymmetricClassicalState compress_symmetric(const NBodyState& f, double tol) {
  if (f.space().is_quantum()) throw UnsupportedModeError("compress_symmetric: classical states only");
  const auto defect = symmetry_defect(f);
  if (defect.value > tol)
    throw PreconditionError("compress_symmetric: input not symmetric, swap (" + std::to_string(defect.i) +
                            "," + std::to_string(defect.j) + ") changes it by " +
                            std::to_string(defect.value));
  SymmetricClassicalState s(f.space(), f.sites());
  const int m = f.space().dim();
  std::vector<int> occ(static_cast<std::size_t>(m));
  auto mass = s.mass();
  for (std::size_t x = 0; x < f.size(); ++x) {
    configuration_occupation(x, f.sites(), m, occ);
    mass[s.basis().index(occ)] += f[x].real();
  }
  return s;
}

NBodyState decompress(const SymmetricClassicalState& s) {
  const int m = s.space().dim();
  NBodyState f(s.space(), s.N());
  std::vector<int> occ(static_cast<std::size_t>(m));
  std::vector<double> per_config(s.basis().size());
  for (std::size_t c = 0; c < per_config.size(); ++c)
    per_config[c] = s.mass()[c] * std::exp(-s.basis().log_multiplicity(c));
  for (std::size_t x = 0; x < f.size(); ++x) {
    configuration_occupation(x, s.N(), m, occ);
    f[x] = per_config[s.basis().index(occ)];
  }
  return f;
}

NBodyState marginal_symmetric(const SymmetricClassicalState& s, int j) {
  const int N = s.N();
  if (j < 0 || j > N) throw StructuralError("marginal_symmetric: j out of range");
  const int m = s.space().dim();
  if (j == 0) return NBodyState::scalar(s.space(), s.total_mass());
  const OccupationBasis small(m, j);
  double falling_N = 1.0;
  for (int k = 0; k < j; ++k) falling_N *= (N - k);

  std::vector<double> value(small.size(), 0.0);
  for (std::size_t c = 0; c < small.size(); ++c) {
    const auto cj = small.occupation(c);
    double acc = 0.0;
    for (std::size_t n = 0; n < s.basis().size(); ++n) {
      const double p = s.mass()[n];
      if (p == 0.0) continue;
      const auto occ = s.basis().occupation(n);
      double w = p;
      for (int a = 0; a < m && w != 0.0; ++a)
        for (int k = 0; k < cj[static_cast<std::size_t>(a)]; ++k) w *= occ[static_cast<std::size_t>(a)] - k;
      acc += w;
    }
    value[c] = acc / falling_N;
  }
  NBodyState f(s.space(), j);
  std::vector<int> occ(static_cast<std::size_t>(m));
  for (std::size_t x = 0; x < f.size(); ++x) {
    configuration_occupation(x, j, m, occ);
    f[x] = value[small.index(occ)];
  }
  return f;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> symmetric_generator(const OccupationBasis& basis,
                                                                 const Eigen::MatrixXd& pair_rates) {
  const int m = basis.m();
  const int N = basis.N();
  if (pair_rates.rows() != m * m || pair_rates.cols() != m * m)
    throw StructuralError("pair rate table has the wrong shape");
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<int> target(static_cast<std::size_t>(m));
  for (std::size_t s = 0; s < basis.size(); ++s) {
    const auto occ = basis.occupation(s);
    double out_rate = 0.0;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        const double w = 0.5 * occ[static_cast<std::size_t>(a)] * (occ[static_cast<std::size_t>(b)] - (a == b ? 1 : 0));
        if (w <= 0.0) continue;
        for (int c = 0; c < m; ++c)
          for (int d = 0; d < m; ++d) {
            const double r = pair_rates(a * m + b, c * m + d);
            if (r == 0.0) continue;
            std::copy(occ.begin(), occ.end(), target.begin());
            --target[static_cast<std::size_t>(a)];
            --target[static_cast<std::size_t>(b)];
            ++target[static_cast<std::size_t>(c)];
            ++target[static_cast<std::size_t>(d)];
            const std::size_t t = basis.index(target);
            if (t == s) continue;
            const double rate = w * r / N;
            trip.emplace_back(static_cast<int>(t), static_cast<int>(s), rate);
            out_rate += rate;
          }
      }
    if (out_rate != 0.0) trip.emplace_back(static_cast<int>(s), static_cast<int>(s), -out_rate);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> g(static_cast<Eigen::Index>(basis.size()),
                                                 static_cast<Eigen::Index>(basis.size()));
  g.setFromTriplets(trip.begin(), trip.end());
  return g;
}

}  // namespace mfh
