#include "mfh/random_states.hpp"

#include "mfh/errors.hpp"

namespace mfh {

namespace {

Eigen::MatrixXcd gaussian_matrix(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd a(n, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < n; ++r) a(r, c) = Complex(g(rng), g(rng));
  return a;
}

Eigen::Index hilbert_dim(const SiteSpace& space, int sites) {
  return static_cast<Eigen::Index>(ipow(static_cast<std::size_t>(space.dim()), sites));
}

}  // namespace

NBodyState random_physical(const SiteSpace& space, int sites, Rng& rng) {
  if (!space.is_quantum()) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    NBodyState f(space, sites);
    double total = 0.0;
    for (std::size_t x = 0; x < f.size(); ++x) {
      const double w = u(rng);
      f[x] = w;
      total += w;
    }
    f *= Complex(1.0 / total);
    return f;
  }
  const Eigen::MatrixXcd a = gaussian_matrix(hilbert_dim(space, sites), rng);
  Eigen::MatrixXcd rho = a * a.adjoint();
  rho /= rho.trace();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return NBodyState::from_matrix(space, sites, rho);
}

NBodyState random_symmetric_physical(const SiteSpace& space, int sites, Rng& rng) {
  return symmetrize(random_physical(space, sites, rng));
}

NBodyState random_hermitian(const SiteSpace& space, int sites, Rng& rng) {
  std::normal_distribution<double> g;
  if (!space.is_quantum()) {
    NBodyState f(space, sites);
    for (std::size_t x = 0; x < f.size(); ++x) f[x] = g(rng);
    return f;
  }
  const Eigen::MatrixXcd a = gaussian_matrix(hilbert_dim(space, sites), rng);
  return NBodyState::from_matrix(space, sites, 0.5 * (a + a.adjoint()));
}

NBodyState random_generic(const SiteSpace& space, int sites, Rng& rng) {
  if (!space.is_quantum()) return random_hermitian(space, sites, rng);
  std::normal_distribution<double> g;
  NBodyState f(space, sites);
  for (std::size_t x = 0; x < f.size(); ++x) f[x] = Complex(g(rng), g(rng));
  return f;
}

NBodyState random_traceless(const SiteSpace& space, Rng& rng) {
  NBodyState g = random_hermitian(space, 1, rng);
  const Complex tr = trace(g);
  const auto t = space.trace_weights();
  // subtract tr * (identity / m) or tr * uniform
  double tsum = 0.0;
  for (auto w : t) tsum += w.real();
  for (std::size_t l = 0; l < g.size(); ++l) g[l] -= tr * t[l] / tsum;
  const double n = trace_norm(g);
  if (n == 0.0) throw Error("random_traceless: degenerate sample");
  g *= Complex(1.0 / n);
  return g;
}

}  // namespace mfh
