#include "mfh/reference_models.hpp"

#include <algorithm>
#include <map>

#include "mfh/errors.hpp"

namespace mfh {

namespace {

using Pair = std::pair<int, int>;

KacModelConfig scaled(int m, std::map<std::pair<Pair, Pair>, double> rates) {
  std::vector<double> exit(static_cast<std::size_t>(m * m), 0.0);
  for (const auto& [key, r] : rates) exit[static_cast<std::size_t>(key.first.first * m + key.first.second)] += r;
  const double scale = 0.5 / *std::max_element(exit.begin(), exit.end());
  KacModelConfig cfg;
  cfg.m = m;
  for (const auto& [key, r] : rates)
    cfg.transitions.push_back({key.first.first, key.first.second, key.second.first, key.second.second, r * scale});
  return cfg;
}

}  // namespace

KacModelConfig reference_kac_config(int m) {
  std::map<std::pair<Pair, Pair>, double> rates;
  auto add = [&](int v, int w, int a, int b, double r) {
    rates[{{v, w}, {a, b}}] = r;
    rates[{{w, v}, {b, a}}] = r;
  };
  if (m == 2) {
    add(0, 0, 0, 1, 0.2);
    add(0, 0, 1, 1, 0.1);
    add(0, 1, 1, 1, 0.3);
    add(0, 1, 1, 0, 0.1);
    add(0, 1, 0, 0, 0.05);
    add(1, 1, 0, 0, 0.25);
    add(1, 1, 0, 1, 0.1);
    return scaled(2, rates);
  }
  if (m == 3) {
    for (int v = 0; v < 3; ++v)
      for (int w = 0; w < 3; ++w)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            if (v == a && w == b) continue;
            // both expressions are invariant under the joint swap (v,w,a,b) -> (w,v,b,a)
            if ((v * a + w * b + v + w) % 3 == 0) continue;
            const double r = 1.0 + ((2 * (v + w) + 3 * (a + b) + v * a + w * b) % 4);
            add(v, w, a, b, r);
          }
    return scaled(3, rates);
  }
  throw ValidationError("reference Kac kernels exist for m = 2 and m = 3");
}

ModelSpec reference_kac_model(int m) { return build_kac_model(reference_kac_config(m)); }

NBodyState reference_kac_initial(int m) {
  const SiteSpace sp(SiteKind::classical, m);
  if (m == 2) {
    const double w[] = {0.7, 0.3};
    return NBodyState::from_weights(sp, 1, w);
  }
  if (m == 3) {
    const double w[] = {0.5, 0.3, 0.2};
    return NBodyState::from_weights(sp, 1, w);
  }
  throw ValidationError("reference Kac initial data exist for m = 2 and m = 3");
}

QuantumModelConfig reference_quantum_config() {
  using C = Complex;
  Eigen::Matrix2cd I = Eigen::Matrix2cd::Identity(), X, Y, Z;
  X << 0, 1, 1, 0;
  Y << 0, C(0, -1), C(0, 1), 0;
  Z << 1, 0, 0, -1;
  auto kron = [](const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
    Eigen::MatrixXcd k(4, 4);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) k.block(2 * i, 2 * j, 2, 2) = a(i, j) * b;
    return k;
  };
  QuantumModelConfig cfg;
  cfg.m = 2;
  cfg.hbar = 1.0;
  cfg.h1 = Eigen::MatrixXcd(2, 2);
  cfg.h1 << 0.5, C(0.3, -0.1), C(0.3, 0.1), -0.2;
  Eigen::MatrixXcd v = 0.3 * kron(Z, Z) + 0.2 * kron(X, X) + 0.15 * (kron(X, I) + kron(I, X)) +
                       0.1 * (kron(Y, Z) + kron(Z, Y));
  const double norm = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(v).eigenvalues().cwiseAbs().maxCoeff();
  cfg.v2 = v * (0.5 / norm);
  return cfg;
}

ModelSpec reference_quantum_model() { return build_quantum_model(reference_quantum_config()); }

NBodyState reference_quantum_initial() {
  Eigen::MatrixXcd rho(2, 2);
  rho << 0.8, Complex(0.3, -0.2), Complex(0.3, 0.2), 0.2;
  return NBodyState::from_matrix(SiteSpace(SiteKind::quantum, 2), 1, rho);
}

}  // namespace mfh
