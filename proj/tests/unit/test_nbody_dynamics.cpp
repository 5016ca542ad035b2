#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "mfh/errors.hpp"
#include "mfh/nbody_dynamics.hpp"
#include "mfh/random_states.hpp"
#include "mfh/reference_models.hpp"

using namespace mfh;

namespace {

Eigen::MatrixXcd embed(const Eigen::MatrixXcd& op, int m, int N, int i, int r) {
  // op acting on sites i < r of N, by direct index arithmetic
  const int dim = static_cast<int>(std::pow(m, N));
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dim, dim);
  auto digit = [&](int x, int s) { return (x / static_cast<int>(std::pow(m, N - s))) % m; };
  auto set_digits = [&](int x, int s1, int a, int s2, int b) {
    x -= digit(x, s1) * static_cast<int>(std::pow(m, N - s1));
    x -= digit(x, s2) * static_cast<int>(std::pow(m, N - s2));
    return x + a * static_cast<int>(std::pow(m, N - s1)) + b * static_cast<int>(std::pow(m, N - s2));
  };
  for (int col = 0; col < dim; ++col)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        const int row = set_digits(col, i, a, r, b);
        out(row, col) += op(a * m + b, digit(col, i) * m + digit(col, r));
      }
  return out;
}

Eigen::MatrixXcd hamiltonian(const QuantumModelConfig& cfg, int N) {
  const int m = cfg.m;
  Eigen::MatrixXcd h1pair = Eigen::MatrixXcd::Zero(m * m, m * m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c) h1pair(a * m + c, b * m + c) = cfg.h1(a, b);
  const int dim = static_cast<int>(std::pow(m, N));
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(dim, dim);
  for (int i = 1; i <= N; ++i) {
    // h1 on site i through a pair embedding with any partner
    const int r = i < N ? i + 1 : i - 1;
    if (i < r) H += embed(h1pair, m, N, i, r);
    else {
      Eigen::MatrixXcd swapped = Eigen::MatrixXcd::Zero(m * m, m * m);
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
          for (int c = 0; c < m; ++c) swapped(c * m + a, c * m + b) = cfg.h1(a, b);
      H += embed(swapped, m, N, r, i);
    }
  }
  for (int i = 1; i <= N; ++i)
    for (int r = i + 1; r <= N; ++r) H += embed(cfg.v2, m, N, i, r) / static_cast<double>(N);
  return H;
}

}  // namespace

TEST_CASE("quantum N-body generator is the von Neumann commutator") {
  const auto cfg = reference_quantum_config();
  const auto model = build_quantum_model(cfg);
  Rng rng(1);
  for (int N : {1, 2, 3}) {
    const Eigen::MatrixXcd H = hamiltonian(cfg, N);
    const auto rho = random_generic(model.site(), N, rng);
    const Generator gen(model, N);
    const Eigen::MatrixXcd ref = Complex(0, -1) * (H * rho.to_matrix() - rho.to_matrix() * H);
    const auto got = gen.apply(rho);
    if (N == 1) {
      CHECK((got.to_matrix() - ref).cwiseAbs().maxCoeff() < 1e-13);
    } else {
      CHECK((got.to_matrix() - ref).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("Kac N-body generator is the pair master equation") {
  const auto cfg = reference_kac_config(3);
  const auto model = build_kac_model(cfg);
  const int N = 3, m = 3;
  Eigen::MatrixXcd rates = Eigen::MatrixXcd::Zero(m * m, m * m);
  for (const auto& t : cfg.transitions) {
    rates(t.out_v * m + t.out_w, t.in_v * m + t.in_w) += t.rate;
    rates(t.in_v * m + t.in_w, t.in_v * m + t.in_w) -= t.rate;
  }
  Eigen::MatrixXcd L = Eigen::MatrixXcd::Zero(27, 27);
  for (int i = 1; i <= N; ++i)
    for (int r = i + 1; r <= N; ++r) L += embed(rates, m, N, i, r) / static_cast<double>(N);
  Rng rng(2);
  const auto f = random_physical(model.site(), N, rng);
  Eigen::VectorXcd fv = Eigen::Map<const Eigen::VectorXcd>(f.data().data(), 27);
  const Eigen::VectorXcd ref = L * fv;
  const auto got = Generator(model, N).apply(f);
  for (int x = 0; x < 27; ++x) CHECK(std::abs(got[static_cast<std::size_t>(x)] - ref(x)) < 1e-14);
}

TEST_CASE("assembled and matrix-free generators agree") {
  for (const auto& model : {reference_kac_model(2), reference_quantum_model()}) {
    CapacityLimits free_caps;
    free_caps.assemble_threshold = 0;
    const Generator a(model, 4), b(model, 4, free_caps);
    CHECK(a.mode() == GeneratorMode::assembled);
    CHECK(b.mode() == GeneratorMode::matrix_free);
    Rng rng(3);
    const auto f = random_generic(model.site(), 4, rng);
    CHECK(max_abs_diff(a.apply(f), b.apply(f)) < 1e-14);
  }
}

TEST_CASE("capacity limits are enforced") {
  const auto q = reference_quantum_model();
  CHECK_THROWS_AS(Generator(q, 13), CapacityError);
  CapacityLimits small;
  small.dense_classical = 100;
  CHECK_THROWS_AS(Generator(reference_kac_model(2), 7, small), CapacityError);
}

TEST_CASE("RK4 and exact evolution agree for the quantum backend") {
  const auto model = reference_quantum_model();
  const auto f0 = tensor_power(reference_quantum_initial(), 3);
  const Generator gen(model, 3);
  EvolveOptions exact;
  exact.method = EvolveMethod::exact;
  const auto a = evolve(gen, f0, 0.5, 200);
  const auto b = evolve(gen, f0, 0.5, 200, exact);
  REQUIRE(a.size() == b.size());
  CHECK(max_abs_diff(a.states.back(), b.states.back()) < 1e-10);
  CHECK(std::abs(trace(a.states.back()) - Complex(1.0)) < 1e-12);
  CHECK(is_physical(b.states.back()));
}

TEST_CASE("exact evolution refuses classical models") {
  const auto model = reference_kac_model(2);
  EvolveOptions exact;
  exact.method = EvolveMethod::exact;
  CHECK_THROWS_AS(evolve(Generator(model, 3), tensor_power(reference_kac_initial(2), 3), 0.1, 10, exact),
                  UnsupportedModeError);
}

TEST_CASE("Kac RK4 matches the matrix exponential") {
  const auto model = reference_kac_model(2);
  const Generator gen(model, 4);
  const auto f0 = tensor_power(reference_kac_initial(2), 4);
  const Eigen::MatrixXcd L(gen.matrix());
  const Eigen::MatrixXcd P = (L * 0.5).exp();
  Eigen::VectorXcd v = P * Eigen::Map<const Eigen::VectorXcd>(f0.data().data(), 16);
  const auto tr = evolve(gen, f0, 0.5, 100);
  for (int x = 0; x < 16; ++x) CHECK(std::abs(tr.states.back()[static_cast<std::size_t>(x)] - v(x)) < 1e-10);
}

TEST_CASE("step halving shows fourth order") {
  const auto model = reference_quantum_model();
  const auto rep = step_halving_order(Generator(model, 3), tensor_power(reference_quantum_initial(), 3), 0.5, 8);
  CHECK(rep.order == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("symmetric-sector evolution matches the dense path") {
  for (int m : {2, 3}) {
    const auto model = reference_kac_model(m);
    const int N = m == 2 ? 6 : 5;
    const auto F = reference_kac_initial(m);
    const auto dense = evolve(Generator(model, N), tensor_power(F, N), 0.5, 100);
    const auto sym = evolve_symmetric(model, SymmetricClassicalState::product(F, N), 0.5, 100);
    REQUIRE(sym.states.size() == dense.size());
    for (int j = 1; j <= N; ++j)
      CHECK(max_abs_diff(marginal_symmetric(sym.states.back(), j), marginal(dense.states.back(), j)) < 1e-12);
  }
}

TEST_CASE("trace and symmetry are preserved; marginals of a product stay products at t = 0") {
  const auto model = reference_quantum_model();
  const auto F = reference_quantum_initial();
  const auto tr = evolve(Generator(model, 4), tensor_power(F, 4), 0.3, 60);
  for (const auto& f : tr.states) {
    CHECK(std::abs(trace(f) - Complex(1.0)) < 1e-11);
    CHECK(symmetry_defect(f).value < 1e-12);
  }
  CHECK(max_abs_diff(marginal(tr.states.front(), 2), tensor_power(F, 2)) < 1e-15);
}

TEST_CASE("marginals satisfy the finite-N hierarchy") {
  for (const auto& model : {reference_kac_model(2), reference_quantum_model()}) {
    const int N = 4;
    const auto F = model.site().is_quantum() ? reference_quantum_initial() : reference_kac_initial(2);
    const auto tr = evolve(Generator(model, N), tensor_power(F, N), 0.5, 500);
    for (int j = 1; j < N; ++j) {
      Trajectory a = tr, b = tr;
      for (std::size_t k = 0; k < tr.size(); ++k) {
        a.states[k] = marginal(tr.states[k], j);
        b.states[k] = marginal(tr.states[k], j + 1);
      }
      CHECK(bbgky_residual(model, N, a, b, j) < 1e-6);
      // a wrong particle count is detected
      CHECK(bbgky_residual(model, N + 1, a, b, j) > 1e-4);
    }
  }
}

TEST_CASE("trajectory file round trip") {
  const auto model = reference_quantum_model();
  const auto tr = evolve(Generator(model, 2), tensor_power(reference_quantum_initial(), 2), 0.1, 10);
  std::stringstream ss;
  write_trajectory(ss, tr);
  const auto back = read_trajectory(ss, model.site());
  REQUIRE(back.size() == tr.size());
  CHECK(back.model_hash == tr.model_hash);
  for (std::size_t k = 0; k < tr.size(); ++k) CHECK(max_abs_diff(back.states[k], tr.states[k]) < 1e-15);
}

TEST_CASE("non-physical initial data is rejected") {
  const auto model = reference_kac_model(2);
  const double w[] = {1.5, -0.5};
  const auto bad = NBodyState::from_weights(model.site(), 1, w);
  CHECK_THROWS_AS(evolve(Generator(model, 2), tensor_power(bad, 2), 0.1, 10), PreconditionError);
}
