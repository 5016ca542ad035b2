#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mfh/errors.hpp"
#include "mfh/expansion.hpp"
#include "mfh/nbody_dynamics.hpp"
#include "mfh/random_states.hpp"
#include "mfh/reference_models.hpp"
#include "mfh/symmetric_sector.hpp"

using namespace mfh;

namespace {

ErrorFamily factorized_family(const NBodyState& F, int J) {
  ErrorFamily e;
  e.E.push_back(NBodyState::scalar(F.space(), 1.0));
  for (int j = 1; j <= J; ++j) e.E.emplace_back(F.space(), j);
  return e;
}

double rel(const NBodyState& a, const NBodyState& b) {
  const double s = std::max(trace_norm(b), 1e-300);
  return trace_norm(a - b) / s;
}

}  // namespace

TEST_CASE("quadrature weights integrate low-degree polynomials exactly") {
  const double h = 0.1;
  for (std::size_t n = 1; n <= 7; ++n) {
    const auto w = quadrature_weights(n, h);
    const int degree = n == 1 ? 2 : 3;
    for (int p = 0; p <= degree; ++p) {
      double q = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) q += w[i] * std::pow(h * static_cast<double>(i), p);
      const double exact = std::pow(h * static_cast<double>(n), p + 1) / (p + 1);
      CHECK(q == doctest::Approx(exact).epsilon(1e-12));
    }
  }
}

TEST_CASE("stored triangle and total accessor") {
  const SiteSpace sp(SiteKind::quantum, 2);
  ExpansionOptions o;
  o.N = 8;
  const auto t = init_table(factorized_family(reference_quantum_initial(), 4), o, sp, 0.01);
  CHECK(t.stored(1, 0));
  CHECK(t.stored(2, 2));
  CHECK(t.stored(3, 1));
  CHECK_FALSE(t.stored(3, 2));
  CHECK_FALSE(t.stored(0, 0));
  CHECK(std::abs(t.value(0, 0, 0)[0] - Complex(1.0)) == 0.0);
  CHECK(max_abs(t.value(0, 1, 0)) == 0.0);
  CHECK_THROWS_AS(t.value(7, 0, 0), StructuralError);
  CHECK(max_abs(t.value(-1, 2, 0)) == 0.0);
  o.N = 3;
  CHECK_THROWS_AS(init_table(factorized_family(reference_quantum_initial(), 4), o, sp, 0.01), PreconditionError);
}

TEST_CASE("parity: odd coefficients stay zero from factorized data") {
  for (const auto& [model, F] : {std::pair{reference_kac_model(2), reference_kac_initial(2)},
                                 std::pair{reference_quantum_model(), reference_quantum_initial()}})
    for (auto mode : {ExpansionMode::exact_n, ExpansionMode::limit}) {
      const auto mf = solve_meanfield(model, F, 0.5, 100);
      ExpansionOptions o;
      o.mode = mode;
      o.N = 12;
      auto t = init_table(factorized_family(F, 4), o, model.site(), mf.dt());
      evolve_table(t, mf, 0.5);
      CHECK(t.size() == 101);
      CHECK(t.parity_defect() == 0.0);
      CHECK(trace_norm(t.coeff(2, 0, 100)) > 1e-3);
      CHECK(trace_norm(t.coeff(1, 1, 100)) > 1e-3);
    }
}

TEST_CASE("joint integration agrees with the Duhamel recursion") {
  for (const auto& [model, F] : {std::pair{reference_kac_model(3), reference_kac_initial(3)},
                                 std::pair{reference_quantum_model(), reference_quantum_initial()}})
    for (auto mode : {ExpansionMode::exact_n, ExpansionMode::limit}) {
      const auto mf = solve_meanfield(model, F, 0.5, 50);
      ExpansionOptions o;
      o.mode = mode;
      o.N = 16;
      const auto e0 = factorized_family(F, 4);
      auto t = init_table(e0, o, model.site(), mf.dt());
      evolve_table(t, mf, 0.5);
      const auto d = duhamel_table(mf, e0, o);
      for (auto [j, k] : d.keys()) {
        if (j + k > 4) continue;
        const auto& a = t.coeff(j, k, 50);
        const auto& b = d.coeff(j, k, 50);
        if ((j + k) % 2 == 0) {
          CHECK_MESSAGE(rel(a, b) < 1e-5, "(" << j << "," << k << ") " << rel(a, b));
        } else {
          CHECK(max_abs(b) < 1e-12);
        }
      }
      CHECK(rel(explicit_E20(mf, o, 50), t.coeff(2, 0, 50)) < 1e-5);
      CHECK(rel(explicit_E11(mf, o, 50), t.coeff(1, 1, 50)) < 1e-5);
      CHECK(rel(explicit_E11(mf, o, 50, +1.0), t.coeff(1, 1, 50)) > 1e-2);
    }
}

TEST_CASE("consistent initial scaling reproduces the initial errors") {
  const auto model = reference_kac_model(2);
  Rng rng(1);
  const int N = 8;
  const auto f = random_symmetric_physical(model.site(), N, rng);
  const auto F = marginal(f, 1);
  std::vector<NBodyState> marg;
  for (int j = 1; j <= 4; ++j) marg.push_back(marginal(f, j));
  const auto e0 = correlation_errors(marg, F);
  ExpansionOptions o;
  o.N = N;
  const auto t = init_table(e0, o, model.site(), 0.01);
  for (int j = 1; j <= 2; ++j) CHECK(max_abs_diff(partial_sum(t, j, 1, N, 0), e0.E[static_cast<std::size_t>(j)]) < 1e-14);
  o.init = InitScaling::literal;
  const auto lit = init_table(e0, o, model.site(), 0.01);
  CHECK(max_abs_diff(partial_sum(lit, 1, 1, N, 0), e0.E[1] * Complex(1.0 / std::sqrt(N))) < 1e-14);
  o.J_max = 4;
  o.K_max = 2;
  CHECK_THROWS_AS(init_table(e0, o, model.site(), 0.01), PreconditionError);
}

TEST_CASE("partial sums refuse shallow tables and foreign N") {
  const auto model = reference_kac_model(2);
  const auto F = reference_kac_initial(2);
  ExpansionOptions o;
  o.N = 8;
  const auto t = init_table(factorized_family(F, 4), o, model.site(), 0.01);
  CHECK_NOTHROW(partial_sum(t, 2, 1, 8, 0));
  CHECK_THROWS_AS(partial_sum(t, 1, 2, 8, 0), StructuralError);
  CHECK_THROWS_AS(partial_sum(t, 1, 1, 9, 0), StructuralError);
}

TEST_CASE("truncated marginals improve with the order") {
  const auto model = reference_kac_model(2);
  const auto F = reference_kac_initial(2);
  const int N = 32, steps = 500;
  const auto sym = evolve_symmetric(model, SymmetricClassicalState::product(F, N), 0.5, steps, steps);
  const auto mf = solve_meanfield(model, F, 0.5, steps);
  ExpansionOptions o;
  o.N = N;
  auto t = init_table(factorized_family(F, 4), o, model.site(), mf.dt());
  evolve_table(t, mf, 0.5);
  for (int j = 1; j <= 2; ++j) {
    const auto exact = marginal_symmetric(sym.states.back(), j);
    const double e0 = trace_norm(exact - truncated_marginal(t, mf, j, 0, N, steps));
    const double e1 = trace_norm(exact - truncated_marginal(t, mf, j, 1, N, steps));
    CHECK_MESSAGE(e1 < 0.2 * e0, "j=" << j << " e0=" << e0 << " e1=" << e1);
    CHECK(e0 < 1.0 / N);
  }
}
