#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mfh/errors.hpp"
#include "mfh/hierarchy.hpp"
#include "mfh/nbody_dynamics.hpp"
#include "mfh/random_states.hpp"
#include "mfh/reference_models.hpp"

using namespace mfh;

namespace {

std::vector<NBodyState> marginals_of(const NBodyState& f, int J) {
  std::vector<NBodyState> out;
  for (int j = 1; j <= J; ++j) out.push_back(marginal(f, j));
  return out;
}

struct Run {
  ModelSpec model;
  MeanFieldTrajectory mf;
  ErrorTrajectory errors;
};

Run make_run(ModelSpec model, const NBodyState& F, int N, int J, double t, int steps) {
  const auto tr = evolve(Generator(model, N), tensor_power(F, N), t, steps);
  auto mf = solve_meanfield(model, F, t, steps);
  auto errs = error_trajectory(tr, mf, J);
  return Run{std::move(model), std::move(mf), std::move(errs)};
}

}  // namespace

TEST_CASE("factorized marginals have vanishing correlation errors") {
  Rng rng(1);
  for (const auto& sp : {SiteSpace(SiteKind::classical, 3), SiteSpace(SiteKind::quantum, 2)}) {
    const auto F = random_physical(sp, 1, rng);
    const auto fam = correlation_errors(marginals_of(tensor_power(F, 5), 5), F);
    REQUIRE(fam.J_max() == 5);
    CHECK(std::abs(fam.E[0][0] - Complex(1.0)) == 0.0);
    for (int j = 1; j <= 5; ++j) CHECK(max_abs(fam.E[static_cast<std::size_t>(j)]) < 1e-15);
  }
}

TEST_CASE("low-order correlation errors have the closed forms") {
  Rng rng(2);
  const SiteSpace sp(SiteKind::quantum, 2);
  const auto F = random_physical(sp, 1, rng);
  const auto f = random_symmetric_physical(sp, 3, rng);
  const auto F1 = marginal(f, 1), F2 = marginal(f, 2);
  const auto fam = correlation_errors(marginals_of(f, 2), F);
  CHECK(max_abs_diff(fam.E[1], F1 - F) < 1e-15);
  const auto e2 = F2 - tensor_product(F, F1) - tensor_product(F1, F) + tensor_product(F, F);
  CHECK(max_abs_diff(fam.E[2], e2) < 1e-15);
}

TEST_CASE("inversion round trip and zero trace") {
  Rng rng(3);
  for (const auto& sp : {SiteSpace(SiteKind::classical, 2), SiteSpace(SiteKind::quantum, 2)})
    for (int trial = 0; trial < 5; ++trial) {
      const auto F = random_physical(sp, 1, rng);
      const auto f = random_symmetric_physical(sp, 5, rng);
      const auto marg = marginals_of(f, 5);
      const auto fam = correlation_errors(marg, F);
      const auto back = reconstruct_marginals(fam, F);
      CHECK(std::abs(back[0][0] - Complex(1.0)) < 1e-15);
      for (int j = 1; j <= 5; ++j) {
        CHECK(max_abs_diff(back[static_cast<std::size_t>(j)], marg[static_cast<std::size_t>(j - 1)]) < 1e-13);
        CHECK(std::abs(trace(fam.E[static_cast<std::size_t>(j)])) < 1e-14);
        CHECK(is_symmetric(fam.E[static_cast<std::size_t>(j)], 1e-13));
      }
    }
}

TEST_CASE("initial condition diagnostic") {
  const auto F = reference_quantum_initial();
  const auto fam = correlation_errors(marginals_of(tensor_power(F, 4), 2), F);
  const auto rep = check_initial_condition(fam, 4);
  CHECK(rep.within);
  CHECK(rep.e1_norm == 0.0);
}

TEST_CASE("rescaled view multiplies by N^(j/2)") {
  Rng rng(4);
  const SiteSpace sp(SiteKind::classical, 2);
  const auto F = random_physical(sp, 1, rng);
  const auto fam = correlation_errors(marginals_of(random_symmetric_physical(sp, 4, rng), 3), F);
  const auto r = rescale(fam, 16);
  CHECK(r.factor(3) == doctest::Approx(64.0));
  CHECK(max_abs_diff(r.entry(2), fam.E[2] * Complex(16.0)) < 1e-14);
  CHECK(r.trace_norm(1) == doctest::Approx(4.0 * trace_norm(fam.E[1])));
}

TEST_CASE("rescaled operators reduce to their limits") {
  const auto model = reference_quantum_model();
  Rng rng(5);
  const auto F = reference_quantum_initial();
  const auto A3 = random_generic(model.site(), 3, rng), A1 = random_generic(model.site(), 1, rng);
  const auto A2 = random_generic(model.site(), 2, rng);
  // Delta^+ at j = 2 is (N-2)/N C_sum
  CHECK(max_abs_diff(apply_delta_plus(model, F, 10, A3), apply_C_sum(model, A3) * Complex(0.8)) < 1e-14);
  // the N D^{-1} and N D^{-2} rescalings do not depend on N
  CHECK(max_abs_diff(apply_delta_minus(model, F, 10, A1), apply_delta_minus(model, F, 40, A1)) < 1e-13);
  CHECK(max_abs_diff(apply_delta_eq(model, F, 10, A1), apply_delta_eq(model, F, 40, A1)) < 1e-13);
  CHECK(max_abs_diff(apply_Dm1(model, F, 10, A2) * Complex(10.0), apply_delta_minus(model, F, 10, A2)) < 1e-14);
  // D_j tends to the limit operator Delta_j as N grows
  const double d1 = max_abs_diff(apply_D(model, F, 100, A2), apply_delta_j(model, F, A2));
  const double d2 = max_abs_diff(apply_D(model, F, 200, A2), apply_delta_j(model, F, A2));
  CHECK(d2 < 0.6 * d1);
  CHECK(d1 < 0.2);
}

TEST_CASE("hierarchy operators preserve zero trace") {
  for (const auto& model : {reference_kac_model(3), reference_quantum_model()}) {
    Rng rng(6);
    const auto F = random_physical(model.site(), 1, rng);
    for (int j = 1; j <= 3; ++j) {
      const auto E = random_generic(model.site(), j, rng);
      CHECK(std::abs(trace(apply_D(model, F, 7, E))) < 1e-13);
      CHECK(std::abs(trace(apply_D1(model, F, 7, random_generic(model.site(), j + 1, rng)))) < 1e-13);
    }
  }
}

TEST_CASE("error hierarchy residual singles out the corrected operators") {
  for (const auto& [model, F] : {std::pair{reference_kac_model(2), reference_kac_initial(2)},
                                 std::pair{reference_quantum_model(), reference_quantum_initial()}}) {
    const int N = model.site().is_quantum() ? 4 : 6;
    const auto run = make_run(model, F, N, 4, 0.5, 500);
    for (int j = 1; j <= 3; ++j) {
      const double good = error_hierarchy_residual(run.model, N, run.errors, run.mf, j);
      CHECK_MESSAGE(good < 1e-6, "j=" << j << " residual " << good);
      HierarchyOptions flipped;
      flipped.flip_dm1_sign = true;
      CHECK(error_hierarchy_residual(run.model, N, run.errors, run.mf, j, flipped) > 1e-4);
    }
    for (auto reading : {HierarchyReading::half_pair_dm1, HierarchyReading::double_pair_dm2}) {
      HierarchyOptions o;
      o.reading = reading;
      double worst = 0.0;
      for (int j = 1; j <= 3; ++j) worst = std::max(worst, error_hierarchy_residual(run.model, N, run.errors, run.mf, j, o));
      CHECK(worst > 1e-4);
    }
  }
}

TEST_CASE("error trajectory rejects mismatched grids") {
  const auto model = reference_kac_model(2);
  const auto F = reference_kac_initial(2);
  const auto tr = evolve(Generator(model, 3), tensor_power(F, 3), 0.1, 10);
  const auto mf = solve_meanfield(model, F, 0.1, 20);
  CHECK_THROWS_AS(error_trajectory(tr, mf, 2), StructuralError);
}
