#include "mfh/hierarchy.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "mfh/errors.hpp"

namespace mfh {

ErrorFamily correlation_errors(std::span<const NBodyState> marginals, const NBodyState& f) {
  const int J = static_cast<int>(marginals.size());
  if (J < 1) throw PreconditionError("correlation_errors: at least one marginal needed");
  if (J > kMaxSubsetOrder)
    throw CapacityError("correlation_errors: order " + std::to_string(J) + " exceeds the subset cap " +
                        std::to_string(kMaxSubsetOrder));
  if (f.sites() != 1) throw StructuralError("correlation_errors: F must be a one-site state");
  std::vector<NBodyState> Fn{NBodyState::scalar(f.space(), 1.0)};
  for (int j = 1; j <= J; ++j) {
    const auto& m = marginals[static_cast<std::size_t>(j - 1)];
    if (!(m.space() == f.space())) throw StructuralError("correlation_errors: site space mismatch");
    if (m.sites() != j) throw StructuralError("correlation_errors: marginal " + std::to_string(j) + " has wrong arity");
    Fn.push_back(m);
  }
  ErrorFamily fam;
  fam.E.push_back(NBodyState::scalar(f.space(), 1.0));
  for (int j = 1; j <= J; ++j) {
    NBodyState e(f.space(), j);
    for (std::uint32_t mask = 0; mask < (1u << j); ++mask) {
      const int k = std::popcount(mask);
      const NBodyState term = place_mask(j, f, mask, Fn[static_cast<std::size_t>(j - k)]);
      e.add_scaled(k % 2 ? -1.0 : 1.0, term);
    }
    fam.E.push_back(std::move(e));
  }
  return fam;
}

NBodyState reconstruct_marginal(std::span<const NBodyState> errors, const NBodyState& f, int j) {
  if (j < 0 || j >= static_cast<int>(errors.size())) throw StructuralError("reconstruct_marginal: order out of range");
  if (j > kMaxSubsetOrder) throw CapacityError("reconstruct_marginal: order exceeds the subset cap");
  if (j == 0) return errors[0];
  NBodyState out(f.space(), j);
  for (std::uint32_t mask = 0; mask < (1u << j); ++mask) {
    const int k = std::popcount(mask);
    out += place_mask(j, f, mask, errors[static_cast<std::size_t>(j - k)]);
  }
  return out;
}

std::vector<NBodyState> reconstruct_marginals(const ErrorFamily& errors, const NBodyState& f) {
  std::vector<NBodyState> out;
  for (int j = 0; j <= errors.J_max(); ++j) out.push_back(reconstruct_marginal(errors.E, f, j));
  return out;
}

namespace {

void check_operands(const NBodyState& f, const NBodyState& e, int N) {
  if (f.sites() != 1) throw StructuralError("hierarchy operators need a one-site background state");
  if (!(f.space() == e.space())) throw StructuralError("hierarchy operators: site space mismatch");
  if (N < 1) throw PreconditionError("hierarchy operators: N must be >= 1");
}

}  // namespace

NBodyState apply_D(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                   const HierarchyOptions&) {
  check_operands(f, e, N);
  const int j = e.sites();
  if (j < 1) throw StructuralError("apply_D: operand needs at least one site");
  const double alpha = double(N - j) / N;
  std::vector<NBodyState> P;
  NBodyState S(e.space(), j + 1);
  for (int l = 1; l <= j; ++l) {
    const int slot[] = {l};
    P.push_back(place(j + 1, f, slot, e));
    S += P.back();
  }
  const NBodyState tail = tensor_product(e, f);
  NBodyState acc(e.space(), j + 1);
  for (int i = 1; i <= j; ++i) {
    // alpha (P_i + E(x)F) - (1/N) sum_{l != i} P_l
    NBodyState y = tail * Complex(alpha);
    y.add_scaled(alpha + 1.0 / N, P[static_cast<std::size_t>(i - 1)]);
    y.add_scaled(-1.0 / N, S);
    accumulate_two_site(acc, y, model.V(), i, j + 1);
  }
  return partial_trace_last(acc, 1);
}

NBodyState apply_D1(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                    const HierarchyOptions&) {
  check_operands(f, e, N);
  const int j = e.sites() - 1;
  if (j < 1) throw StructuralError("apply_D1: operand needs at least two sites");
  const double alpha = double(N - j) / N;
  if (alpha == 0.0) return NBodyState(e.space(), j);
  NBodyState out = apply_C_sum(model, e);
  out *= Complex(alpha);
  return out;
}

NBodyState apply_Dm1(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                     const HierarchyOptions& opts) {
  check_operands(f, e, N);
  const int j = e.sites() + 1;
  const NBodyState q = q_bilinear(model, f, f);
  NBodyState out(e.space(), j);
  const double pair_factor = opts.reading == HierarchyReading::half_pair_dm1 ? 0.5 / N : 1.0 / N;
  for (int i = 1; i <= j; ++i) {
    const int slot[] = {i};
    const NBodyState y = place(j, f, slot, e);
    for (int r = 1; r <= j; ++r)
      if (r != i) accumulate_V_pair(model, out, y, i, r, pair_factor);
    out.add_scaled(-double(j) / N, place(j, q, slot, e));
  }
  if (j >= 2) {
    NBodyState acc(e.space(), j + 1);
    for (int i = 1; i <= j; ++i)
      for (int l = 1; l <= j; ++l) {
        if (l == i) continue;
        const int slots_a[] = {l, j + 1};
        const int slots_b[] = {i, l};
        NBodyState y = place(j + 1, f, slots_a, e);
        y += place(j + 1, f, slots_b, e);
        accumulate_two_site(acc, y, model.V(), i, j + 1, -1.0 / N);
      }
    out += partial_trace_last(acc, 1);
  }
  if (opts.flip_dm1_sign) out *= Complex(-1.0);
  return out;
}

NBodyState apply_Dm2(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                     const HierarchyOptions& opts) {
  check_operands(f, e, N);
  const int j = e.sites() + 2;
  const NBodyState q = q_bilinear(model, f, f);
  NBodyState out(e.space(), j);
  const double pair_factor = opts.reading == HierarchyReading::double_pair_dm2 ? 2.0 / N : 1.0 / N;
  for (int i = 1; i <= j; ++i)
    for (int r = i + 1; r <= j; ++r) {
      const int slots[] = {i, r};
      accumulate_two_site(out, place(j, f, slots, e), model.V(), i, r, pair_factor);
    }
  for (int i = 1; i <= j; ++i)
    for (int l = 1; l <= j; ++l) {
      if (l == i) continue;
      const SlotFiller fill[] = {{i, &q}, {l, &f}};
      out.add_scaled(-1.0 / N, place_fillers(j, fill, e));
    }
  return out;
}

NBodyState apply_D(const MeanFieldTrajectory& traj, double t, int N, const NBodyState& e,
                   const HierarchyOptions& opts) {
  return apply_D(traj.model(), traj.state(traj.node(t)), N, e, opts);
}
NBodyState apply_D1(const MeanFieldTrajectory& traj, double t, int N, const NBodyState& e,
                    const HierarchyOptions& opts) {
  return apply_D1(traj.model(), traj.state(traj.node(t)), N, e, opts);
}
NBodyState apply_Dm1(const MeanFieldTrajectory& traj, double t, int N, const NBodyState& e,
                     const HierarchyOptions& opts) {
  return apply_Dm1(traj.model(), traj.state(traj.node(t)), N, e, opts);
}
NBodyState apply_Dm2(const MeanFieldTrajectory& traj, double t, int N, const NBodyState& e,
                     const HierarchyOptions& opts) {
  return apply_Dm2(traj.model(), traj.state(traj.node(t)), N, e, opts);
}

NBodyState apply_delta_plus(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                            const HierarchyOptions& opts) {
  return apply_D1(model, f, N, e, opts);
}

NBodyState apply_delta_minus(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                             const HierarchyOptions& opts) {
  NBodyState out = apply_Dm1(model, f, N, e, opts);
  out *= Complex(double(N));
  return out;
}

NBodyState apply_delta_eq(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                          const HierarchyOptions& opts) {
  NBodyState out = apply_Dm2(model, f, N, e, opts);
  out *= Complex(double(N));
  return out;
}

RescaledFamily::RescaledFamily(const ErrorFamily& errors, int N) : errors_(&errors), N_(N) {
  if (N < 1) throw PreconditionError("rescale: N must be >= 1");
  if (errors.N != 0 && errors.N != N) throw StructuralError("rescale: N does not match the error family");
}

double RescaledFamily::factor(int j) const { return std::pow(double(N_), 0.5 * j); }

NBodyState RescaledFamily::entry(int j) const {
  NBodyState e = errors_->E.at(static_cast<std::size_t>(j));
  e *= Complex(factor(j));
  return e;
}

double RescaledFamily::trace_norm(int j) const {
  return factor(j) * mfh::trace_norm(errors_->E.at(static_cast<std::size_t>(j)));
}

RescaledFamily rescale(const ErrorFamily& errors, int N) { return RescaledFamily(errors, N); }

double error_hierarchy_residual(const ModelSpec& model, int N, const ErrorTrajectory& errors,
                                const MeanFieldTrajectory& mf, int j, const HierarchyOptions& opts) {
  const std::size_t M = errors.families.size();
  if (M < 3 || errors.times.size() != M) throw StructuralError("error_hierarchy_residual: need at least 3 nodes");
  if (std::abs(errors.dt - mf.dt()) > 1e-15 * std::max(1.0, mf.dt()) || mf.size() < M)
    throw StructuralError("error_hierarchy_residual: error and mean-field grids differ");
  if (j < 1 || j + 1 > errors.families.front().J_max())
    throw PreconditionError("error_hierarchy_residual: need 1 <= j and j+1 <= J");
  const double h = errors.dt;
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < M; ++k) {
    const auto& E = errors.families[k].E;
    const NBodyState& f = mf.state(k);
    NBodyState r = (errors.families[k + 1].E[static_cast<std::size_t>(j)] -
                    errors.families[k - 1].E[static_cast<std::size_t>(j)]) *
                   Complex(0.5 / h);
    const NBodyState& ej = E[static_cast<std::size_t>(j)];
    r -= apply_K_all(model, ej);
    r.add_scaled(-1.0 / N, apply_T(model, ej));
    r -= apply_D(model, f, N, ej, opts);
    r -= apply_D1(model, f, N, E[static_cast<std::size_t>(j + 1)], opts);
    r -= apply_Dm1(model, f, N, E[static_cast<std::size_t>(j - 1)], opts);
    if (j >= 2) r -= apply_Dm2(model, f, N, E[static_cast<std::size_t>(j - 2)], opts);
    worst = std::max(worst, mfh::trace_norm(r));
  }
  return worst;
}

InitialConditionReport check_initial_condition(const ErrorFamily& e0, int N, double B) {
  InitialConditionReport rep;
  rep.e1_norm = e0.J_max() >= 1 ? mfh::trace_norm(e0.E[1]) : 0.0;
  rep.scaled = N * rep.e1_norm;
  rep.within = rep.scaled <= B;
  return rep;
}

ErrorTrajectory error_trajectory(const Trajectory& nbody, const MeanFieldTrajectory& mf, int J) {
  if (nbody.size() != mf.size()) throw StructuralError("error_trajectory: grids differ");
  ErrorTrajectory out;
  out.dt = mf.dt();
  for (std::size_t k = 0; k < nbody.size(); ++k) {
    if (std::abs(nbody.times[k] - mf.time(k)) > 1e-12) throw StructuralError("error_trajectory: grids differ");
    const NBodyState& f = nbody.states[k];
    if (J > f.sites()) throw StructuralError("error_trajectory: J exceeds the particle count");
    std::vector<NBodyState> marg;
    for (int j = 1; j <= J; ++j) marg.push_back(partial_trace_last(f, f.sites() - j));
    ErrorFamily fam = correlation_errors(marg, mf.state(k));
    fam.N = f.sites();
    fam.t = nbody.times[k];
    fam.model_hash = nbody.model_hash;
    out.times.push_back(nbody.times[k]);
    out.families.push_back(std::move(fam));
  }
  out.N = nbody.states.front().sites();
  return out;
}

void write_error_csv(std::ostream& os, const ErrorTrajectory& errors) {
  os << "t,j,trace_norm_Ej,trace_Ej,symmetry_defect\n";
  char buf[160];
  for (std::size_t k = 0; k < errors.families.size(); ++k) {
    const auto& fam = errors.families[k];
    for (int j = 1; j <= fam.J_max(); ++j) {
      const auto& e = fam.E[static_cast<std::size_t>(j)];
      std::snprintf(buf, sizeof buf, "%.10g,%d,%.15g,%.15g,%.3e\n", errors.times[k], j, mfh::trace_norm(e),
                    trace(e).real(), symmetry_defect(e).value);
      os << buf;
    }
  }
}

}  // namespace mfh
