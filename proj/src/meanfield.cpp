#include "mfh/meanfield.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "mfh/errors.hpp"
#include "mfh/hierarchy.hpp"
#include "mfh/random_states.hpp"

namespace mfh {

NBodyState q_bilinear(const ModelSpec& model, const NBodyState& f, const NBodyState& g) {
  if (f.sites() != 1 || g.sites() != 1) throw StructuralError("q_bilinear expects one-site states");
  return partial_trace_last(apply_two_site(tensor_product(f, g), model.V(), 1, 2), 1);
}

NBodyState meanfield_rhs(const ModelSpec& model, const NBodyState& f) {
  NBodyState r = q_bilinear(model, f, f);
  accumulate_K_all(model, r, f);
  return r;
}

MeanFieldTrajectory::MeanFieldTrajectory(const ModelSpec& model, std::vector<NBodyState> states, double dt)
    : model_(&model), states_(std::move(states)), dt_(dt) {
  if (states_.empty()) throw StructuralError("empty mean-field trajectory");
  rhs_.reserve(states_.size());
  for (const auto& f : states_) {
    if (f.sites() != 1) throw StructuralError("mean-field states are one-site states");
    rhs_.push_back(meanfield_rhs(model, f));
  }
}

std::size_t MeanFieldTrajectory::node(double t) const {
  if (dt_ <= 0.0) {
    if (std::abs(t) <= 1e-12) return 0;
    throw StructuralError("time is not on the mean-field grid");
  }
  const double x = t / dt_;
  const double k = std::round(x);
  if (std::abs(x - k) > 1e-7 || k < 0 || k >= static_cast<double>(states_.size()))
    throw StructuralError("time " + std::to_string(t) + " is not on the mean-field grid");
  return static_cast<std::size_t>(k);
}

NBodyState MeanFieldTrajectory::at(double tau) const {
  if (dt_ <= 0.0) return states_.front();
  const double x = tau / dt_;
  const double kr = std::round(x);
  if (std::abs(x - kr) <= 1e-9 && kr >= 0 && kr < static_cast<double>(states_.size()))
    return states_[static_cast<std::size_t>(kr)];
  const double last = static_cast<double>(states_.size() - 1);
  if (x < -1e-9 || x > last + 1e-9)
    throw StructuralError("time " + std::to_string(tau) + " outside the mean-field trajectory");
  std::size_t k = static_cast<std::size_t>(std::floor(x));
  if (k >= states_.size() - 1) k = states_.size() - 2;
  const double th = x - static_cast<double>(k);
  const double th2 = th * th, th3 = th2 * th;
  const double h00 = 2 * th3 - 3 * th2 + 1, h10 = th3 - 2 * th2 + th, h01 = -2 * th3 + 3 * th2, h11 = th3 - th2;
  NBodyState out = states_[k] * Complex(h00);
  out.add_scaled(h10 * dt_, rhs_[k]);
  out.add_scaled(h01, states_[k + 1]);
  out.add_scaled(h11 * dt_, rhs_[k + 1]);
  return out;
}

Trajectory MeanFieldTrajectory::as_trajectory() const {
  Trajectory t;
  t.integrator = "rk4";
  t.dt = dt_;
  t.model_hash = model_->hash();
  for (std::size_t k = 0; k < states_.size(); ++k) {
    t.times.push_back(time(k));
    t.states.push_back(states_[k]);
  }
  return t;
}

MeanFieldTrajectory solve_meanfield(const ModelSpec& model, const NBodyState& f0, double t_final, int steps) {
  if (f0.sites() != 1 || !(f0.space() == model.site())) throw StructuralError("solve_meanfield: bad initial state");
  const auto rep = positivity(f0);
  if (std::abs(trace(f0) - Complex(1.0)) > 1e-9 || rep.floor < kPositivityFloor)
    throw PreconditionError("solve_meanfield: initial state is not physical");
  if (steps < 1) throw PreconditionError("solve_meanfield: steps must be >= 1");
  const double h = t_final / steps;
  std::vector<NBodyState> states{f0};
  NBodyState x = f0;
  for (int s = 1; s <= steps; ++s) {
    const NBodyState k1 = meanfield_rhs(model, x);
    const NBodyState k2 = meanfield_rhs(model, x + k1 * Complex(0.5 * h));
    const NBodyState k3 = meanfield_rhs(model, x + k2 * Complex(0.5 * h));
    const NBodyState k4 = meanfield_rhs(model, x + k3 * Complex(h));
    x += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * Complex(h / 6.0);
    const double drift = std::abs(trace(x) - Complex(1.0));
    if (drift > 1e-10) throw IntegrationError("mean-field trace drift " + std::to_string(drift), drift);
    const auto p = positivity(x);
    if (p.floor < -1e-8) throw IntegrationError("mean-field positivity violation " + std::to_string(p.floor), p.floor);
    states.push_back(x);
  }
  return MeanFieldTrajectory(model, std::move(states), h);
}

NBodyState apply_delta_j(const ModelSpec& model, const NBodyState& f, const NBodyState& a) {
  const int j = a.sites();
  if (j < 1) throw StructuralError("apply_delta_j: operand needs at least one site");
  const NBodyState tail = tensor_product(a, f);
  NBodyState acc(a.space(), j + 1);
  for (int i = 1; i <= j; ++i) {
    const int slot[] = {i};
    NBodyState y = place(j + 1, f, slot, a);
    y += tail;
    accumulate_two_site(acc, y, model.V(), i, j + 1);
  }
  return partial_trace_last(acc, 1);
}

NBodyState apply_delta_j(const MeanFieldTrajectory& traj, double t, const NBodyState& a) {
  return apply_delta_j(traj.model(), traj.state(traj.node(t)), a);
}

double delta1_self_test(const ModelSpec& model, unsigned seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int s = 0; s < 5; ++s) {
    const NBodyState f = random_physical(model.site(), 1, rng);
    const NBodyState a = random_generic(model.site(), 1, rng);
    const NBodyState ref = q_bilinear(model, f, a) + q_bilinear(model, a, f);
    worst = std::max(worst, max_abs_diff(apply_delta_j(model, f, a), ref));
  }
  return worst;
}

NBodyState flow_generator(const FlowConfig& cfg, const NBodyState& f_tau, const NBodyState& x) {
  const ModelSpec& model = cfg.background->model();
  if (cfg.variant == FlowVariant::limit) {
    NBodyState out = apply_delta_j(model, f_tau, x);
    accumulate_K_all(model, out, x);
    return out;
  }
  NBodyState out = apply_D(model, f_tau, cfg.N, x, cfg.hierarchy);
  accumulate_K_all(model, out, x);
  accumulate_T(model, out, x, Complex(1.0 / cfg.N));
  return out;
}

namespace {

void check_flow(const FlowConfig& cfg, const NBodyState& a) {
  if (!cfg.background) throw PreconditionError("flow: no background trajectory");
  if (a.sites() != cfg.j) throw StructuralError("flow: operand arity does not match j");
  if (cfg.substeps < 1) throw PreconditionError("flow: substeps must be >= 1");
  if (cfg.variant == FlowVariant::exact_n && (cfg.N < cfg.j))
    throw PreconditionError("flow: exact-N variant needs 1 <= j <= N");
}

void rk4_step(const FlowConfig& cfg, NBodyState& x, double tau, double h) {
  const auto& bg = *cfg.background;
  const NBodyState fa = bg.at(tau), fm = bg.at(tau + 0.5 * h), fb = bg.at(tau + h);
  const NBodyState k1 = flow_generator(cfg, fa, x);
  const NBodyState k2 = flow_generator(cfg, fm, x + k1 * Complex(0.5 * h));
  const NBodyState k3 = flow_generator(cfg, fm, x + k2 * Complex(0.5 * h));
  const NBodyState k4 = flow_generator(cfg, fb, x + k3 * Complex(h));
  x += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * Complex(h / 6.0);
}

}  // namespace

NBodyState flow_apply(const FlowConfig& cfg, const NBodyState& a, double s, double t) {
  check_flow(cfg, a);
  const auto& bg = *cfg.background;
  const std::size_t ks = bg.node(s), kt = bg.node(t);
  NBodyState x = a;
  const double h = bg.dt() / cfg.substeps;
  if (kt >= ks) {
    for (std::size_t k = ks; k < kt; ++k)
      for (int q = 0; q < cfg.substeps; ++q) rk4_step(cfg, x, bg.time(k) + q * h, h);
  } else {
    for (std::size_t k = ks; k > kt; --k)
      for (int q = 0; q < cfg.substeps; ++q) rk4_step(cfg, x, bg.time(k) - q * h, -h);
  }
  return x;
}

std::vector<NBodyState> flow_sweep(const FlowConfig& cfg, const NBodyState& a, std::size_t s_node) {
  check_flow(cfg, a);
  const auto& bg = *cfg.background;
  if (s_node >= bg.size()) throw StructuralError("flow_sweep: start node off the grid");
  std::vector<NBodyState> out{a};
  NBodyState x = a;
  const double h = bg.dt() / cfg.substeps;
  for (std::size_t k = s_node; k + 1 < bg.size(); ++k) {
    for (int q = 0; q < cfg.substeps; ++q) rk4_step(cfg, x, bg.time(k) + q * h, h);
    out.push_back(x);
  }
  return out;
}

void write_meanfield(std::ostream& os, const MeanFieldTrajectory& traj) { write_trajectory(os, traj.as_trajectory()); }

}  // namespace mfh
