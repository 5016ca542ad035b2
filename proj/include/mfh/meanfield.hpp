#pragma once

#include <iosfwd>
#include <vector>

#include "mfh/models.hpp"
#include "mfh/nbody_dynamics.hpp"
#include "mfh/tensor_core.hpp"

namespace mfh {

// Q(F, G) = Tr_2 V_{1,2}(F (x) G).
NBodyState q_bilinear(const ModelSpec& model, const NBodyState& f, const NBodyState& g);
// K F + Q(F, F)
NBodyState meanfield_rhs(const ModelSpec& model, const NBodyState& f);

// Solution of the mean-field equation on a uniform grid, with the right-hand
// side stored at every node for cubic Hermite interpolation between nodes.
class MeanFieldTrajectory {
 public:
  MeanFieldTrajectory(const ModelSpec& model, std::vector<NBodyState> states, double dt);

  const ModelSpec& model() const noexcept { return *model_; }
  double dt() const noexcept { return dt_; }
  std::size_t size() const noexcept { return states_.size(); }
  double t_final() const noexcept { return dt_ * static_cast<double>(states_.size() - 1); }
  double time(std::size_t k) const noexcept { return dt_ * static_cast<double>(k); }
  const NBodyState& state(std::size_t k) const { return states_.at(k); }
  const NBodyState& derivative(std::size_t k) const { return rhs_.at(k); }

  // Node index of t; off-grid times are refused.
  std::size_t node(double t) const;
  // F(tau) for tau in [0, t_final], interpolated between nodes.
  NBodyState at(double tau) const;
  // The stored trajectory in the common trajectory container.
  Trajectory as_trajectory() const;

 private:
  const ModelSpec* model_;
  std::vector<NBodyState> states_;
  std::vector<NBodyState> rhs_;
  double dt_;
};

MeanFieldTrajectory solve_meanfield(const ModelSpec& model, const NBodyState& f0, double t_final, int steps);

// Limit operator: Delta_j A = sum_i C_{i,j+1}(place(j+1, F, {i}, A) + A (x) F).
NBodyState apply_delta_j(const ModelSpec& model, const NBodyState& f, const NBodyState& a);
NBodyState apply_delta_j(const MeanFieldTrajectory& traj, double t, const NBodyState& a);

// Startup self-test: max deviation between Delta_1 A and Q(F,A) + Q(A,F).
double delta1_self_test(const ModelSpec& model, unsigned seed = 11);

enum class FlowVariant { limit, exact_n };

enum class HierarchyReading { corrected, half_pair_dm1, double_pair_dm2 };

struct HierarchyOptions {
  HierarchyReading reading = HierarchyReading::corrected;
  // Test fixture: negate D_j^{-1}.
  bool flip_dm1_sign = false;
};

struct FlowConfig {
  int j = 1;
  FlowVariant variant = FlowVariant::limit;
  int N = 0;  // used by exact_n
  const MeanFieldTrajectory* background = nullptr;
  int substeps = 1;  // RK4 steps per grid interval
  HierarchyOptions hierarchy;
};

// Generator of the linearized flow at time tau applied to X:
// limit: K^j X + Delta_j X; exact_n: K^j X + T_j X / N + D_j X.
NBodyState flow_generator(const FlowConfig& cfg, const NBodyState& f_tau, const NBodyState& x);

// U_j(t, s) A by RK4 integration (s > t integrates backward).
NBodyState flow_apply(const FlowConfig& cfg, const NBodyState& a, double s, double t);
// U_j(t_k, s) A for every node t_k from s to the end of the grid (forward only).
std::vector<NBodyState> flow_sweep(const FlowConfig& cfg, const NBodyState& a, std::size_t s_node);

void write_meanfield(std::ostream& os, const MeanFieldTrajectory& traj);

}  // namespace mfh
