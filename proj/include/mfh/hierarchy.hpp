#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mfh/meanfield.hpp"
#include "mfh/models.hpp"
#include "mfh/tensor_core.hpp"

namespace mfh {

inline constexpr int kMaxSubsetOrder = 12;

struct ErrorFamily {
  // E[0] is the scalar 1; E[j] has j sites.
  std::vector<NBodyState> E;
  int N = 0;
  double t = 0.0;
  std::string model_hash;

  int J_max() const noexcept { return static_cast<int>(E.size()) - 1; }
};

// E_j = sum_{K subset {1..j}} (-1)^{|K|} place(j, F, K, F^N_{j-|K|}) for j = 1..J,
// where marginals[j-1] = F^N_j.
ErrorFamily correlation_errors(std::span<const NBodyState> marginals, const NBodyState& f);
// F^N_j = sum_K place(j, F, K, E_{j-|K|}); result[0] is the scalar trace.
std::vector<NBodyState> reconstruct_marginals(const ErrorFamily& errors, const NBodyState& f);
// Single-order inversion from an explicit error list (index = arity, errors[0] scalar).
NBodyState reconstruct_marginal(std::span<const NBodyState> errors, const NBodyState& f, int j);

// The four error-hierarchy operators at the background state F. Each maps its
// operand to a j-site state, where j is fixed by the operand arity: apply_D
// (j sites), apply_D1 (j+1), apply_Dm1 (j-1), apply_Dm2 (j-2). A scalar
// operand triggers the E_0 conventions automatically.
NBodyState apply_D(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                   const HierarchyOptions& opts = {});
NBodyState apply_D1(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                    const HierarchyOptions& opts = {});
NBodyState apply_Dm1(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                     const HierarchyOptions& opts = {});
NBodyState apply_Dm2(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                     const HierarchyOptions& opts = {});

NBodyState apply_D(const MeanFieldTrajectory& traj, double t, int N, const NBodyState& e,
                   const HierarchyOptions& opts = {});
NBodyState apply_D1(const MeanFieldTrajectory& traj, double t, int N, const NBodyState& e,
                    const HierarchyOptions& opts = {});
NBodyState apply_Dm1(const MeanFieldTrajectory& traj, double t, int N, const NBodyState& e,
                     const HierarchyOptions& opts = {});
NBodyState apply_Dm2(const MeanFieldTrajectory& traj, double t, int N, const NBodyState& e,
                     const HierarchyOptions& opts = {});

// Rescaled operators: Delta^+ = D^1, Delta^- = N D^{-1}, Delta^= = N D^{-2}.
NBodyState apply_delta_plus(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                            const HierarchyOptions& opts = {});
NBodyState apply_delta_minus(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                             const HierarchyOptions& opts = {});
NBodyState apply_delta_eq(const ModelSpec& model, const NBodyState& f, int N, const NBodyState& e,
                          const HierarchyOptions& opts = {});

// Rescaled view: entries N^{j/2} E_j computed on access.
class RescaledFamily {
 public:
  RescaledFamily(const ErrorFamily& errors, int N);
  int N() const noexcept { return N_; }
  double factor(int j) const;
  NBodyState entry(int j) const;
  double trace_norm(int j) const;
  const ErrorFamily& errors() const noexcept { return *errors_; }

 private:
  const ErrorFamily* errors_;
  int N_;
};

RescaledFamily rescale(const ErrorFamily& errors, int N);

// Error trajectory: E_0..E_J at every node of a common uniform grid.
struct ErrorTrajectory {
  std::vector<double> times;
  std::vector<ErrorFamily> families;
  double dt = 0.0;
  int N = 0;
};

// E_0..E_J at every node of an N-body trajectory, with F(t) from `mf` on the same grid.
ErrorTrajectory error_trajectory(const Trajectory& nbody, const MeanFieldTrajectory& mf, int J);

// Max 1-norm over interior nodes of
// dE_j/dt - (K^j + T_j/N)E_j - D_j E_j - D^1_j E_{j+1} - D^{-1}_j E_{j-1} - D^{-2}_j E_{j-2}.
// `mf` supplies F(t) on the same grid.
double error_hierarchy_residual(const ModelSpec& model, int N, const ErrorTrajectory& errors,
                                const MeanFieldTrajectory& mf, int j, const HierarchyOptions& opts = {});

// Reports the initial-data size condition ||E_1(0)||_1 <= B / N.
struct InitialConditionReport {
  double e1_norm;
  double scaled;  // N * ||E_1(0)||_1
  bool within;    // scaled <= B
};
InitialConditionReport check_initial_condition(const ErrorFamily& e0, int N, double B = 1.0);

void write_error_csv(std::ostream& os, const ErrorTrajectory& errors);

}  // namespace mfh
