#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "mfh/models.hpp"
#include "mfh/symmetric_sector.hpp"
#include "mfh/tensor_core.hpp"

namespace mfh {

struct CapacityLimits {
  // dense quantum path up to m^N <= this (Hilbert-space dimension)
  std::size_t dense_quantum_hilbert = 4096;
  // dense classical path up to m^N <= this
  std::size_t dense_classical = std::size_t{1} << 24;
  // assemble a sparse generator when the state dimension is at most this
  std::size_t assemble_threshold = 4096;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<NBodyState> states;
  std::string integrator;
  double dt = 0.0;
  std::string model_hash;
  int N = 0;  // particle count of the underlying system (0 if not applicable)

  std::size_t size() const noexcept { return times.size(); }
  // Node index of time t, or a structural error when t is off the grid.
  std::size_t node(double t) const;
};

enum class GeneratorMode { assembled, matrix_free };

// K^n + (1/N) sum_{i<r} V_{i,r} acting on n-site states.
class Generator {
 public:
  Generator(const ModelSpec& model, int n, int N, const CapacityLimits& caps = {});
  Generator(const ModelSpec& model, int N, const CapacityLimits& caps = {})
      : Generator(model, N, N, caps) {}

  const ModelSpec& model() const noexcept { return *model_; }
  int sites() const noexcept { return n_; }
  int N() const noexcept { return N_; }
  double scale() const noexcept { return 1.0 / N_; }
  GeneratorMode mode() const noexcept { return mode_; }
  std::size_t dimension() const noexcept { return dim_; }

  NBodyState apply(const NBodyState& f) const;
  void apply_into(const NBodyState& f, NBodyState& out) const;
  // Assembled matrix (assembles on demand if the handle is matrix-free).
  Eigen::SparseMatrix<Complex, Eigen::RowMajor> matrix() const;

 private:
  const ModelSpec* model_;
  int n_;
  int N_;
  std::size_t dim_;
  GeneratorMode mode_;
  Eigen::SparseMatrix<Complex, Eigen::RowMajor> assembled_;
};

enum class EvolveMethod { rk4, exact };

struct EvolveOptions {
  EvolveMethod method = EvolveMethod::rk4;
  double trace_tolerance = 1e-10;
  double positivity_floor = -1e-8;
  bool check_positivity = true;
  // Keep every `store_every`-th node (the last node is always kept).
  int store_every = 1;
  CapacityLimits caps;
};

Trajectory evolve(const Generator& gen, const NBodyState& f0, double t_final, int steps,
                  const EvolveOptions& opts = {});

// Empirical order of the fixed-step integrator from three resolutions.
struct ConvergenceReport {
  double diff_coarse;  // ||F_h - F_{h/2}||
  double diff_fine;    // ||F_{h/2} - F_{h/4}||
  double order;
};
ConvergenceReport step_halving_order(const Generator& gen, const NBodyState& f0, double t_final, int steps);

struct SymmetricTrajectory {
  std::vector<double> times;
  std::vector<SymmetricClassicalState> states;
  double dt = 0.0;
  std::string model_hash;
};

SymmetricTrajectory evolve_symmetric(const ModelSpec& model, const SymmetricClassicalState& s0, double t_final,
                                     int steps, int store_every = 1);

NBodyState marginal(const NBodyState& f, int j);

// Max 1-norm over interior nodes of the BBGKY residual
// dF_j/dt - (K^j + T_j/N) F_j - ((N-j)/N) C_{j+1} F_{j+1}.
double bbgky_residual(const ModelSpec& model, int N, const Trajectory& fj, const Trajectory& fj1, int j);

// Textual trajectory export and per-node diagnostics.
void write_trajectory(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory(std::istream& is, const SiteSpace& space);
void write_diagnostics_csv(std::ostream& os, const Trajectory& traj);

}  // namespace mfh
