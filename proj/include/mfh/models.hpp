#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfh/tensor_core.hpp"

namespace mfh {

enum class Backend { kac, quantum };

const char* to_string(Backend b);

struct QuantumModelConfig {
  int m = 2;
  Eigen::MatrixXcd h1;  // m x m Hermitian
  Eigen::MatrixXcd v2;  // m^2 x m^2 Hermitian, pair-swap symmetric
  double hbar = 1.0;
};

struct KacTransition {
  int in_v, in_w;    // incoming velocity pair (0-based labels)
  int out_v, out_w;  // outgoing pair
  double rate;
};

struct KacModelConfig {
  int m = 2;
  std::vector<KacTransition> transitions;
  // Reject tables whose swap images disagree instead of averaging them.
  bool strict = false;
};

// Two-body generator data shared by every consumer of a model: one-site
// generator K (d x d), pair generator V (d^2 x d^2, first site slowest) and
// the bound v_norm on the norm of V.
class ModelSpec {
 public:
  ModelSpec(Backend backend, SiteSpace site, LocalOperator K, LocalOperator V, double v_norm, double hbar);

  Backend backend() const noexcept { return backend_; }
  const SiteSpace& site() const noexcept { return site_; }
  const LocalOperator& K() const noexcept { return K_; }
  const LocalOperator& V() const noexcept { return V_; }
  double v_norm() const noexcept { return v_norm_; }
  double hbar() const noexcept { return hbar_; }
  const std::string& hash() const noexcept { return hash_; }

  // Quantum: Hamiltonian data; Kac: the rate table R(in -> out).
  const Eigen::MatrixXcd& h1() const noexcept { return h1_; }
  const Eigen::MatrixXcd& v2() const noexcept { return v2_; }
  const Eigen::MatrixXd& pair_rates() const noexcept { return rates_; }

  bool has_interaction() const noexcept { return !V_.is_zero(); }

 private:
  friend ModelSpec build_quantum_model(const QuantumModelConfig&);
  friend ModelSpec build_kac_model(const KacModelConfig&);
  void compute_hash();

  Backend backend_;
  SiteSpace site_;
  LocalOperator K_;
  LocalOperator V_;
  double v_norm_;
  double hbar_;
  Eigen::MatrixXcd h1_, v2_;
  Eigen::MatrixXd rates_;
  std::string hash_;
};

ModelSpec build_quantum_model(const QuantumModelConfig& cfg);
ModelSpec build_kac_model(const KacModelConfig& cfg);

// Symmetric rate table from a cross-section: each incoming pair (v, w) jumps
// at total rate sigma(|x_v - x_w|), spread uniformly over the distinct outgoing
// pairs with the same total momentum x_v + x_w.
KacModelConfig kac_rates_from_cross_section(std::span<const double> velocities,
                                            const std::function<double(double)>& sigma);

// Swap operator on C^m (x) C^m.
Eigen::MatrixXcd pair_swap_matrix(int m);

// V_{i,r} F for 1 <= i < r <= n.
NBodyState apply_V_pair(const ModelSpec& model, const NBodyState& f, int i, int r);
// out += factor * V_{i,r} f (any order of i != r).
void accumulate_V_pair(const ModelSpec& model, NBodyState& out, const NBodyState& f, int i, int r,
                       Complex factor = 1.0);
// C_{i,j+1} F = Tr_{j+1} V_{i,j+1} F for F over j+1 sites.
NBodyState apply_C(const ModelSpec& model, const NBodyState& f, int i);
// C_{j+1} F = sum_i C_{i,j+1} F.
NBodyState apply_C_sum(const ModelSpec& model, const NBodyState& f);
// T_j F = sum_{i<r} V_{i,r} F.
NBodyState apply_T(const ModelSpec& model, const NBodyState& f);
// K^j F = sum_k K_k F.
NBodyState apply_K_all(const ModelSpec& model, const NBodyState& f);
void accumulate_K_all(const ModelSpec& model, NBodyState& out, const NBodyState& f, Complex factor = 1.0);
void accumulate_T(const ModelSpec& model, NBodyState& out, const NBodyState& f, Complex factor = 1.0);

// exp(tK) G by dense exponentiation of the one-site generator.
NBodyState one_site_propagate(const ModelSpec& model, const NBodyState& g, double t);

struct ModelCheck {
  std::string id;
  double measured;
  double threshold;
  bool pass;
};

// Sampled model invariants: trace annihilation, swap covariance, isometry
// and positivity of exp(tK).
std::vector<ModelCheck> check_model(const ModelSpec& model, unsigned seed = 7, int samples = 20);

}  // namespace mfh
