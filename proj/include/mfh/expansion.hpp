#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "mfh/hierarchy.hpp"
#include "mfh/meanfield.hpp"
#include "mfh/tensor_core.hpp"

namespace mfh {

enum class ExpansionMode { exact_n, limit };

// Initial split of N^{j/2} E_j(0) into the k = 0 (j even) or k = 1 (j odd)
// coefficient. `consistent` scales the odd coefficient by N^{(j+1)/2} so that
// the partial sums reproduce E_j(0); `literal` uses N^{j/2} for both parities.
enum class InitScaling { consistent, literal };

struct ExpansionOptions {
  int J_max = 2;
  int K_max = 2;
  ExpansionMode mode = ExpansionMode::exact_n;
  int N = 0;  // required for exact_n
  InitScaling init = InitScaling::consistent;
  HierarchyOptions hierarchy;
  // highest j + k kept; stored coefficients satisfy j >= 1, 0 <= k <= K_max, j + k <= S
  int S() const noexcept { return J_max + K_max; }
};

// Coefficients E_j^k on a uniform grid; the accessor value() is total:
// E_0^k = delta_{k0} and every index outside the stored triangle is zero.
class ExpansionTable {
 public:
  ExpansionTable(SiteSpace space, ExpansionOptions opts, double dt);

  const ExpansionOptions& options() const noexcept { return opts_; }
  const SiteSpace& space() const noexcept { return space_; }
  double dt() const noexcept { return dt_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  double time(std::size_t node) const noexcept { return dt_ * static_cast<double>(node); }

  bool stored(int j, int k) const noexcept;
  const std::vector<std::pair<int, int>>& keys() const noexcept { return keys_; }
  std::size_t slot(int j, int k) const;

  NBodyState value(int j, int k, std::size_t node) const;
  const NBodyState& coeff(int j, int k, std::size_t node) const;
  const std::vector<NBodyState>& node_values(std::size_t node) const { return nodes_.at(node); }

  void push_node(std::vector<NBodyState> values);
  void set(int j, int k, std::size_t node, NBodyState v);

  // Largest 1-norm of a stored coefficient with j + k odd, over all nodes.
  double parity_defect() const;

 private:
  SiteSpace space_;
  ExpansionOptions opts_;
  double dt_;
  std::vector<std::pair<int, int>> keys_;
  std::vector<int> slot_of_;  // (j, k) -> slot, -1 if absent
  std::vector<std::vector<NBodyState>> nodes_;
};

// Table holding only the initial node, set from E_j(0).
ExpansionTable init_table(const ErrorFamily& e0, const ExpansionOptions& opts, const SiteSpace& space, double dt);
// Joint RK4 pass over the whole table on the mean-field grid up to t_final.
void evolve_table(ExpansionTable& table, const MeanFieldTrajectory& mf, double t_final);

// Right-hand side of the coupled system for one coefficient given a snapshot.
NBodyState table_rhs(const ExpansionTable& table, const MeanFieldTrajectory& mf, const NBodyState& f,
                     const std::vector<NBodyState>& snapshot, int j, int k);

// Duhamel form of one coefficient at every grid node, from lower coefficients
// in `lower`, the quadrature being composite Simpson (plus a 3/8 panel on odd
// node counts).
std::vector<NBodyState> duhamel_coeff(const MeanFieldTrajectory& mf, const ExpansionTable& lower, int j, int k,
                                      const NBodyState& initial);
// Recursive Duhamel table up to j + k <= max_order (the oracle path).
ExpansionTable duhamel_table(const MeanFieldTrajectory& mf, const ErrorFamily& e0, const ExpansionOptions& opts,
                             int max_order = 4);

// Quadrature weights for the integral over [t_0, t_n] using nodes 0..n (and
// n+1 when n = 1).
std::vector<double> quadrature_weights(std::size_t n, double h);

// First-order coefficients by direct quadrature of the closed formulas,
// evaluated at grid node `node`. The E11 first term has sign `q_sign`
// (-1 follows the recursion).
NBodyState explicit_E20(const MeanFieldTrajectory& mf, const ExpansionOptions& opts, std::size_t node);
NBodyState explicit_E11(const MeanFieldTrajectory& mf, const ExpansionOptions& opts, std::size_t node,
                        double q_sign = -1.0);

// E_j^n = sum_{k=0}^{2n} N^{-(j+k)/2} E_j^k.
NBodyState partial_sum(const ExpansionTable& table, int j, int n, int N, std::size_t node);
// F^{N,n}_j = sum_K place(j, F, K, E^n_{j-|K|}).
NBodyState truncated_marginal(const ExpansionTable& table, const MeanFieldTrajectory& mf, int j, int n, int N,
                              std::size_t node);

void write_table_csv(std::ostream& os, const ExpansionTable& table);

}  // namespace mfh
