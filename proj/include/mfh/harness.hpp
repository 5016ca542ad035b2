#pragma once

#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfh/errors.hpp"
#include "mfh/expansion.hpp"
#include "mfh/models.hpp"
#include "mfh/nbody_dynamics.hpp"

namespace mfh {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// One ledger row: pass iff lo <= measured <= hi.
struct CheckResult {
  std::string id;
  double measured = 0.0;
  double lo = -kUnbounded;
  double hi = kUnbounded;
  bool pass = false;
  std::string evidence;
};

CheckResult make_check(std::string id, double measured, double lo, double hi, std::string evidence = {});
inline CheckResult at_most(std::string id, double measured, double hi, std::string evidence = {}) {
  return make_check(std::move(id), measured, -kUnbounded, hi, std::move(evidence));
}
bool all_pass(std::span<const CheckResult> checks);

struct SlopeFit {
  bool ok = false;
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS in log space
  int points = 0;
  std::string note;       // filtering warning or refusal reason
};

// OLS on (log N, log err); errors <= floor are dropped, fewer than three
// survivors refuse the fit.
SlopeFit fit_slope(std::span<const double> Ns, std::span<const double> errors, double floor = 0.0);

// Quantities reported per N. (j, n) index them; n is ignored where meaningless.
//   marginal_error   ||F^N_j - F^{N,n}_j||
//   remainder        ||E_j - E_j^n||
//   correlation_norm ||E_j||
//   meanfield_error  ||F^N_j - F^{(x)j}||
enum class Quantity { marginal_error, remainder, correlation_norm, meanfield_error };
const char* to_string(Quantity q);
Quantity quantity_from_string(const std::string& s);

struct SlopeExpectation {
  std::string id;
  Quantity quantity = Quantity::marginal_error;
  int j = 1;
  int n = 0;
  double lo = -kUnbounded;
  double hi = kUnbounded;
};

enum class NBodyPath { automatic, dense, symmetric };

struct SuiteSizes {
  int N = 0;            // 0: 6 for classical, 4 for quantum
  double t_final = 0.5;
  double dt = 1e-3;
  int residual_jmax = 3;
  int samples = 20;
  unsigned seed = 2024;
  bool flip_dm1_sign = false;  // fault injection
};

struct StudyConfig {
  std::string model_path;
  std::vector<int> N_list;
  double t_final = 0.5;
  int steps_per_unit = 2000;
  std::vector<int> j_list{1, 2};
  std::vector<int> n_list{0, 1};
  int J_max = 2;
  int K_max = 2;
  int error_orders = 4;  // ||E_j|| reported for j = 1..error_orders
  ExpansionMode mode = ExpansionMode::exact_n;
  std::string output_dir;
  int threads = 1;
  NBodyPath path = NBodyPath::automatic;
  CapacityLimits caps;
  std::map<std::string, double> tolerances;  // overrides keyed by check id
  std::vector<SlopeExpectation> expectations;
  SuiteSizes suite;

  int steps() const;
  // Checks the closure max(j) + 2 max(n) <= J_max + K_max and list shapes.
  void validate() const;
};

struct StudyRow {
  int N;
  Quantity quantity;
  int j;
  int n;
  double value;
};

struct StudyFit {
  Quantity quantity;
  int j;
  int n;
  SlopeFit fit;
};

struct StudyReport {
  std::string model_hash;
  double t_final = 0.0;
  std::vector<int> N_list;
  std::vector<StudyRow> rows;
  std::vector<StudyFit> fits;
  std::vector<CheckResult> ledger;    // integrity checks gathered during the run
  std::vector<CheckResult> verdicts;  // configured expectations
  bool all_pass() const;

  const SlopeFit* find_fit(Quantity q, int j, int n) const;
  std::vector<double> series(Quantity q, int j, int n) const;
};

// Run aborted: names the failing check and particle count.
class StudyAbort : public Error {
 public:
  StudyAbort(const std::string& what, int N, std::string check)
      : Error(what), N_(N), check_(std::move(check)) {}
  int N() const noexcept { return N_; }
  const std::string& check() const noexcept { return check_; }

 private:
  int N_;
  std::string check_;
};

// Effective worker count: MFH_THREADS when set, else the config value.
int resolve_threads(int configured);

StudyReport run_study(const ModelSpec& model, const NBodyState& F0, const StudyConfig& cfg);

void write_study_csv(std::ostream& os, const StudyReport& report);
void write_fits_csv(std::ostream& os, const StudyReport& report);
std::string study_json(const StudyReport& report);
// Writes rows.csv, fits.csv and report.json under cfg.output_dir.
void write_study_outputs(const StudyReport& report, const std::string& dir);

std::string ledger_json(std::span<const CheckResult> ledger);
void write_ledger_csv(std::ostream& os, std::span<const CheckResult> ledger);

// check_model() as ledger rows.
std::vector<CheckResult> model_check_rows(const ModelSpec& model, unsigned seed = 7, int samples = 20);

// Module-level invariants at desk sizes; failures are verdicts, never throws.
std::vector<CheckResult> run_invariant_suite(const ModelSpec& model, const NBodyState& F0, const SuiteSizes& sizes);

// Acceptance protocol pieces; each returns the ledger rows of one criterion
// for one model.
namespace acceptance {

std::vector<CheckResult> inversion(const SiteSpace& space, int families, int jmax, unsigned seed);
std::vector<CheckResult> factorized_errors(const NBodyState& F, int jmax);
std::vector<CheckResult> bbgky(const ModelSpec& model, const NBodyState& F, int N, std::span<const int> js,
                               double t_final, double dt);
std::vector<CheckResult> error_hierarchy(const ModelSpec& model, const NBodyState& F, int N,
                                         std::span<const int> js, double t_final, double dt,
                                         const HierarchyOptions& opts = {});
std::vector<CheckResult> factorization(const ModelSpec& model, const NBodyState& F, int samples, double t_final,
                                       double dt, unsigned seed);
std::vector<CheckResult> gronwall(const ModelSpec& model, const NBodyState& F, int N, int operands,
                                  double t_final, double dt, unsigned seed);
std::vector<CheckResult> parity(const ModelSpec& model, const NBodyState& F, int N, double t_final, double dt);
std::vector<CheckResult> dual_path(const ModelSpec& model, const NBodyState& F, int N, double t_final, double dt);

// Study configurations used by the slope criteria.
StudyConfig kac_slope_study();
StudyConfig quantum_slope_study();

}  // namespace acceptance

}  // namespace mfh
