#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "mfh/harness.hpp"
#include "mfh/reference_models.hpp"

using namespace mfh;

namespace {

struct Criterion {
  int id;
  std::string title;
  std::vector<CheckResult> rows;
  double seconds = 0.0;
  std::string failure;  // exception text, if the protocol itself aborted
  bool pass() const { return failure.empty() && !rows.empty() && all_pass(rows); }
};

void append(std::vector<CheckResult>& dst, const std::vector<CheckResult>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

Criterion run(int id, std::string title, const std::function<std::vector<CheckResult>()>& body) {
  Criterion c{id, std::move(title), {}, 0.0, {}};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    c.rows = body();
  } catch (const std::exception& e) {
    c.failure = e.what();
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

std::string summary(const Criterion& c) {
  if (!c.failure.empty()) return "aborted: " + c.failure;
  // report the failing row if any, else the row closest to its bound
  const CheckResult* pick = nullptr;
  for (const auto& r : c.rows)
    if (!r.pass) {
      pick = &r;
      break;
    }
  if (!pick) {
    double best = 1e300;
    for (const auto& r : c.rows) {
      const double margin = std::min(r.hi - r.measured, r.measured - r.lo);
      const double scale = std::isfinite(r.hi) && r.hi != 0.0 ? std::abs(r.hi) : 1.0;
      if (margin / scale < best) best = margin / scale, pick = &r;
    }
  }
  char buf[320];
  std::snprintf(buf, sizeof buf, "%zu checks; %s %s = %.3e in [%.3g, %.3g]", c.rows.size(),
                pick->pass ? "tightest" : "FAILED", pick->id.c_str(), pick->measured, pick->lo, pick->hi);
  return buf;
}

bool quantum_row(const CheckResult& r) { return r.id.find("quantum") != std::string::npos; }

}  // namespace

int main(int argc, char** argv) {
  bool verbose = false;
  std::string ledger_path;
  for (int a = 1; a < argc; ++a) {
    if (!std::strcmp(argv[a], "--verbose") || !std::strcmp(argv[a], "-v")) verbose = true;
    else if (!std::strcmp(argv[a], "--ledger") && a + 1 < argc) ledger_path = argv[++a];
  }

  const ModelSpec kac2 = reference_kac_model(2), kac3 = reference_kac_model(3), qm = reference_quantum_model();
  const NBodyState F2 = reference_kac_initial(2), F3 = reference_kac_initial(3), Fq = reference_quantum_initial();
  const double T = 0.5, dt = 1e-3;

  std::vector<Criterion> out;
  bool ok = true;
  auto record = [&](Criterion c) {
    ok = ok && c.pass();
    std::printf("criterion %2d %s  %-38s %s (%.1f s)\n", c.id, c.pass() ? "PASS" : "FAIL", c.title.c_str(),
                summary(c).c_str(), c.seconds);
    if (verbose)
      for (const auto& r : c.rows)
        std::printf("      %s %-60s %.4e [%g, %g] %s\n", r.pass ? "ok  " : "FAIL", r.id.c_str(), r.measured, r.lo, r.hi,
                    r.evidence.c_str());
    std::fflush(stdout);
    out.push_back(std::move(c));
  };
  record(run(1, "inversion identity", [&] {
    std::vector<CheckResult> r;
    append(r, acceptance::inversion(SiteSpace(SiteKind::classical, 2), 20, 4, 101));
    append(r, acceptance::inversion(SiteSpace(SiteKind::classical, 3), 20, 4, 102));
    append(r, acceptance::inversion(SiteSpace(SiteKind::quantum, 2), 20, 4, 103));
    append(r, acceptance::inversion(SiteSpace(SiteKind::quantum, 3), 20, 4, 104));
    return r;
  }));
  record(run(2, "factorized data has vanishing errors", [&] {
    std::vector<CheckResult> r;
    append(r, acceptance::factorized_errors(F2, 6));
    append(r, acceptance::factorized_errors(F3, 6));
    append(r, acceptance::factorized_errors(Fq, 6));
    return r;
  }));
  record(run(3, "BBGKY residual", [&] {
    std::vector<CheckResult> r;
    const int jk[] = {1, 2}, jq[] = {1};
    append(r, acceptance::bbgky(kac2, F2, 6, jk, T, dt));
    append(r, acceptance::bbgky(qm, Fq, 4, jq, T, dt));
    return r;
  }));
  record(run(4, "error-hierarchy residual", [&] {
    std::vector<CheckResult> r;
    const int js[] = {1, 2, 3};
    append(r, acceptance::error_hierarchy(kac2, F2, 6, js, T, dt));
    append(r, acceptance::error_hierarchy(qm, Fq, 4, js, T, dt));
    return r;
  }));
  record(run(5, "two-site flow factorization", [&] {
    std::vector<CheckResult> r;
    append(r, acceptance::factorization(kac2, F2, 10, T, dt, 105));
    append(r, acceptance::factorization(qm, Fq, 10, T, dt, 106));
    return r;
  }));
  record(run(6, "exponential flow bound", [&] {
    std::vector<CheckResult> r;
    append(r, acceptance::gronwall(kac2, F2, 8, 20, T, dt, 107));
    append(r, acceptance::gronwall(qm, Fq, 8, 20, T, dt, 108));
    return r;
  }));
  record(run(7, "parity of expansion coefficients", [&] {
    std::vector<CheckResult> r;
    append(r, acceptance::parity(kac2, F2, 32, T, dt));
    append(r, acceptance::parity(qm, Fq, 32, T, dt));
    return r;
  }));
  record(run(8, "dual-path expansion oracle", [&] {
    std::vector<CheckResult> r;
    append(r, acceptance::dual_path(kac2, F2, 32, T, 0.01));
    append(r, acceptance::dual_path(qm, Fq, 32, T, 0.01));
    return r;
  }));
  record(run(9, "Kac convergence slopes", [&] {
    std::vector<CheckResult> r;
    for (int m : {2, 3}) {
      const auto model = m == 2 ? kac2 : kac3;
      const auto rep = run_study(model, m == 2 ? F2 : F3, acceptance::kac_slope_study());
      for (auto c : rep.verdicts) {
        c.id = "kac.m" + std::to_string(m) + "." + c.id;
        r.push_back(c);
      }
      for (auto c : rep.ledger) {
        c.id = "kac.m" + std::to_string(m) + "." + c.id;
        r.push_back(c);
      }
    }
    return r;
  }));
  record(run(10, "quantum indicative study", [&] {
    std::vector<CheckResult> r;
    const auto rep = run_study(qm, Fq, acceptance::quantum_slope_study());
    for (auto c : rep.verdicts) {
      c.id = "quantum.m2." + c.id;
      r.push_back(c);
    }
    for (auto c : rep.ledger) {
      c.id = "quantum.m2." + c.id;
      r.push_back(c);
    }
    int q = 0, qpass = 0;
    for (std::size_t k = 0; k < 8; ++k)
      for (const auto& row : out[k].rows)
        if (quantum_row(row)) ++q, qpass += row.pass ? 1 : 0;
    r.push_back(make_check("quantum.criteria_1_to_8.failing_rows", q - qpass, 0.0, 0.0,
                           std::to_string(qpass) + "/" + std::to_string(q) + " quantum rows of criteria 1-8 pass"));
    return r;
  }));

  if (!ledger_path.empty()) {
    std::vector<CheckResult> all;
    for (const auto& c : out)
      for (auto r : c.rows) {
        r.id = "criterion" + std::to_string(c.id) + "." + r.id;
        all.push_back(r);
      }
    std::ofstream(ledger_path) << ledger_json(all) << "\n";
  }
  return ok ? 0 : 1;
}
