#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfh/config.hpp"
#include "mfh/expansion.hpp"
#include "mfh/harness.hpp"
#include "mfh/hierarchy.hpp"
#include "mfh/meanfield.hpp"
#include "mfh/nbody_dynamics.hpp"
#include "mfh/symmetric_sector.hpp"

using namespace mfh;
using nlohmann::json;

namespace {

struct Common {
  std::string model_file;
  std::string out;
  double t_final = 0.5;
  int steps = 500;
};

NBodyState initial_of(const LoadedModel& lm) {
  if (!lm.initial) throw ValidationError("model file has no initial block");
  return *lm.initial;
}

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  return os;
}

void emit(const json& j, const std::string& summary_path) {
  if (summary_path.empty()) std::cout << j.dump(2) << "\n";
  else open_out(summary_path) << j.dump(2) << "\n";
}

json rows_json(std::span<const CheckResult> rows) { return json::parse(ledger_json(rows)); }

void print_rows(std::span<const CheckResult> rows) {
  for (const auto& r : rows)
    std::fprintf(stderr, "%s %-48s %.4e [%g, %g] %s\n", r.pass ? "ok  " : "FAIL", r.id.c_str(), r.measured, r.lo, r.hi,
                 r.evidence.c_str());
}

bool use_symmetric(const LoadedModel& lm, int N, const std::string& path) {
  if (lm.model.site().is_quantum()) {
    if (path == "symmetric") throw ValidationError("the symmetric-sector path is classical only");
    return false;
  }
  if (path == "dense") return false;
  if (path == "symmetric") return true;
  return std::pow(static_cast<double>(lm.model.site().dim()), N) > static_cast<double>(lm.caps.dense_classical);
}

// E_1..E_J at every stored node of the N-body run.
ErrorTrajectory errors_along(const LoadedModel& lm, const NBodyState& F0, int N, int J, double T, int steps,
                             int store_every, const std::string& path, json& info) {
  const auto mf = solve_meanfield(lm.model, F0, T, steps);
  ErrorTrajectory out;
  out.N = N;
  out.dt = T / steps * store_every;
  auto push = [&](double t, std::vector<NBodyState> marg) {
    ErrorFamily fam = correlation_errors(marg, mf.state(mf.node(t)));
    fam.N = N;
    fam.t = t;
    fam.model_hash = lm.model.hash();
    out.times.push_back(t);
    out.families.push_back(std::move(fam));
  };
  if (use_symmetric(lm, N, path)) {
    info["path"] = "symmetric";
    const auto tr = evolve_symmetric(lm.model, SymmetricClassicalState::product(F0, N), T, steps, store_every);
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      std::vector<NBodyState> marg;
      for (int j = 1; j <= J; ++j) marg.push_back(marginal_symmetric(tr.states[k], j));
      push(tr.times[k], std::move(marg));
    }
  } else {
    info["path"] = "dense";
    EvolveOptions o;
    o.store_every = store_every;
    o.caps = lm.caps;
    if (lm.model.site().is_quantum()) o.method = EvolveMethod::exact;
    const auto tr = evolve(Generator(lm.model, N, lm.caps), tensor_power(F0, N), T, steps, o);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      std::vector<NBodyState> marg;
      for (int j = 1; j <= J; ++j) marg.push_back(partial_trace_last(tr.states[k], N - j));
      push(tr.times[k], std::move(marg));
    }
  }
  return out;
}

ExpansionMode mode_from(const std::string& s) {
  if (s == "exact_n") return ExpansionMode::exact_n;
  if (s == "limit") return ExpansionMode::limit;
  throw ValidationError("mode must be exact_n or limit, got '" + s + "'");
}

NBodyPath path_from(const std::string& s) {
  if (s == "auto") return NBodyPath::automatic;
  if (s == "dense") return NBodyPath::dense;
  if (s == "symmetric") return NBodyPath::symmetric;
  throw ValidationError("path must be auto, dense or symmetric, got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field hierarchy toolkit"};
  app.require_subcommand(1);
  std::string summary_path;
  app.add_option("--json", summary_path, "write the JSON summary here instead of stdout");

  // model check
  auto* model_cmd = app.add_subcommand("model", "model file utilities");
  model_cmd->require_subcommand(1);
  auto* check_cmd = model_cmd->add_subcommand("check", "validate a model file and run its invariants");
  std::string check_file;
  int check_samples = 20;
  check_cmd->add_option("file", check_file)->required()->check(CLI::ExistingFile);
  check_cmd->add_option("--samples", check_samples)->check(CLI::PositiveNumber);

  // evolve
  auto* evolve_cmd = app.add_subcommand("evolve", "integrate the N-body equation from F0^{(x)N}");
  Common ev;
  int ev_N = 4, ev_store = 1, ev_marginal = 0;
  std::string ev_method = "rk4", ev_diag;
  evolve_cmd->add_option("file", ev.model_file)->required()->check(CLI::ExistingFile);
  evolve_cmd->add_option("--N", ev_N)->required()->check(CLI::PositiveNumber);
  evolve_cmd->add_option("--t", ev.t_final);
  evolve_cmd->add_option("--steps", ev.steps)->check(CLI::PositiveNumber);
  evolve_cmd->add_option("--store-every", ev_store)->check(CLI::PositiveNumber);
  evolve_cmd->add_option("--method", ev_method)->check(CLI::IsMember({"rk4", "exact"}));
  evolve_cmd->add_option("--marginal", ev_marginal, "write only the j-site marginal trajectory");
  evolve_cmd->add_option("--diagnostics", ev_diag, "per-node diagnostics CSV");
  evolve_cmd->add_option("--out", ev.out)->required();

  // meanfield
  auto* mf_cmd = app.add_subcommand("meanfield", "solve the one-site mean-field equation");
  Common mfc;
  mfc.steps = 1000;
  mf_cmd->add_option("file", mfc.model_file)->required()->check(CLI::ExistingFile);
  mf_cmd->add_option("--t", mfc.t_final);
  mf_cmd->add_option("--steps", mfc.steps)->check(CLI::PositiveNumber);
  mf_cmd->add_option("--out", mfc.out)->required();

  // errors
  auto* err_cmd = app.add_subcommand("errors", "correlation errors E_j along an N-body run");
  Common er;
  int er_N = 6, er_J = 3, er_store = 1;
  std::string er_path = "auto";
  err_cmd->add_option("file", er.model_file)->required()->check(CLI::ExistingFile);
  err_cmd->add_option("--N", er_N)->required()->check(CLI::PositiveNumber);
  err_cmd->add_option("--jmax", er_J)->check(CLI::PositiveNumber);
  err_cmd->add_option("--t", er.t_final);
  err_cmd->add_option("--steps", er.steps)->check(CLI::PositiveNumber);
  err_cmd->add_option("--store-every", er_store)->check(CLI::PositiveNumber);
  err_cmd->add_option("--path", er_path)->check(CLI::IsMember({"auto", "dense", "symmetric"}));
  err_cmd->add_option("--out", er.out)->required();

  // expand
  auto* ex_cmd = app.add_subcommand("expand", "coefficient table E_j^k on the mean-field grid");
  Common ex;
  int ex_J = 2, ex_K = 2, ex_N = 0;
  std::string ex_mode = "limit";
  ex_cmd->add_option("file", ex.model_file)->required()->check(CLI::ExistingFile);
  ex_cmd->add_option("--jmax", ex_J)->check(CLI::PositiveNumber);
  ex_cmd->add_option("--kmax", ex_K)->check(CLI::NonNegativeNumber);
  ex_cmd->add_option("--mode", ex_mode)->check(CLI::IsMember({"exact_n", "limit"}));
  ex_cmd->add_option("--N", ex_N, "particle count (exact_n)");
  ex_cmd->add_option("--t", ex.t_final);
  ex_cmd->add_option("--steps", ex.steps)->check(CLI::PositiveNumber);
  ex_cmd->add_option("--out", ex.out)->required();

  // study / suite share the config overrides
  auto* st_cmd = app.add_subcommand("study", "convergence study over a list of N");
  auto* su_cmd = app.add_subcommand("suite", "module invariants at desk sizes for the study's model");
  std::string study_file, o_dir, o_mode, o_path;
  std::vector<int> o_N;
  double o_t = -1.0;
  int o_spu = -1, o_threads = -1;
  bool flip = false;
  for (auto* c : {st_cmd, su_cmd}) c->add_option("config", study_file)->required()->check(CLI::ExistingFile);
  st_cmd->add_option("--N", o_N, "override the N list");
  st_cmd->add_option("--t", o_t);
  st_cmd->add_option("--steps-per-unit", o_spu);
  st_cmd->add_option("--threads", o_threads);
  st_cmd->add_option("--mode", o_mode)->check(CLI::IsMember({"exact_n", "limit"}));
  st_cmd->add_option("--path", o_path)->check(CLI::IsMember({"auto", "dense", "symmetric"}));
  st_cmd->add_option("--output-dir", o_dir);
  su_cmd->add_flag("--flip-dm1-sign", flip, "fault injection: negate D^{-1}");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (check_cmd->parsed()) {
      const LoadedModel lm = load_model_file(check_file);
      auto rows = model_check_rows(lm.model, 7, check_samples);
      rows.push_back(at_most("meanfield.delta1_self_test", delta1_self_test(lm.model), 1e-12));
      print_rows(rows);
      json j{{"model_hash", lm.model.hash()},
             {"backend", to_string(lm.model.backend())},
             {"site_dim", lm.model.site().dim()},
             {"has_initial", lm.initial.has_value()},
             {"checks", rows_json(rows)},
             {"all_pass", all_pass(rows)}};
      emit(j, summary_path);
      return all_pass(rows) ? 0 : 1;
    }

    if (evolve_cmd->parsed()) {
      const LoadedModel lm = load_model_file(ev.model_file);
      EvolveOptions o;
      o.method = ev_method == "exact" ? EvolveMethod::exact : EvolveMethod::rk4;
      o.store_every = ev_store;
      o.caps = lm.caps;
      Trajectory tr = evolve(Generator(lm.model, ev_N, lm.caps), tensor_power(initial_of(lm), ev_N), ev.t_final,
                             ev.steps, o);
      if (ev_marginal > 0) {
        if (ev_marginal > ev_N) throw ValidationError("--marginal exceeds N");
        for (auto& s : tr.states) s = partial_trace_last(s, ev_N - ev_marginal);
      }
      {
        auto os = open_out(ev.out);
        write_trajectory(os, tr);
      }
      if (!ev_diag.empty()) {
        auto os = open_out(ev_diag);
        write_diagnostics_csv(os, tr);
      }
      const auto& last = tr.states.back();
      json j{{"model_hash", lm.model.hash()}, {"N", ev_N},           {"nodes", tr.size()},
             {"integrator", tr.integrator},   {"t_final", ev.t_final}, {"final_trace", trace(last).real()},
             {"final_trace_norm", trace_norm(last)}, {"out", ev.out}};
      emit(j, summary_path);
      return 0;
    }

    if (mf_cmd->parsed()) {
      const LoadedModel lm = load_model_file(mfc.model_file);
      const auto mf = solve_meanfield(lm.model, initial_of(lm), mfc.t_final, mfc.steps);
      {
        auto os = open_out(mfc.out);
        write_meanfield(os, mf);
      }
      const auto& last = mf.state(mf.size() - 1);
      emit(json{{"model_hash", lm.model.hash()},
                {"nodes", mf.size()},
                {"t_final", mf.t_final()},
                {"final_trace", trace(last).real()},
                {"out", mfc.out}},
           summary_path);
      return 0;
    }

    if (err_cmd->parsed()) {
      const LoadedModel lm = load_model_file(er.model_file);
      if (er_J > er_N) throw ValidationError("--jmax exceeds N");
      json info;
      const auto et = errors_along(lm, initial_of(lm), er_N, er_J, er.t_final, er.steps, er_store, er_path, info);
      {
        auto os = open_out(er.out);
        write_error_csv(os, et);
      }
      json fin = json::array();
      const auto& last = et.families.back();
      for (int j = 1; j <= er_J; ++j) {
        const double e = trace_norm(last.E[static_cast<std::size_t>(j)]);
        fin.push_back({{"j", j}, {"trace_norm", e}, {"rescaled", std::pow(er_N, j / 2.0) * e}});
      }
      const auto ic = check_initial_condition(et.families.front(), er_N);
      info.update(json{{"model_hash", lm.model.hash()},
                       {"N", er_N},
                       {"nodes", et.times.size()},
                       {"final", fin},
                       {"initial_condition", {{"scaled_E1", ic.scaled}, {"within", ic.within}}},
                       {"out", er.out}});
      emit(info, summary_path);
      return 0;
    }

    if (ex_cmd->parsed()) {
      const LoadedModel lm = load_model_file(ex.model_file);
      ExpansionOptions o;
      o.J_max = ex_J;
      o.K_max = ex_K;
      o.mode = mode_from(ex_mode);
      o.N = ex_N;
      if (o.mode == ExpansionMode::exact_n && ex_N <= 0) throw ValidationError("exact_n mode needs --N");
      const auto mf = solve_meanfield(lm.model, initial_of(lm), ex.t_final, ex.steps);
      ErrorFamily e0;
      e0.E.push_back(NBodyState::scalar(lm.model.site(), 1.0));
      for (int j = 1; j <= o.S(); ++j) e0.E.emplace_back(lm.model.site(), j);
      auto table = init_table(e0, o, lm.model.site(), mf.dt());
      evolve_table(table, mf, ex.t_final);
      {
        auto os = open_out(ex.out);
        write_table_csv(os, table);
      }
      emit(json{{"model_hash", lm.model.hash()},
                {"mode", ex_mode},
                {"coefficients", table.keys().size()},
                {"nodes", table.size()},
                {"parity_defect", table.parity_defect()},
                {"out", ex.out}},
           summary_path);
      return table.parity_defect() <= 1e-12 ? 0 : 1;
    }

    StudyConfig cfg = load_study_file(study_file);
    const LoadedModel lm = load_model_file(cfg.model_path);
    if (st_cmd->parsed()) {
      if (!o_N.empty()) cfg.N_list = o_N;
      if (o_t > 0) cfg.t_final = o_t;
      if (o_spu > 0) cfg.steps_per_unit = o_spu;
      if (o_threads > 0) cfg.threads = o_threads;
      if (!o_mode.empty()) cfg.mode = mode_from(o_mode);
      if (!o_path.empty()) cfg.path = path_from(o_path);
      if (!o_dir.empty()) cfg.output_dir = o_dir;
      const StudyReport rep = run_study(lm.model, initial_of(lm), cfg);
      if (!cfg.output_dir.empty()) write_study_outputs(rep, cfg.output_dir);
      print_rows(rep.verdicts);
      emit(json::parse(study_json(rep)), summary_path);
      return rep.all_pass() ? 0 : 1;
    }

    SuiteSizes sizes = cfg.suite;
    sizes.flip_dm1_sign = sizes.flip_dm1_sign || flip;
    const auto rows = run_invariant_suite(lm.model, initial_of(lm), sizes);
    print_rows(rows);
    emit(json{{"model_hash", lm.model.hash()}, {"checks", rows_json(rows)}, {"all_pass", all_pass(rows)}},
         summary_path);
    return all_pass(rows) ? 0 : 1;
  } catch (const StudyAbort& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    emit(json{{"aborted", true}, {"N", e.N()}, {"check", e.check()}, {"message", e.what()}}, summary_path);
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
