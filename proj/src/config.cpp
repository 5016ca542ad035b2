#include "mfh/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "mfh/errors.hpp"

namespace mfh {

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

[[noreturn]] void fail(const YAML::Node& n, const std::string& key, const std::string& what) {
  throw ParseError("line " + std::to_string(line_of(n)) + ", key '" + key + "': " + what, line_of(n), key);
}

YAML::Node parse_text(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg, e.mark.line + 1, "");
  }
}

void reject_unknown(const YAML::Node& map, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, where.empty() ? key : where + "." + key, "unknown key");
  }
}

YAML::Node require(const YAML::Node& map, const std::string& key, const std::string& path) {
  const YAML::Node n = map[key];
  if (!n) fail(map, path, "missing required key");
  return n;
}

template <class T>
T scalar(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) fail(n, key, "expected a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, key, "cannot read value '" + n.Scalar() + "'");
  }
}

template <class T>
T optional_scalar(const YAML::Node& map, const std::string& key, T fallback) {
  const YAML::Node n = map[key];
  return n ? scalar<T>(n, key) : fallback;
}

Complex complex_entry(const YAML::Node& n, const std::string& key) {
  if (n.IsScalar()) return {scalar<double>(n, key), 0.0};
  if (!n.IsSequence() || n.size() != 2) fail(n, key, "expected a [re, im] pair or a real number");
  return {scalar<double>(n[0], key), scalar<double>(n[1], key)};
}

// Row-major matrix given as a flat list of dim*dim entries or as dim rows.
Eigen::MatrixXcd complex_matrix(const YAML::Node& n, const std::string& key, int dim) {
  if (!n.IsSequence()) fail(n, key, "expected a list");
  Eigen::MatrixXcd M(dim, dim);
  if (n.size() == static_cast<std::size_t>(dim)) {
    for (int r = 0; r < dim; ++r) {
      const YAML::Node row = n[static_cast<std::size_t>(r)];
      if (!row.IsSequence() || row.size() != static_cast<std::size_t>(dim))
        fail(row, key, "row " + std::to_string(r) + " must have " + std::to_string(dim) + " entries");
      for (int c = 0; c < dim; ++c) M(r, c) = complex_entry(row[static_cast<std::size_t>(c)], key);
    }
    return M;
  }
  if (n.size() != static_cast<std::size_t>(dim * dim))
    fail(n, key, "expected " + std::to_string(dim * dim) + " row-major entries, got " + std::to_string(n.size()));
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) M(r, c) = complex_entry(n[static_cast<std::size_t>(r * dim + c)], key);
  return M;
}

std::vector<int> int_list(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) fail(n, key, "expected a list of integers");
  std::vector<int> v;
  for (const auto& e : n) v.push_back(scalar<int>(e, key));
  return v;
}

std::pair<int, int> velocity_pair(const YAML::Node& n, const std::string& key) {
  if (!n || !n.IsSequence() || n.size() != 2) fail(n, key, "expected a pair [v, w]");
  return {scalar<int>(n[0], key), scalar<int>(n[1], key)};
}

CapacityLimits parse_caps(const YAML::Node& n) {
  CapacityLimits caps;
  if (!n) return caps;
  if (!n.IsMap()) fail(n, "caps", "expected a map");
  reject_unknown(n, "caps", {"dense_quantum_hilbert", "dense_classical", "assemble_threshold"});
  caps.dense_quantum_hilbert = optional_scalar<std::size_t>(n, "dense_quantum_hilbert", caps.dense_quantum_hilbert);
  caps.dense_classical = optional_scalar<std::size_t>(n, "dense_classical", caps.dense_classical);
  caps.assemble_threshold = optional_scalar<std::size_t>(n, "assemble_threshold", caps.assemble_threshold);
  return caps;
}

}  // namespace

LoadedModel parse_model(const std::string& text) {
  const YAML::Node root = parse_text(text);
  if (!root.IsMap()) throw ParseError("line 1: the model file must be a map", 1, "");
  const auto backend = scalar<std::string>(require(root, "backend", "backend"), "backend");
  const int m = scalar<int>(require(root, "site_dim", "site_dim"), "site_dim");
  if (m < 2) fail(root["site_dim"], "site_dim", "must be >= 2");
  std::optional<ModelSpec> model;
  if (backend == "quantum") {
    reject_unknown(root, "", {"backend", "site_dim", "hbar", "h1", "v2", "initial", "caps", "name"});
    QuantumModelConfig cfg;
    cfg.m = m;
    cfg.hbar = optional_scalar<double>(root, "hbar", 1.0);
    cfg.h1 = root["h1"] ? complex_matrix(root["h1"], "h1", m) : Eigen::MatrixXcd::Zero(m, m);
    cfg.v2 = root["v2"] ? complex_matrix(root["v2"], "v2", m * m) : Eigen::MatrixXcd::Zero(m * m, m * m);
    model.emplace(build_quantum_model(cfg));
  } else if (backend == "kac") {
    reject_unknown(root, "", {"backend", "site_dim", "strict", "transitions", "initial", "caps", "name"});
    KacModelConfig cfg;
    cfg.m = m;
    cfg.strict = optional_scalar<bool>(root, "strict", false);
    if (const YAML::Node tr = root["transitions"]) {
      if (!tr.IsSequence()) fail(tr, "transitions", "expected a list of {in, out, rate} entries");
      for (const auto& e : tr) {
        if (!e.IsMap()) fail(e, "transitions", "expected a map {in, out, rate}");
        reject_unknown(e, "transitions", {"in", "out", "rate"});
        const auto in = velocity_pair(e["in"], "transitions.in");
        const auto out = velocity_pair(e["out"], "transitions.out");
        const double rate = scalar<double>(require(e, "rate", "transitions.rate"), "transitions.rate");
        cfg.transitions.push_back({in.first, in.second, out.first, out.second, rate});
      }
    }
    model.emplace(build_kac_model(cfg));
  } else {
    fail(root["backend"], "backend", "must be 'kac' or 'quantum'");
  }
  LoadedModel out{*model, std::nullopt, parse_caps(root["caps"])};
  if (const YAML::Node init = root["initial"]) {
    if (!init.IsMap()) fail(init, "initial", "expected a map");
    reject_unknown(init, "initial", {"weights", "density"});
    const SiteSpace& sp = out.model.site();
    if (sp.is_quantum()) {
      const auto rho = complex_matrix(require(init, "density", "initial.density"), "initial.density", m);
      out.initial = NBodyState::from_matrix(sp, 1, rho);
    } else {
      const YAML::Node w = require(init, "weights", "initial.weights");
      if (!w.IsSequence() || w.size() != static_cast<std::size_t>(m)) fail(w, "initial.weights", "expected " + std::to_string(m) + " weights");
      std::vector<double> v;
      for (const auto& e : w) v.push_back(scalar<double>(e, "initial.weights"));
      out.initial = NBodyState::from_weights(sp, 1, v);
    }
    if (!is_physical(*out.initial)) fail(init, "initial", "initial state is not a trace-one positive state");
  }
  return out;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

LoadedModel load_model_file(const std::string& path) { return parse_model(read_file(path)); }

StudyConfig parse_study(const std::string& text, const std::string& base_dir) {
  const YAML::Node root = parse_text(text);
  if (!root.IsMap()) throw ParseError("line 1: the study file must be a map", 1, "");
  reject_unknown(root, "", {"model", "N", "t_final", "steps_per_unit", "j", "n", "J_max", "K_max", "error_orders",
                            "mode", "output_dir", "threads", "path", "tolerances", "expectations", "suite", "caps"});
  StudyConfig c;
  namespace fs = std::filesystem;
  fs::path mp = scalar<std::string>(require(root, "model", "model"), "model");
  if (mp.is_relative()) mp = fs::path(base_dir) / mp;
  c.model_path = mp.lexically_normal().string();
  c.N_list = int_list(require(root, "N", "N"), "N");
  c.t_final = optional_scalar<double>(root, "t_final", c.t_final);
  c.steps_per_unit = optional_scalar<int>(root, "steps_per_unit", c.steps_per_unit);
  if (root["j"]) c.j_list = int_list(root["j"], "j");
  if (root["n"]) c.n_list = int_list(root["n"], "n");
  c.J_max = optional_scalar<int>(root, "J_max", c.J_max);
  c.K_max = optional_scalar<int>(root, "K_max", c.K_max);
  c.error_orders = optional_scalar<int>(root, "error_orders", c.error_orders);
  if (const YAML::Node mode = root["mode"]) {
    const auto s = scalar<std::string>(mode, "mode");
    if (s == "exact_n") c.mode = ExpansionMode::exact_n;
    else if (s == "limit") c.mode = ExpansionMode::limit;
    else fail(mode, "mode", "must be 'exact_n' or 'limit'");
  }
  if (const YAML::Node p = root["path"]) {
    const auto s = scalar<std::string>(p, "path");
    if (s == "auto") c.path = NBodyPath::automatic;
    else if (s == "dense") c.path = NBodyPath::dense;
    else if (s == "symmetric") c.path = NBodyPath::symmetric;
    else fail(p, "path", "must be 'auto', 'dense' or 'symmetric'");
  }
  if (const YAML::Node o = root["output_dir"]) {
    fs::path op = scalar<std::string>(o, "output_dir");
    if (op.is_relative()) op = fs::path(base_dir) / op;
    c.output_dir = op.lexically_normal().string();
  }
  c.threads = optional_scalar<int>(root, "threads", c.threads);
  c.caps = parse_caps(root["caps"]);
  if (const YAML::Node tol = root["tolerances"]) {
    if (!tol.IsMap()) fail(tol, "tolerances", "expected a map of check id to value");
    for (const auto& kv : tol) c.tolerances[kv.first.as<std::string>()] = scalar<double>(kv.second, "tolerances." + kv.first.as<std::string>());
  }
  if (const YAML::Node ex = root["expectations"]) {
    if (!ex.IsSequence()) fail(ex, "expectations", "expected a list");
    for (const auto& e : ex) {
      if (!e.IsMap()) fail(e, "expectations", "expected a map");
      reject_unknown(e, "expectations", {"id", "quantity", "j", "n", "min", "max"});
      SlopeExpectation s;
      const auto q = scalar<std::string>(require(e, "quantity", "expectations.quantity"), "expectations.quantity");
      try {
        s.quantity = quantity_from_string(q);
      } catch (const PreconditionError&) {
        fail(e["quantity"], "expectations.quantity", "unknown quantity '" + q + "'");
      }
      s.j = optional_scalar<int>(e, "j", 1);
      s.n = optional_scalar<int>(e, "n", 0);
      s.lo = optional_scalar<double>(e, "min", -kUnbounded);
      s.hi = optional_scalar<double>(e, "max", kUnbounded);
      s.id = optional_scalar<std::string>(e, "id", q + ".j" + std::to_string(s.j) + ".n" + std::to_string(s.n));
      c.expectations.push_back(s);
    }
  }
  if (const YAML::Node s = root["suite"]) {
    if (!s.IsMap()) fail(s, "suite", "expected a map");
    reject_unknown(s, "suite", {"N", "t_final", "dt", "residual_jmax", "samples", "seed"});
    c.suite.N = optional_scalar<int>(s, "N", c.suite.N);
    c.suite.t_final = optional_scalar<double>(s, "t_final", c.suite.t_final);
    c.suite.dt = optional_scalar<double>(s, "dt", c.suite.dt);
    c.suite.residual_jmax = optional_scalar<int>(s, "residual_jmax", c.suite.residual_jmax);
    c.suite.samples = optional_scalar<int>(s, "samples", c.suite.samples);
    c.suite.seed = optional_scalar<unsigned>(s, "seed", c.suite.seed);
  }
  return c;
}

StudyConfig load_study_file(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path().string();
  return parse_study(read_file(path), dir.empty() ? "." : dir);
}

}  // namespace mfh
