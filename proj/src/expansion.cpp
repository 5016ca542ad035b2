#include "mfh/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>

#include "mfh/errors.hpp"

namespace mfh {

ExpansionTable::ExpansionTable(SiteSpace space, ExpansionOptions opts, double dt)
    : space_(space), opts_(opts), dt_(dt) {
  if (opts_.K_max < 0 || opts_.J_max < 1) throw PreconditionError("expansion: need J_max >= 1 and K_max >= 0");
  if (opts_.mode == ExpansionMode::exact_n && opts_.N < opts_.S())
    throw PreconditionError("expansion: exact-N mode needs N >= J_max + K_max (got N=" + std::to_string(opts_.N) +
                            ")");
  const int S = opts_.S();
  slot_of_.assign(static_cast<std::size_t>((S + 1) * (opts_.K_max + 1)), -1);
  // sweep order: k ascending, then j ascending
  for (int k = 0; k <= opts_.K_max; ++k)
    for (int j = 1; j + k <= S; ++j) {
      slot_of_[static_cast<std::size_t>(j * (opts_.K_max + 1) + k)] = static_cast<int>(keys_.size());
      keys_.emplace_back(j, k);
    }
}

bool ExpansionTable::stored(int j, int k) const noexcept {
  return j >= 1 && k >= 0 && k <= opts_.K_max && j + k <= opts_.S();
}

std::size_t ExpansionTable::slot(int j, int k) const {
  if (!stored(j, k))
    throw StructuralError("expansion coefficient (" + std::to_string(j) + "," + std::to_string(k) + ") is not stored");
  return static_cast<std::size_t>(slot_of_[static_cast<std::size_t>(j * (opts_.K_max + 1) + k)]);
}

NBodyState ExpansionTable::value(int j, int k, std::size_t node) const {
  if (j == 0) return NBodyState::scalar(space_, k == 0 ? 1.0 : 0.0);
  if (j < 0 || k < 0) return NBodyState::scalar(space_, 0.0);
  if (!stored(j, k))
    throw StructuralError("expansion coefficient (" + std::to_string(j) + "," + std::to_string(k) +
                          ") is beyond the table depth");
  return coeff(j, k, node);
}

const NBodyState& ExpansionTable::coeff(int j, int k, std::size_t node) const {
  return nodes_.at(node).at(slot(j, k));
}

void ExpansionTable::set(int j, int k, std::size_t node, NBodyState v) {
  auto& dst = nodes_.at(node).at(slot(j, k));
  if (v.sites() != dst.sites()) throw StructuralError("expansion: coefficient has the wrong arity");
  dst = std::move(v);
}

void ExpansionTable::push_node(std::vector<NBodyState> values) {
  if (values.size() != keys_.size()) throw StructuralError("expansion node has the wrong number of coefficients");
  nodes_.push_back(std::move(values));
}

double ExpansionTable::parity_defect() const {
  double worst = 0.0;
  for (const auto& node : nodes_)
    for (std::size_t s = 0; s < keys_.size(); ++s)
      if ((keys_[s].first + keys_[s].second) % 2 != 0) worst = std::max(worst, trace_norm(node[s]));
  return worst;
}

namespace {

using Getter = std::function<const NBodyState*(int, int)>;

FlowConfig flow_config(const MeanFieldTrajectory& mf, const ExpansionOptions& opts, int j) {
  FlowConfig cfg;
  cfg.j = j;
  cfg.variant = opts.mode == ExpansionMode::exact_n ? FlowVariant::exact_n : FlowVariant::limit;
  cfg.N = opts.N;
  cfg.background = &mf;
  cfg.hierarchy = opts.hierarchy;
  return cfg;
}

// N used inside the rescaled lowering operators; they do not depend on N.
int lowering_N(const ExpansionOptions& opts) { return opts.mode == ExpansionMode::exact_n ? opts.N : 1; }

// Delta^= E_{j-2}^k + Delta^+ E_{j+1}^{k-1} + Delta^- E_{j-1}^{k-1}; get(j, k)
// returns nullptr for an exact zero.
NBodyState sources(const ModelSpec& model, const ExpansionOptions& opts, const NBodyState& f, int j, int k,
                   const Getter& get) {
  NBodyState out(f.space(), j);
  const int Nl = lowering_N(opts);
  if (j >= 2)
    if (const NBodyState* x = get(j - 2, k)) out += apply_delta_eq(model, f, Nl, *x, opts.hierarchy);
  if (k >= 1) {
    if (const NBodyState* x = get(j + 1, k - 1)) {
      if (opts.mode == ExpansionMode::exact_n)
        out += apply_delta_plus(model, f, opts.N, *x, opts.hierarchy);
      else
        out += apply_C_sum(model, *x);
    }
    if (const NBodyState* x = get(j - 1, k - 1)) out += apply_delta_minus(model, f, Nl, *x, opts.hierarchy);
  }
  return out;
}

Getter snapshot_getter(const ExpansionTable& table, const std::vector<NBodyState>& snap, const NBodyState& one,
                       int j_target, int k_target) {
  return [&table, &snap, &one, j_target, k_target](int j, int k) -> const NBodyState* {
    if (j < 0 || k < 0) return nullptr;
    if (j == 0) return k == 0 ? &one : nullptr;
    if (!table.stored(j, k))
      throw StructuralError("expansion: coefficient (" + std::to_string(j_target) + "," + std::to_string(k_target) +
                            ") depends on missing (" + std::to_string(j) + "," + std::to_string(k) + ")");
    return &snap[table.slot(j, k)];
  };
}

}  // namespace

NBodyState table_rhs(const ExpansionTable& table, const MeanFieldTrajectory& mf, const NBodyState& f,
                     const std::vector<NBodyState>& snapshot, int j, int k) {
  const auto& opts = table.options();
  const ModelSpec& model = mf.model();
  const NBodyState one = NBodyState::scalar(table.space(), 1.0);
  NBodyState out = sources(model, opts, f, j, k, snapshot_getter(table, snapshot, one, j, k));
  const NBodyState& x = snapshot[table.slot(j, k)];
  out += flow_generator(flow_config(mf, opts, j), f, x);
  return out;
}

ExpansionTable init_table(const ErrorFamily& e0, const ExpansionOptions& opts, const SiteSpace& space, double dt) {
  ExpansionTable table(space, opts, dt);
  bool factorized = true;
  for (int j = 1; j <= e0.J_max(); ++j)
    if (trace_norm(e0.E[static_cast<std::size_t>(j)]) > 1e-14) factorized = false;
  if (!factorized && e0.J_max() < opts.S())
    throw PreconditionError("init_table: non-factorized data needs E_j(0) up to j = " + std::to_string(opts.S()));
  if (!factorized && opts.N < 1) throw PreconditionError("init_table: N is required for non-factorized data");
  std::vector<NBodyState> values;
  for (auto [j, k] : table.keys()) {
    NBodyState v(space, j);
    const bool even = j % 2 == 0;
    if (!factorized && ((even && k == 0) || (!even && k == 1))) {
      const double power = (even || opts.init == InitScaling::literal) ? 0.5 * j : 0.5 * (j + 1);
      v = e0.E[static_cast<std::size_t>(j)] * Complex(std::pow(double(opts.N), power));
    }
    values.push_back(std::move(v));
  }
  table.push_node(std::move(values));
  return table;
}

void evolve_table(ExpansionTable& table, const MeanFieldTrajectory& mf, double t_final) {
  if (table.size() == 0) throw PreconditionError("evolve_table: table not initialized");
  if (std::abs(table.dt() - mf.dt()) > 1e-15 * std::max(1.0, mf.dt()))
    throw StructuralError("evolve_table: table and mean-field grids differ");
  const std::size_t target = mf.node(t_final);
  const auto& keys = table.keys();
  const double h = mf.dt();
  auto rhs_all = [&](const NBodyState& f, const std::vector<NBodyState>& snap) {
    std::vector<NBodyState> r;
    r.reserve(keys.size());
    for (auto [j, k] : keys) r.push_back(table_rhs(table, mf, f, snap, j, k));
    return r;
  };
  auto combine = [](const std::vector<NBodyState>& x, const std::vector<NBodyState>& d, double c) {
    std::vector<NBodyState> y = x;
    for (std::size_t s = 0; s < y.size(); ++s) y[s].add_scaled(c, d[s]);
    return y;
  };
  while (table.size() - 1 < target) {
    const std::size_t n = table.size() - 1;
    const double tau = mf.time(n);
    const std::vector<NBodyState>& x = table.node_values(n);
    const NBodyState fa = mf.state(n), fm = mf.at(tau + 0.5 * h), fb = mf.state(n + 1);
    const auto k1 = rhs_all(fa, x);
    const auto k2 = rhs_all(fm, combine(x, k1, 0.5 * h));
    const auto k3 = rhs_all(fm, combine(x, k2, 0.5 * h));
    const auto k4 = rhs_all(fb, combine(x, k3, h));
    std::vector<NBodyState> next = x;
    for (std::size_t s = 0; s < next.size(); ++s) {
      next[s].add_scaled(h / 6.0, k1[s]);
      next[s].add_scaled(h / 3.0, k2[s]);
      next[s].add_scaled(h / 3.0, k3[s]);
      next[s].add_scaled(h / 6.0, k4[s]);
    }
    table.push_node(std::move(next));
  }
}

std::vector<double> quadrature_weights(std::size_t n, double h) {
  if (n == 0) return {0.0};
  if (n == 1) return {5.0 * h / 12.0, 8.0 * h / 12.0, -h / 12.0};
  std::vector<double> w(n + 1, 0.0);
  const std::size_t simpson_end = (n % 2 == 0) ? n : n - 3;
  for (std::size_t i = 0; i + 2 <= simpson_end; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  if (n % 2 == 1) {
    const std::size_t b = n - 3;
    w[b] += 3.0 * h / 8.0;
    w[b + 1] += 9.0 * h / 8.0;
    w[b + 2] += 9.0 * h / 8.0;
    w[b + 3] += 3.0 * h / 8.0;
  }
  return w;
}

std::vector<NBodyState> duhamel_coeff(const MeanFieldTrajectory& mf, const ExpansionTable& lower, int j, int k,
                                      const NBodyState& initial) {
  const std::size_t M = mf.size();
  if (M < 3) throw StructuralError("duhamel_coeff: the grid needs at least 3 nodes for the quadrature");
  if (lower.size() < M) throw StructuralError("duhamel_coeff: lower coefficients do not cover the grid");
  if (initial.sites() != j) throw StructuralError("duhamel_coeff: initial value has the wrong arity");
  const auto& opts = lower.options();
  const ModelSpec& model = mf.model();
  const FlowConfig cfg = flow_config(mf, opts, j);
  const NBodyState one = NBodyState::scalar(lower.space(), 1.0);

  std::vector<NBodyState> src;
  for (std::size_t i = 0; i < M; ++i) {
    const auto& snap = lower.node_values(i);
    src.push_back(sources(model, opts, mf.state(i), j, k, snapshot_getter(lower, snap, one, j, k)));
  }
  std::vector<NBodyState> out = flow_sweep(cfg, initial, 0);
  const double h = mf.dt();
  // out[n] += sum_i w_n(i) U(t_n, t_i) src[i]
  for (std::size_t i = 0; i < M; ++i) {
    const auto prop = flow_sweep(cfg, src[i], i);
    for (std::size_t n = std::max<std::size_t>(i, 2); n < M; ++n) {
      const auto w = quadrature_weights(n, h);
      out[n].add_scaled(w[i], prop[n - i]);
    }
    if (i <= 2) {
      // n = 1 uses nodes 0, 1, 2
      const auto w = quadrature_weights(1, h);
      const NBodyState u = i <= 1 ? prop[1 - i] : flow_apply(cfg, src[2], mf.time(2), mf.time(1));
      out[1].add_scaled(w[i], u);
    }
  }
  return out;
}

ExpansionTable duhamel_table(const MeanFieldTrajectory& mf, const ErrorFamily& e0, const ExpansionOptions& opts,
                             int max_order) {
  ExpansionOptions o = opts;
  o.K_max = std::min(opts.K_max, max_order - 1);
  o.J_max = max_order - o.K_max;
  const ExpansionTable init = init_table(e0, o, mf.model().site(), mf.dt());
  ExpansionTable table(mf.model().site(), o, mf.dt());
  std::vector<NBodyState> zeros;
  for (auto [j, k] : table.keys()) zeros.emplace_back(mf.model().site(), j);
  for (std::size_t n = 0; n < mf.size(); ++n) table.push_node(zeros);
  // keys are ordered k ascending then j ascending, which respects every dependency
  for (auto [j, k] : table.keys()) {
    auto col = duhamel_coeff(mf, table, j, k, init.coeff(j, k, 0));
    for (std::size_t n = 0; n < mf.size(); ++n) table.set(j, k, n, std::move(col[n]));
  }
  return table;
}

namespace {

NBodyState pair_source(const ModelSpec& model, const NBodyState& f) {
  const NBodyState q = q_bilinear(model, f, f);
  NBodyState s = apply_V_pair(model, tensor_product(f, f), 1, 2);
  s -= tensor_product(q, f);
  s -= tensor_product(f, q);
  return s;
}

// sum_i w(i) U(t_n, t_i) g(t_i)
NBodyState quadrature(const MeanFieldTrajectory& mf, const FlowConfig& cfg, std::size_t node,
                      const std::function<NBodyState(std::size_t)>& g) {
  const auto w = quadrature_weights(node, mf.dt());
  NBodyState acc(mf.model().site(), cfg.j);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    acc.add_scaled(w[i], flow_apply(cfg, g(i), mf.time(i), mf.time(node)));
  }
  return acc;
}

}  // namespace

NBodyState explicit_E20(const MeanFieldTrajectory& mf, const ExpansionOptions& opts, std::size_t node) {
  if (node >= mf.size()) throw StructuralError("explicit_E20: node off the grid");
  if (node == 0) return NBodyState(mf.model().site(), 2);
  if (mf.size() < 3) throw StructuralError("explicit_E20: the grid needs at least 3 nodes");
  const FlowConfig cfg = flow_config(mf, opts, 2);
  return quadrature(mf, cfg, node, [&](std::size_t i) { return pair_source(mf.model(), mf.state(i)); });
}

NBodyState explicit_E11(const MeanFieldTrajectory& mf, const ExpansionOptions& opts, std::size_t node,
                        double q_sign) {
  if (node >= mf.size()) throw StructuralError("explicit_E11: node off the grid");
  if (node == 0) return NBodyState(mf.model().site(), 1);
  const FlowConfig cfg = flow_config(mf, opts, 1);
  const double alpha = opts.mode == ExpansionMode::exact_n ? double(opts.N - 1) / opts.N : 1.0;
  const ModelSpec& model = mf.model();
  NBodyState out = quadrature(mf, cfg, node, [&](std::size_t i) {
    NBodyState g = q_bilinear(model, mf.state(i), mf.state(i));
    g *= Complex(q_sign);
    g.add_scaled(alpha, apply_C(model, explicit_E20(mf, opts, i), 1));
    return g;
  });
  return out;
}

NBodyState partial_sum(const ExpansionTable& table, int j, int n, int N, std::size_t node) {
  if (n < 0) throw PreconditionError("partial_sum: n must be >= 0");
  const auto& opts = table.options();
  if (opts.mode == ExpansionMode::exact_n && N != opts.N)
    throw StructuralError("partial_sum: N differs from the table's N");
  if (j == 0) return table.value(0, 0, node);
  NBodyState out(table.space(), j);
  for (int k = 0; k <= 2 * n; ++k) {
    if (!table.stored(j, k))
      throw StructuralError("partial_sum: table too shallow for (j,n)=(" + std::to_string(j) + "," +
                            std::to_string(n) + ")");
    out.add_scaled(std::pow(double(N), -0.5 * (j + k)), table.coeff(j, k, node));
  }
  return out;
}

NBodyState truncated_marginal(const ExpansionTable& table, const MeanFieldTrajectory& mf, int j, int n, int N,
                              std::size_t node) {
  std::vector<NBodyState> en;
  for (int q = 0; q <= j; ++q) en.push_back(partial_sum(table, q, n, N, node));
  return reconstruct_marginal(en, mf.state(node), j);
}

void write_table_csv(std::ostream& os, const ExpansionTable& table) {
  os << "t,j,k,trace_norm,trace\n";
  char buf[128];
  for (std::size_t n = 0; n < table.size(); ++n)
    for (auto [j, k] : table.keys()) {
      const auto& c = table.coeff(j, k, n);
      std::snprintf(buf, sizeof buf, "%.10g,%d,%d,%.15g,%.15g\n", table.time(n), j, k, trace_norm(c), trace(c).real());
      os << buf;
    }
}

}  // namespace mfh
