#include "mfh/models.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "mfh/errors.hpp"
#include "mfh/random_states.hpp"

namespace mfh {

const char* to_string(Backend b) { return b == Backend::kac ? "kac" : "quantum"; }

ModelSpec::ModelSpec(Backend backend, SiteSpace site, LocalOperator K, LocalOperator V, double v_norm,
                     double hbar)
    : backend_(backend), site_(site), K_(std::move(K)), V_(std::move(V)), v_norm_(v_norm), hbar_(hbar) {
  if (K_.arity() != 1 || V_.arity() != 2) throw StructuralError("model: K must act on one site, V on two");
  if (K_.local_dim() != site_.local_dim() || V_.local_dim() != site_.local_dim())
    throw StructuralError("model: operator dimensions do not match the site space");
  compute_hash();
}

void ModelSpec::compute_hash() {
  // FNV-1a over the operator coefficients
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 1099511628211ull;
    }
  };
  const int kind = static_cast<int>(backend_);
  const int m = site_.dim();
  mix(&kind, sizeof kind);
  mix(&m, sizeof m);
  mix(&hbar_, sizeof hbar_);
  for (const auto* op : {&K_, &V_}) {
    const auto& mat = op->matrix();
    mix(mat.data(), sizeof(Complex) * static_cast<std::size_t>(mat.size()));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  hash_ = buf;
}

Eigen::MatrixXcd pair_swap_matrix(int m) {
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(m * m, m * m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) s(b * m + a, a * m + b) = 1.0;
  return s;
}

ModelSpec build_quantum_model(const QuantumModelConfig& cfg) {
  const int m = cfg.m;
  if (m < 2) throw ValidationError("site_dim must be >= 2");
  if (!(cfg.hbar > 0.0)) throw ValidationError("hbar must be positive");
  if (cfg.h1.rows() != m || cfg.h1.cols() != m) throw ValidationError("h1 must be m x m");
  if (cfg.v2.rows() != m * m || cfg.v2.cols() != m * m) throw ValidationError("v2 must be m^2 x m^2");
  constexpr double tol = 1e-12;
  const double h1_defect = (cfg.h1 - cfg.h1.adjoint()).cwiseAbs().maxCoeff();
  if (h1_defect > tol) throw ValidationError("h1 is not Hermitian (defect " + std::to_string(h1_defect) + ")");
  const double v2_defect = (cfg.v2 - cfg.v2.adjoint()).cwiseAbs().maxCoeff();
  if (v2_defect > tol) throw ValidationError("v2 is not Hermitian (defect " + std::to_string(v2_defect) + ")");
  const Eigen::MatrixXcd s = pair_swap_matrix(m);
  const double swap_defect = (s * cfg.v2 * s - cfg.v2).cwiseAbs().maxCoeff();
  if (swap_defect > tol)
    throw ValidationError("v2 is not symmetric under the pair swap (defect " + std::to_string(swap_defect) + ")");

  const Complex inv_ih = 1.0 / Complex(0.0, cfg.hbar);
  const int d = m * m;
  // local index l = a*m + b for the matrix element (a, b)
  Eigen::MatrixXcd K = Eigen::MatrixXcd::Zero(d, d);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int c = 0; c < m; ++c) {
        K(a * m + b, c * m + b) += inv_ih * cfg.h1(a, c);
        K(a * m + b, a * m + c) -= inv_ih * cfg.h1(c, b);
      }

  // two super-sites: p = l1*d + l2, rows (a1 a2), columns (b1 b2)
  Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(d * d, d * d);
  auto split = [m, d](int p, int& row, int& col) {
    const int l1 = p / d, l2 = p % d;
    row = (l1 / m) * m + (l2 / m);
    col = (l1 % m) * m + (l2 % m);
  };
  for (int po = 0; po < d * d; ++po) {
    int ro, co;
    split(po, ro, co);
    for (int pi = 0; pi < d * d; ++pi) {
      int ri, ci;
      split(pi, ri, ci);
      Complex v = 0.0;
      if (co == ci) v += cfg.v2(ro, ri);
      if (ro == ri) v -= cfg.v2(ci, co);
      if (v != Complex(0.0)) V(po, pi) = inv_ih * v;
    }
  }
  double op_norm = 0.0;
  if (cfg.v2.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(cfg.v2, Eigen::EigenvaluesOnly);
    op_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  }
  const SiteSpace site(SiteKind::quantum, m);
  ModelSpec spec(Backend::quantum, site, LocalOperator(1, d, K), LocalOperator(2, d, V),
                 2.0 * op_norm / cfg.hbar, cfg.hbar);
  spec.h1_ = cfg.h1;
  spec.v2_ = cfg.v2;
  return spec;
}

ModelSpec build_kac_model(const KacModelConfig& cfg) {
  const int m = cfg.m;
  if (m < 2) throw ValidationError("site_dim must be >= 2");
  const int d2 = m * m;
  Eigen::MatrixXd given = Eigen::MatrixXd::Zero(d2, d2);
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(d2, d2);
  for (const auto& t : cfg.transitions) {
    for (int v : {t.in_v, t.in_w, t.out_v, t.out_w})
      if (v < 0 || v >= m)
        throw ValidationError("velocity label " + std::to_string(v) + " outside 0.." + std::to_string(m - 1));
    if (!(t.rate >= 0.0) || !std::isfinite(t.rate))
      throw ValidationError("rates must be finite and nonnegative");
    const int in = t.in_v * m + t.in_w, out = t.out_v * m + t.out_w;
    given(in, out) += t.rate;
    seen(in, out) = 1;
  }
  // swap image of (v,w)->(v',w') is (w,v)->(w',v')
  Eigen::MatrixXd R = given;
  for (int in = 0; in < d2; ++in)
    for (int out = 0; out < d2; ++out) {
      const int sin = (in % m) * m + in / m, sout = (out % m) * m + out / m;
      const bool a = seen(in, out) != 0, b = seen(sin, sout) != 0;
      if (a && !b) {
        R(sin, sout) = given(in, out);
      } else if (a && b && given(in, out) != given(sin, sout)) {
        if (cfg.strict)
          throw ValidationError("rate table is not swap symmetric: (" + std::to_string(in / m) + "," +
                                std::to_string(in % m) + ")->(" + std::to_string(out / m) + "," +
                                std::to_string(out % m) + ") disagrees with its swap image");
        R(in, out) = 0.5 * (given(in, out) + given(sin, sout));
      }
    }
  Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(d2, d2);
  double max_lambda = 0.0;
  for (int in = 0; in < d2; ++in) {
    double lambda = 0.0;
    for (int out = 0; out < d2; ++out) {
      if (out == in) continue;
      V(out, in) += R(in, out);
      lambda += R(in, out);
    }
    V(in, in) -= lambda;
    max_lambda = std::max(max_lambda, lambda);
  }
  const SiteSpace site(SiteKind::classical, m);
  ModelSpec spec(Backend::kac, site, LocalOperator(1, m, Eigen::MatrixXcd::Zero(m, m)),
                 LocalOperator(2, m, V), 2.0 * max_lambda, 1.0);
  spec.rates_ = R;
  for (int in = 0; in < d2; ++in) spec.rates_(in, in) = 0.0;
  return spec;
}

KacModelConfig kac_rates_from_cross_section(std::span<const double> velocities,
                                            const std::function<double(double)>& sigma) {
  const int m = static_cast<int>(velocities.size());
  KacModelConfig cfg;
  cfg.m = m;
  for (int v = 0; v < m; ++v)
    for (int w = 0; w < m; ++w) {
      const double total = sigma(std::abs(velocities[static_cast<std::size_t>(v)] -
                                          velocities[static_cast<std::size_t>(w)]));
      if (total <= 0.0) continue;
      const double p = velocities[static_cast<std::size_t>(v)] + velocities[static_cast<std::size_t>(w)];
      std::vector<std::pair<int, int>> outs;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          if (a == v && b == w) continue;
          const double q = velocities[static_cast<std::size_t>(a)] + velocities[static_cast<std::size_t>(b)];
          if (std::abs(q - p) <= 1e-12 * (1.0 + std::abs(p))) outs.emplace_back(a, b);
        }
      for (auto [a, b] : outs) cfg.transitions.push_back({v, w, a, b, total / static_cast<double>(outs.size())});
    }
  cfg.strict = true;
  return cfg;
}

NBodyState apply_V_pair(const ModelSpec& model, const NBodyState& f, int i, int r) {
  if (!(1 <= i && i < r && r <= f.sites()))
    throw StructuralError("apply_V_pair: need 1 <= i < r <= n, got (" + std::to_string(i) + "," +
                          std::to_string(r) + ") with n=" + std::to_string(f.sites()));
  return apply_two_site(f, model.V(), i, r);
}

void accumulate_V_pair(const ModelSpec& model, NBodyState& out, const NBodyState& f, int i, int r,
                       Complex factor) {
  accumulate_two_site(out, f, model.V(), std::min(i, r), std::max(i, r), factor);
}

NBodyState apply_C(const ModelSpec& model, const NBodyState& f, int i) {
  const int j = f.sites() - 1;
  if (j < 1 || i < 1 || i > j)
    throw StructuralError("apply_C: need 1 <= i <= j for an operand over j+1 sites");
  return partial_trace_last(apply_two_site(f, model.V(), i, j + 1), 1);
}

NBodyState apply_C_sum(const ModelSpec& model, const NBodyState& f) {
  const int j = f.sites() - 1;
  if (j < 1) throw StructuralError("apply_C_sum: operand needs at least two sites");
  NBodyState acc(f.space(), f.sites());
  for (int i = 1; i <= j; ++i) accumulate_two_site(acc, f, model.V(), i, j + 1);
  return partial_trace_last(acc, 1);
}

void accumulate_T(const ModelSpec& model, NBodyState& out, const NBodyState& f, Complex factor) {
  for (int i = 1; i <= f.sites(); ++i)
    for (int r = i + 1; r <= f.sites(); ++r) accumulate_two_site(out, f, model.V(), i, r, factor);
}

NBodyState apply_T(const ModelSpec& model, const NBodyState& f) {
  NBodyState out(f.space(), f.sites());
  accumulate_T(model, out, f);
  return out;
}

void accumulate_K_all(const ModelSpec& model, NBodyState& out, const NBodyState& f, Complex factor) {
  if (model.K().is_zero()) return;
  for (int k = 1; k <= f.sites(); ++k) accumulate_one_site(out, f, model.K(), k, factor);
}

NBodyState apply_K_all(const ModelSpec& model, const NBodyState& f) {
  NBodyState out(f.space(), f.sites());
  accumulate_K_all(model, out, f);
  return out;
}

NBodyState one_site_propagate(const ModelSpec& model, const NBodyState& g, double t) {
  if (g.sites() != 1) throw StructuralError("one_site_propagate expects a one-site state");
  const Eigen::MatrixXcd e = (t * model.K().matrix()).exp();
  Eigen::VectorXcd x(static_cast<Eigen::Index>(g.size()));
  for (std::size_t l = 0; l < g.size(); ++l) x(static_cast<Eigen::Index>(l)) = g[l];
  const Eigen::VectorXcd y = e * x;
  NBodyState out(g.space(), 1);
  for (std::size_t l = 0; l < g.size(); ++l) out[l] = y(static_cast<Eigen::Index>(l));
  return out;
}

std::vector<ModelCheck> check_model(const ModelSpec& model, unsigned seed, int samples) {
  Rng rng(seed);
  const auto& site = model.site();
  double tr_k = 0.0, tr_v = 0.0, swap_cov = 0.0, iso = 0.0, floor = 0.0, col = 0.0;
  for (int s = 0; s < samples; ++s) {
    const NBodyState g = random_generic(site, 1, rng);
    tr_k = std::max(tr_k, std::abs(trace(apply_K_all(model, g))));
    const NBodyState g2 = random_generic(site, 2, rng);
    tr_v = std::max(tr_v, std::abs(trace(apply_V_pair(model, g2, 1, 2))));
    swap_cov = std::max(swap_cov, max_abs_diff(swap_sites(apply_V_pair(model, g2, 1, 2), 1, 2),
                                               apply_V_pair(model, swap_sites(g2, 1, 2), 1, 2)));
    const NBodyState p = random_physical(site, 1, rng);
    for (double t : {0.1, 0.5}) {
      const NBodyState q = one_site_propagate(model, p, t);
      iso = std::max(iso, std::abs(trace_norm(q) - trace_norm(p)));
      floor = std::min(floor, positivity(q).floor);
    }
  }
  if (model.backend() == Backend::kac) {
    const auto& V = model.V().matrix();
    for (Eigen::Index c = 0; c < V.cols(); ++c) col = std::max(col, std::abs(V.col(c).sum()));
  }
  return {
      {"trace_K", tr_k, 1e-12, tr_k <= 1e-12},
      {"trace_V", tr_v, 1e-12, tr_v <= 1e-12},
      {"swap_covariance_V", swap_cov, 1e-12, swap_cov <= 1e-12},
      {"isometry_expK", iso, 1e-9, iso <= 1e-9},
      {"positivity_expK", floor, -1e-9, floor >= -1e-9},
      {"column_sums_V", col, 1e-13, col <= 1e-13},
  };
}

}  // namespace mfh
