#include "mfh/nbody_dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "mfh/errors.hpp"

namespace mfh {

std::size_t Trajectory::node(double t) const {
  if (times.empty()) throw StructuralError("empty trajectory");
  if (dt <= 0.0) {
    if (std::abs(t - times.front()) <= 1e-12) return 0;
    throw StructuralError("time is not a node of this trajectory");
  }
  const double x = (t - times.front()) / dt;
  const double k = std::round(x);
  if (std::abs(x - k) > 1e-7 || k < 0 || k >= static_cast<double>(times.size()))
    throw StructuralError("time " + std::to_string(t) + " is not a node of the grid");
  return static_cast<std::size_t>(k);
}

namespace {

std::size_t state_dimension(const ModelSpec& model, int n, const CapacityLimits& caps) {
  const auto m = static_cast<std::size_t>(model.site().dim());
  // guard the power against overflow before comparing to the caps
  std::size_t hilbert = 1;
  const std::size_t cap = model.site().is_quantum() ? caps.dense_quantum_hilbert : caps.dense_classical;
  for (int k = 0; k < n; ++k) {
    hilbert *= m;
    if (hilbert > cap)
      throw CapacityError("state space of " + std::to_string(n) + " sites exceeds the dense cap " +
                          std::to_string(cap) +
                          (model.site().is_quantum() ? std::string()
                                                     : std::string("; use the symmetric-sector path")));
  }
  return model.site().is_quantum() ? hilbert * hilbert : hilbert;
}

}  // namespace

Generator::Generator(const ModelSpec& model, int n, int N, const CapacityLimits& caps)
    : model_(&model), n_(n), N_(N) {
  if (N < 1) throw PreconditionError("build_generator: N must be >= 1");
  if (n < 1) throw PreconditionError("build_generator: at least one site needed");
  dim_ = state_dimension(model, n, caps);
  mode_ = dim_ <= caps.assemble_threshold ? GeneratorMode::assembled : GeneratorMode::matrix_free;
  if (mode_ == GeneratorMode::assembled) {
    mode_ = GeneratorMode::matrix_free;
    assembled_ = matrix();
    mode_ = GeneratorMode::assembled;
  }
}

void Generator::apply_into(const NBodyState& f, NBodyState& out) const {
  if (f.sites() != n_ || out.sites() != n_) throw StructuralError("generator applied to wrong arity");
  if (mode_ == GeneratorMode::assembled) {
    Eigen::Map<const Eigen::VectorXcd> x(f.data().data(), static_cast<Eigen::Index>(f.size()));
    Eigen::Map<Eigen::VectorXcd> y(out.data().data(), static_cast<Eigen::Index>(out.size()));
    y.noalias() = assembled_ * x;
    return;
  }
  std::fill(out.data().begin(), out.data().end(), Complex(0.0));
  accumulate_K_all(*model_, out, f);
  accumulate_T(*model_, out, f, Complex(1.0 / N_));
}

NBodyState Generator::apply(const NBodyState& f) const {
  NBodyState out(f.space(), f.sites());
  apply_into(f, out);
  return out;
}

Eigen::SparseMatrix<Complex, Eigen::RowMajor> Generator::matrix() const {
  if (mode_ == GeneratorMode::assembled) return assembled_;
  const std::size_t d = static_cast<std::size_t>(model_->site().local_dim());
  std::vector<Eigen::Triplet<Complex>> trip;
  auto push_op = [&](const LocalOperator& op, std::span<const int> sites, Complex factor) {
    std::vector<std::size_t> local(op.matrix().rows());
    for (std::size_t p = 0; p < local.size(); ++p) {
      std::size_t off = 0, rest = p;
      for (int q = static_cast<int>(sites.size()) - 1; q >= 0; --q) {
        off += (rest % d) * ipow(d, n_ - sites[static_cast<std::size_t>(q)]);
        rest /= d;
      }
      local[p] = off;
    }
    for (std::size_t base : base_offsets(n_, d, sites))
      for (const auto& e : op.nonzeros())
        trip.emplace_back(static_cast<int>(base + local[static_cast<std::size_t>(e.row)]),
                          static_cast<int>(base + local[static_cast<std::size_t>(e.col)]), factor * e.value);
  };
  if (!model_->K().is_zero())
    for (int k = 1; k <= n_; ++k) {
      const int s[] = {k};
      push_op(model_->K(), s, 1.0);
    }
  for (int i = 1; i <= n_; ++i)
    for (int r = i + 1; r <= n_; ++r) {
      const int s[] = {i, r};
      push_op(model_->V(), s, Complex(1.0 / N_));
    }
  Eigen::SparseMatrix<Complex, Eigen::RowMajor> m(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
  m.setFromTriplets(trip.begin(), trip.end());
  m.prune(Complex(0.0));
  return m;
}

namespace {

void check_quality(const NBodyState& f, const EvolveOptions& opts, bool check_pos, double t) {
  const double drift = std::abs(trace(f) - Complex(1.0));
  if (drift > opts.trace_tolerance)
    throw IntegrationError("trace drift " + std::to_string(drift) + " at t=" + std::to_string(t), drift);
  if (check_pos) {
    const auto rep = positivity(f);
    if (rep.floor < opts.positivity_floor)
      throw IntegrationError("positivity violation " + std::to_string(rep.floor) + " at t=" + std::to_string(t),
                             rep.floor);
  }
}

// Dense H_N = sum_k h1_k + (1/N) sum_{i<r} v2_{i,r} on (C^m)^{ox N}.
Eigen::MatrixXcd nbody_hamiltonian(const ModelSpec& model, int N) {
  const int m = model.site().dim();
  const std::size_t dim = ipow(static_cast<std::size_t>(m), N);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  auto digit = [m, N](std::size_t x, int site) {
    return static_cast<int>((x / ipow(static_cast<std::size_t>(m), N - site)) % static_cast<std::size_t>(m));
  };
  for (std::size_t y = 0; y < dim; ++y) {
    for (int k = 1; k <= N; ++k) {
      const std::size_t sk = ipow(static_cast<std::size_t>(m), N - k);
      const int b = digit(y, k);
      for (int a = 0; a < m; ++a) {
        const Complex h = model.h1()(a, b);
        if (h == Complex(0.0)) continue;
        H(static_cast<Eigen::Index>(y + (a - b) * static_cast<std::ptrdiff_t>(sk)), static_cast<Eigen::Index>(y)) += h;
      }
    }
    for (int i = 1; i <= N; ++i)
      for (int r = i + 1; r <= N; ++r) {
        const std::size_t si = ipow(static_cast<std::size_t>(m), N - i), sr = ipow(static_cast<std::size_t>(m), N - r);
        const int bi = digit(y, i), br = digit(y, r);
        const std::size_t base = y - bi * si - br * sr;
        for (int ai = 0; ai < m; ++ai)
          for (int ar = 0; ar < m; ++ar) {
            const Complex v = model.v2()(ai * m + ar, bi * m + br);
            if (v == Complex(0.0)) continue;
            H(static_cast<Eigen::Index>(base + ai * si + ar * sr), static_cast<Eigen::Index>(y)) += v / double(N);
          }
      }
  }
  return H;
}

Trajectory evolve_exact(const Generator& gen, const NBodyState& f0, double t_final, int steps,
                        const EvolveOptions& opts) {
  const ModelSpec& model = gen.model();
  if (model.backend() != Backend::quantum)
    throw UnsupportedModeError("exact evolution requires the quantum backend");
  const int N = gen.sites();
  const std::size_t hilbert = ipow(static_cast<std::size_t>(model.site().dim()), N);
  if (hilbert > opts.caps.dense_quantum_hilbert)
    throw CapacityError("exact evolution: Hilbert dimension " + std::to_string(hilbert) + " above cap");
  if (gen.N() != N) throw UnsupportedModeError("exact evolution needs n = N");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(nbody_hamiltonian(model, N));
  const Eigen::MatrixXcd& W = es.eigenvectors();
  const Eigen::VectorXd& E = es.eigenvalues();
  const Eigen::MatrixXcd rho0 = W.adjoint() * f0.to_matrix() * W;

  Trajectory traj;
  traj.integrator = "exact";
  traj.dt = t_final / steps;
  traj.model_hash = model.hash();
  traj.N = gen.N();
  const auto n = static_cast<Eigen::Index>(hilbert);
  for (int s = 0; s <= steps; ++s) {
    if (s % opts.store_every != 0 && s != steps) continue;
    const double t = s * traj.dt;
    Eigen::VectorXcd phase(n);
    for (Eigen::Index a = 0; a < n; ++a) phase(a) = std::exp(Complex(0.0, -E(a) * t / model.hbar()));
    Eigen::MatrixXcd rt = phase.asDiagonal() * rho0 * phase.conjugate().asDiagonal();
    Eigen::MatrixXcd rho = W * rt * W.adjoint();
    NBodyState f = NBodyState::from_matrix(model.site(), N, rho);
    check_quality(f, opts, opts.check_positivity && s == steps, t);
    traj.times.push_back(t);
    traj.states.push_back(std::move(f));
  }
  return traj;
}

}  // namespace

Trajectory evolve(const Generator& gen, const NBodyState& f0, double t_final, int steps, const EvolveOptions& opts) {
  if (steps < 1) throw PreconditionError("evolve: steps must be >= 1");
  if (t_final < 0.0) throw PreconditionError("evolve: t_final must be >= 0");
  if (opts.store_every < 1) throw PreconditionError("evolve: store_every must be >= 1");
  if (f0.sites() != gen.sites() || !(f0.space() == gen.model().site()))
    throw StructuralError("evolve: initial state does not match the generator");
  const auto rep0 = positivity(f0);
  if (std::abs(trace(f0) - Complex(1.0)) > 1e-9 || rep0.floor < kPositivityFloor)
    throw PreconditionError("evolve: initial state is not physical");
  if (t_final == 0.0) {
    Trajectory traj;
    traj.times = {0.0};
    traj.states = {f0};
    traj.integrator = opts.method == EvolveMethod::exact ? "exact" : "rk4";
    traj.model_hash = gen.model().hash();
    traj.N = gen.N();
    return traj;
  }
  if (opts.method == EvolveMethod::exact) return evolve_exact(gen, f0, t_final, steps, opts);

  const bool classical = !gen.model().site().is_quantum();
  Trajectory traj;
  traj.integrator = "rk4";
  traj.dt = t_final / steps;
  traj.model_hash = gen.model().hash();
  traj.N = gen.N();
  traj.times.push_back(0.0);
  traj.states.push_back(f0);
  const double h = traj.dt;
  NBodyState x = f0, k1(f0.space(), f0.sites()), k2 = k1, k3 = k1, k4 = k1, tmp = k1;
  for (int s = 1; s <= steps; ++s) {
    gen.apply_into(x, k1);
    tmp = x;
    tmp.add_scaled(0.5 * h, k1);
    gen.apply_into(tmp, k2);
    tmp = x;
    tmp.add_scaled(0.5 * h, k2);
    gen.apply_into(tmp, k3);
    tmp = x;
    tmp.add_scaled(h, k3);
    gen.apply_into(tmp, k4);
    auto xd = x.data();
    for (std::size_t q = 0; q < xd.size(); ++q)
      xd[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
    if (s % opts.store_every == 0 || s == steps) {
      // positivity per node is cheap classically; quantum checks the last node only
      check_quality(x, opts, opts.check_positivity && (classical || s == steps), s * h);
      traj.times.push_back(s * h);
      traj.states.push_back(x);
    }
  }
  return traj;
}

ConvergenceReport step_halving_order(const Generator& gen, const NBodyState& f0, double t_final, int steps) {
  EvolveOptions o;
  o.store_every = 1 << 30;
  const auto a = evolve(gen, f0, t_final, steps, o).states.back();
  const auto b = evolve(gen, f0, t_final, 2 * steps, o).states.back();
  const auto c = evolve(gen, f0, t_final, 4 * steps, o).states.back();
  ConvergenceReport r;
  r.diff_coarse = trace_norm(a - b);
  r.diff_fine = trace_norm(b - c);
  r.order = (r.diff_fine > 0.0 && r.diff_coarse > 0.0) ? std::log2(r.diff_coarse / r.diff_fine) : 0.0;
  return r;
}

SymmetricTrajectory evolve_symmetric(const ModelSpec& model, const SymmetricClassicalState& s0, double t_final,
                                     int steps, int store_every) {
  if (model.backend() != Backend::kac) throw UnsupportedModeError("evolve_symmetric requires the Kac backend");
  if (steps < 1) throw PreconditionError("evolve_symmetric: steps must be >= 1");
  if (store_every < 1) throw PreconditionError("evolve_symmetric: store_every must be >= 1");
  if (!(s0.space() == model.site())) throw StructuralError("evolve_symmetric: site space mismatch");
  const auto G = symmetric_generator(s0.basis(), model.pair_rates());
  SymmetricTrajectory traj;
  traj.dt = t_final / steps;
  traj.model_hash = model.hash();
  traj.times.push_back(0.0);
  traj.states.push_back(s0);
  const auto n = static_cast<Eigen::Index>(s0.basis().size());
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(s0.mass().data(), n);
  const double mass0 = x.sum();
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n);
  const double h = traj.dt;
  for (int s = 1; s <= steps; ++s) {
    k1.noalias() = G * x;
    k2.noalias() = G * (x + 0.5 * h * k1);
    k3.noalias() = G * (x + 0.5 * h * k2);
    k4.noalias() = G * (x + h * k3);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (s % store_every == 0 || s == steps) {
      const double drift = std::abs(x.sum() - mass0);
      if (drift > 1e-10) throw IntegrationError("symmetric-sector mass drift " + std::to_string(drift), drift);
      SymmetricClassicalState st(s0.space(), s0.N(), std::vector<double>(x.data(), x.data() + n));
      traj.times.push_back(s * h);
      traj.states.push_back(std::move(st));
    }
  }
  return traj;
}

NBodyState marginal(const NBodyState& f, int j) {
  if (j < 0 || j > f.sites())
    throw StructuralError("marginal: j=" + std::to_string(j) + " outside 0.." + std::to_string(f.sites()));
  return partial_trace_last(f, f.sites() - j);
}

double bbgky_residual(const ModelSpec& model, int N, const Trajectory& fj, const Trajectory& fj1, int j) {
  if (j < 1 || j >= N) throw PreconditionError("bbgky_residual: need 1 <= j < N");
  if (fj.size() != fj1.size() || fj.size() < 3 || std::abs(fj.dt - fj1.dt) > 1e-15 * std::max(1.0, fj.dt))
    throw StructuralError("bbgky_residual: trajectories must share a grid of at least 3 nodes");
  for (std::size_t k = 0; k < fj.size(); ++k)
    if (std::abs(fj.times[k] - fj1.times[k]) > 1e-12) throw StructuralError("bbgky_residual: grid mismatch");
  if (fj.states.front().sites() != j || fj1.states.front().sites() != j + 1)
    throw StructuralError("bbgky_residual: marginal arities do not match j");
  const double h = fj.dt;
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < fj.size(); ++k) {
    NBodyState r = (fj.states[k + 1] - fj.states[k - 1]) * Complex(0.5 / h);
    r -= apply_K_all(model, fj.states[k]);
    r.add_scaled(-1.0 / N, apply_T(model, fj.states[k]));
    r.add_scaled(-double(N - j) / N, apply_C_sum(model, fj1.states[k]));
    worst = std::max(worst, trace_norm(r));
  }
  return worst;
}

void write_trajectory(std::ostream& os, const Trajectory& traj) {
  const int sites = traj.states.empty() ? 0 : traj.states.front().sites();
  const SiteSpace* sp = traj.states.empty() ? nullptr : &traj.states.front().space();
  os << "# mfh-trajectory model=" << traj.model_hash << " N=" << traj.N;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", traj.dt);
  os << " dt=" << buf << " sites=" << sites;
  if (sp) os << " kind=" << to_string(sp->kind()) << " m=" << sp->dim();
  os << " integrator=" << traj.integrator << " nodes=" << traj.size() << "\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", traj.times[k]);
    os << buf;
    for (auto z : traj.states[k].data()) {
      std::snprintf(buf, sizeof buf, " %.17g %.17g", z.real(), z.imag());
      os << buf;
    }
    os << "\n";
  }
}

Trajectory read_trajectory(std::istream& is, const SiteSpace& space) {
  std::string header;
  if (!std::getline(is, header) || header.rfind("# mfh-trajectory", 0) != 0)
    throw StructuralError("not a trajectory file");
  Trajectory traj;
  int sites = 0;
  std::istringstream hs(header.substr(16));
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "model") traj.model_hash = val;
    else if (key == "N") traj.N = std::stoi(val);
    else if (key == "dt") traj.dt = std::stod(val);
    else if (key == "sites") sites = std::stoi(val);
    else if (key == "integrator") traj.integrator = val;
  }
  const std::size_t len = ipow(static_cast<std::size_t>(space.local_dim()), sites);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double t;
    ls >> t;
    std::vector<Complex> data(len);
    for (auto& z : data) {
      double re, im;
      if (!(ls >> re >> im)) throw StructuralError("truncated trajectory record");
      z = Complex(re, im);
    }
    traj.times.push_back(t);
    traj.states.emplace_back(space, sites, std::move(data));
  }
  return traj;
}

void write_diagnostics_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,trace,floor,trace_norm\n";
  char buf[128];
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& f = traj.states[k];
    std::snprintf(buf, sizeof buf, "%.10g,%.15g,%.6e,%.15g\n", traj.times[k], trace(f).real(), positivity(f).floor,
                  trace_norm(f));
    os << buf;
  }
}

}  // namespace mfh
