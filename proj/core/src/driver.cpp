#include "igabem/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "igabem/errors.hpp"

namespace igabem {

namespace {

// <f, phi> for f = 1, computed once with `igabem reference` (deep adaptive
// p=2 solves, energies Aitken-extrapolated; the energy <f,Phi> increases
// monotonically to <f,phi> by nestedness) and frozen here. The same procedure
// reproduces the slit's closed form 2*pi/ln(2/0.49) to ~1e-10.
constexpr double kPacmanReferenceEnergy = 6.741928517203;
constexpr double kSquareReferenceEnergy = 4.352336887551;

// explicit column transport is quadratic in the space dimension; the
// orthogonality diagnostic is only needed on small runs
constexpr int kOrthogonalityMaxDim = 600;

} // namespace

void RunConfig::validate() const {
  if (geometry != "circle" && geometry != "slit" && geometry != "square" && geometry != "pacman")
    throw ConfigurationError("unknown geometry: " + geometry);
  if (rhs != "one" && rhs != "harmonic" && rhs != "xabs06")
    throw ConfigurationError("unknown rhs: " + rhs);
  if (p < 0) throw ConfigurationError("p >= 0 required");
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigurationError("theta in (0,1] required");
  if (max_dofs < 1) throw ConfigurationError("max_dofs >= 1 required");
  if (max_iters < 1) throw ConfigurationError("max_iters >= 1 required");
  if (n0 < 2) throw ConfigurationError("n0 >= 2 required");
  if (quad.order < 1 || quad.log_order < 1) throw ConfigurationError("quadrature orders >= 1");
  if (quad.residual_k < 2) throw ConfigurationError("residual_k >= 2 required");
}

MarkSet doerfler_mark(const IndicatorSet& ind, double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) throw std::domain_error("doerfler_mark: theta in (0,1]");
  const std::size_t n = ind.values2.size();
  double total = 0.0;
  for (double v : ind.values2) {
    if (v < 0) throw std::domain_error("doerfler_mark: negative indicator");
    total += v;
  }
  MarkSet out;
  if (total <= 0.0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (ind.values2[a] != ind.values2[b]) return ind.values2[a] > ind.values2[b];
    return ind.node_params[a] < ind.node_params[b];
  });

  double acc = 0.0;
  for (std::size_t idx : order) {
    if (acc >= theta * total) break;
    if (ind.values2[idx] <= 0.0) break; // only nonzero indicators get marked
    out.nodes.push_back(ind.node_ids[idx]);
    acc += ind.values2[idx];
  }
  std::sort(out.nodes.begin(), out.nodes.end());
  return out;
}

ProblemData make_problem(const std::string& rhs, const ParamCurve& curve) {
  ProblemData prob;
  prob.name = rhs;
  const std::string geom = curve.name();

  if (rhs == "one") {
    prob.f = [](const Vec2&, double) { return 1.0; };
    prob.f_deriv = [](const Vec2&, double) { return 0.0; };
    if (geom == "circle") {
      // phi = 2/ln 2, <f,phi> = |Gamma| * 2/ln2 = pi * 2/ln2
      prob.reference_energy = std::numbers::pi * 2.0 / std::log(2.0);
    } else if (geom == "slit") {
      // equilibrium density phi = A/sqrt(c^2-x^2), A = 2/ln(2/c), c = 0.49
      prob.reference_energy = 2.0 * std::numbers::pi / std::log(2.0 / 0.49);
    } else if (geom == "pacman") {
      // extrapolated (Aitken over uniform p=1 solves, `igabem reference`)
      prob.reference_energy = kPacmanReferenceEnergy;
    } else if (geom == "square") {
      prob.reference_energy = kSquareReferenceEnergy;
    }
    return prob;
  }

  if (rhs == "harmonic") {
    // trace of the harmonic polynomial 4(x^2-y^2); equals cos(2 theta) on the
    // radius-1/2 circle, where the exact energy is 4 pi
    prob.f = [](const Vec2& x, double) { return 4.0 * (x.x * x.x - x.y * x.y); };
    const ParamCurve* c = &curve;
    prob.f_deriv = [c](const Vec2& x, double t) {
      const Vec2 tang = c->deriv(t, Side::Right);
      const double sp = tang.norm();
      return (8.0 * x.x * tang.x - 8.0 * x.y * tang.y) / sp;
    };
    if (geom == "circle") prob.reference_energy = 4.0 * std::numbers::pi;
    return prob;
  }

  if (rhs == "xabs06") {
    // f = |x_1|^0.6: only H^{1/2}-regular for practical purposes (the
    // derivative blows up at x_1 = 0), drives the eta-based mode
    prob.f = [](const Vec2& x, double) { return std::pow(std::abs(x.x), 0.6); };
    const ParamCurve* c = &curve;
    prob.f_deriv = [c](const Vec2& x, double t) {
      if (x.x == 0.0) return 0.0;
      const Vec2 tang = c->deriv(t, Side::Right);
      const double sp = tang.norm();
      const double s = x.x > 0 ? 1.0 : -1.0;
      return 0.6 * s * std::pow(std::abs(x.x), -0.4) * tang.x / sp;
    };
    return prob;
  }

  throw ConfigurationError("unknown rhs: " + rhs);
}

namespace {

struct DumpStreams {
  std::ofstream mesh, indicators, matrix;
};

void open_dumps(const RunConfig& cfg, DumpStreams& out) {
  if (!cfg.dump_mesh_path.empty()) {
    out.mesh.open(cfg.dump_mesh_path);
    if (!out.mesh) throw ConfigurationError("cannot open " + cfg.dump_mesh_path);
  }
  if (!cfg.dump_indicators_path.empty()) {
    out.indicators.open(cfg.dump_indicators_path);
    if (!out.indicators) throw ConfigurationError("cannot open " + cfg.dump_indicators_path);
  }
  if (!cfg.dump_matrix_path.empty()) {
    out.matrix.open(cfg.dump_matrix_path);
    if (!out.matrix) throw ConfigurationError("cannot open " + cfg.dump_matrix_path);
  }
}

RunReport run_loop(const RunConfig& cfg, bool uniform) {
  cfg.validate();

  RunReport report;
  report.config = cfg;

  auto curve = builtin_geometry(cfg.geometry);
  const ProblemData prob = make_problem(cfg.rhs, *curve);
  KnotMesh mesh = KnotMesh::initial(curve, cfg.p, cfg.n0, cfg.initial_weights);

  DumpStreams dumps;
  open_dumps(cfg, dumps);

  if (cfg.collect_diagnostics) report.diag.f_l2 = l2_norm_f(mesh, prob, cfg.quad.order);

  const int knots0 = mesh.knot_count();
  int cum_marked = 0;
  Eigen::MatrixXd last_matrix;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const auto tic = std::chrono::steady_clock::now();

    auto mesh_ptr = std::make_shared<KnotMesh>(mesh);
    GalerkinSystem sys = assemble(mesh_ptr, prob, cfg.quad);
    Density density = solve(sys);
    ResidualTable tab = residual_samples(density, prob, cfg.quad.residual_k, cfg.quad);

    IndicatorSet mu = mu_indicators(mesh, tab);
    IndicatorSet eta = eta_indicators(mesh, tab, cfg.quad.eta_order);
    const IndicatorSet& driving = (cfg.estimator == EstimatorKind::Mu) ? mu : eta;

    IterationRecord rec;
    rec.iter = iter;
    rec.knots = mesh.knot_count();
    rec.dofs = mesh.dimension();
    rec.mu = std::sqrt(mu.total2());
    rec.eta = std::sqrt(eta.total2());
    rec.kappa = mesh.mesh_ratio();
    const double energy2 = density.coeffs.dot(sys.load());
    if (std::isfinite(prob.reference_energy))
      rec.energy_error = std::sqrt(std::max(prob.reference_energy - energy2, 0.0));

    if (cfg.collect_diagnostics) {
      auto& d = report.diag;
      d.meshes.push_back(mesh);
      d.solutions.push_back(density.coeffs);
      d.energy2.push_back(energy2);
      d.dr_mass.push_back(dr_mass(mesh, tab));
      d.cum_marked.push_back(cum_marked);

      if (!d.traces.empty() && d.meshes.size() >= 2) {
        // energy difference and Galerkin orthogonality against the previous level
        const KnotMesh& coarse = d.meshes[d.meshes.size() - 2];
        const Eigen::VectorXd& prev = d.solutions[d.solutions.size() - 2];
        std::vector<double> pc(prev.data(), prev.data() + prev.size());
        const auto lifted = transport_coeffs(coarse, mesh, pc);
        Eigen::VectorXd diff = density.coeffs;
        for (int i = 0; i < diff.size(); ++i) diff(i) -= lifted[i];
        d.energy_diff.push_back(energy_norm(diff, sys));

        // residual of the fine solve tested against every coarse basis function
        if (coarse.dimension() <= kOrthogonalityMaxDim) {
          Eigen::VectorXd resid = sys.load() - sys.matrix() * density.coeffs;
          double worst = 0.0;
          const int nc = coarse.dimension();
          std::vector<double> unit(nc, 0.0);
          for (int i = 0; i < nc; ++i) {
            unit[i] = 1.0;
            const auto col = transport_coeffs(coarse, mesh, unit);
            unit[i] = 0.0;
            double dot = 0.0;
            for (int j = 0; j < static_cast<int>(col.size()); ++j) dot += col[j] * resid(j);
            worst = std::max(worst, std::abs(dot));
          }
          d.galerkin_orth.push_back(worst);
        } else {
          d.galerkin_orth.push_back(std::numeric_limits<double>::quiet_NaN());
        }
      }

      // inverse-estimate probe: random coefficient vectors, fixed seed per level
      {
        std::vector<double> harc(mesh.num_elements());
        for (int e = 0; e < mesh.num_elements(); ++e) harc[e] = mesh.element_arclength(e);
        const Eigen::MatrixXd Mh = weighted_mass_matrix(mesh, harc, cfg.quad.order);
        std::mt19937 rng(12345u + 977u * static_cast<unsigned>(iter));
        std::normal_distribution<double> gauss(0.0, 1.0);
        double worst = 0.0;
        for (int probe = 0; probe < 20; ++probe) {
          Eigen::VectorXd psi(mesh.dimension());
          for (int i = 0; i < psi.size(); ++i) psi(i) = gauss(rng);
          const double num = std::sqrt(psi.dot(Mh * psi));
          const double den = energy_norm(psi, sys);
          if (den > 0) worst = std::max(worst, num / den);
        }
        d.inverse_ratio.push_back(worst);
      }
    }

    if (dumps.mesh.is_open()) write_mesh_block(mesh, cfg.geometry, iter, dumps.mesh);
    if (dumps.indicators.is_open()) write_indicator_block(mu, eta, iter, dumps.indicators);
    if (!cfg.dump_matrix_path.empty()) last_matrix = sys.matrix();

    const double est_total = std::sqrt(driving.total2());
    const bool stop = est_total <= 1e-12 || mesh.dimension() >= cfg.max_dofs ||
                      iter + 1 >= cfg.max_iters;

    MarkSet marks;
    if (!stop) {
      if (uniform) {
        marks.nodes = mesh.owned_nodes();
      } else {
        marks = doerfler_mark(driving, cfg.theta);
      }
    }
    rec.marked = static_cast<int>(marks.nodes.size());

    const auto toc = std::chrono::steady_clock::now();
    rec.seconds = std::chrono::duration<double>(toc - tic).count();
    report.records.push_back(rec);

    if (stop || marks.nodes.empty()) break;

    cum_marked += static_cast<int>(marks.nodes.size());
    std::optional<RefineResult> refined_opt;
    try {
      refined_opt.emplace(mesh.refine(marks));
    } catch (const RefinementError&) {
      // the marked element cannot be bisected in double precision; the mesh is
      // as deep as the arithmetic allows, so stop here
      break;
    }
    auto& refined = *refined_opt;

    if (cfg.collect_diagnostics) {
      auto& d = report.diag;
      const auto q2 = measure_patch_shrink(mesh, refined.mesh, refined.trace);
      if (q2 && (!std::isfinite(d.q2) || *q2 > d.q2)) d.q2 = *q2;
      d.traces.push_back(refined.trace);
      const int dk = refined.mesh.knot_count() - knots0;
      d.mesh_const = std::max(d.mesh_const, static_cast<double>(dk) / std::max(1, cum_marked));
    }

    mesh = std::move(refined.mesh);
  }

  if (dumps.matrix.is_open() && last_matrix.size() > 0) {
    char line[80];
    for (int i = 0; i < last_matrix.rows(); ++i)
      for (int j = 0; j < last_matrix.cols(); ++j) {
        std::snprintf(line, sizeof line, "%d %d %.17g\n", i, j, last_matrix(i, j));
        dumps.matrix << line;
      }
  }

  try {
    auto [s, q] = fit_rates(report);
    report.rate_s = s;
    report.factor_q = q;
  } catch (const std::domain_error&) {
    // too few iterations for a fit; leave NaN
  }

  if (!cfg.out_path.empty()) {
    std::ofstream os(cfg.out_path);
    if (!os) throw ConfigurationError("cannot open " + cfg.out_path);
    write_report(report, os);
  }
  return report;
}

} // namespace

RunReport adaptive_run(const RunConfig& config) { return run_loop(config, false); }

RunReport uniform_run(const RunConfig& config) { return run_loop(config, true); }

std::pair<double, double> fit_rates(const RunReport& report) {
  const auto& recs = report.records;
  const int L = static_cast<int>(recs.size());
  if (L < 5) throw std::domain_error("fit_rates: at least 5 iterations required");
  const int tail = std::max(5, (L + 1) / 2);
  const int first = L - tail;

  const bool use_eta = report.config.estimator == EstimatorKind::Eta;
  const int k0 = recs.front().knots;

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int i = first; i < L; ++i) {
    const double est = use_eta ? recs[i].eta : recs[i].mu;
    if (!(est > 0)) continue;
    const double x = std::log(static_cast<double>(recs[i].knots - k0 + 1));
    const double y = std::log(est);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 3) throw std::domain_error("fit_rates: not enough positive estimator values");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);

  double logq = 0;
  int m = 0;
  for (int i = std::max(first, 1); i < L; ++i) {
    const double e0 = use_eta ? recs[i - 1].eta : recs[i - 1].mu;
    const double e1 = use_eta ? recs[i].eta : recs[i].mu;
    if (e0 > 0 && e1 > 0) {
      logq += std::log(e1 / e0);
      ++m;
    }
  }
  const double q = m > 0 ? std::exp(logq / m) : std::numeric_limits<double>::quiet_NaN();
  return {-slope, q};
}

void write_report(const RunReport& report, std::ostream& os) {
  const RunConfig& c = report.config;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# {\"geometry\":\"%s\",\"rhs\":\"%s\",\"p\":%d,\"theta\":%.17g,"
                "\"estimator\":\"%s\",\"mode\":\"%s\",\"max_dofs\":%d,\"max_iters\":%d,"
                "\"n0\":%d,\"quad_n\":%d,\"quad_log_n\":%d}\n",
                c.geometry.c_str(), c.rhs.c_str(), c.p, c.theta,
                c.estimator == EstimatorKind::Mu ? "mu" : "eta",
                c.mode == RunMode::Adaptive ? "adaptive" : "uniform", c.max_dofs, c.max_iters,
                c.n0, c.quad.order, c.quad.log_order);
  os << buf;
  os << "iter,knots,dofs,mu,eta,energy_error,marked,kappa,seconds\n";
  for (const auto& r : report.records) {
    const double secs = c.deterministic_output ? 0.0 : r.seconds;
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%.17g,%d,%.17g,%.3f\n", r.iter,
                  r.knots, r.dofs, r.mu, r.eta, r.energy_error, r.marked, r.kappa, secs);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "# fit s=%.6g q=%.6g\n", report.rate_s, report.factor_q);
  os << buf;
}

void write_mesh_block(const KnotMesh& mesh, const std::string& geometry, int iter,
                      std::ostream& os) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "# p %d geometry %s iter %d\n", mesh.degree(),
                geometry.c_str(), iter);
  os << buf;
  for (int j = 0; j < mesh.num_nodes(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g %d\n", mesh.node_param(j), mesh.multiplicity(j));
    os << buf;
  }
  os << "\n";
}

void write_indicator_block(const IndicatorSet& mu, const IndicatorSet& eta, int iter,
                           std::ostream& os) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "# iter %d\n", iter);
  os << buf;
  os << "node_param, mu2, eta2\n";
  for (std::size_t i = 0; i < mu.values2.size(); ++i) {
    const double e2 = i < eta.values2.size() ? eta.values2[i] : 0.0;
    std::snprintf(buf, sizeof buf, "%.17g, %.17g, %.17g\n", mu.node_params[i], mu.values2[i],
                  e2);
    os << buf;
  }
  os << "\n";
}

} // namespace igabem
