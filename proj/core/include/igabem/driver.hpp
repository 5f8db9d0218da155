#ifndef IGABEM_DRIVER_HPP
#define IGABEM_DRIVER_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "igabem/bem.hpp"
#include "igabem/estimators.hpp"
#include "igabem/mesh.hpp"

namespace igabem {

enum class RunMode { Adaptive, Uniform };

struct RunConfig {
  std::string geometry = "slit";
  std::string rhs = "one"; // one | harmonic | xabs06
  int p = 0;
  double theta = 0.5;
  EstimatorKind estimator = EstimatorKind::Mu;
  RunMode mode = RunMode::Adaptive;
  int max_dofs = 2000;
  int max_iters = 400;
  int n0 = 8;
  std::vector<double> initial_weights; // empty = all ones
  QuadConfig quad;
  bool collect_diagnostics = true;

  std::string out_path;             // report file ("" = stdout-only via CLI)
  std::string dump_mesh_path;       // per-iteration mesh trace
  std::string dump_indicators_path; // per-iteration indicator CSV
  std::string dump_matrix_path;     // final system, "i j value" triplets
  bool deterministic_output = false; // zero the seconds column

  void validate() const; // throws ConfigurationError
};

struct IterationRecord {
  int iter = 0;
  int knots = 0;
  int dofs = 0;
  double mu = 0;
  double eta = 0;
  double energy_error = std::numeric_limits<double>::quiet_NaN();
  int marked = 0;
  double kappa = 1;
  double seconds = 0;
};

/// Heavier per-level data kept for the property checks and diagnostics the
/// run-level tests need; skipped when RunConfig::collect_diagnostics is off.
struct RunDiagnostics {
  std::vector<KnotMesh> meshes;
  std::vector<Eigen::VectorXd> solutions;
  std::vector<double> energy2;              // <f, Phi_l> = ||Phi_l||_V^2
  std::vector<std::vector<double>> dr_mass; // per level, per element
  std::vector<RefineTrace> traces;          // between consecutive levels
  std::vector<double> energy_diff;          // ||Phi_{l+1} - Phi_l||_V
  std::vector<double> galerkin_orth;        // max |<f - V Phi_{l+1}, coarse basis>|
  std::vector<double> inverse_ratio;        // max ||h^1/2 Psi||_L2 / ||Psi||_V over probes
  std::vector<int> cum_marked;              // sum_{j<l} |M_j|
  double q2 = std::numeric_limits<double>::quiet_NaN(); // measured patch shrink
  double mesh_const = 0;                    // measured (M3) constant
  double f_l2 = 0;                          // ||f||_{L2(Gamma)} on the initial mesh
};

struct RunReport {
  RunConfig config;
  std::vector<IterationRecord> records;
  double rate_s = std::numeric_limits<double>::quiet_NaN();
  double factor_q = std::numeric_limits<double>::quiet_NaN();
  RunDiagnostics diag;
};

/// Dörfler marking: the exactly minimal set of nodes carrying a theta-fraction
/// of the total squared indicator (greedy on descending indicators, ties by
/// node parameter ascending). Zero total marks nothing.
MarkSet doerfler_mark(const IndicatorSet& indicators, double theta);

/// Shipped right-hand sides; reference energies <f, phi> are exact where a
/// closed form exists and extrapolated otherwise (NaN when unknown).
ProblemData make_problem(const std::string& rhs, const ParamCurve& curve);

RunReport adaptive_run(const RunConfig& config);
RunReport uniform_run(const RunConfig& config);

/// (s, q): s = -slope of log(estimator) vs log(|K_l|-|K_0|+1) over the last
/// ceil(L/2) iterations (at least 5); q = geometric mean of the successive
/// estimator ratios over the same tail.
std::pair<double, double> fit_rates(const RunReport& report);

/// Report file: config echoed as a JSON line, CSV records, fit summary line.
void write_report(const RunReport& report, std::ostream& os);

/// Line-oriented mesh trace block: header with p and geometry, then one line
/// per node "param multiplicity".
void write_mesh_block(const KnotMesh& mesh, const std::string& geometry, int iter,
                      std::ostream& os);

/// Indicator CSV block: "node_param, mu2, eta2".
void write_indicator_block(const IndicatorSet& mu, const IndicatorSet& eta, int iter,
                           std::ostream& os);

} // namespace igabem

#endif
