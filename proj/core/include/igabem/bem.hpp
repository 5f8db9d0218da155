#ifndef IGABEM_BEM_HPP
#define IGABEM_BEM_HPP

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <memory>
#include <string>

#include "igabem/mesh.hpp"
#include "igabem/quadrature.hpp"

namespace igabem {

/// Dirichlet datum f of V phi = f, evaluated at (gamma(t), t). `f_deriv` is
/// the optional arclength derivative, used for validation only; the residual
/// machinery differentiates interpolants instead. `reference_energy` is
/// <f, phi> when known (exactly or extrapolated), NaN otherwise.
struct ProblemData {
  std::string name;
  std::function<double(const Vec2&, double)> f;
  std::function<double(const Vec2&, double)> f_deriv;
  double reference_energy = std::numeric_limits<double>::quiet_NaN();
};

struct QuadConfig {
  int order = 16;     // Gauss order for element integrals
  int log_order = 16; // order of the log-weighted rule
  int eta_order = 12; // per-direction order for the Faermann double integrals
  int residual_k = 8; // residual samples per element
  int threads = 1;    // assembly threads (deterministic for a fixed value)
};

/// Dense Galerkin system A_ij = <V R_j, R_i>, b_i = <f, R_i>.
class GalerkinSystem {
public:
  GalerkinSystem(std::shared_ptr<const KnotMesh> mesh, Eigen::MatrixXd matrix,
                 Eigen::VectorXd load)
      : mesh_(std::move(mesh)), A_(std::move(matrix)), b_(std::move(load)) {}

  const Eigen::MatrixXd& matrix() const { return A_; }
  const Eigen::VectorXd& load() const { return b_; }
  const KnotMesh& mesh() const { return *mesh_; }
  std::shared_ptr<const KnotMesh> mesh_ptr() const { return mesh_; }
  int size() const { return static_cast<int>(A_.rows()); }

private:
  std::shared_ptr<const KnotMesh> mesh_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
};

/// Discrete density Phi = sum_i coeffs[i] R_i on the mesh's NURBS space.
struct Density {
  std::shared_ptr<const KnotMesh> mesh;
  Eigen::VectorXd coeffs;
};

/// Element-pairwise Galerkin assembly with separation-classified quadrature:
/// plain tensor rules for well-separated pairs, kernel splitting
/// log|x-y| = log(|x-y|/|s-t|) + log|s-t| with the log-weighted rule on the
/// relative coordinate for coincident/adjacent pairs. Throws AssemblyError on
/// non-finite quadrature values.
GalerkinSystem assemble(std::shared_ptr<const KnotMesh> mesh, const ProblemData& problem,
                        const QuadConfig& quad);

/// SPD factorization with one step of iterative refinement; relative residual
/// must reach 1e-12 or a NumericalError is thrown.
Density solve(const GalerkinSystem& system);

/// (V Phi)(gamma(t)).
double eval_V(const Density& density, double t, const QuadConfig& quad);

/// Residual r = f - V Phi and its arclength derivative, sampled at k Gauss
/// points per element; derivatives come from the per-element polynomial
/// interpolant of r (chain rule through |gamma'|).
struct ResidualTable {
  int k = 0;
  int num_elements = 0;
  std::vector<double> ref_nodes;   // k Gauss nodes on [0,1]
  std::vector<double> ref_weights; // their weights
  std::vector<double> bary;        // barycentric weights of ref_nodes
  // flattened [element][sample]:
  std::vector<double> params; // global parameter of each sample
  std::vector<double> r;      // residual values
  std::vector<double> dr;     // arclength derivative of the residual
  std::vector<double> speed;  // |gamma'| at the samples

  double r_value(int element, int sample) const { return r[element * k + sample]; }
  double dr_value(int element, int sample) const { return dr[element * k + sample]; }

  /// Interpolated residual at local coordinate xi in [0,1] of `element`.
  double r_at(int element, double xi) const;
  /// Interpolated arclength derivative at local coordinate xi.
  double dr_at(int element, double xi) const;
};

ResidualTable residual_samples(const Density& density, const ProblemData& problem, int k,
                               const QuadConfig& quad);

/// Energy norm sqrt(a^T A a) of a coefficient vector in the system's space.
double energy_norm(const Eigen::VectorXd& coeffs, const GalerkinSystem& system);

/// ||f||_{L2(Gamma)} by per-element Gauss quadrature.
double l2_norm_f(const KnotMesh& mesh, const ProblemData& problem, int order = 16);

/// Weighted mass matrix M_ab = sum_T w_T int_T R_a R_b ds (arclength); used
/// for norms like ||h^{1/2} Psi||_{L2} with w_T = h_T.
Eigen::MatrixXd weighted_mass_matrix(const KnotMesh& mesh, std::span<const double> elem_weight,
                                     int order = 16);

} // namespace igabem

#endif
