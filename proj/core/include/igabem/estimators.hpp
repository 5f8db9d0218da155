#ifndef IGABEM_ESTIMATORS_HPP
#define IGABEM_ESTIMATORS_HPP

#include <span>
#include <vector>

#include "igabem/bem.hpp"
#include "igabem/mesh.hpp"

namespace igabem {

enum class EstimatorKind { Mu, Eta };

/// Node-based squared refinement indicators; total() is the squared estimator.
struct IndicatorSet {
  EstimatorKind kind = EstimatorKind::Mu;
  std::vector<int> node_ids;       // mesh node indices (owned nodes)
  std::vector<double> node_params; // parameters, parallel to node_ids
  std::vector<double> values2;     // squared indicators

  double total2() const {
    double s = 0;
    for (double v : values2) s += v;
    return s;
  }
};

/// Weighted-residual indicators
///   mu(z)^2 = |gamma^-1(omega(z))| * ||d/ds (f - V Phi)||^2_{L2(omega(z))}.
/// The patch measure is the parameter length, the L2 norm is in arclength.
IndicatorSet mu_indicators(const KnotMesh& mesh, const ResidualTable& residual);

/// Faermann indicators: the Sobolev-Slobodeckij 1/2-seminorm of the residual
/// over the node patch, as element-pair double integrals of
/// |r(x)-r(y)|^2 / |x-y|^2 in arclength measure. Same-element pairs are smooth
/// after dividing differences; adjacent pairs use the relative-coordinate
/// substitution with a difference-quotient guard near the shared node.
IndicatorSet eta_indicators(const KnotMesh& mesh, const ResidualTable& residual,
                            int order = 12);

/// Per-element rho(T)^2 = h_T * ||d/ds r||^2_{L2(T)} with the parameter length
/// h_T as weight.
std::vector<double> rho_indicators(const KnotMesh& mesh, const ResidualTable& residual);

/// Per-element rho~(T)^2, weighted by the modified mesh-size instead.
std::vector<double> rho_tilde_indicators(const KnotMesh& mesh, const ResidualTable& residual,
                                         std::span<const double> tilde_h);

/// Per-element ||d/ds r||^2_{L2(T)} in arclength (building block of the above).
std::vector<double> dr_mass(const KnotMesh& mesh, const ResidualTable& residual);

} // namespace igabem

#endif
