#include "igabem/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "igabem/errors.hpp"
#include "igabem/quadrature.hpp"

namespace igabem {

namespace {

// elements adjacent to a node, ordered (left, right); wraps on closed curves
std::vector<int> node_patch(const KnotMesh& mesh, int node) {
  const int E = mesh.num_elements();
  const int n = mesh.num_nodes() - 1;
  std::vector<int> out;
  if (mesh.closed()) {
    const int jc = (node == 0) ? n : node;
    out.push_back((jc + E - 1) % E);
    out.push_back(jc % E);
  } else {
    if (node > 0) out.push_back(node - 1);
    if (node < n) out.push_back(node);
  }
  return out;
}

double elem_speed(const KnotMesh& mesh, int e, double t) {
  const double zr = mesh.node_param(e + 1);
  return t >= zr ? mesh.curve().speed(t, Side::Left) : mesh.curve().speed(t, Side::Right);
}

} // namespace

std::vector<double> dr_mass(const KnotMesh& mesh, const ResidualTable& tab) {
  if (tab.num_elements != mesh.num_elements())
    throw std::domain_error("residual table does not cover this mesh");
  std::vector<double> mass(mesh.num_elements(), 0.0);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double h = mesh.element_length(e);
    double acc = 0.0;
    for (int q = 0; q < tab.k; ++q) {
      const double d = tab.dr_value(e, q);
      acc += tab.ref_weights[q] * h * tab.speed[e * tab.k + q] * d * d;
    }
    mass[e] = acc;
  }
  return mass;
}

IndicatorSet mu_indicators(const KnotMesh& mesh, const ResidualTable& tab) {
  const auto mass = dr_mass(mesh, tab);
  IndicatorSet set;
  set.kind = EstimatorKind::Mu;
  for (int z : mesh.owned_nodes()) {
    double patch_len = 0.0, patch_mass = 0.0;
    for (int e : node_patch(mesh, z)) {
      patch_len += mesh.element_length(e);
      patch_mass += mass[e];
    }
    set.node_ids.push_back(z);
    set.node_params.push_back(mesh.node_param(z));
    set.values2.push_back(patch_len * patch_mass);
  }
  return set;
}

namespace {

// same-element double integral of |r(x)-r(y)|^2/|x-y|^2 in arclength measure;
// the divided-difference integrand is smooth up to the diagonal
double eta_same_element(const KnotMesh& mesh, const ResidualTable& tab, int e,
                        const QuadRule& rule, double guard_len) {
  const ParamCurve& curve = mesh.curve();
  const double z0 = mesh.node_param(e), h = mesh.element_length(e);
  double acc = 0.0;
  for (int q = 0; q < rule.size(); ++q) {
    const double xs = rule.nodes[q];
    const double s = z0 + h * xs;
    const Vec2 gs = curve.eval(s);
    const double rs = tab.r_at(e, xs);
    const double cs = rule.weights[q] * h * elem_speed(mesh, e, s);
    for (int m = 0; m < rule.size(); ++m) {
      const double xt = rule.nodes[m];
      const double t = z0 + h * xt;
      double val;
      if (std::abs(s - t) < guard_len) {
        const double mid = 0.5 * (xs + xt);
        val = tab.dr_at(e, mid);
        val = val * val;
      } else {
        const Vec2 gt = curve.eval(t);
        const double dr = rs - tab.r_at(e, xt);
        val = dr * dr / (gs - gt).squared_norm();
      }
      acc += cs * rule.weights[m] * h * elem_speed(mesh, e, t) * val;
    }
  }
  return acc;
}

// adjacent pair (el left of er through the shared node); counted once, the
// caller doubles it. Substitution u = parameter distance through the node.
double eta_adjacent(const KnotMesh& mesh, const ResidualTable& tab, int el, int er,
                    const QuadRule& rule, double guard_len) {
  const ParamCurve& curve = mesh.curve();
  const double hl = mesh.element_length(el), hr = mesh.element_length(er);
  const double zl0 = mesh.node_param(el), zr0 = mesh.node_param(er);

  auto integrand = [&](double xi, double eta) {
    // xi, eta: local distance from the shared node into el resp. er
    const double s = zl0 + hl * (1.0 - xi);
    const double t = zr0 + hr * eta;
    const double d = hl * xi + hr * eta;
    double val;
    if (d < guard_len) {
      const double v = 0.5 * (tab.dr_at(el, 1.0 - xi) + tab.dr_at(er, eta));
      val = v * v;
    } else {
      const Vec2 gs = curve.eval(s);
      const Vec2 gt = curve.eval(t);
      const double dr = tab.r_at(el, 1.0 - xi) - tab.r_at(er, eta);
      val = dr * dr / (gs - gt).squared_norm();
    }
    return val * elem_speed(mesh, el, s) * elem_speed(mesh, er, t);
  };

  // chord integrals over u = hl*xi + hr*eta, pieces split where the chord kinks
  const double m = std::min(hl, hr), M = std::max(hl, hr), H = hl + hr;
  double acc = 0.0;
  for (const auto& piece : {std::pair{0.0, m}, std::pair{m, M}, std::pair{M, H}}) {
    const double plen = piece.second - piece.first;
    if (plen <= 0) continue;
    for (int q = 0; q < rule.size(); ++q) {
      const double u = piece.first + plen * rule.nodes[q];
      const double xi_hi = std::min(1.0, u / hl);
      const double xi_lo = std::max(0.0, (u - hr) / hl);
      const double len = xi_hi - xi_lo;
      if (len <= 0) continue;
      double inner = 0.0;
      for (int r = 0; r < rule.size(); ++r) {
        const double xi = xi_lo + len * rule.nodes[r];
        const double eta = (u - hl * xi) / hr;
        inner += rule.weights[r] * integrand(xi, std::clamp(eta, 0.0, 1.0));
      }
      acc += rule.weights[q] * plen * len * hl * inner;
    }
  }
  return acc;
}

} // namespace

IndicatorSet eta_indicators(const KnotMesh& mesh, const ResidualTable& tab, int order) {
  if (tab.num_elements != mesh.num_elements())
    throw std::domain_error("residual table does not cover this mesh");
  const QuadRule rule = gauss_legendre(order);

  IndicatorSet set;
  set.kind = EstimatorKind::Eta;
  for (int z : mesh.owned_nodes()) {
    const auto patch = node_patch(mesh, z);
    double patch_len = 0.0;
    for (int e : patch) patch_len += mesh.element_length(e);
    const double guard = 1e-6 * patch_len;

    double acc = 0.0;
    for (int e : patch) acc += eta_same_element(mesh, tab, e, rule, guard);
    if (patch.size() == 2 && patch[0] != patch[1])
      acc += 2.0 * eta_adjacent(mesh, tab, patch[0], patch[1], rule, guard);

    set.node_ids.push_back(z);
    set.node_params.push_back(mesh.node_param(z));
    set.values2.push_back(acc);
  }
  return set;
}

std::vector<double> rho_indicators(const KnotMesh& mesh, const ResidualTable& tab) {
  auto mass = dr_mass(mesh, tab);
  for (int e = 0; e < mesh.num_elements(); ++e) mass[e] *= mesh.element_length(e);
  return mass;
}

std::vector<double> rho_tilde_indicators(const KnotMesh& mesh, const ResidualTable& tab,
                                         std::span<const double> tilde_h) {
  if (static_cast<int>(tilde_h.size()) != mesh.num_elements())
    throw std::domain_error("rho_tilde: tilde_h size mismatch");
  auto mass = dr_mass(mesh, tab);
  for (int e = 0; e < mesh.num_elements(); ++e) mass[e] *= tilde_h[e];
  return mass;
}

} // namespace igabem
