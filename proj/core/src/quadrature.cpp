#include "igabem/quadrature.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "igabem/errors.hpp"

namespace igabem {

namespace {

// Golub-Welsch: nodes/weights of the Gauss rule from the monic three-term
// recurrence p_{k+1} = (t - alpha_k) p_k - beta_k p_{k-1}, beta_0 = total mass.
QuadRule golub_welsch(const std::vector<double>& alpha, const std::vector<double>& beta) {
  const int n = static_cast<int>(alpha.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = alpha[i];
    if (i + 1 < n) {
      const double off = std::sqrt(beta[i + 1]);
      J(i, i + 1) = off;
      J(i + 1, i) = off;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = beta[0] * v0 * v0;
  }
  return rule;
}

// monic recurrence of the shifted Legendre polynomials on [0,1]
void shifted_legendre_recurrence(int n, std::vector<double>& a, std::vector<double>& b) {
  a.assign(n, 0.5);
  b.assign(n, 0.0);
  b[0] = 1.0;
  for (int k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    b[k] = kk * kk / (4.0 * (4.0 * kk * kk - 1.0));
  }
}

} // namespace

QuadRule gauss_legendre(int n) {
  if (n < 1) throw std::domain_error("gauss_legendre: n >= 1 required");
  std::vector<double> a, b;
  shifted_legendre_recurrence(n, a, b);
  return golub_welsch(a, b);
}

QuadRule gauss_log(int n) {
  if (n < 1) throw std::domain_error("gauss_log: n >= 1 required");

  // Modified moments of w(t) = log(1/t) against monic shifted Legendre:
  //   m_0 = 1,  m_k = (-1)^k / (k(k+1)) * (k!)^2 / (2k)!
  const int m = 2 * n;
  std::vector<double> mom(m);
  mom[0] = 1.0;
  double lead = 1.0; // (k!)^2 / (2k)!
  for (int k = 1; k < m; ++k) {
    const double kk = static_cast<double>(k);
    lead *= kk / (2.0 * kk - 1.0) * kk / (2.0 * kk);
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    mom[k] = sign / (kk * (kk + 1.0)) * lead;
  }

  std::vector<double> a_aux, b_aux;
  shifted_legendre_recurrence(m, a_aux, b_aux);

  // modified Chebyshev algorithm (Gautschi)
  std::vector<double> alpha(n), beta(n);
  alpha[0] = a_aux[0] + mom[1] / mom[0];
  beta[0] = mom[0];

  std::vector<double> sig_km2(m, 0.0), sig_km1 = mom, sig_k(m, 0.0);
  for (int k = 1; k < n; ++k) {
    for (int l = k; l < m - k; ++l) {
      sig_k[l] = sig_km1[l + 1] - (alpha[k - 1] - a_aux[l]) * sig_km1[l] -
                 beta[k - 1] * sig_km2[l] + b_aux[l] * sig_km1[l - 1];
    }
    alpha[k] = a_aux[k] + sig_k[k + 1] / sig_k[k] - sig_km1[k] / sig_km1[k - 1];
    beta[k] = sig_k[k] / sig_km1[k - 1];
    sig_km2 = sig_km1;
    sig_km1 = sig_k;
    std::fill(sig_k.begin(), sig_k.end(), 0.0);
  }

  return golub_welsch(alpha, beta);
}

std::vector<QuadPoint2D> duffy_pairs(const QuadRule& rule_outer, const QuadRule& rule_inner,
                                     Separation separation) {
  std::vector<QuadPoint2D> pts;

  if (separation == Separation::Far) {
    pts.reserve(rule_outer.nodes.size() * rule_inner.nodes.size());
    for (std::size_t i = 0; i < rule_outer.nodes.size(); ++i)
      for (std::size_t j = 0; j < rule_inner.nodes.size(); ++j)
        pts.push_back({rule_outer.nodes[i], rule_inner.nodes[j],
                       rule_outer.weights[i] * rule_inner.weights[j]});
    return pts;
  }

  // geometric grading towards the singular line/corner: panels [2^-k-1, 2^-k];
  // resolves log singularities to ~1e-12 while staying exact on smooth parts
  constexpr int kPanels = 44;
  std::vector<std::pair<double, double>> panels;
  double hi = 1.0;
  for (int k = 0; k < kPanels; ++k) {
    const double lo = hi * 0.5;
    panels.emplace_back(lo, hi);
    hi = lo;
  }
  panels.emplace_back(0.0, hi);

  if (separation == Separation::Coincident) {
    // u = s - t:  I = int_0^1 du int_0^{1-u} F(t+u,t) + F(t,t+u) dt
    for (const auto& [ulo, uhi] : panels) {
      for (std::size_t i = 0; i < rule_outer.nodes.size(); ++i) {
        const double u = ulo + (uhi - ulo) * rule_outer.nodes[i];
        const double wu = (uhi - ulo) * rule_outer.weights[i];
        const double len = 1.0 - u;
        if (len <= 0) continue;
        for (std::size_t j = 0; j < rule_inner.nodes.size(); ++j) {
          const double t = len * rule_inner.nodes[j];
          const double w = wu * len * rule_inner.weights[j];
          pts.push_back({t + u, t, w});
          pts.push_back({t, t + u, w});
        }
      }
    }
    return pts;
  }

  // Adjacent: the two factors meet at the corner (s,t) = (1,0) -- s lives on the
  // left element, t on the right one. Grade the distance-to-corner coordinate.
  // Split the square into the two Duffy triangles around the corner.
  for (const auto& [rlo, rhi] : panels) {
    for (std::size_t i = 0; i < rule_outer.nodes.size(); ++i) {
      const double r = rlo + (rhi - rlo) * rule_outer.nodes[i];
      const double wr = (rhi - rlo) * rule_outer.weights[i];
      for (std::size_t j = 0; j < rule_inner.nodes.size(); ++j) {
        const double q = rule_inner.nodes[j];
        const double wq = rule_inner.weights[j];
        // triangle 1: (1-s) = r, t = r q ; triangle 2: t = r, (1-s) = r q
        pts.push_back({1.0 - r, r * q, wr * wq * r});
        pts.push_back({1.0 - r * q, r, wr * wq * r});
      }
    }
  }
  return pts;
}

} // namespace igabem
