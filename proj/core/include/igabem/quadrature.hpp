#ifndef IGABEM_QUADRATURE_HPP
#define IGABEM_QUADRATURE_HPP

#include <vector>

namespace igabem {

/// A positive quadrature rule on the reference interval [0,1].
struct QuadRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  int size() const { return static_cast<int>(nodes.size()); }

  template <class F>
  double apply(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }

  /// Same rule affinely mapped to [a,b].
  template <class F>
  double apply(F&& f, double a, double b) const {
    const double h = b - a;
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(a + h * nodes[i]);
    return s * h;
  }
};

/// n-point Gauss-Legendre rule on [0,1]; exact for polynomials of degree 2n-1.
QuadRule gauss_legendre(int n);

/// n-point Gauss rule for the weight log(1/t) on [0,1]:
///   sum_i w_i f(t_i) = int_0^1 f(t) log(1/t) dt   exactly for deg(f) <= 2n-1.
/// Built by the modified Chebyshev algorithm from shifted-Legendre moments,
/// then Golub-Welsch.
QuadRule gauss_log(int n);

enum class Separation { Coincident, Adjacent, Far };

struct QuadPoint2D {
  double s;
  double t;
  double w;
};

/// Tensor quadrature on [0,1]^2 adapted to the separation of the two factors:
///  - Far: plain tensor product of the two rules.
///  - Coincident: relative-coordinate transform u = s-t with a composite rule
///    in u geometrically graded towards u = 0; integrates smooth integrands as
///    well as integrands with a log|s-t| factor to ~1e-10.
///  - Adjacent: same grading towards the shared corner (s,t) = (0,0), i.e. for
///    factors that meet at s = 0 resp. t = 0 of their local coordinates.
std::vector<QuadPoint2D> duffy_pairs(const QuadRule& rule_outer, const QuadRule& rule_inner,
                                     Separation separation);

} // namespace igabem

#endif
