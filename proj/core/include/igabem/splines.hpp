#ifndef IGABEM_SPLINES_HPP
#define IGABEM_SPLINES_HPP

#include <span>
#include <vector>

#include "igabem/geometry.hpp" // Side

namespace igabem {

/// Clamped knot vector on [a,b]: the first and last breakpoint carry
/// multiplicity exactly p+1, interior multiplicities are in {1,...,p+1}.
/// Closed-curve (periodic) spaces use the same clamped storage: with the
/// conventional seam multiplicity p+1 the periodic extension of the knot
/// window materializes to exactly this vector, and the space dimension equals
/// the number of knots in the window (a,b].
class KnotVector {
public:
  KnotVector(int degree, std::vector<double> knots, bool closed = false);

  int degree() const { return p_; }
  bool closed() const { return closed_; }
  const std::vector<double>& knots() const { return knots_; }
  double param_begin() const { return knots_.front(); }
  double param_end() const { return knots_.back(); }

  /// Number of B-spline basis functions: |knots| - p - 1.
  int num_basis() const { return static_cast<int>(knots_.size()) - p_ - 1; }

  /// Index of the knot span containing t. Side::Right gives the span with
  /// knots[s] <= t < knots[s+1] (right-continuity), Side::Left the span with
  /// knots[s] < t <= knots[s+1]. Clamped to valid spans, so t = b evaluates
  /// the left limit.
  int find_span(double t, Side side = Side::Right) const;

  /// B_{i,p}(t) by the Cox-de Boor recursion with the 0/0 := 0 convention;
  /// uses only the knots t_i,...,t_{i+p+1} of the function itself.
  double eval_basis(int i, double t, Side side = Side::Right) const;

  /// d/dt B_{i,p}(t); one-sided at knots per `side`. Degree 0 is unsupported.
  double eval_basis_deriv(int i, double t, Side side = Side::Right) const;

  /// Values of the p+1 basis functions active on `span` at t
  /// (indices span-p ... span), written to out[0..p].
  void eval_all(double t, int span, std::span<double> out) const;

  /// Values and first derivatives of the active functions.
  void eval_all_derivs(double t, int span, std::span<double> values,
                       std::span<double> derivs) const;

private:
  int p_;
  std::vector<double> knots_;
  bool closed_;
};

/// NURBS space R_{i,p} = w_i B_{i,p} / sum_l w_l B_{l,p} over a clamped knot
/// vector; one positive weight per basis function.
class NurbsSpace {
public:
  NurbsSpace(KnotVector kv, std::vector<double> weights);

  const KnotVector& knot_vector() const { return kv_; }
  const std::vector<double>& weights() const { return weights_; }
  int dimension() const { return kv_.num_basis(); }
  int degree() const { return kv_.degree(); }

  /// R_{i,p}(t); the denominator runs over the <= p+1 active functions.
  double eval(int i, double t, Side side = Side::Right) const;

  /// Values of the active NURBS functions on `span` at t (indices span-p..span).
  void eval_all(double t, int span, std::span<double> out) const;

  /// Value of sum_i coeffs[i] R_i(t).
  double eval_function(std::span<const double> coeffs, double t,
                       Side side = Side::Right) const;

private:
  KnotVector kv_;
  std::vector<double> weights_;
};

/// Boehm single-knot insertion with weight propagation: the returned space and
/// coefficients represent the same rational function, and the NURBS
/// denominator is unchanged. Throws RefinementError if the multiplicity of
/// new_knot would exceed p+1.
struct InsertResult {
  NurbsSpace space;
  std::vector<double> coeffs;
};

InsertResult knot_insert(const NurbsSpace& space, std::span<const double> coeffs,
                         double new_knot);

} // namespace igabem

#endif
