#include "igabem/splines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "igabem/errors.hpp"

namespace igabem {

KnotVector::KnotVector(int degree, std::vector<double> knots, bool closed)
    : p_(degree), knots_(std::move(knots)), closed_(closed) {
  if (p_ < 0) throw ConfigurationError("KnotVector: degree >= 0 required");
  if (static_cast<int>(knots_.size()) < 2 * (p_ + 1))
    throw ConfigurationError("KnotVector: too few knots");
  for (std::size_t i = 1; i < knots_.size(); ++i)
    if (knots_[i] < knots_[i - 1]) throw ConfigurationError("KnotVector: knots must be nondecreasing");
  // clamped ends with multiplicity exactly p+1
  const double a = knots_.front(), b = knots_.back();
  if (knots_[p_] != a || knots_[p_ + 1] == a)
    throw ConfigurationError("KnotVector: first breakpoint must have multiplicity p+1");
  const int n = static_cast<int>(knots_.size());
  if (knots_[n - p_ - 1] != b || knots_[n - p_ - 2] == b)
    throw ConfigurationError("KnotVector: last breakpoint must have multiplicity p+1");
  // interior multiplicities <= p+1
  int run = 1;
  for (int i = p_ + 2; i < n - p_ - 1; ++i) {
    run = (knots_[i] == knots_[i - 1]) ? run + 1 : 1;
    if (run > p_ + 1) throw ConfigurationError("KnotVector: interior multiplicity exceeds p+1");
  }
}

int KnotVector::find_span(double t, Side side) const {
  const int n = static_cast<int>(knots_.size());
  const int lo = p_, hi = n - p_ - 2; // valid span range
  if (side == Side::Right) {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    int s = static_cast<int>(it - knots_.begin()) - 1;
    return std::clamp(s, lo, hi);
  }
  auto it = std::lower_bound(knots_.begin(), knots_.end(), t);
  int s = static_cast<int>(it - knots_.begin()) - 1;
  return std::clamp(s, lo, hi);
}

double KnotVector::eval_basis(int i, double t, Side side) const {
  if (i < 0 || i >= num_basis()) throw std::domain_error("eval_basis: index out of range");
  // Cox-de Boor on the local knots only; B_i is completely determined by
  // knots_[i..i+p+1]
  const int p = p_;
  std::vector<double> N(p + 1, 0.0);
  for (int j = 0; j <= p; ++j) {
    const double tl = knots_[i + j], tr = knots_[i + j + 1];
    const bool in = (side == Side::Right) ? (tl <= t && t < tr) : (tl < t && t <= tr);
    N[j] = in ? 1.0 : 0.0;
  }
  for (int d = 1; d <= p; ++d) {
    for (int j = 0; j + d <= p; ++j) {
      const double tl1 = knots_[i + j], tr1 = knots_[i + j + d];
      const double tl2 = knots_[i + j + 1], tr2 = knots_[i + j + d + 1];
      double left = 0.0, right = 0.0;
      if (tr1 != tl1) left = (t - tl1) / (tr1 - tl1) * N[j];
      if (tr2 != tl2) right = (tr2 - t) / (tr2 - tl2) * N[j + 1];
      N[j] = left + right;
    }
  }
  return N[0];
}

double KnotVector::eval_basis_deriv(int i, double t, Side side) const {
  if (p_ == 0) throw UnsupportedError("eval_basis_deriv: degree 0 has no derivative");
  if (i < 0 || i >= num_basis()) throw std::domain_error("eval_basis_deriv: index out of range");
  // d/dt B_{i,p} = p [ B_{i,p-1}/(t_{i+p}-t_i) - B_{i+1,p-1}/(t_{i+p+1}-t_{i+1}) ]
  // with 0-division terms dropped; lower-degree functions on the same knots
  auto lower = [&](int j) -> double {
    std::vector<double> N(p_, 0.0);
    for (int k = 0; k < p_; ++k) {
      const double tl = knots_[j + k], tr = knots_[j + k + 1];
      const bool in = (side == Side::Right) ? (tl <= t && t < tr) : (tl < t && t <= tr);
      N[k] = in ? 1.0 : 0.0;
    }
    for (int d = 1; d <= p_ - 1; ++d) {
      for (int k = 0; k + d <= p_ - 1; ++k) {
        const double tl1 = knots_[j + k], tr1 = knots_[j + k + d];
        const double tl2 = knots_[j + k + 1], tr2 = knots_[j + k + d + 1];
        double left = 0.0, right = 0.0;
        if (tr1 != tl1) left = (t - tl1) / (tr1 - tl1) * N[k];
        if (tr2 != tl2) right = (tr2 - t) / (tr2 - tl2) * N[k + 1];
        N[k] = left + right;
      }
    }
    return N[0];
  };
  double d = 0.0;
  const double den1 = knots_[i + p_] - knots_[i];
  const double den2 = knots_[i + p_ + 1] - knots_[i + 1];
  if (den1 != 0.0) d += lower(i) / den1;
  if (den2 != 0.0) d -= lower(i + 1) / den2;
  return p_ * d;
}

void KnotVector::eval_all(double t, int span, std::span<double> out) const {
  // standard triangular scheme: out[j] = B_{span-p+j}(t), j = 0..p
  const int p = p_;
  std::vector<double> left(p + 1), right(p + 1);
  out[0] = 1.0;
  for (int d = 1; d <= p; ++d) {
    left[d] = t - knots_[span + 1 - d];
    right[d] = knots_[span + d] - t;
    double saved = 0.0;
    for (int r = 0; r < d; ++r) {
      const double den = right[r + 1] + left[d - r];
      const double tmp = (den != 0.0) ? out[r] / den : 0.0;
      out[r] = saved + right[r + 1] * tmp;
      saved = left[d - r] * tmp;
    }
    out[d] = saved;
  }
}

void KnotVector::eval_all_derivs(double t, int span, std::span<double> values,
                                 std::span<double> derivs) const {
  const int p = p_;
  eval_all(t, span, values);
  if (p == 0) {
    derivs[0] = 0.0;
    return;
  }
  // derivatives from the degree p-1 functions on the same span
  std::vector<double> lower(p, 0.0);
  {
    std::vector<double> left(p), right(p);
    lower[0] = 1.0;
    for (int d = 1; d <= p - 1; ++d) {
      left[d] = t - knots_[span + 1 - d];
      right[d] = knots_[span + d] - t;
      double saved = 0.0;
      for (int r = 0; r < d; ++r) {
        const double den = right[r + 1] + left[d - r];
        const double tmp = (den != 0.0) ? lower[r] / den : 0.0;
        lower[r] = saved + right[r + 1] * tmp;
        saved = left[d - r] * tmp;
      }
      lower[d] = saved;
    }
  }
  for (int j = 0; j <= p; ++j) {
    const int i = span - p + j;
    double d = 0.0;
    const double den1 = knots_[i + p] - knots_[i];
    const double den2 = knots_[i + p + 1] - knots_[i + 1];
    // lower[k] = B_{span-(p-1)+k, p-1}; function i of degree p-1 is k = i - span + p - 1
    const int k1 = j - 1, k2 = j;
    if (den1 != 0.0 && k1 >= 0 && k1 <= p - 1) d += lower[k1] / den1;
    if (den2 != 0.0 && k2 >= 0 && k2 <= p - 1) d -= lower[k2] / den2;
    derivs[j] = p * d;
  }
}

NurbsSpace::NurbsSpace(KnotVector kv, std::vector<double> weights)
    : kv_(std::move(kv)), weights_(std::move(weights)) {
  if (static_cast<int>(weights_.size()) != kv_.num_basis())
    throw ConfigurationError("NurbsSpace: one weight per basis function required");
  for (double w : weights_)
    if (!(w > 0.0)) throw ConfigurationError("NurbsSpace: weights must be positive");
}

double NurbsSpace::eval(int i, double t, Side side) const {
  if (i < 0 || i >= dimension()) throw std::domain_error("NurbsSpace::eval: index out of range");
  const int p = kv_.degree();
  const int span = kv_.find_span(t, side);
  if (i < span - p || i > span) return 0.0;
  std::vector<double> vals(p + 1);
  kv_.eval_all(t, span, vals);
  double den = 0.0;
  for (int j = 0; j <= p; ++j) den += weights_[span - p + j] * vals[j];
  return weights_[i] * vals[i - span + p] / den;
}

void NurbsSpace::eval_all(double t, int span, std::span<double> out) const {
  const int p = kv_.degree();
  kv_.eval_all(t, span, out);
  double den = 0.0;
  for (int j = 0; j <= p; ++j) {
    out[j] *= weights_[span - p + j];
    den += out[j];
  }
  for (int j = 0; j <= p; ++j) out[j] /= den;
}

double NurbsSpace::eval_function(std::span<const double> coeffs, double t, Side side) const {
  const int p = kv_.degree();
  const int span = kv_.find_span(t, side);
  std::vector<double> vals(p + 1);
  eval_all(t, span, vals);
  double s = 0.0;
  for (int j = 0; j <= p; ++j) s += coeffs[span - p + j] * vals[j];
  return s;
}

InsertResult knot_insert(const NurbsSpace& space, std::span<const double> coeffs,
                         double new_knot) {
  const KnotVector& kv = space.knot_vector();
  const int p = kv.degree();
  const auto& U = kv.knots();
  const int nb = kv.num_basis();
  if (static_cast<int>(coeffs.size()) != nb)
    throw ConfigurationError("knot_insert: coefficient count mismatch");
  if (!(new_knot > kv.param_begin() && new_knot < kv.param_end()))
    throw RefinementError("knot_insert: knot must lie strictly inside the parameter window");
  const long mult =
      std::count_if(U.begin(), U.end(), [&](double u) { return u == new_knot; });
  if (mult >= p + 1) throw RefinementError("knot_insert: multiplicity would exceed p+1");

  const int k = kv.find_span(new_knot, Side::Right);

  // Boehm in homogeneous coordinates: numerator q_i = a_i w_i and the weights
  // transform with the same convex combinations, so the denominator function
  // (and hence every represented NURBS) is unchanged.
  std::vector<double> q(nb), w = space.weights();
  for (int i = 0; i < nb; ++i) q[i] = coeffs[i] * w[i];

  std::vector<double> qn(nb + 1), wn(nb + 1);
  for (int i = 0; i <= k - p; ++i) {
    qn[i] = q[i];
    wn[i] = w[i];
  }
  for (int i = k - p + 1; i <= k; ++i) {
    const double den = U[i + p] - U[i];
    const double alpha = (den != 0.0) ? (new_knot - U[i]) / den : 0.0;
    qn[i] = alpha * q[i] + (1.0 - alpha) * q[i - 1];
    wn[i] = alpha * w[i] + (1.0 - alpha) * w[i - 1];
  }
  for (int i = k + 1; i <= nb; ++i) {
    qn[i] = q[i - 1];
    wn[i] = w[i - 1];
  }

  std::vector<double> knots_new = U;
  knots_new.insert(knots_new.begin() + (k + 1), new_knot);

  std::vector<double> coeffs_new(nb + 1);
  for (int i = 0; i <= nb; ++i) coeffs_new[i] = qn[i] / wn[i];

  return InsertResult{NurbsSpace(KnotVector(p, std::move(knots_new), kv.closed()), std::move(wn)),
                      std::move(coeffs_new)};
}

} // namespace igabem
