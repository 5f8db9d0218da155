#ifndef IGABEM_GEOMETRY_HPP
#define IGABEM_GEOMETRY_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace igabem {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double a) const { return {a * x, a * y}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
};

inline Vec2 operator*(double a, const Vec2& v) { return v * a; }

/// Which one-sided limit to take at a parameter where the map is only continuous.
enum class Side { Left, Right };

/// Piecewise-C^2 boundary parametrization gamma : [a,b] -> Gamma, open or closed.
/// Corners are carried as breakpoints of one global chart; everything downstream
/// (meshes, quadrature) splits at them.
class ParamCurve {
public:
  using EvalFn = std::function<Vec2(double)>;
  using DerivFn = std::function<Vec2(double, Side)>;

  ParamCurve(std::string name, double a, double b, bool closed,
             std::vector<double> smooth_breaks, EvalFn eval, DerivFn deriv);

  const std::string& name() const { return name_; }
  double param_begin() const { return a_; }
  double param_end() const { return b_; }
  bool closed() const { return closed_; }
  const std::vector<double>& smooth_breaks() const { return breaks_; }

  /// gamma(t). Closed curves wrap t periodically; otherwise t outside [a,b]
  /// is a domain error.
  Vec2 eval(double t) const;

  /// One-sided tangent gamma'(t).
  Vec2 deriv(double t, Side side = Side::Right) const;

  /// |gamma'(t)| with the given one-sided limit.
  double speed(double t, Side side = Side::Right) const;

  /// Arclength of gamma on [t1,t2], composite Gauss split at the breakpoints,
  /// refined to the requested relative tolerance.
  double arclength(double t1, double t2, double rel_tol = 1e-12) const;

  /// Total length L = arclength(a, b); cached.
  double total_length() const { return total_length_; }

  /// Inverse of s -> arclength(a, s): the parameter t with arclength(a,t) = s.
  double param_of_arclength(double s) const;

  /// Reduce t into [a,b] by periodicity (closed curves only; identity otherwise).
  double wrap(double t) const;

private:
  std::string name_;
  double a_, b_;
  bool closed_;
  std::vector<double> breaks_; // strictly inside (a,b), sorted
  EvalFn eval_;
  DerivFn deriv_;
  double total_length_ = 0.0;

  double arclength_piece(double t1, double t2, double abs_tol) const;
};

/// Built-in test geometries: "circle" (radius 0.5, closed), "slit" (segment
/// (-0.49,0)--(0.49,0), open), "square" (side 0.4, closed, 4 corners),
/// "pacman" (sector of radius 0.4, opening angle 7pi/4, closed, reentrant
/// corner at the origin). Unknown names raise ConfigurationError.
std::shared_ptr<const ParamCurve> builtin_geometry(const std::string& name);

/// Sampled validation data for a curve: used by tests and by sanity checks on
/// custom curves. Cusped inputs are unsupported and only show up here as a
/// small bi-Lipschitz constant.
struct CurveValidation {
  double diameter = 0.0;        // max sampled pairwise Euclidean distance
  double min_speed = 0.0;       // min sampled one-sided |gamma'|
  double max_speed = 0.0;
  double bilipschitz = 0.0;     // C with C^-1 <= |g_L(s)-g_L(t)|/|s-t| <= C on samples
  double closure_gap = 0.0;     // |gamma(a) - gamma(b)| (closed curves)
};

CurveValidation validate_curve(const ParamCurve& curve, int samples = 256);

} // namespace igabem

#endif
