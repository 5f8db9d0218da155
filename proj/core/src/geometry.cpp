#include "igabem/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "igabem/errors.hpp"
#include "igabem/quadrature.hpp"

namespace igabem {

namespace {

const QuadRule& panel_rule() {
  static const QuadRule rule = gauss_legendre(16);
  return rule;
}

} // namespace

ParamCurve::ParamCurve(std::string name, double a, double b, bool closed,
                       std::vector<double> smooth_breaks, EvalFn eval, DerivFn deriv)
    : name_(std::move(name)),
      a_(a),
      b_(b),
      closed_(closed),
      breaks_(std::move(smooth_breaks)),
      eval_(std::move(eval)),
      deriv_(std::move(deriv)) {
  if (!(a_ < b_)) throw ConfigurationError("ParamCurve: need a < b");
  std::sort(breaks_.begin(), breaks_.end());
  for (double t : breaks_)
    if (!(a_ < t && t < b_)) throw ConfigurationError("ParamCurve: breakpoints must lie in (a,b)");
  total_length_ = arclength(a_, b_);
}

double ParamCurve::wrap(double t) const {
  if (!closed_) return t;
  const double period = b_ - a_;
  double u = std::fmod(t - a_, period);
  if (u < 0) u += period;
  return a_ + u;
}

Vec2 ParamCurve::eval(double t) const {
  t = wrap(t);
  if (t < a_ - 1e-14 || t > b_ + 1e-14)
    throw std::domain_error("ParamCurve::eval: parameter outside [a,b]");
  return eval_(std::clamp(t, a_, b_));
}

Vec2 ParamCurve::deriv(double t, Side side) const {
  t = wrap(t);
  if (t < a_ - 1e-14 || t > b_ + 1e-14)
    throw std::domain_error("ParamCurve::deriv: parameter outside [a,b]");
  // the left limit at the seam of a closed curve lives at b
  if (closed_ && side == Side::Left && t == a_) t = b_;
  return deriv_(std::clamp(t, a_, b_), side);
}

double ParamCurve::speed(double t, Side side) const { return deriv(t, side).norm(); }

double ParamCurve::arclength_piece(double t1, double t2, double abs_tol) const {
  // adaptive bisection with a fixed 16-point panel rule; the integrand is
  // smooth on break-free pieces, so this terminates quickly
  auto f = [this](double t) {
    return deriv_(t, Side::Right).norm();
  };
  const double whole = panel_rule().apply(f, t1, t2);
  const double mid = 0.5 * (t1 + t2);
  const double left = panel_rule().apply(f, t1, mid);
  const double right = panel_rule().apply(f, mid, t2);
  if (std::abs(left + right - whole) <= abs_tol || (t2 - t1) < 1e-14)
    return left + right;
  return arclength_piece(t1, mid, 0.5 * abs_tol) + arclength_piece(mid, t2, 0.5 * abs_tol);
}

double ParamCurve::arclength(double t1, double t2, double rel_tol) const {
  if (t1 > t2) throw std::domain_error("ParamCurve::arclength: t1 > t2");
  if (t1 < a_ - 1e-14 || t2 > b_ + 1e-14)
    throw std::domain_error("ParamCurve::arclength: interval outside [a,b]");
  if (t1 == t2) return 0.0;

  // split at breakpoints, then refine each piece adaptively
  std::vector<double> cuts{t1};
  for (double br : breaks_)
    if (br > t1 && br < t2) cuts.push_back(br);
  cuts.push_back(t2);

  double rough = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    rough += panel_rule().apply([this](double t) { return deriv_(t, Side::Right).norm(); },
                                cuts[i], cuts[i + 1]);
  const double abs_tol = std::max(rel_tol * std::abs(rough), 1e-300);

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    total += arclength_piece(cuts[i], cuts[i + 1], abs_tol / static_cast<double>(cuts.size()));
  return total;
}

double ParamCurve::param_of_arclength(double s) const {
  const double L = total_length_;
  if (s < -1e-12 || s > L + 1e-12)
    throw std::domain_error("ParamCurve::param_of_arclength: s outside [0,L]");
  s = std::clamp(s, 0.0, L);
  if (s == 0.0) return a_;
  if (s == L) return b_;

  // safeguarded Newton on the monotone map t -> arclength(a,t)
  double lo = a_, hi = b_;
  double t = a_ + (b_ - a_) * (s / L);
  double resid = arclength(a_, t) - s;
  for (int it = 0; it < 100; ++it) {
    if (std::abs(resid) <= 1e-12 * std::max(1.0, L)) break;
    if (resid > 0)
      hi = t;
    else
      lo = t;
    const double sp = speed(t, resid > 0 ? Side::Left : Side::Right);
    double next = t - resid / std::max(sp, 1e-30);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    t = next;
    resid = arclength(a_, t) - s;
  }
  return t;
}

std::shared_ptr<const ParamCurve> builtin_geometry(const std::string& name) {
  using std::numbers::pi;
  if (name == "circle") {
    const double r = 0.5;
    return std::make_shared<ParamCurve>(
        "circle", 0.0, 2.0 * pi, true, std::vector<double>{},
        [r](double t) { return Vec2{r * std::cos(t), r * std::sin(t)}; },
        [r](double t, Side) { return Vec2{-r * std::sin(t), r * std::cos(t)}; });
  }
  if (name == "slit") {
    const double c = 0.49;
    return std::make_shared<ParamCurve>(
        "slit", -c, c, false, std::vector<double>{},
        [](double t) { return Vec2{t, 0.0}; },
        [](double, Side) { return Vec2{1.0, 0.0}; });
  }
  if (name == "square") {
    // side 0.4 centered at the origin, unit speed, starting mid-edge at (0,-0.2)
    const double s = 0.4, h = 0.2;
    auto eval = [s, h](double t) -> Vec2 {
      if (t <= h) return {t, -h};
      if (t <= h + s) return {h, -h + (t - h)};
      if (t <= h + 2 * s) return {h - (t - h - s), h};
      if (t <= h + 3 * s) return {-h, h - (t - h - 2 * s)};
      return {-h + (t - h - 3 * s), -h};
    };
    auto deriv = [s, h](double t, Side side) -> Vec2 {
      const double br[4] = {h, h + s, h + 2 * s, h + 3 * s};
      int k = 0;
      if (side == Side::Right) {
        while (k < 4 && t >= br[k]) ++k;
      } else {
        while (k < 4 && t > br[k]) ++k;
      }
      switch (k) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {-1.0, 0.0};
        case 3: return {0.0, -1.0};
        default: return {1.0, 0.0};
      }
    };
    return std::make_shared<ParamCurve>("square", 0.0, 4 * s, true,
                                        std::vector<double>{h, h + s, h + 2 * s, h + 3 * s},
                                        eval, deriv);
  }
  if (name == "pacman") {
    // sector boundary: radius edge out, arc of opening angle 7pi/4, radius edge
    // back; the reentrant corner sits at the origin (the curve seam)
    const double r = 0.4;
    const double alpha = 7.0 * pi / 4.0;
    const double l_arc = r * alpha;
    const double b = 2 * r + l_arc;
    auto eval = [=](double t) -> Vec2 {
      if (t <= r) return {t, 0.0};
      if (t <= r + l_arc) {
        const double th = (t - r) / r;
        return {r * std::cos(th), r * std::sin(th)};
      }
      const double rho = r - (t - r - l_arc);
      return {rho * std::cos(alpha), rho * std::sin(alpha)};
    };
    auto deriv = [=](double t, Side side) -> Vec2 {
      const double br[2] = {r, r + l_arc};
      int k = 0;
      if (side == Side::Right) {
        while (k < 2 && t >= br[k]) ++k;
      } else {
        while (k < 2 && t > br[k]) ++k;
      }
      if (k == 0) return {1.0, 0.0};
      if (k == 1) {
        const double th = (t - r) / r;
        return {-std::sin(th), std::cos(th)};
      }
      return {-std::cos(alpha), -std::sin(alpha)};
    };
    return std::make_shared<ParamCurve>("pacman", 0.0, b, true,
                                        std::vector<double>{r, r + l_arc}, eval, deriv);
  }
  throw ConfigurationError("unknown geometry: " + name);
}

CurveValidation validate_curve(const ParamCurve& curve, int samples) {
  CurveValidation v;
  const double a = curve.param_begin(), b = curve.param_end();
  const int m = std::max(samples, 16);

  std::vector<double> ts(m);
  std::vector<Vec2> pts(m);
  std::vector<double> arc(m);
  for (int i = 0; i < m; ++i) {
    // keep samples off the endpoints so one-sided limits are unambiguous
    ts[i] = a + (b - a) * (i + 0.5) / m;
    pts[i] = curve.eval(ts[i]);
  }
  arc[0] = curve.arclength(a, ts[0]);
  for (int i = 1; i < m; ++i) arc[i] = arc[i - 1] + curve.arclength(ts[i - 1], ts[i]);

  v.min_speed = std::numeric_limits<double>::infinity();
  v.max_speed = 0.0;
  for (int i = 0; i < m; ++i) {
    v.min_speed = std::min({v.min_speed, curve.speed(ts[i], Side::Left),
                            curve.speed(ts[i], Side::Right)});
    v.max_speed = std::max({v.max_speed, curve.speed(ts[i], Side::Left),
                            curve.speed(ts[i], Side::Right)});
  }

  const double L = curve.total_length();
  double cmax = 0.0, cmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double d = (pts[i] - pts[j]).norm();
      v.diameter = std::max(v.diameter, d);
      double ds = arc[j] - arc[i];
      if (curve.closed()) ds = std::min(ds, L - ds);
      if (curve.closed() && ds > 0.75 * L) continue;
      if (ds <= 0) continue;
      const double ratio = d / ds;
      cmax = std::max(cmax, ratio);
      cmin = std::min(cmin, ratio);
    }
  }
  v.bilipschitz = std::max(cmax, cmin > 0 ? 1.0 / cmin : std::numeric_limits<double>::infinity());
  v.closure_gap = (curve.eval(a) - curve.eval(b)).norm();
  return v;
}

} // namespace igabem
