#include "igabem/bem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "igabem/errors.hpp"

namespace igabem {

namespace {

constexpr double kKernelScale = -1.0 / (2.0 * std::numbers::pi);

double speed_in_element(const ParamCurve& curve, double z_right, double t) {
  // one-sided at the right node so breakpoints resolve to the correct piece
  return t >= z_right ? curve.speed(t, Side::Left) : curve.speed(t, Side::Right);
}

// per-element quadrature data for the regular (tensor) part
struct ElemData {
  int span = 0;
  int first = 0; // first active basis index
  double z0 = 0, h = 0;
  std::vector<double> t;  // global parameters of the quad nodes
  std::vector<double> wg; // weight * h * |gamma'|  (arclength measure)
  std::vector<Vec2> x;    // points on the curve
  std::vector<double> B;  // basis values, layout [q * (p+1) + a]
};

std::vector<ElemData> element_tables(const KnotMesh& mesh, const NurbsSpace& sp,
                                     const QuadRule& rule) {
  const int p = mesh.degree();
  const int E = mesh.num_elements();
  const int nq = rule.size();
  std::vector<ElemData> elems(E);
  std::vector<double> vals(p + 1);
  for (int e = 0; e < E; ++e) {
    ElemData& ed = elems[e];
    ed.z0 = mesh.node_param(e);
    ed.h = mesh.element_length(e);
    const double zr = mesh.node_param(e + 1);
    ed.span = sp.knot_vector().find_span(ed.z0 + 0.5 * ed.h);
    ed.first = ed.span - p;
    ed.t.resize(nq);
    ed.wg.resize(nq);
    ed.x.resize(nq);
    ed.B.resize(nq * (p + 1));
    for (int q = 0; q < nq; ++q) {
      const double t = ed.z0 + ed.h * rule.nodes[q];
      ed.t[q] = t;
      ed.x[q] = mesh.curve().eval(t);
      ed.wg[q] = rule.weights[q] * ed.h * speed_in_element(mesh.curve(), zr, t);
      sp.eval_all(t, ed.span, vals);
      for (int a = 0; a <= p; ++a) ed.B[q * (p + 1) + a] = vals[a];
    }
  }
  return elems;
}

inline double kernel(const Vec2& x, const Vec2& y) {
  return kKernelScale * 0.5 * std::log((x - y).squared_norm());
}

// log(|x_s - x_t| / d) with d the parameter distance; smooth up to the
// diagonal where it tends to log|gamma'(mid)|.
inline double log_ratio(const ParamCurve& curve, const Vec2& xs, const Vec2& xt, double d,
                        double mid_t, double scale) {
  if (d <= 1e-13 * scale) return std::log(curve.speed(curve.wrap(mid_t)));
  return 0.5 * std::log((xs - xt).squared_norm() / (d * d));
}

bool corner_at(const ParamCurve& curve, double z) {
  const Vec2 gl = curve.deriv(z, Side::Left);
  const Vec2 gr = curve.deriv(z, Side::Right);
  const double nl = gl.norm(), nr = gr.norm();
  if (nl == 0 || nr == 0) return true;
  return gl.dot(gr) / (nl * nr) < 1.0 - 1e-12;
}

// ----- coincident element: split kernel ------------------------------------
Eigen::MatrixXd coincident_block(const KnotMesh& mesh, const NurbsSpace& sp, const ElemData& ed,
                                 const QuadRule& gq, const QuadRule& gq1, const QuadRule& lq) {
  const int p = mesh.degree();
  const int nb = p + 1;
  const ParamCurve& curve = mesh.curve();
  const double h = ed.h, z0 = ed.z0;
  const double zr = z0 + h;
  const double logh = std::log(h);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(nb, nb);

  std::vector<double> Ba(nb), Bb(nb);

  // smooth part: log(|gamma(s)-gamma(t)|/|s-t|) + log h, tensor n x (n+1)
  for (int q = 0; q < gq.size(); ++q) {
    const double s = z0 + h * gq.nodes[q];
    const Vec2 xs = curve.eval(s);
    const double ws = gq.weights[q] * speed_in_element(curve, zr, s);
    sp.eval_all(s, ed.span, Ba);
    for (int r = 0; r < gq1.size(); ++r) {
      const double t = z0 + h * gq1.nodes[r];
      const Vec2 xt = curve.eval(t);
      const double wt = gq1.weights[r] * speed_in_element(curve, zr, t);
      sp.eval_all(t, ed.span, Bb);
      const double g = log_ratio(curve, xs, xt, std::abs(s - t), 0.5 * (s + t), h) + logh;
      const double c = ws * wt * g;
      for (int a = 0; a < nb; ++a)
        for (int b = 0; b < nb; ++b) L(a, b) += c * Ba[a] * Bb[b];
    }
  }

  // log|sigma-tau| part via u-substitution and the log-weighted rule:
  //   int int F log|sigma-tau| = - sum_m w_m int_0^{1-u_m} [F(t+u_m,t) + F(t,t+u_m)] dt
  for (int m = 0; m < lq.size(); ++m) {
    const double u = lq.nodes[m];
    const double len = 1.0 - u;
    if (len <= 0) continue;
    for (int q = 0; q < gq.size(); ++q) {
      const double tau = len * gq.nodes[q];
      const double s = z0 + h * (tau + u);
      const double t = z0 + h * tau;
      sp.eval_all(s, ed.span, Ba);
      sp.eval_all(t, ed.span, Bb);
      const double c = -lq.weights[m] * len * gq.weights[q] *
                       speed_in_element(curve, zr, s) * speed_in_element(curve, zr, t);
      for (int a = 0; a < nb; ++a)
        for (int b = 0; b < nb; ++b) L(a, b) += c * (Ba[a] * Bb[b] + Bb[a] * Ba[b]);
    }
  }

  L *= kKernelScale * h * h;
  // the smooth tensor uses different orders per axis; restore exact symmetry
  L = 0.5 * (L + L.transpose()).eval();
  return L;
}

// ----- adjacent elements -----------------------------------------------------
// el's right node coincides with er's left node on the curve (possibly through
// the seam of a closed curve). All evaluations use each element's own
// parameters; the kernel's parameter distance is assembled from the local
// coordinates, which is exact across the seam.
Eigen::MatrixXd adjacent_block(const KnotMesh& mesh, const NurbsSpace& sp, const ElemData& el,
                               const ElemData& er, const QuadRule& gq, const QuadRule& lq) {
  const int p = mesh.degree();
  const int nb = p + 1;
  const ParamCurve& curve = mesh.curve();
  const double hl = el.h, hr = er.h;
  const double shared = curve.wrap(el.z0 + el.h);
  const double scale = hl + hr;

  std::vector<double> Ba(nb), Bb(nb);

  // xi = distance from the shared node into el / hl, eta likewise into er
  struct PairEval {
    Vec2 xs, xt;
    double ws, wt;
  };
  auto eval_pair = [&](double xi, double eta) {
    PairEval pe;
    const double s = el.z0 + hl * (1.0 - xi);
    const double t = er.z0 + hr * eta;
    pe.xs = curve.eval(s);
    pe.xt = curve.eval(t);
    pe.ws = speed_in_element(curve, el.z0 + hl, s);
    pe.wt = speed_in_element(curve, er.z0 + hr, t);
    sp.eval_all(s, el.span, Ba);
    sp.eval_all(t, er.span, Bb);
    return pe;
  };

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(nb, nb); // smooth (ratio) part
  if (!corner_at(curve, shared)) {
    for (int q = 0; q < gq.size(); ++q) {
      const double xi = gq.nodes[q];
      for (int r = 0; r < gq.size(); ++r) {
        const double eta = gq.nodes[r];
        const PairEval pe = eval_pair(xi, eta);
        const double d = hl * xi + hr * eta;
        const double g = log_ratio(curve, pe.xs, pe.xt, d, shared, scale);
        const double c = gq.weights[q] * gq.weights[r] * pe.ws * pe.wt * g;
        for (int a = 0; a < nb; ++a)
          for (int b = 0; b < nb; ++b) S(a, b) += c * Ba[a] * Bb[b];
      }
    }
  } else {
    // geometry corner at the shared node: Duffy split; the ratio is analytic
    // in the triangle coordinates
    for (int q = 0; q < gq.size(); ++q) {
      const double rr = gq.nodes[q];
      for (int r = 0; r < gq.size(); ++r) {
        const double qq = gq.nodes[r];
        const double w = gq.weights[q] * gq.weights[r] * rr;
        const double coords[2][2] = {{rr, rr * qq}, {rr * qq, rr}};
        for (const auto& xe : coords) {
          const PairEval pe = eval_pair(xe[0], xe[1]);
          const double d = hl * xe[0] + hr * xe[1];
          const double g = log_ratio(curve, pe.xs, pe.xt, d, shared, scale);
          const double c = w * pe.ws * pe.wt * g;
          for (int a = 0; a < nb; ++a)
            for (int b = 0; b < nb; ++b) S(a, b) += c * Ba[a] * Bb[b];
        }
      }
    }
  }

  // log(d) part via chord integrals g(u) = int_{d(s,t)=u} F, with the
  // log-weighted rule on [0, min(hl,hr)] where log u is singular
  const double mlen = std::min(hl, hr), Mlen = std::max(hl, hr), H = hl + hr;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nb, nb);
  auto chord = [&](double u, Eigen::MatrixXd& out) {
    out.setZero();
    const double xi_hi = std::min(1.0, u / hl);
    const double xi_lo = std::max(0.0, (u - hr) / hl);
    const double len = xi_hi - xi_lo;
    if (len <= 0) return;
    for (int q = 0; q < gq.size(); ++q) {
      const double xi = xi_lo + len * gq.nodes[q];
      const double eta = (u - hl * xi) / hr;
      const PairEval pe = eval_pair(xi, std::clamp(eta, 0.0, 1.0));
      const double c = gq.weights[q] * len * hl * pe.ws * pe.wt;
      for (int a = 0; a < nb; ++a)
        for (int b = 0; b < nb; ++b) out(a, b) += c * Ba[a] * Bb[b];
    }
  };
  {
    const double logm = std::log(mlen);
    for (int q = 0; q < gq.size(); ++q) {
      chord(mlen * gq.nodes[q], G);
      C += (gq.weights[q] * logm * mlen) * G;
    }
    for (int q = 0; q < lq.size(); ++q) {
      chord(mlen * lq.nodes[q], G);
      C -= (lq.weights[q] * mlen) * G;
    }
  }
  for (const auto& piece : {std::pair{mlen, Mlen}, std::pair{Mlen, H}}) {
    const double len = piece.second - piece.first;
    if (len <= 0) continue;
    for (int q = 0; q < gq.size(); ++q) {
      const double u = piece.first + len * gq.nodes[q];
      chord(u, G);
      C += (gq.weights[q] * len * std::log(u)) * G;
    }
  }

  return kKernelScale * (hl * hr * S + C);
}

} // namespace

GalerkinSystem assemble(std::shared_ptr<const KnotMesh> mesh_ptr, const ProblemData& problem,
                        const QuadConfig& quad) {
  const KnotMesh& mesh = *mesh_ptr;
  if (mesh.closed() && mesh.num_elements() < 3)
    throw ConfigurationError("assemble: closed curves need at least 3 elements");

  const int p = mesh.degree();
  const int E = mesh.num_elements();
  const int N = mesh.dimension();
  const NurbsSpace sp = mesh.space();

  const QuadRule gq = gauss_legendre(quad.order);
  const QuadRule gq1 = gauss_legendre(quad.order + 1);
  const QuadRule lq = gauss_log(quad.log_order);

  const auto elems = element_tables(mesh, sp, gq);

  auto cyclic_gap = [&](int e, int f) {
    int d = std::abs(e - f);
    if (mesh.closed()) d = std::min(d, E - d);
    return d;
  };

  int threads = quad.threads;
  if (threads <= 0) threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  threads = std::min<int>(threads, E);

  std::vector<Eigen::MatrixXd> partial(threads, Eigen::MatrixXd::Zero(N, N));

  auto scatter = [p](Eigen::MatrixXd& A, const ElemData& erow, const ElemData& ecol,
                     const Eigen::MatrixXd& local, bool mirror) {
    for (int a = 0; a <= p; ++a)
      for (int b = 0; b <= p; ++b) {
        A(erow.first + a, ecol.first + b) += local(a, b);
        if (mirror) A(ecol.first + b, erow.first + a) += local(a, b);
      }
  };

  auto worker = [&](int tid) {
    Eigen::MatrixXd& A = partial[tid];
    Eigen::MatrixXd local(p + 1, p + 1);
    for (int e = tid; e < E; e += threads) {
      const ElemData& ee = elems[e];
      for (int f = 0; f <= e; ++f) {
        const int gap = cyclic_gap(e, f);
        if (gap == 0) {
          scatter(A, ee, ee, coincident_block(mesh, sp, ee, gq, gq1, lq), false);
        } else if (gap == 1) {
          int le = f, re = e;
          if (mesh.closed() && f == 0 && e == E - 1) {
            le = e; // the pair wraps: E-1 precedes 0 through the seam
            re = f;
          }
          scatter(A, elems[le], elems[re],
                  adjacent_block(mesh, sp, elems[le], elems[re], gq, lq), true);
        } else {
          const ElemData& ef = elems[f];
          local.setZero();
          for (int q = 0; q < gq.size(); ++q) {
            const double wq = ee.wg[q];
            const Vec2& xq = ee.x[q];
            for (int r = 0; r < gq.size(); ++r) {
              const double c = wq * ef.wg[r] * kernel(xq, ef.x[r]);
              for (int a = 0; a <= p; ++a)
                for (int b = 0; b <= p; ++b)
                  local(a, b) += c * ee.B[q * (p + 1) + a] * ef.B[r * (p + 1) + b];
            }
          }
          scatter(A, ee, ef, local, true);
        }
      }
    }
  };

  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int tid = 0; tid < threads; ++tid) pool.emplace_back(worker, tid);
    for (auto& th : pool) th.join();
  }

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (int tid = 0; tid < threads; ++tid) A += partial[tid];

  if (!A.allFinite())
    throw AssemblyError("assemble: quadrature produced non-finite matrix entries "
                        "(self-intersecting curve?)");

  Eigen::VectorXd b = Eigen::VectorXd::Zero(N);
  for (int e = 0; e < E; ++e) {
    const ElemData& ed = elems[e];
    for (int q = 0; q < gq.size(); ++q) {
      const double c = ed.wg[q] * problem.f(ed.x[q], ed.t[q]);
      for (int a = 0; a <= p; ++a) b(ed.first + a) += c * ed.B[q * (p + 1) + a];
    }
  }
  if (!b.allFinite()) throw AssemblyError("assemble: non-finite load vector");

  return GalerkinSystem(mesh_ptr, std::move(A), std::move(b));
}

Density solve(const GalerkinSystem& system) {
  Eigen::LLT<Eigen::MatrixXd> llt(system.matrix());
  if (llt.info() != Eigen::Success)
    throw NumericalError("solve: Cholesky failed (matrix not SPD; check geometry scaling)");
  Eigen::VectorXd x = llt.solve(system.load());
  // one step of iterative refinement
  Eigen::VectorXd r = system.load() - system.matrix() * x;
  x += llt.solve(r);
  r = system.load() - system.matrix() * x;
  const double scale = system.matrix().lpNorm<Eigen::Infinity>() * x.lpNorm<Eigen::Infinity>() +
                       system.load().lpNorm<Eigen::Infinity>();
  if (!(r.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(scale, 1e-300)))
    throw NumericalError("solve: residual did not reach 1e-12");
  return Density{system.mesh_ptr(), std::move(x)};
}

namespace {

// Evaluates V Phi at points on the curve; precomputes the per-element source
// tables once so repeated calls stay cheap.
struct VEvaluator {
  const KnotMesh& mesh;
  const NurbsSpace sp;
  QuadRule gq, lq;
  std::vector<ElemData> elems;
  std::vector<double> phi; // density at source quad nodes [e*nq+q]
  const Eigen::VectorXd& coeffs;

  VEvaluator(const Density& d, const QuadConfig& quad)
      : mesh(*d.mesh),
        sp(d.mesh->space()),
        gq(gauss_legendre(quad.order)),
        lq(gauss_log(quad.log_order)),
        elems(element_tables(mesh, sp, gq)),
        coeffs(d.coeffs) {
    const int p = mesh.degree();
    if (p > 15) throw ConfigurationError("eval_V: degree > 15 not supported");
    const int nq = gq.size();
    phi.resize(elems.size() * nq);
    for (std::size_t e = 0; e < elems.size(); ++e)
      for (int q = 0; q < nq; ++q) {
        double v = 0;
        for (int a = 0; a <= p; ++a)
          v += coeffs(elems[e].first + a) * elems[e].B[q * (p + 1) + a];
        phi[e * nq + q] = v;
      }
  }

  double density_at(const ElemData& ed, double t) const {
    const int p = mesh.degree();
    double vals[16];
    sp.eval_all(t, ed.span, std::span<double>(vals, p + 1));
    double v = 0;
    for (int a = 0; a <= p; ++a) v += coeffs(ed.first + a) * vals[a];
    return v;
  }

  int element_of(double t) const {
    const auto& z = mesh.node_params();
    auto it = std::upper_bound(z.begin(), z.end(), t);
    const int e = static_cast<int>(it - z.begin()) - 1;
    return std::clamp(e, 0, mesh.num_elements() - 1);
  }

  // source element contains the target
  double self_part(const ElemData& ed, double t, const Vec2& xt) const {
    const ParamCurve& curve = mesh.curve();
    const double zr = ed.z0 + ed.h;
    double out = 0.0;
    for (const auto& side : {std::pair{ed.z0, t}, std::pair{t, zr}}) {
      const double len = side.second - side.first;
      if (len <= 1e-300) continue;
      const bool left_of_t = (side.second == t);
      // smooth ratio part
      for (int q = 0; q < gq.size(); ++q) {
        const double y = side.first + len * gq.nodes[q];
        const Vec2 xy = curve.eval(y);
        const double g = log_ratio(curve, xt, xy, std::abs(t - y), 0.5 * (t + y), ed.h);
        out += gq.weights[q] * len * g * speed_in_element(curve, zr, y) * density_at(ed, y);
      }
      // log|t-y| part: int_0^len f(u) log u du = len (log(len) G[f] - L[f])
      double gpart = 0.0, lpart = 0.0;
      for (int q = 0; q < gq.size(); ++q) {
        const double y = left_of_t ? t - len * gq.nodes[q] : t + len * gq.nodes[q];
        gpart += gq.weights[q] * speed_in_element(curve, zr, y) * density_at(ed, y);
      }
      for (int q = 0; q < lq.size(); ++q) {
        const double y = left_of_t ? t - len * lq.nodes[q] : t + len * lq.nodes[q];
        lpart += lq.weights[q] * speed_in_element(curve, zr, y) * density_at(ed, y);
      }
      out += len * (std::log(len) * gpart - lpart);
    }
    return out * kKernelScale;
  }

  // adjacent source element at (parameter) gap >= 0 from the target, reached
  // through the node `shared`; eta is the local coordinate into the element
  // away from that node.
  double near_part(const ElemData& ed, double gap, bool element_starts_at_shared,
                   const Vec2& xt) const {
    const ParamCurve& curve = mesh.curve();
    const double zr = ed.z0 + ed.h;
    auto y_of_eta = [&](double eta) {
      return element_starts_at_shared ? ed.z0 + ed.h * eta : zr - ed.h * eta;
    };
    auto f_of_eta = [&](double eta) {
      const double y = y_of_eta(eta);
      return speed_in_element(curve, zr, y) * density_at(ed, y);
    };
    double out = 0.0;
    if (gap <= 1e-13 * ed.h) {
      // target at the shared node: d = h*eta, exact log rule
      double gpart = 0.0, lpart = 0.0, ratio = 0.0;
      for (int q = 0; q < gq.size(); ++q) {
        const double eta = gq.nodes[q];
        const double fv = f_of_eta(eta);
        gpart += gq.weights[q] * fv;
        const Vec2 xy = curve.eval(y_of_eta(eta));
        ratio += gq.weights[q] * fv *
                 log_ratio(curve, xt, xy, gap + ed.h * eta, y_of_eta(eta), ed.h);
      }
      for (int q = 0; q < lq.size(); ++q) lpart += lq.weights[q] * f_of_eta(lq.nodes[q]);
      out = ed.h * (std::log(ed.h) * gpart - lpart) + ed.h * ratio;
      return out * kKernelScale;
    }
    // geometric panels in d = gap + h*eta, doubling away from the target
    double d0 = gap;
    const double dmax = gap + ed.h;
    while (d0 < dmax) {
      const double d1 = std::min(dmax, 2.0 * d0);
      for (int q = 0; q < gq.size(); ++q) {
        const double d = d0 + (d1 - d0) * gq.nodes[q];
        const double eta = (d - gap) / ed.h;
        const double y = y_of_eta(eta);
        const Vec2 xy = curve.eval(y);
        const double val = log_ratio(curve, xt, xy, d, y, ed.h) + std::log(d);
        out += gq.weights[q] * (d1 - d0) * val * speed_in_element(curve, zr, y) *
               density_at(ed, y);
      }
      d0 = d1;
    }
    return out * kKernelScale;
  }

  double operator()(double t) const {
    const ParamCurve& curve = mesh.curve();
    const double tw = curve.closed() ? curve.wrap(t) : t;
    const Vec2 xt = curve.eval(tw);
    const int et = element_of(tw);
    const int E = mesh.num_elements();

    double out = self_part(elems[et], tw, xt);
    std::vector<char> handled(E, 0);
    handled[et] = 1;

    for (int dir : {-1, +1}) {
      int nb = et + dir;
      if (mesh.closed()) nb = (nb + E) % E;
      if (nb < 0 || nb >= E || handled[nb]) continue;
      // gap from target to the shared node between et and nb
      double gap;
      bool starts_at_shared;
      if (dir < 0) {
        gap = tw - elems[et].z0;
        starts_at_shared = false; // element nb ends at the shared node
      } else {
        gap = elems[et].z0 + elems[et].h - tw;
        starts_at_shared = true;
      }
      out += near_part(elems[nb], gap, starts_at_shared, xt);
      handled[nb] = 1;
    }

    const int nq = gq.size();
    for (int e = 0; e < E; ++e) {
      if (handled[e]) continue;
      const ElemData& ed = elems[e];
      double acc = 0.0;
      for (int q = 0; q < nq; ++q) acc += ed.wg[q] * kernel(xt, ed.x[q]) * phi[e * nq + q];
      out += acc;
    }
    return out;
  }
};

} // namespace

double eval_V(const Density& density, double t, const QuadConfig& quad) {
  VEvaluator ev(density, quad);
  return ev(t);
}

double ResidualTable::r_at(int element, double xi) const {
  double num = 0, den = 0;
  for (int j = 0; j < k; ++j) {
    const double d = xi - ref_nodes[j];
    if (std::abs(d) < 1e-14) return r[element * k + j];
    const double c = bary[j] / d;
    num += c * r[element * k + j];
    den += c;
  }
  return num / den;
}

double ResidualTable::dr_at(int element, double xi) const {
  double num = 0, den = 0;
  for (int j = 0; j < k; ++j) {
    const double d = xi - ref_nodes[j];
    if (std::abs(d) < 1e-14) return dr[element * k + j];
    const double c = bary[j] / d;
    num += c * dr[element * k + j];
    den += c;
  }
  return num / den;
}

ResidualTable residual_samples(const Density& density, const ProblemData& problem, int k,
                               const QuadConfig& quad) {
  if (k < 2) throw std::domain_error("residual_samples: k >= 2 required");
  const KnotMesh& mesh = *density.mesh;
  const ParamCurve& curve = mesh.curve();
  const int E = mesh.num_elements();

  ResidualTable tab;
  tab.k = k;
  tab.num_elements = E;
  const QuadRule rule = gauss_legendre(k);
  tab.ref_nodes = rule.nodes;
  tab.ref_weights = rule.weights;

  tab.bary.assign(k, 1.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (j != i) tab.bary[i] /= (rule.nodes[i] - rule.nodes[j]);

  // spectral differentiation matrix on the reference nodes
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    double diag = 0;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      D(i, j) = (tab.bary[j] / tab.bary[i]) / (rule.nodes[i] - rule.nodes[j]);
      diag -= D(i, j);
    }
    D(i, i) = diag;
  }

  tab.params.resize(E * k);
  tab.r.resize(E * k);
  tab.dr.resize(E * k);
  tab.speed.resize(E * k);

  const VEvaluator ev(density, quad);

  int threads = quad.threads;
  if (threads <= 0) threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  threads = std::min(threads, E);

  auto worker = [&](int tid) {
    for (int e = tid; e < E; e += threads) {
      const double z0 = mesh.node_param(e), h = mesh.element_length(e);
      const double zr = z0 + h;
      for (int q = 0; q < k; ++q) {
        const double t = z0 + h * rule.nodes[q];
        tab.params[e * k + q] = t;
        tab.speed[e * k + q] = speed_in_element(curve, zr, t);
        tab.r[e * k + q] = problem.f(curve.eval(t), t) - ev(t);
      }
      for (int q = 0; q < k; ++q) {
        double d = 0;
        for (int j = 0; j < k; ++j) d += D(q, j) * tab.r[e * k + j];
        tab.dr[e * k + q] = d / (h * tab.speed[e * k + q]);
      }
    }
  };

  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int tid = 0; tid < threads; ++tid) pool.emplace_back(worker, tid);
    for (auto& th : pool) th.join();
  }

  return tab;
}

double energy_norm(const Eigen::VectorXd& coeffs, const GalerkinSystem& system) {
  const double q = coeffs.dot(system.matrix() * coeffs);
  if (q < -1e-10 * std::max(1.0, coeffs.squaredNorm()))
    throw NumericalError("energy_norm: negative quadratic form");
  return std::sqrt(std::max(q, 0.0));
}

Eigen::MatrixXd weighted_mass_matrix(const KnotMesh& mesh, std::span<const double> elem_weight,
                                     int order) {
  if (static_cast<int>(elem_weight.size()) != mesh.num_elements())
    throw std::domain_error("weighted_mass_matrix: one weight per element required");
  const int p = mesh.degree();
  const NurbsSpace sp = mesh.space();
  const QuadRule rule = gauss_legendre(order);
  const auto elems = element_tables(mesh, sp, rule);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(mesh.dimension(), mesh.dimension());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElemData& ed = elems[e];
    for (int q = 0; q < rule.size(); ++q) {
      const double c = elem_weight[e] * ed.wg[q];
      for (int a = 0; a <= p; ++a)
        for (int b = 0; b <= p; ++b)
          M(ed.first + a, ed.first + b) += c * ed.B[q * (p + 1) + a] * ed.B[q * (p + 1) + b];
    }
  }
  return M;
}

double l2_norm_f(const KnotMesh& mesh, const ProblemData& problem, int order) {
  const QuadRule rule = gauss_legendre(order);
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double z0 = mesh.node_param(e), h = mesh.element_length(e);
    for (int q = 0; q < rule.size(); ++q) {
      const double t = z0 + h * rule.nodes[q];
      const double v = problem.f(mesh.curve().eval(t), t);
      acc += rule.weights[q] * h * speed_in_element(mesh.curve(), z0 + h, t) * v * v;
    }
  }
  return std::sqrt(acc);
}

} // namespace igabem
