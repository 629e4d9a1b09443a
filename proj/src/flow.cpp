#include "geotomo/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geotomo/errors.hpp"

namespace geotomo {

namespace {

struct Deriv {
  Vec2 dx, dv;
};

inline Deriv rhs(const MetricField& m, const PhasePoint& s) {
  return {s.v, m.geodesic_accel(s.x, s.v)};
}

inline PhasePoint advance(const PhasePoint& s, const Deriv& d, double h) {
  return {{s.x.x + h * d.dx.x, s.x.y + h * d.dx.y}, {s.v.x + h * d.dv.x, s.v.y + h * d.dv.y}};
}

} // namespace

PhasePoint rk4_step(const MetricField& m, const PhasePoint& s, double h) {
  const Deriv k1 = rhs(m, s);
  const Deriv k2 = rhs(m, advance(s, k1, 0.5 * h));
  const Deriv k3 = rhs(m, advance(s, k2, 0.5 * h));
  const Deriv k4 = rhs(m, advance(s, k3, h));
  PhasePoint out;
  out.x.x = s.x.x + h / 6.0 * (k1.dx.x + 2.0 * k2.dx.x + 2.0 * k3.dx.x + k4.dx.x);
  out.x.y = s.x.y + h / 6.0 * (k1.dx.y + 2.0 * k2.dx.y + 2.0 * k3.dx.y + k4.dx.y);
  out.v.x = s.v.x + h / 6.0 * (k1.dv.x + 2.0 * k2.dv.x + 2.0 * k3.dv.x + k4.dv.x);
  out.v.y = s.v.y + h / 6.0 * (k1.dv.y + 2.0 * k2.dv.y + 2.0 * k3.dv.y + k4.dv.y);
  return out;
}

namespace {

// Locates the boundary crossing inside (0, h] from a state with q(0) <= 0,
// q(h) > 0, where q(t) = |x(t)|^2 - R^2 along a single RK4 substep.  Bisection
// with Newton polish; the returned state sits on the boundary to opt tol.
struct Crossing {
  double dt;
  PhasePoint state;
};

Crossing locate_crossing(const MetricField& m, const PhasePoint& base, double h, double r2,
                         double tol) {
  auto eval = [&](double dt) { return dt == 0.0 ? base : rk4_step(m, base, dt); };
  double lo = 0.0, hi = h;
  PhasePoint best = eval(hi);
  double best_dt = hi;
  for (int it = 0; it < 200; ++it) {
    double mid;
    // Newton from the current best once the bracket is reasonably tight
    if (it >= 8) {
      const double dq = 2.0 * edot(best.x, best.v);
      mid = (dq != 0.0) ? best_dt - (edot(best.x, best.x) - r2) / dq : 0.5 * (lo + hi);
      if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
    } else {
      mid = 0.5 * (lo + hi);
    }
    const PhasePoint st = eval(mid);
    const double q = edot(st.x, st.x) - r2;
    best = st;
    best_dt = mid;
    if (std::abs(q) < tol || hi - lo < 1e-16 * std::max(1.0, h)) break;
    if (q > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {best_dt, best};
}

} // namespace

GeodesicRecord trace_geodesic(const MetricField& m, Vec2 x0, Vec2 v0, const FlowOptions& opt,
                              bool allow_trapped) {
  const double r2 = m.radius() * m.radius();
  if (edot(x0, x0) > r2 * (1.0 + 1e-12))
    throw NumericalError("geodesic start lies outside the domain");
  GeodesicRecord rec;
  rec.t.reserve(256);
  rec.x.reserve(256);
  rec.v.reserve(256);
  PhasePoint st{x0, v0};
  double t = 0.0;
  rec.t.push_back(t);
  rec.x.push_back(st.x);
  rec.v.push_back(st.v);
  for (int k = 0; k < opt.max_steps; ++k) {
    const PhasePoint next = rk4_step(m, st, opt.step);
    const double q = edot(next.x, next.x) - r2;
    if (q > 0.0) {
      const Crossing c = locate_crossing(m, st, opt.step, r2, opt.boundary_tol);
      rec.t.push_back(t + c.dt);
      rec.x.push_back(c.state.x);
      rec.v.push_back(c.state.v);
      rec.exited = true;
      return rec;
    }
    t += opt.step;
    st = next;
    rec.t.push_back(t);
    rec.x.push_back(st.x);
    rec.v.push_back(st.v);
  }
  if (allow_trapped) {
    rec.exited = false;
    return rec;
  }
  throw NumericalError("geodesic did not reach the boundary within max_steps");
}

ExitState exit_state(const MetricField& m, Vec2 x0, Vec2 v0, const FlowOptions& opt) {
  const double r2 = m.radius() * m.radius();
  if (edot(x0, x0) > r2 * (1.0 + 1e-12))
    throw NumericalError("geodesic start lies outside the domain");
  PhasePoint st{x0, v0};
  double t = 0.0;
  for (int k = 0; k < opt.max_steps; ++k) {
    const PhasePoint next = rk4_step(m, st, opt.step);
    if (edot(next.x, next.x) - r2 > 0.0) {
      const Crossing c = locate_crossing(m, st, opt.step, r2, opt.boundary_tol);
      return {c.state, t + c.dt};
    }
    t += opt.step;
    st = next;
  }
  throw NumericalError("geodesic did not reach the boundary within max_steps");
}

double exit_time(const MetricField& m, Vec2 x0, Vec2 v0, const FlowOptions& opt) {
  return exit_state(m, x0, v0, opt).tau;
}

PhasePoint flow_time(const MetricField& m, Vec2 x0, Vec2 v0, double t, const FlowOptions& opt) {
  if (t < 0.0) {
    // phi_{-t}(x, v) through the time reversal (x, v) -> (x, -v)
    PhasePoint p = flow_time(m, x0, {-v0.x, -v0.y}, -t, opt);
    return {p.x, {-p.v.x, -p.v.y}};
  }
  const double r2 = m.radius() * m.radius();
  PhasePoint st{x0, v0};
  double remaining = t;
  while (remaining > 0.0) {
    const double h = std::min(opt.step, remaining);
    st = rk4_step(m, st, h);
    remaining -= h;
    if (edot(st.x, st.x) > r2 * (1.0 + 1e-14))
      throw NumericalError("geodesic leaves the domain before the requested time");
  }
  return st;
}

Vec2 exp_map(const MetricField& m, Vec2 x, Vec2 eta, const FlowOptions& opt) {
  const double n = m.norm(x, eta);
  if (n == 0.0) return x;
  return flow_time(m, x, eta / n, n, opt).x;
}

double boundary_distance(const MetricField& m, const BoundaryChart& chart, double s_from,
                         double s_to, const FlowOptions& opt) {
  const double L = chart.length();
  const double target = wrap_periodic(s_to - s_from, L);
  if (target == 0.0) return 0.0;

  const Vec2 x0 = chart.point_of_s(s_from);
  double tau_at = 0.0;
  // Arc advance of the exit point, in (0, L); monotone decreasing in phi on
  // simple metrics.
  auto advance_of = [&](double phi) {
    const Vec2 v0 = chart.direction(s_from, phi);
    const ExitState hit = exit_state(m, x0, v0, opt);
    tau_at = hit.tau;
    const Vec2 y = hit.p.x;
    const double s_exit = chart.s_of_theta(std::atan2(y.y, y.x));
    double adv = wrap_periodic(s_exit - s_from, L);
    if (adv == 0.0) adv = L; // grazing numerical wrap
    return adv;
  };

  double eps = 1e-5;
  double a = -0.5 * M_PI + eps, b = 0.5 * M_PI - eps;
  double fa = advance_of(a) - target;
  double fb = advance_of(b) - target;
  for (int widen = 0; widen < 4 && fa * fb > 0.0; ++widen) {
    eps *= 0.01;
    a = -0.5 * M_PI + eps;
    b = 0.5 * M_PI - eps;
    fa = advance_of(a) - target;
    fb = advance_of(b) - target;
  }
  if (fa * fb > 0.0) throw NumericalError("boundary shooting failed to bracket the target");

  double phi = 0.5 * (a + b);
  double f_prev = fa, phi_prev = a;
  double f = advance_of(phi) - target;
  for (int it = 0; it < 80; ++it) {
    if (std::abs(f) < 1e-10 * L || b - a < 1e-14) break;
    if (f > 0.0) {
      a = phi;
    } else {
      b = phi;
    }
    double cand;
    if (it >= 6 && f != f_prev) {
      cand = phi - f * (phi - phi_prev) / (f - f_prev); // secant
      if (!(cand > a && cand < b)) cand = 0.5 * (a + b);
    } else {
      cand = 0.5 * (a + b);
    }
    phi_prev = phi;
    f_prev = f;
    phi = cand;
    f = advance_of(phi) - target;
  }
  return tau_at;
}

// ---- Jacobi fields ---------------------------------------------------------

namespace {

struct JState {
  PhasePoint p;
  Vec2 J, DJ;
};

JState jrhs(const MetricField& m, const JState& s) {
  JState d;
  d.p.x = s.p.v;
  d.p.v = m.geodesic_accel(s.p.x, s.p.v);
  double gm[2][2][2];
  m.christoffel(s.p.x, gm);
  auto gamma_vw = [&](Vec2 v, Vec2 w) {
    Vec2 r;
    r.x = gm[0][0][0] * v.x * w.x + gm[0][0][1] * (v.x * w.y + v.y * w.x) + gm[0][1][1] * v.y * w.y;
    r.y = gm[1][0][0] * v.x * w.x + gm[1][0][1] * (v.x * w.y + v.y * w.x) + gm[1][1][1] * v.y * w.y;
    return r;
  };
  // coordinate velocity of J recovered from the covariant derivative
  d.J = s.DJ - gamma_vw(s.p.v, s.J);
  const double K = m.gauss_curvature(s.p.x);
  const double jv = m.inner(s.p.x, s.J, s.p.v);
  const double vv = m.inner(s.p.x, s.p.v, s.p.v);
  // D^2 J = -K (J <v,v> - <J,v> v); <v,v> kept explicit to tolerate drift
  const Vec2 rj = {K * (s.J.x * vv - jv * s.p.v.x), K * (s.J.y * vv - jv * s.p.v.y)};
  d.DJ = {-rj.x - gamma_vw(s.p.v, s.DJ).x, -rj.y - gamma_vw(s.p.v, s.DJ).y};
  return d;
}

JState jadvance(const JState& s, const JState& d, double h) {
  JState o = s;
  o.p.x = s.p.x + h * d.p.x;
  o.p.v = s.p.v + h * d.p.v;
  o.J = s.J + h * d.J;
  o.DJ = s.DJ + h * d.DJ;
  return o;
}

JState jrk4(const MetricField& m, const JState& s, double h) {
  const JState k1 = jrhs(m, s);
  const JState k2 = jrhs(m, jadvance(s, k1, 0.5 * h));
  const JState k3 = jrhs(m, jadvance(s, k2, 0.5 * h));
  const JState k4 = jrhs(m, jadvance(s, k3, h));
  JState o = s;
  auto mix = [&](Vec2 a, Vec2 b, Vec2 c, Vec2 d2) {
    return Vec2{(a.x + 2.0 * b.x + 2.0 * c.x + d2.x) / 6.0, (a.y + 2.0 * b.y + 2.0 * c.y + d2.y) / 6.0};
  };
  o.p.x = s.p.x + h * mix(k1.p.x, k2.p.x, k3.p.x, k4.p.x);
  o.p.v = s.p.v + h * mix(k1.p.v, k2.p.v, k3.p.v, k4.p.v);
  o.J = s.J + h * mix(k1.J, k2.J, k3.J, k4.J);
  o.DJ = s.DJ + h * mix(k1.DJ, k2.DJ, k3.DJ, k4.DJ);
  return o;
}

} // namespace

JacobiRecord propagate_jacobi(const MetricField& m, const GeodesicRecord& rec, Vec2 J0, Vec2 DJ0) {
  JacobiRecord out;
  const size_t n = rec.t.size();
  out.J.resize(n);
  out.DJ.resize(n);
  JState st{{rec.x.front(), rec.v.front()}, J0, DJ0};
  out.J[0] = J0;
  out.DJ[0] = DJ0;
  for (size_t k = 1; k < n; ++k) {
    const double h = rec.t[k] - rec.t[k - 1];
    st = jrk4(m, st, h);
    out.J[k] = st.J;
    out.DJ[k] = st.DJ;
  }
  return out;
}

double wronskian(const MetricField& m, const GeodesicRecord& rec, const JacobiRecord& a,
                 const JacobiRecord& b, int k) {
  const Vec2 x = rec.x[k];
  return m.inner(x, a.DJ[k], b.J[k]) - m.inner(x, a.J[k], b.DJ[k]);
}

// ---- parallel transport ----------------------------------------------------

namespace {

struct PState {
  PhasePoint p;
  Mat2 P; // columns = transported basis vectors
};

PState prhs(const MetricField& m, const PState& s) {
  PState d;
  d.p.x = s.p.v;
  d.p.v = m.geodesic_accel(s.p.x, s.p.v);
  double gm[2][2][2];
  m.christoffel(s.p.x, gm);
  auto gamma_v = [&](Vec2 w) {
    const Vec2 v = s.p.v;
    return Vec2{gm[0][0][0] * v.x * w.x + gm[0][0][1] * (v.x * w.y + v.y * w.x) +
                    gm[0][1][1] * v.y * w.y,
                gm[1][0][0] * v.x * w.x + gm[1][0][1] * (v.x * w.y + v.y * w.x) +
                    gm[1][1][1] * v.y * w.y};
  };
  const Vec2 c1 = gamma_v({s.P.a11, s.P.a21});
  const Vec2 c2 = gamma_v({s.P.a12, s.P.a22});
  d.P = {-c1.x, -c2.x, -c1.y, -c2.y};
  return d;
}

PState padvance(const PState& s, const PState& d, double h) {
  PState o = s;
  o.p.x = s.p.x + h * d.p.x;
  o.p.v = s.p.v + h * d.p.v;
  o.P = {s.P.a11 + h * d.P.a11, s.P.a12 + h * d.P.a12, s.P.a21 + h * d.P.a21,
         s.P.a22 + h * d.P.a22};
  return o;
}

} // namespace

Mat2 parallel_transport(const MetricField& m, const GeodesicRecord& rec) {
  PState st{{rec.x.front(), rec.v.front()}, Mat2::identity()};
  for (size_t k = 1; k < rec.t.size(); ++k) {
    const double h = rec.t[k] - rec.t[k - 1];
    const PState k1 = prhs(m, st);
    const PState k2 = prhs(m, padvance(st, k1, 0.5 * h));
    const PState k3 = prhs(m, padvance(st, k2, 0.5 * h));
    const PState k4 = prhs(m, padvance(st, k3, h));
    PState o = st;
    o.p.x = st.p.x + (h / 6.0) * (k1.p.x + 2.0 * k2.p.x + 2.0 * k3.p.x + k4.p.x);
    o.p.v = st.p.v + (h / 6.0) * (k1.p.v + 2.0 * k2.p.v + 2.0 * k3.p.v + k4.p.v);
    o.P.a11 = st.P.a11 + (h / 6.0) * (k1.P.a11 + 2.0 * k2.P.a11 + 2.0 * k3.P.a11 + k4.P.a11);
    o.P.a12 = st.P.a12 + (h / 6.0) * (k1.P.a12 + 2.0 * k2.P.a12 + 2.0 * k3.P.a12 + k4.P.a12);
    o.P.a21 = st.P.a21 + (h / 6.0) * (k1.P.a21 + 2.0 * k2.P.a21 + 2.0 * k3.P.a21 + k4.P.a21);
    o.P.a22 = st.P.a22 + (h / 6.0) * (k1.P.a22 + 2.0 * k2.P.a22 + 2.0 * k3.P.a22 + k4.P.a22);
    st = o;
  }
  return st.P;
}

// ---- simplicity check -------------------------------------------------------

SimpleReport check_simple(const MetricField& m, const BoundaryChart& chart, int n_s, int n_phi,
                          FlowOptions opt) {
  SimpleReport rep;
  const double L = chart.length();

  double min_b = std::numeric_limits<double>::infinity();
  const int nb = std::max(4 * n_s, 128);
  for (int i = 0; i < nb; ++i) min_b = std::min(min_b, chart.second_fundamental_form(i * L / nb));
  rep.min_second_fundamental = min_b;
  rep.convex = min_b > 0.0;

  // Fan with Jacobi fields J(0)=0, DJ(0) unit normal to the ray; a sign change
  // of the normal component of J inside the domain flags a conjugate point.
  // Rays hitting the step cap (10 * (2/step), generous against the chord
  // bound on simple metrics) are counted as trapped but still scanned.
  const int step_cap = std::min(opt.max_steps, static_cast<int>(std::ceil(20.0 / opt.step)));
  const double r2 = m.radius() * m.radius();
  bool conjugate = false;
  for (int i = 0; i < n_s; ++i) {
    const double s = i * L / n_s;
    for (int j = 0; j < n_phi; ++j) {
      if (rep.trapped && conjugate) break; // nothing left to learn
      const double phi = -0.5 * M_PI + (j + 0.5) * M_PI / n_phi;
      const Vec2 x0 = chart.point_of_s(s);
      const Vec2 v0 = chart.direction(s, phi);
      JState st{{x0, v0}, {0.0, 0.0}, m.rotate_perp(x0, v0)};
      double n_prev = 0.0;
      bool exited = false;
      for (int k = 0; k < step_cap; ++k) {
        st = jrk4(m, st, opt.step);
        if (edot(st.p.x, st.p.x) > r2) {
          exited = true;
          break;
        }
        const double nc = m.inner(st.p.x, st.J, m.rotate_perp(st.p.x, st.p.v));
        if (k > 0 && nc * n_prev < 0.0) conjugate = true;
        n_prev = nc;
      }
      if (!exited) rep.trapped = true;
    }
    if (rep.trapped && conjugate) break;
  }
  rep.no_conjugate = !conjugate;
  return rep;
}

} // namespace geotomo
