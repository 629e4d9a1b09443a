#include "geotomo/transport.hpp"

#include <algorithm>
#include <cmath>

#include "geotomo/errors.hpp"
#include "geotomo/interp.hpp"

namespace geotomo {

namespace {

// Shared Simpson walk: pairs of equal steps get the 1-4-1 rule, the leftover
// fragment (the boundary-crossing substep) falls back to trapezoid.
template <class Emit>
void quadrature_weights(const std::vector<double>& t, Emit&& emit) {
  const size_t n = t.size();
  size_t i = 0;
  while (i + 2 < n) {
    const double h0 = t[i + 1] - t[i], h1 = t[i + 2] - t[i + 1];
    if (std::abs(h1 - h0) > 1e-9 * std::max(h0, h1)) break;
    const double c = (h0 + h1) / 6.0;
    emit(i, c);
    emit(i + 1, 4.0 * c);
    emit(i + 2, c);
    i += 2;
  }
  for (; i + 1 < n; ++i) {
    const double half = 0.5 * (t[i + 1] - t[i]);
    emit(i, half);
    emit(i + 1, half);
  }
}

template <class F>
double integrate_record(const GeodesicRecord& rec, F&& f) {
  if (rec.t.size() < 2) return 0.0;
  std::vector<double> val(rec.t.size());
  for (size_t i = 0; i < val.size(); ++i) val[i] = f(rec.x[i], rec.v[i]);
  double acc = 0.0;
  quadrature_weights(rec.t, [&](size_t i, double w) { acc += w * val[i]; });
  return acc;
}

FlowOptions with_step(FlowOptions opt, double step) {
  opt.step = step;
  return opt;
}

} // namespace

ScalarField ScalarField::zeros(int nr, int nth, double radius) {
  if (nr < 4 || nth < 8 || nth % 2 != 0)
    throw NumericalError("polar grid needs nr >= 4 and even nth >= 8");
  ScalarField out;
  out.nr = nr;
  out.nth = nth;
  out.radius = radius;
  out.v.assign(static_cast<size_t>(nr) * nth, 0.0);
  return out;
}

double ScalarField::interp_polar(double r, double theta) const {
  const double dr = radius / nr;
  const double dth = 2.0 * M_PI / nth;
  int i0;
  double tr, wr[4];
  locate_cell(r, 0.5 * dr, dr, i0, tr);
  cubic_weights(tr, wr);

  // A radial stencil row: mirrored through the center for i < 0, quadratic
  // ghost beyond the rim.
  auto row = [&](int i, double th) -> double {
    auto theta_row = [&](int ii, double ang) {
      return interp_periodic([&](int j) { return at(ii, j); }, nth, 0.0, dth, ang);
    };
    if (i < 0) return theta_row(-1 - i, th + M_PI);
    if (i < nr) return theta_row(i, th);
    const double u = static_cast<double>(nr - 1 - i); // negative
    return theta_row(nr - 1, th) * (u - 1.0) * (u - 2.0) * 0.5 -
           theta_row(nr - 2, th) * u * (u - 2.0) +
           theta_row(nr - 3, th) * u * (u - 1.0) * 0.5;
  };

  double acc = 0.0;
  for (int k = 0; k < 4; ++k) acc += wr[k] * row(i0 - 1 + k, theta);
  return acc;
}

double ScalarField::eval(Vec2 x) const {
  return interp_polar(std::hypot(x.x, x.y), std::atan2(x.y, x.x));
}

double l2_inner(const MetricField& m, const ScalarField& a, const ScalarField& b) {
  if (a.nr != b.nr || a.nth != b.nth) throw NumericalError("field shape mismatch");
  const double dr = a.radius / a.nr, dth = 2.0 * M_PI / a.nth;
  double acc = 0.0;
  for (int i = 0; i < a.nr; ++i) {
    const double r = a.r_node(i);
    for (int j = 0; j < a.nth; ++j)
      acc += a.at(i, j) * b.at(i, j) * m.sqrt_det(a.node_xy(i, j)) * r;
  }
  return acc * dr * dth;
}

double l2_norm(const MetricField& m, const ScalarField& a) {
  return std::sqrt(std::max(0.0, l2_inner(m, a, a)));
}

double xray(const MetricField& m, const BoundaryChart& chart, const ScalarField& f,
            double s, double phi, const FlowOptions& opt) {
  const GeodesicRecord rec =
      trace_geodesic(m, chart.point_of_s(s), chart.direction(s, phi), opt);
  return integrate_record(rec, [&](Vec2 x, Vec2) { return f.eval(x); });
}

double xray(const MetricField& m, const BoundaryChart& chart,
            const std::function<double(Vec2, Vec2)>& f, double s, double phi,
            const FlowOptions& opt) {
  const GeodesicRecord rec =
      trace_geodesic(m, chart.point_of_s(s), chart.direction(s, phi), opt);
  return integrate_record(rec, f);
}

BoundaryFiberGrid sinogram(const MetricField& m, const BoundaryChart& chart,
                           const ScalarField& f, int ns, int nphi, const FlowOptions& opt) {
  BoundaryFiberGrid out = BoundaryFiberGrid::zeros(BoundaryFiberGrid::Half::Inward, ns,
                                                   nphi, chart.length());
  for (int i = 0; i < ns; ++i)
    for (int j = 0; j < nphi; ++j)
      out.at(i, j) = xray(m, chart, f, out.s_node(i), out.phi_node(j), opt);
  return out;
}

ScalarField istar(const EntryMap& em, const BoundaryFiberGrid& w) {
  const BundleGrid wpsi = transport_extend(em, w);
  ScalarField out = ScalarField::zeros(em.nr(), em.nth(), em.radius());
  const double scale = 2.0 * M_PI / em.nb();
  for (int i = 0; i < em.nr(); ++i)
    for (int j = 0; j < em.nth(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < em.nb(); ++k) acc += wpsi.at(i, j, k);
      out.at(i, j) = scale * acc;
    }
  return out;
}

FanCache build_fan(const MetricField& m, int nr, int nth, int nb, double qstep,
                   const FlowOptions& opt) {
  if (nb % 2 != 0) throw NumericalError("fan needs an even fiber count");
  FanCache fan;
  fan.nr = nr;
  fan.nth = nth;
  fan.nb = nb;
  fan.radius = m.radius();
  const BundleGrid shape = BundleGrid::zeros(nr, nth, nb, fan.radius);
  fan.offset.reserve(static_cast<size_t>(nr) * nth * nb + 1);
  fan.offset.push_back(0);
  const FlowOptions fopt = with_step(opt, qstep);
  for (int i = 0; i < nr; ++i) {
    const double r = shape.r_node(i);
    for (int j = 0; j < nth; ++j) {
      const double th = shape.theta_node(j);
      const Vec2 x{r * std::cos(th), r * std::sin(th)};
      for (int k = 0; k < nb; ++k) {
        const Vec2 xi = m.from_angle(x, shape.beta_node(k));
        const GeodesicRecord rec = trace_geodesic(m, x, xi, fopt);
        const size_t base = fan.px.size();
        fan.px.resize(base + rec.t.size());
        fan.py.resize(base + rec.t.size());
        fan.wq.resize(fan.wq.size() + rec.t.size(), 0.0f);
        for (size_t n = 0; n < rec.t.size(); ++n) {
          fan.px[base + n] = static_cast<float>(rec.x[n].x);
          fan.py[base + n] = static_cast<float>(rec.x[n].y);
        }
        quadrature_weights(rec.t, [&](size_t n, double wgt) {
          fan.wq[base + n] += static_cast<float>(wgt);
        });
        fan.offset.push_back(fan.px.size());
      }
    }
  }
  return fan;
}

ScalarField normal_apply(const FanCache& fan, const ScalarField& f) {
  if (fan.nr != f.nr || fan.nth != f.nth || std::abs(fan.radius - f.radius) > 1e-12)
    throw NumericalError("fan cache does not match the field layout");
  ScalarField out = ScalarField::zeros(f.nr, f.nth, f.radius);
  // each orbit contributes its full chord; with an even fiber count the
  // forward half-integrals pair up, hence the factor two
  const double scale = 4.0 * M_PI / fan.nb;
  size_t node = 0;
  for (int i = 0; i < fan.nr; ++i)
    for (int j = 0; j < fan.nth; ++j) {
      double acc = 0.0;
      for (int k = 0; k < fan.nb; ++k, ++node) {
        for (uint64_t n = fan.offset[node]; n < fan.offset[node + 1]; ++n)
          acc += fan.wq[n] * f.eval({fan.px[n], fan.py[n]});
      }
      out.at(i, j) = scale * acc;
    }
  return out;
}

ScalarField normal_op(const MetricField& m, const ScalarField& f, int nb, double qstep,
                      const FlowOptions& opt) {
  if (std::abs(m.radius() - f.radius) > 1e-12)
    throw NumericalError("field does not live on the metric's disk");
  return normal_apply(build_fan(m, f.nr, f.nth, nb, qstep, opt), f);
}

IstarSolution solve_istar(const MetricField& m, const ScalarField& h, const IstarOptions& opt) {
  if (std::abs(h.radius - m.radius()) > 1e-12)
    throw NumericalError("target field must live on the base disk");
  const MetricField mn = m.with_radius(m.radius() * (1.0 + opt.delta));
  const BoundaryChart chart_n(mn);
  const SimpleReport rep = check_simple(mn, chart_n, 16, 9, with_step({}, 5e-3));
  if (!rep.simple()) throw NumericalError("enlarged disk is not simple");

  // target extended by zero with a quintic taper over the inner half annulus
  const double r0 = m.radius();
  const double width = 0.5 * opt.delta * m.radius();
  auto htilde = [&](Vec2 x) {
    const double r = std::hypot(x.x, x.y);
    if (r >= r0 + width) return 0.0;
    double b = 1.0;
    if (r > r0) {
      const double t = (r - r0) / width;
      b = 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    }
    return b * h.eval(x);
  };
  const ScalarField b = ScalarField::sample(opt.nr, opt.nth, mn.radius(), htilde);

  IstarSolution sol;
  sol.f = ScalarField::zeros(opt.nr, opt.nth, mn.radius());
  const double bnorm = l2_norm(mn, b);

  if (bnorm > 0.0) {
    const FanCache fan = build_fan(mn, opt.nr, opt.nth, opt.nb, opt.qstep);
    ScalarField r = b;
    ScalarField p = r;
    double rs = l2_inner(mn, r, r);
    // quadrature-level asymmetry of the discrete operator can turn the
    // recurrence divergent once the smooth part of b is resolved, so keep the
    // best iterate and bail out after sustained regression
    double best_rs = rs;
    ScalarField best = sol.f;
    int behind = 0;
    for (sol.cg_iterations = 0; sol.cg_iterations < opt.cg_max; ++sol.cg_iterations) {
      if (std::sqrt(rs) / bnorm < opt.cg_tol) break;
      const ScalarField ap = normal_apply(fan, p);
      const double denom = l2_inner(mn, p, ap);
      if (!(denom > 0.0)) break; // lost positivity at roundoff level
      const double alpha = rs / denom;
      for (size_t n = 0; n < sol.f.v.size(); ++n) {
        sol.f.v[n] += alpha * p.v[n];
        r.v[n] -= alpha * ap.v[n];
      }
      const double rs_next = l2_inner(mn, r, r);
      if (rs_next < best_rs) {
        best_rs = rs_next;
        best = sol.f;
        behind = 0;
      } else if (++behind >= 25) {
        break;
      }
      const double beta = rs_next / rs;
      for (size_t n = 0; n < p.v.size(); ++n) p.v[n] = r.v[n] + beta * p.v[n];
      rs = rs_next;
    }
    sol.f = best;
    sol.cg_residual = std::sqrt(best_rs) / bnorm;
  }

  // boundary data: twice the even part of the transport solution, one
  // two-sided trace through the enlarged disk per inward node
  const BoundaryChart chart_m(m);
  sol.w = BoundaryFiberGrid::zeros(BoundaryFiberGrid::Half::Inward, opt.ns_out,
                                   opt.nphi_out, chart_m.length());
  const FlowOptions wopt = with_step({}, opt.qstep);
  auto f_eval = [&](Vec2 x, Vec2) { return sol.f.eval(x); };
  for (int i = 0; i < sol.w.ns; ++i) {
    const double s = sol.w.s_node(i);
    const Vec2 x0 = chart_m.point_of_s(s);
    for (int j = 0; j < sol.w.nphi; ++j) {
      const Vec2 v0 = chart_m.direction(s, sol.w.phi_node(j));
      sol.w.at(i, j) = integrate_record(trace_geodesic(mn, x0, v0, wopt), f_eval) +
                       integrate_record(trace_geodesic(mn, x0, {-v0.x, -v0.y}, wopt), f_eval);
    }
  }

  // self-verification back on the base disk
  const EntryMap em(m, chart_m, opt.verify_nr, opt.verify_nth, opt.verify_nb,
                    with_step({}, opt.verify_step));
  const ScalarField iw = istar(em, sol.w);
  ScalarField diff = iw;
  ScalarField href = ScalarField::zeros(opt.verify_nr, opt.verify_nth, m.radius());
  for (int i = 0; i < href.nr; ++i)
    for (int j = 0; j < href.nth; ++j) href.at(i, j) = h.eval(href.node_xy(i, j));
  for (size_t n = 0; n < diff.v.size(); ++n) diff.v[n] -= href.v[n];
  const double hn = l2_norm(m, href);
  sol.verify_residual = hn > 0.0 ? l2_norm(m, diff) / hn : l2_norm(m, diff);
  return sol;
}

} // namespace geotomo
