#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "geotomo/errors.hpp"
#include "geotomo/flow.hpp"

using namespace geotomo;

namespace {

MetricField euclid() { return MetricField::conformal(Expr::parse("0")); }
MetricField bump() {
  return MetricField::conformal(Expr::parse("0.1*exp(-((x-0.1)^2+y^2)/0.3)"));
}
MetricField sphere() { return MetricField::conformal(Expr::parse("-log(1+(x^2+y^2)/4)")); }
MetricField hyper() { return MetricField::conformal(Expr::parse("-log(1-(x^2+y^2)/4)")); }
// curvature +1 cap past the hemisphere: g-diameter 4 atan(2) > pi
MetricField big_cap() { return MetricField::conformal(Expr::parse("log(4)-log(1+4*(x^2+y^2))")); }

const FlowOptions kOpt; // defaults: step 1e-3

} // namespace

TEST_CASE("euclidean chords are exact") {
  const MetricField m = euclid();
  const BoundaryChart chart(m);
  for (double s : {0.0, 1.1, 4.4}) {
    for (double phi : {-1.2, -0.4, 0.0, 0.9, 1.4}) {
      CAPTURE(s);
      CAPTURE(phi);
      const GeodesicRecord rec =
          trace_geodesic(m, chart.point_of_s(s), chart.direction(s, phi), kOpt);
      CHECK(rec.exited);
      CHECK(rec.tau() == doctest::Approx(2 * std::cos(phi)).epsilon(1e-10));
      CHECK(enorm(rec.x.back()) == doctest::Approx(1.0).epsilon(1e-12));
      // exit arc s + pi - 2 phi, exit direction unchanged on straight lines
      const double s_exit = chart.s_of_theta(std::atan2(rec.x.back().y, rec.x.back().x));
      CHECK(wrap_angle(s_exit - (s + M_PI - 2 * phi)) == doctest::Approx(0.0).epsilon(1e-9));
      CHECK(enorm(rec.v.back() - rec.v.front()) == doctest::Approx(0.0).epsilon(1e-11));
    }
  }
}

TEST_CASE("exit_time equals the trace length") {
  const MetricField m = bump();
  const BoundaryChart chart(m);
  for (double s : {0.2, 2.0}) {
    const Vec2 x0 = chart.point_of_s(s);
    const Vec2 v0 = chart.direction(s, 0.37);
    const GeodesicRecord rec = trace_geodesic(m, x0, v0, kOpt);
    CHECK(exit_time(m, x0, v0, kOpt) == doctest::Approx(rec.tau()).epsilon(1e-13));
  }
}

TEST_CASE("unit speed is conserved along traces") {
  const MetricField m = bump();
  const BoundaryChart chart(m);
  const GeodesicRecord rec = trace_geodesic(m, chart.point_of_s(1.0), chart.direction(1.0, 0.2), kOpt);
  double worst = 0.0;
  for (size_t k = 0; k < rec.t.size(); ++k)
    worst = std::max(worst, std::abs(m.norm(rec.x[k], rec.v[k]) - 1.0));
  CHECK(worst < 1e-10);
}

TEST_CASE("flow reverses and composes") {
  const MetricField m = bump();
  const Vec2 x0{0.2, -0.3};
  const Vec2 v0 = m.normalized(x0, {0.5, 0.8});
  const PhasePoint fwd = flow_time(m, x0, v0, 0.7, kOpt);
  const PhasePoint back = flow_time(m, fwd.x, fwd.v, -0.7, kOpt);
  CHECK(enorm(back.x - x0) < 1e-10);
  CHECK(enorm(back.v - v0) < 1e-10);
  const PhasePoint ab = flow_time(m, x0, v0, 0.3, kOpt);
  const PhasePoint two = flow_time(m, ab.x, ab.v, 0.4, kOpt);
  CHECK(enorm(two.x - fwd.x) < 1e-11);

  // leaving the disk before the requested time is an error
  CHECK_THROWS_AS(flow_time(euclid(), {0, 0}, {1, 0}, 1.5, kOpt), NumericalError);
}

TEST_CASE("exponential map closed forms") {
  const MetricField e = euclid();
  const Vec2 y = exp_map(e, {0.1, -0.2}, {0.4, 0.5}, kOpt);
  CHECK(y.x == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.y == doctest::Approx(0.3).epsilon(1e-12));

  // curvature +1 chart: g-distance rho from the origin sits at radius 2 tan(rho/2)
  const MetricField sp = sphere();
  const Vec2 z = exp_map(sp, {0, 0}, {0.8, 0.0}, kOpt);
  CHECK(z.x == doctest::Approx(2 * std::tan(0.4)).epsilon(1e-9));
  CHECK(z.y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("diameters of the constant curvature disks") {
  // through the center: 4 atan(1/2) on the cap, 2 log 3 on the hyperbolic disk
  const GeodesicRecord rs = trace_geodesic(sphere(), {-1.0, 0.0}, sphere().normalized({-1, 0}, {1, 0}), kOpt);
  CHECK(rs.tau() == doctest::Approx(4 * std::atan(0.5)).epsilon(1e-9));
  const GeodesicRecord rh = trace_geodesic(hyper(), {-1.0, 0.0}, hyper().normalized({-1, 0}, {1, 0}), kOpt);
  CHECK(rh.tau() == doctest::Approx(2 * std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("boundary distances match chord formulas") {
  const MetricField e = euclid();
  const BoundaryChart ce(e);
  for (double ds : {0.3, 1.1, M_PI, 5.0}) {
    CHECK(boundary_distance(e, ce, 0.7, 0.7 + ds, kOpt) ==
          doctest::Approx(2 * std::sin(ds / 2)).epsilon(1e-8));
  }

  // spherical law of cosines on the K=+1 cap: boundary circle at polar angle
  // psi with cos psi = 3/5; a quarter turn is ds = L/4
  const MetricField sp = sphere();
  const BoundaryChart cs(sp);
  const double L = cs.length();
  CHECK(boundary_distance(sp, cs, 0.0, L / 4, kOpt) ==
        doctest::Approx(std::acos(0.36)).epsilon(1e-7));
  CHECK(boundary_distance(sp, cs, 1.0, 1.0 + L / 2, kOpt) ==
        doctest::Approx(std::acos(0.36 - 0.64)).epsilon(1e-7));

  // hyperbolic law of cosines: circle at distance log 3 from the center
  const MetricField hy = hyper();
  const BoundaryChart chh(hy);
  const double Lh = chh.length();
  CHECK(boundary_distance(hy, chh, 0.3, 0.3 + Lh / 4, kOpt) ==
        doctest::Approx(std::acosh(25.0 / 9.0)).epsilon(1e-7));
}

TEST_CASE("boundary distance is symmetric and triangular") {
  const MetricField m = bump();
  const BoundaryChart chart(m);
  const double L = chart.length();
  const double a = 0.15 * L, b = 0.52 * L, c = 0.8 * L;
  const double dab = boundary_distance(m, chart, a, b, kOpt);
  const double dba = boundary_distance(m, chart, b, a, kOpt);
  const double dac = boundary_distance(m, chart, a, c, kOpt);
  const double dcb = boundary_distance(m, chart, c, b, kOpt);
  CHECK(dab == doctest::Approx(dba).epsilon(1e-8));
  CHECK(dab <= dac + dcb + 1e-9);
}

TEST_CASE("jacobi fields on flat and curved disks") {
  // Euclidean: J(t) = t * DJ(0)
  const MetricField e = euclid();
  const BoundaryChart ce(e);
  const GeodesicRecord re = trace_geodesic(e, ce.point_of_s(0.5), ce.direction(0.5, 0.3), kOpt);
  const Vec2 n0 = e.rotate_perp(re.x.front(), re.v.front());
  const JacobiRecord je = propagate_jacobi(e, re, {0, 0}, n0);
  for (size_t k = 0; k < re.t.size(); k += 200) {
    CHECK(enorm(je.J[k] - re.t[k] * n0) < 1e-10);
  }

  // constant curvature: |J|_g = sin(t) resp. sinh(t)
  const MetricField sp = sphere();
  const GeodesicRecord rs = trace_geodesic(sp, {-1, 0}, sp.normalized({-1, 0}, {1, 0}), kOpt);
  const JacobiRecord js =
      propagate_jacobi(sp, rs, {0, 0}, sp.rotate_perp(rs.x.front(), rs.v.front()));
  double worst = 0.0;
  for (size_t k = 0; k < rs.t.size(); k += 97)
    worst = std::max(worst, std::abs(sp.norm(rs.x[k], js.J[k]) - std::sin(rs.t[k])));
  CHECK(worst < 1e-8);

  const MetricField hy = hyper();
  const GeodesicRecord rh = trace_geodesic(hy, {-1, 0}, hy.normalized({-1, 0}, {1, 0}), kOpt);
  const JacobiRecord jh =
      propagate_jacobi(hy, rh, {0, 0}, hy.rotate_perp(rh.x.front(), rh.v.front()));
  worst = 0.0;
  for (size_t k = 0; k < rh.t.size(); k += 97)
    worst = std::max(worst,
                     std::abs(hy.norm(rh.x[k], jh.J[k]) - std::sinh(rh.t[k])) / std::cosh(rh.t[k]));
  CHECK(worst < 1e-8);
}

TEST_CASE("wronskian of jacobi pairs is conserved") {
  const MetricField m = bump();
  const BoundaryChart chart(m);
  const GeodesicRecord rec = trace_geodesic(m, chart.point_of_s(2.2), chart.direction(2.2, -0.5), kOpt);
  const Vec2 nu = m.rotate_perp(rec.x.front(), rec.v.front());
  const JacobiRecord a = propagate_jacobi(m, rec, {0, 0}, nu);
  const JacobiRecord b = propagate_jacobi(m, rec, nu, {0, 0});
  const double w0 = wronskian(m, rec, a, b, 0);
  CHECK(w0 == doctest::Approx(1.0).epsilon(1e-12));
  double drift = 0.0;
  for (size_t k = 0; k < rec.t.size(); k += 123)
    drift = std::max(drift, std::abs(wronskian(m, rec, a, b, static_cast<int>(k)) - w0));
  CHECK(drift < 1e-9);
}

TEST_CASE("parallel transport is a linear isometry") {
  const MetricField e = euclid();
  const BoundaryChart ce(e);
  const GeodesicRecord re = trace_geodesic(e, ce.point_of_s(0.0), ce.direction(0.0, 0.2), kOpt);
  const Mat2 pe = parallel_transport(e, re);
  CHECK(pe.a11 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pe.a12 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pe.a21 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pe.a22 == doctest::Approx(1.0).epsilon(1e-12));

  const MetricField m = bump();
  const BoundaryChart chart(m);
  const GeodesicRecord rec = trace_geodesic(m, chart.point_of_s(3.0), chart.direction(3.0, 0.8), kOpt);
  const Mat2 P = parallel_transport(m, rec);
  const Vec2 u{0.3, -0.4}, v{1.1, 0.2};
  const Vec2 x0 = rec.x.front(), x1 = rec.x.back();
  CHECK(m.inner(x1, P * u, P * v) == doctest::Approx(m.inner(x0, u, v)).epsilon(1e-9));
  // the velocity itself is parallel
  const Vec2 pv = P * rec.v.front();
  CHECK(enorm(pv - rec.v.back()) < 1e-8);
}

TEST_CASE("simplicity verdicts across fixtures") {
  auto run = [](const MetricField& m) {
    const BoundaryChart chart(m);
    FlowOptions opt;
    opt.step = 2e-3;
    return check_simple(m, chart, 12, 9, opt);
  };
  const SimpleReport re = run(euclid());
  CHECK(re.convex);
  CHECK(re.no_conjugate);
  CHECK_FALSE(re.trapped);
  CHECK(re.simple());
  CHECK(re.min_second_fundamental == doctest::Approx(1.0).epsilon(1e-5));

  // uniform scaling keeps simplicity
  CHECK(run(MetricField::conformal(Expr::parse("-log(10)"))).simple());
  CHECK(run(sphere()).simple());
  CHECK(run(hyper()).simple());
  CHECK(run(bump()).simple());

  // past-hemisphere cap: conjugate points at arc pi, concave boundary
  const SimpleReport rc = run(big_cap());
  CHECK_FALSE(rc.no_conjugate);
  CHECK_FALSE(rc.simple());
  CHECK_FALSE(rc.convex);
}

TEST_CASE("conjugate point location on the big cap") {
  // along a central chord |J|_g = sin(t): the detector's first zero sits at pi
  const MetricField m = big_cap();
  const GeodesicRecord rec = trace_geodesic(m, {-1, 0}, m.normalized({-1, 0}, {1, 0}), kOpt);
  CHECK(rec.tau() == doctest::Approx(4 * std::atan(2.0)).epsilon(1e-9));
  const JacobiRecord jr =
      propagate_jacobi(m, rec, {0, 0}, m.rotate_perp(rec.x.front(), rec.v.front()));
  double t_zero = -1.0;
  for (size_t k = 1; k + 1 < rec.t.size(); ++k) {
    const double a = m.inner(rec.x[k], jr.J[k], m.rotate_perp(rec.x[k], rec.v[k]));
    const double b = m.inner(rec.x[k + 1], jr.J[k + 1], m.rotate_perp(rec.x[k + 1], rec.v[k + 1]));
    if (a > 0.0 && b <= 0.0) {
      t_zero = rec.t[k] + (rec.t[k + 1] - rec.t[k]) * a / (a - b);
      break;
    }
  }
  CHECK(t_zero == doctest::Approx(M_PI).epsilon(1e-6));
}
