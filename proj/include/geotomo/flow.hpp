#pragma once

#include <vector>

#include "geotomo/geometry.hpp"
#include "geotomo/linalg.hpp"

namespace geotomo {

struct PhasePoint {
  Vec2 x, v;
};

struct FlowOptions {
  double step = 1e-3;       // RK4 step in flow time
  int max_steps = 2000000;  // hard cap before declaring the geodesic trapped
  double boundary_tol = 1e-13; // on |x|^2 - R^2 when locating the exit
};

// Geodesic trace from an interior or boundary start to the first boundary
// crossing.  Sample times are uniform at opt.step except the final fragment,
// which lands the state on |x| = R to boundary_tol.
struct GeodesicRecord {
  std::vector<double> t;
  std::vector<Vec2> x, v;
  bool exited = false;
  double tau() const { return t.back(); }
  PhasePoint end() const { return {x.back(), v.back()}; }
};

// One RK4 step of the geodesic equation; exposed for coupled integrators.
PhasePoint rk4_step(const MetricField& m, const PhasePoint& s, double h);

// Traces until the boundary of the metric's disk.  Throws NumericalError when
// max_steps is exceeded unless allow_trapped is set (record.exited = false).
GeodesicRecord trace_geodesic(const MetricField& m, Vec2 x0, Vec2 v0, const FlowOptions& opt,
                              bool allow_trapped = false);

// First exit time tau(x, v).
double exit_time(const MetricField& m, Vec2 x0, Vec2 v0, const FlowOptions& opt);

// Exit state without storing the path.
struct ExitState {
  PhasePoint p;
  double tau = 0.0;
};
ExitState exit_state(const MetricField& m, Vec2 x0, Vec2 v0, const FlowOptions& opt);

// State after flowing for a fixed time (may be negative: reverses through the
// time-reversal symmetry).  Throws NumericalError if the geodesic leaves the
// disk strictly before |t|.
PhasePoint flow_time(const MetricField& m, Vec2 x0, Vec2 v0, double t, const FlowOptions& opt);

// exp_x(eta): flow from x with initial speed |eta|_g for unit time.
Vec2 exp_map(const MetricField& m, Vec2 x, Vec2 eta, const FlowOptions& opt);

// Boundary-to-boundary distance between the points at arclengths s_from and
// s_to, found by shooting on the exit point (monotone on simple metrics).
double boundary_distance(const MetricField& m, const BoundaryChart& chart, double s_from,
                         double s_to, const FlowOptions& opt);

// Jacobi field along a recorded geodesic: state (J, DJ) with the covariant
// derivative DJ; D^2 J + K (J - g(J,v)v) = 0.
struct JacobiRecord {
  std::vector<Vec2> J, DJ;
};

JacobiRecord propagate_jacobi(const MetricField& m, const GeodesicRecord& rec, Vec2 J0, Vec2 DJ0);

// Wronskian {X,Y} = g(DX, Y) - g(X, DY) at sample k of the record.
double wronskian(const MetricField& m, const GeodesicRecord& rec, const JacobiRecord& a,
                 const JacobiRecord& b, int k);

// Parallel transport matrix along a recorded geodesic, start to end:
// columns are the transported coordinate basis vectors.
Mat2 parallel_transport(const MetricField& m, const GeodesicRecord& rec);

struct SimpleReport {
  bool convex = false;
  bool no_conjugate = false;
  bool trapped = false;
  double min_second_fundamental = 0.0;
  bool simple() const { return convex && no_conjugate && !trapped; }
};

// Samples the boundary convexity and shoots a fan of geodesics with Jacobi
// fields looking for conjugate points or trapping.
SimpleReport check_simple(const MetricField& m, const BoundaryChart& chart, int n_s = 48,
                          int n_phi = 21, FlowOptions opt = {});

} // namespace geotomo
