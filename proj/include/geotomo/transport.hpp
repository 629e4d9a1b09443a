#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "geotomo/bundle.hpp"
#include "geotomo/flow.hpp"
#include "geotomo/geometry.hpp"

namespace geotomo {

// Scalar data on the interior polar grid: r cell-centered, theta node-centered
// periodic, bicubic evaluation everywhere on the disk.  Radial stencils cross
// the center via f(-r, theta) = f(r, theta + pi), so nth must be even.
struct ScalarField {
  int nr = 0, nth = 0;
  double radius = 1.0;
  std::vector<double> v; // [r][theta]

  static ScalarField zeros(int nr, int nth, double radius = 1.0);

  template <class F>
  static ScalarField sample(int nr, int nth, double radius, F&& f) {
    ScalarField out = zeros(nr, nth, radius);
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nth; ++j) out.at(i, j) = f(out.node_xy(i, j));
    return out;
  }

  double r_node(int i) const { return (i + 0.5) * radius / nr; }
  double theta_node(int j) const { return j * 2.0 * M_PI / nth; }
  Vec2 node_xy(int i, int j) const {
    const double r = r_node(i), t = theta_node(j);
    return {r * std::cos(t), r * std::sin(t)};
  }
  double& at(int i, int j) { return v[static_cast<size_t>(i) * nth + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * nth + j]; }

  double interp_polar(double r, double theta) const;
  double eval(Vec2 x) const;
};

// L2(M) pairing with the metric area element.
double l2_inner(const MetricField& m, const ScalarField& a, const ScalarField& b);
double l2_norm(const MetricField& m, const ScalarField& a);

// Line integral of f along the geodesic entering at chart coordinates (s, phi):
// composite Simpson over the flow record, trapezoid on the leftover fragments.
double xray(const MetricField& m, const BoundaryChart& chart, const ScalarField& f,
            double s, double phi, const FlowOptions& opt = {});
// Same geodesic, integrand sampled on phase space.
double xray(const MetricField& m, const BoundaryChart& chart,
            const std::function<double(Vec2, Vec2)>& f, double s, double phi,
            const FlowOptions& opt = {});

// Forward transform on every inward grid node.
BoundaryFiberGrid sinogram(const MetricField& m, const BoundaryChart& chart,
                           const ScalarField& f, int ns, int nphi,
                           const FlowOptions& opt = {});

// Adjoint: 2 pi times the fiber mean of the transport extension w_psi.
ScalarField istar(const EntryMap& em, const BoundaryFiberGrid& w);

// Precomputed geodesic fans: node positions and quadrature weights of every
// forward trace from every phase node, so repeated normal-operator
// applications reduce to weighted gathers.
struct FanCache {
  int nr = 0, nth = 0, nb = 0;
  double radius = 1.0;
  std::vector<uint64_t> offset; // per phase node, one extra terminator entry
  std::vector<float> px, py, wq;
};

FanCache build_fan(const MetricField& m, int nr, int nth, int nb, double qstep = 0.02,
                   const FlowOptions& opt = {});
ScalarField normal_apply(const FanCache& fan, const ScalarField& f);
// One-shot I*I without keeping the fan.
ScalarField normal_op(const MetricField& m, const ScalarField& f, int nb = 64,
                      double qstep = 0.02, const FlowOptions& opt = {});

struct IstarOptions {
  double delta = 0.3; // enlargement factor; the zero-taper occupies the inner half
  int nr = 20, nth = 40, nb = 32; // normal-equation grid on the enlarged disk
  double qstep = 0.02;            // fan quadrature step
  double cg_tol = 1e-6;
  int cg_max = 500;
  int ns_out = 128, nphi_out = 128;           // returned boundary grid
  int verify_nr = 16, verify_nth = 32, verify_nb = 32;
  double verify_step = 5e-3;                  // entry-map trace step
};

struct IstarSolution {
  BoundaryFiberGrid w;  // inward data on the base boundary
  ScalarField f;        // density on the enlarged disk solving the normal equation
  int cg_iterations = 0;
  double cg_residual = 0.0;     // relative, on the enlarged disk
  double verify_residual = 0.0; // |I* w - h|_2 / |h|_2 back on the base disk
};

// Constructive solve of I* w = h: extend h into the enlarged disk, invert the
// normal operator there by conjugate gradients, and restrict twice the even
// part of the transport solution to the inward boundary.
IstarSolution solve_istar(const MetricField& m, const ScalarField& h,
                          const IstarOptions& opt = {});

} // namespace geotomo
