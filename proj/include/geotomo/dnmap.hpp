#pragma once

#include <vector>

#include <Eigen/Dense>

#include "geotomo/bundle.hpp"
#include "geotomo/geometry.hpp"
#include "geotomo/transport.hpp"

namespace geotomo {

// Periodic scalar function on the boundary circle, sampled uniformly in
// arclength.
struct BoundaryTrace {
  int ns = 0;
  double length = 2.0 * M_PI;
  std::vector<double> v;

  static BoundaryTrace zeros(int ns, double length = 2.0 * M_PI);
  template <class F>
  static BoundaryTrace sample(int ns, double length, F&& f) {
    BoundaryTrace t = zeros(ns, length);
    for (int i = 0; i < ns; ++i) t.v[i] = f(t.s_node(i));
    return t;
  }

  double s_node(int i) const { return i * length / ns; }
  double& at(int i) { return v[i]; }
  double at(int i) const { return v[i]; }
  double interp(double s) const; // periodic cubic
  double mean() const;
  BoundaryTrace mean_zero() const;
};

// l2 norm with the arclength cell weight.
double trace_norm(const BoundaryTrace& f);

// Spectral arclength derivative.
BoundaryTrace trace_derivative(const BoundaryTrace& f);

// Dense operator on trace samples.
struct DnOperator {
  double length = 2.0 * M_PI;
  Eigen::MatrixXd a;
  BoundaryTrace apply(const BoundaryTrace& f) const;
};

// DN map of the euclidean unit disk: Fourier multiplier |k|, outward normal.
DnOperator dn_analytic_disk(int ns);

// DN map by solving the Laplace-Beltrami Dirichlet problem.  Conformal
// metrics share harmonic functions with the euclidean disk, so the Poisson
// multiplier applies with the boundary factor e^{-lambda}; general metrics
// use a finite-volume polar solve, Richardson-extrapolated from two grids.
BoundaryTrace dn_pde(const MetricField& m, const BoundaryChart& chart, const BoundaryTrace& f,
                     int nr = 48, int nth = 96);

// Fiberwise Hilbert transform on a full boundary fiber grid, restricted to
// the even harmonics.  The chart angle phi runs against the bundle
// orientation, so the multiplier is +i sgn(k).
BoundaryFiberGrid boundary_hilbert_even(const BoundaryFiberGrid& u);

struct WSolveOptions {
  // relative to the largest singular value; the averaging functional is
  // unstable along the smallest-sigma directions, so the truncation is firm
  double svd_cutoff = 1e-3;
};

struct WSolution {
  BoundaryFiberGrid w;     // inward boundary data of the transport solution
  double residual = 0.0;   // relative equation residual
  int rank = 0;            // kept singular values
};

// Minimal-norm least-squares solution of the boundary equation
//   2 pi A-* He A+ w = -A-* (h*0 lifted to the full fiber circle),
// assembled densely on the table's inward grid and inverted by truncated SVD.
WSolution solve_w_equation(const ScatterTable& table, const BoundaryTrace& h_star0,
                           const WSolveOptions& opt = {});

struct DnExtractOptions {
  int kmax = 4;
  WSolveOptions wsolve;
};

// Extracted DN columns: for each basis trace h*0 the recovered conjugate
// trace h0 = 2 pi (A+ w)_0 and the image -dh0/ds.
struct DnColumns {
  double length = 2.0 * M_PI;
  std::vector<BoundaryTrace> input;
  std::vector<BoundaryTrace> image;
  std::vector<double> residuals;
};

DnColumns extract_dn(const ScatterTable& table, const DnExtractOptions& opt = {});

// Relative spectral-norm gap between the extracted columns and the euclidean
// multiplier |k| on the spanned Fourier subspace (valid when the metric's DN
// is the euclidean one, i.e. lambda vanishes on the boundary).
double dn_subspace_gap(const DnColumns& cols, int kmax);

// L2 norm over r <= radius - margin of the conjugacy defect between the
// gradient of h and the rotated gradient of h_star (stencil derivatives).
double conjugate_pair_check(const MetricField& m, const ScalarField& h,
                            const ScalarField& h_star, double margin = 0.1);

// Boundary distance matrix between anchor points at uniform euclidean angles.
struct DistanceData {
  std::vector<double> theta;
  Eigen::MatrixXd d;
};

DistanceData boundary_distances(const MetricField& m, const BoundaryChart& chart, int n_anchor,
                                const FlowOptions& opt = {});

struct InvertOptions {
  int n_radial = 6, n_angular = 8; // conformal factor basis size
  int max_iter = 50;
  double tol = 1e-6;      // relative data residual
  double damping = 1e-8;  // Levenberg floor, relative to the normal matrix
  FlowOptions flow{.step = 2.5e-3};
  int nr_out = 32, nth_out = 64; // recovered field sampling
};

struct InversionResult {
  ScalarField lambda; // recovered log conformal factor
  std::vector<double> coeffs;
  std::vector<double> residual_history; // relative data residual per iterate
  bool converged = false;
};

// Gauss-Newton recovery of a conformal factor from boundary distances: the
// forward model shoots connecting geodesics, the Jacobian integrates basis
// perturbations along them (travel time linearization).
InversionResult invert_conformal(const DistanceData& data, const InvertOptions& opt = {});

} // namespace geotomo
