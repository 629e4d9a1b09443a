#pragma once

#include <vector>

#include "geotomo/flow.hpp"
#include "geotomo/geometry.hpp"

namespace geotomo {

// Function on the boundary circle bundle, sampled on a rectangle of
// (arclength s) x (fiber angle phi from the inner normal).
//
// The inward half covers phi in (-pi/2, pi/2), the full circle covers
// [-pi, pi); both are cell-centered in phi with the same spacing pi/nphi,
// so a full grid holds 2*nphi angular nodes and its inward block starts at
// index nphi/2.  s is node-centered and periodic with period length.
struct BoundaryFiberGrid {
  enum class Half { Inward, Full };

  Half half = Half::Inward;
  int ns = 0, nphi = 0;
  double length = 2.0 * M_PI;
  std::vector<double> v; // row-major [s][phi]

  static BoundaryFiberGrid zeros(Half half, int ns, int nphi, double length);

  int nodes_phi() const { return half == Half::Inward ? nphi : 2 * nphi; }
  double s_node(int i) const { return i * length / ns; }
  double phi_node(int j) const {
    const double h = M_PI / nphi;
    return (half == Half::Inward ? -0.5 * M_PI : -M_PI) + (j + 0.5) * h;
  }
  double& at(int i, int j) { return v[static_cast<size_t>(i) * nodes_phi() + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * nodes_phi() + j]; }

  // Cubic interpolation; s is periodic, phi is periodic on full grids and
  // clamped (quadratic ghosts) on inward ones.
  double interp(double s, double phi) const;
};

// Inner products with the scattering measure.  Inward grids pair against
// mu = cos(phi), full grids against |mu|; both include ds dphi cell weights.
// Nodes with |cos phi| below band are excluded (the tangential band).
double mu_dot(const BoundaryFiberGrid& a, const BoundaryFiberGrid& b, double band = 0.0);
// Total quadrature mass of |mu| dSigma over a full grid (-> 4 * length).
double mu_mass(const BoundaryFiberGrid& grid_shape);

// Scattering relation of a simple metric, tabulated on the inward grid.
//
// Row (i,j) holds the exit of the geodesic entering at node (s_i, phi_j):
// the exit arclength, the exit angle in the reversed-normal chart (so it
// lives in (-pi/2, pi/2) like the entry angle; the full-circle angle of the
// outgoing vector is pi - phi_minus), and the chord time tau.
//
// Off-node queries interpolate smooth deviation fields against the
// Euclidean baseline s -> s + L/2 - (L/pi) phi, and outward queries reduce
// to inward ones through time reversal (alpha = rho alpha rho).
class ScatterTable {
public:
  struct Hit {
    double s = 0.0;
    double phi = 0.0; // meaning depends on the accessor
    double tau = 0.0; // chord time of the orbit
  };

  ScatterTable(const MetricField& m, const BoundaryChart& chart, int ns, int nphi,
               FlowOptions opt = {});

  int ns() const { return ns_; }
  int nphi() const { return nphi_; }
  double length() const { return length_; }

  // Exact inward row; phi is in the reversed-normal chart.
  Hit row(int i, int j) const;

  // Full-circle scattering relation: phi and the returned angle are both
  // full-circle fiber angles.  alpha of an inward vector is the outgoing
  // exit vector; alpha of an outward vector is the incoming entry vector;
  // |phi| = pi/2 returns the fixed point (s, phi, 0).
  Hit alpha(double s, double phi) const;

  // Chord time of the orbit through (s, phi), either reading.
  double chord_tau(double s, double phi) const;

private:
  int ns_, nphi_;
  double length_;
  std::vector<double> exit_s_, exit_phi_, tau_; // [ns][nphi] inward rows
  std::vector<double> dev_s_;                   // exit_s - baseline, unwrapped

  double interp_inward(const std::vector<double>& f, double s, double phi) const;
  Hit alpha_inward(double s, double phi) const; // full-circle exit angle
};

// Even/odd continuation across the scattering relation: keeps w on the
// inward half and glues +/- (w o alpha) on the outward half.
BoundaryFiberGrid a_plus(const ScatterTable& table, const BoundaryFiberGrid& w);
BoundaryFiberGrid a_minus(const ScatterTable& table, const BoundaryFiberGrid& w);

// Adjoints: (u +/- u o alpha) restricted to the inward half.
BoundaryFiberGrid a_star_plus(const ScatterTable& table, const BoundaryFiberGrid& u);
BoundaryFiberGrid a_star_minus(const ScatterTable& table, const BoundaryFiberGrid& u);

// u o alpha on the full circle grid.
BoundaryFiberGrid pullback_alpha(const ScatterTable& table, const BoundaryFiberGrid& u);

// Interior phase-space grid: polar cells (r_i, theta_j) times fiber angle
// beta_k against the orthonormal frame; r is cell-centered, theta and beta
// node-centered periodic.
struct BundleGrid {
  int nr = 0, nth = 0, nb = 0;
  double radius = 1.0;
  std::vector<double> v; // [r][theta][beta]

  static BundleGrid zeros(int nr, int nth, int nb, double radius = 1.0);

  double r_node(int i) const { return (i + 0.5) * radius / nr; }
  double theta_node(int j) const { return j * 2.0 * M_PI / nth; }
  double beta_node(int k) const { return k * 2.0 * M_PI / nb; }
  size_t idx(int i, int j, int k) const {
    return (static_cast<size_t>(i) * nth + j) * nb + k;
  }
  double& at(int i, int j, int k) { return v[idx(i, j, k)]; }
  double at(int i, int j, int k) const { return v[idx(i, j, k)]; }

  // Tricubic interpolation; theta and beta are periodic.  Radial rows below
  // the center map to (r, theta + pi) with beta unchanged (the frame field is
  // smooth through the origin), rows beyond the rim are quadratic ghosts.
  double interp(double r, double theta, double beta) const;
};

// Entry chart coordinates of every interior phase node: trace backward to
// the boundary, record where the forward orbit enters.  Built once per
// metric and layout, then reused by all transport-style extensions.
class EntryMap {
public:
  EntryMap(const MetricField& m, const BoundaryChart& chart, int nr, int nth, int nb,
           FlowOptions opt = {});

  int nr() const { return nr_; }
  int nth() const { return nth_; }
  int nb() const { return nb_; }
  double radius() const { return radius_; }

  double entry_s(int i, int j, int k) const { return s_[shape_.idx(i, j, k)]; }
  double entry_phi(int i, int j, int k) const { return phi_[shape_.idx(i, j, k)]; }
  // time from the entry point to the node (= tau^0(x, -xi))
  double time_from_entry(int i, int j, int k) const { return t_[shape_.idx(i, j, k)]; }

private:
  int nr_, nth_, nb_;
  double radius_;
  BundleGrid shape_; // index helper only
  std::vector<double> s_, phi_, t_;
};

// Transport-constant extension: u(x, xi) = w at the entry point of the orbit
// through (x, xi).  Solves the transport equation with boundary data w.
BundleGrid transport_extend(const EntryMap& entry, const BoundaryFiberGrid& w);

// Fold diagnostic for the exit map into the enlarged disk of radius
// (1 + delta): singular values of the finite-difference Jacobian of
// (s, phi) -> exit chart of the enlarged boundary.
struct FoldReport {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
};

FoldReport fold_diagnostic(const MetricField& m, const BoundaryChart& chart, double s, double phi,
                           double delta = 0.2, double fd_step = 1e-4, FlowOptions opt = {});

} // namespace geotomo
