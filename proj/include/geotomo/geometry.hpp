#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "geotomo/expr.hpp"
#include "geotomo/jet.hpp"
#include "geotomo/linalg.hpp"

namespace geotomo {

// Orthonormal frame at a base point, positively oriented (det[e1 e2] > 0).
struct Frame {
  Vec2 e1, e2;
};

// Riemannian metric on a closed coordinate disk |x| <= radius.
//
// Conformal metrics are g = e^{2 lambda} * id; general metrics supply the three
// independent components.  All derivatives come from forward-mode jets of the
// defining expressions, so Christoffel symbols and curvature carry no finite
// difference error.
//
// Index convention for the rotation:  (v_perp)_i = eps_{ij} v^j with
// eps = sqrt(det g) [[0, 1], [-1, 0]].  In the Euclidean case this sends
// (1,0) -> (0,-1), i.e. rotate_perp is the clockwise rotation.  The frame
// field compensates with e2 = -rotate_perp(e1) to stay positively oriented.
class MetricField {
public:
  enum class Kind { Conformal, General };

  static MetricField conformal(Expr lambda, double radius = 1.0);
  static MetricField general(Expr g11, Expr g12, Expr g22, double radius = 1.0);
  // Conformal metric with a programmatic factor (used by the inverse solver).
  // The callables must agree on values; desc feeds hashes and diagnostics.
  static MetricField conformal_fn(std::function<double(double, double)> f,
                                  std::function<Grad(double, double)> g,
                                  std::function<Jet2(double, double)> j,
                                  std::string desc, double radius = 1.0);

  Kind kind() const { return kind_; }
  double radius() const { return radius_; }
  bool is_euclidean() const { return euclidean_; } // fast-path hint only

  double lambda(Vec2 p) const;       // conformal only
  Grad lambda_grad(Vec2 p) const;    // conformal only
  Jet2 lambda_jet(Vec2 p) const;     // conformal only

  Mat2 metric(Vec2 p) const;     // g_{ij}
  Mat2 metric_inv(Vec2 p) const; // g^{ij}
  double sqrt_det(Vec2 p) const;

  double inner(Vec2 p, Vec2 u, Vec2 v) const;
  double norm(Vec2 p, Vec2 v) const;
  Vec2 normalized(Vec2 p, Vec2 v) const;

  // Gamma^i_{jk} = 0.5 g^{il} (d_k g_{jl} + d_j g_{kl} - d_l g_{jk}).
  void christoffel(Vec2 p, double gamma[2][2][2]) const;
  // Geodesic acceleration: a^i = -Gamma^i_{jk} v^j v^k.
  Vec2 geodesic_accel(Vec2 p, Vec2 v) const;

  double gauss_curvature(Vec2 p) const;

  Vec2 rotate_perp(Vec2 p, Vec2 v) const;

  Frame frame(Vec2 p) const;
  Vec2 from_angle(Vec2 p, double beta) const;  // cos(beta) e1 + sin(beta) e2
  double to_angle(Vec2 p, Vec2 v) const;       // inverse, v need not be unit

  // Canonical description (kind + defining expressions + radius) used for
  // artifact hashing and for refusing cross-metric comparisons.
  const std::string& describe() const { return describe_; }

  // Same metric expressions on the concentric disk of the given radius.
  MetricField with_radius(double radius) const;

private:
  MetricField() = default;
  void validate_spd() const; // 64x64 probe over the disk

  Kind kind_ = Kind::Conformal;
  double radius_ = 1.0;
  bool euclidean_ = false;
  std::string describe_;

  // conformal backing; expression-based metrics also populate the callables
  std::function<double(double, double)> lam_;
  std::function<Grad(double, double)> lam_grad_;
  std::function<Jet2(double, double)> lam_jet_;

  std::shared_ptr<Expr> e_lambda_; // kept for description/round trips
  std::shared_ptr<Expr> e11_, e12_, e22_;
};

// Arclength chart of the circle |x| = radius with the metric's boundary data.
//
// s is g-arclength along the counterclockwise parameterization, s(theta=0)=0.
// The fiber angle phi at a boundary point is measured from the inner unit
// normal nu toward the g-unit tangent T, so directions with |phi| < pi/2 point
// inward and mu = (xi, nu) = cos(phi).
class BoundaryChart {
public:
  BoundaryChart(const MetricField& m, int table_nodes = 4096);

  double length() const { return length_; }

  double s_of_theta(double theta) const; // monotone lift, s(0) = 0
  double theta_of_s(double s) const;

  Vec2 point_of_s(double s) const;
  Vec2 tangent(double s) const;      // T, g-unit, increasing s
  Vec2 inner_normal(double s) const; // nu, g-unit

  Vec2 direction(double s, double phi) const;  // cos(phi) nu + sin(phi) T
  // Fiber angle of v at the boundary point s, in [-pi, pi).
  double angle_of(double s, Vec2 v) const;

  // Scalar second fundamental form of the boundary w.r.t. nu; positive iff
  // the boundary is strictly convex at s.
  double second_fundamental_form(double s) const;

  const MetricField& metric() const { return *m_; }

private:
  const MetricField* m_;
  double radius_;
  int n_;
  double length_;
  std::vector<double> dev_; // s(theta) - mean_speed*theta at table nodes
  double mean_speed_;

  double speed(double theta) const; // |d p / d theta|_g
};

} // namespace geotomo
