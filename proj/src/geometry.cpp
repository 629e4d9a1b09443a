#include "geotomo/geometry.hpp"

#include <cmath>

#include "geotomo/errors.hpp"
#include "geotomo/interp.hpp"

namespace geotomo {

namespace {

double det3(const double m[3][3]) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

} // namespace

MetricField MetricField::conformal(Expr lambda, double radius) {
  MetricField m;
  m.kind_ = Kind::Conformal;
  m.radius_ = radius;
  m.e_lambda_ = std::make_shared<Expr>(std::move(lambda));
  const Expr* e = m.e_lambda_.get();
  m.lam_ = [e](double x, double y) { return e->eval(x, y); };
  m.lam_grad_ = [e](double x, double y) { return e->eval_grad(x, y); };
  m.lam_jet_ = [e](double x, double y) { return e->eval_jet(x, y); };
  m.describe_ = "conformal|lambda=" + m.e_lambda_->pretty() + "|r=" + std::to_string(radius);
  // constant-zero lambda collapses to the flat metric; worth a cheap probe
  m.euclidean_ = true;
  for (double t : {0.0, 0.3, -0.7, 0.52}) {
    const Grad g = m.lam_grad_(t * 0.9, -t * 0.4 + 0.1);
    if (g.v != 0.0 || g.dx != 0.0 || g.dy != 0.0) {
      m.euclidean_ = false;
      break;
    }
  }
  m.validate_spd();
  return m;
}

MetricField MetricField::general(Expr g11, Expr g12, Expr g22, double radius) {
  MetricField m;
  m.kind_ = Kind::General;
  m.radius_ = radius;
  m.e11_ = std::make_shared<Expr>(std::move(g11));
  m.e12_ = std::make_shared<Expr>(std::move(g12));
  m.e22_ = std::make_shared<Expr>(std::move(g22));
  m.describe_ = "general|g11=" + m.e11_->pretty() + "|g12=" + m.e12_->pretty() +
                "|g22=" + m.e22_->pretty() + "|r=" + std::to_string(radius);
  m.euclidean_ = false;
  m.validate_spd();
  return m;
}

MetricField MetricField::conformal_fn(std::function<double(double, double)> f,
                                      std::function<Grad(double, double)> g,
                                      std::function<Jet2(double, double)> j,
                                      std::string desc, double radius) {
  MetricField m;
  m.kind_ = Kind::Conformal;
  m.radius_ = radius;
  m.lam_ = std::move(f);
  m.lam_grad_ = std::move(g);
  m.lam_jet_ = std::move(j);
  m.describe_ = "conformal_fn|" + desc + "|r=" + std::to_string(radius);
  m.euclidean_ = false;
  m.validate_spd();
  return m;
}

MetricField MetricField::with_radius(double radius) const {
  MetricField m = *this;
  m.radius_ = radius;
  const std::string::size_type cut = m.describe_.rfind("|r=");
  m.describe_ = m.describe_.substr(0, cut) + "|r=" + std::to_string(radius);
  m.validate_spd();
  return m;
}

void MetricField::validate_spd() const {
  const int n = 64;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double x = radius_ * (2.0 * (i + 0.5) / n - 1.0);
      const double y = radius_ * (2.0 * (j + 0.5) / n - 1.0);
      if (x * x + y * y > radius_ * radius_) continue;
      const Mat2 g = metric({x, y});
      const double scale = g.a11 + g.a22;
      if (!(g.a11 > 0.0) || !(g.det() > 1e-14 * scale * scale) ||
          std::abs(g.a12 - g.a21) > 1e-12 * scale || !std::isfinite(g.det())) {
        throw ConfigError("metric is not symmetric positive definite near (" +
                          std::to_string(x) + ", " + std::to_string(y) + ")");
      }
    }
  }
}

double MetricField::lambda(Vec2 p) const { return lam_(p.x, p.y); }
Grad MetricField::lambda_grad(Vec2 p) const { return lam_grad_(p.x, p.y); }
Jet2 MetricField::lambda_jet(Vec2 p) const { return lam_jet_(p.x, p.y); }

Mat2 MetricField::metric(Vec2 p) const {
  if (kind_ == Kind::Conformal) {
    const double c = std::exp(2.0 * lam_(p.x, p.y));
    return {c, 0.0, 0.0, c};
  }
  const double a = e11_->eval(p.x, p.y);
  const double b = e12_->eval(p.x, p.y);
  const double c = e22_->eval(p.x, p.y);
  return {a, b, b, c};
}

Mat2 MetricField::metric_inv(Vec2 p) const {
  if (kind_ == Kind::Conformal) {
    const double c = std::exp(-2.0 * lam_(p.x, p.y));
    return {c, 0.0, 0.0, c};
  }
  return metric(p).inverse();
}

double MetricField::sqrt_det(Vec2 p) const {
  if (kind_ == Kind::Conformal) return std::exp(2.0 * lam_(p.x, p.y));
  return std::sqrt(metric(p).det());
}

double MetricField::inner(Vec2 p, Vec2 u, Vec2 v) const {
  const Mat2 g = metric(p);
  return u.x * (g.a11 * v.x + g.a12 * v.y) + u.y * (g.a21 * v.x + g.a22 * v.y);
}

double MetricField::norm(Vec2 p, Vec2 v) const { return std::sqrt(inner(p, v, v)); }

Vec2 MetricField::normalized(Vec2 p, Vec2 v) const {
  const double n = norm(p, v);
  if (n == 0.0) throw NumericalError("cannot normalize a zero vector");
  return v / n;
}

void MetricField::christoffel(Vec2 p, double gamma[2][2][2]) const {
  if (kind_ == Kind::Conformal) {
    const Grad l = lam_grad_(p.x, p.y);
    // Gamma^k_{ij} = d_ik l_j + d_jk l_i - d_ij l_k
    gamma[0][0][0] = l.dx;
    gamma[0][0][1] = l.dy;
    gamma[0][1][0] = l.dy;
    gamma[0][1][1] = -l.dx;
    gamma[1][0][0] = -l.dy;
    gamma[1][0][1] = l.dx;
    gamma[1][1][0] = l.dx;
    gamma[1][1][1] = l.dy;
    return;
  }
  const Grad a = e11_->eval_grad(p.x, p.y);
  const Grad b = e12_->eval_grad(p.x, p.y);
  const Grad c = e22_->eval_grad(p.x, p.y);
  const double g[2][2] = {{a.v, b.v}, {b.v, c.v}};
  const double dg[2][2][2] = {{{a.dx, a.dy}, {b.dx, b.dy}}, {{b.dx, b.dy}, {c.dx, c.dy}}};
  const double det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
  const double gi[2][2] = {{g[1][1] / det, -g[0][1] / det}, {-g[1][0] / det, g[0][0] / det}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        double s = 0.0;
        for (int l = 0; l < 2; ++l)
          s += gi[i][l] * (dg[j][l][k] + dg[k][l][j] - dg[j][k][l]);
        gamma[i][j][k] = 0.5 * s;
      }
}

Vec2 MetricField::geodesic_accel(Vec2 p, Vec2 v) const {
  if (kind_ == Kind::Conformal) {
    const Grad l = lam_grad_(p.x, p.y);
    const double q = v.x * v.x - v.y * v.y;
    return {-l.dx * q - 2.0 * l.dy * v.x * v.y, l.dy * q - 2.0 * l.dx * v.x * v.y};
  }
  double gamma[2][2][2];
  christoffel(p, gamma);
  Vec2 a;
  a.x = -(gamma[0][0][0] * v.x * v.x + 2.0 * gamma[0][0][1] * v.x * v.y +
          gamma[0][1][1] * v.y * v.y);
  a.y = -(gamma[1][0][0] * v.x * v.x + 2.0 * gamma[1][0][1] * v.x * v.y +
          gamma[1][1][1] * v.y * v.y);
  return a;
}

double MetricField::gauss_curvature(Vec2 p) const {
  if (kind_ == Kind::Conformal) {
    const Jet2 l = lam_jet_(p.x, p.y);
    return -std::exp(-2.0 * l.v) * (l.dxx + l.dyy);
  }
  // Brioschi formula from the component jets.
  const Jet2 E = e11_->eval_jet(p.x, p.y);
  const Jet2 F = e12_->eval_jet(p.x, p.y);
  const Jet2 G = e22_->eval_jet(p.x, p.y);
  const double m1[3][3] = {
      {-0.5 * E.dyy + F.dxy - 0.5 * G.dxx, 0.5 * E.dx, F.dx - 0.5 * E.dy},
      {F.dy - 0.5 * G.dx, E.v, F.v},
      {0.5 * G.dy, F.v, G.v}};
  const double m2[3][3] = {
      {0.0, 0.5 * E.dy, 0.5 * G.dx},
      {0.5 * E.dy, E.v, F.v},
      {0.5 * G.dx, F.v, G.v}};
  const double den = E.v * G.v - F.v * F.v;
  return (det3(m1) - det3(m2)) / (den * den);
}

Vec2 MetricField::rotate_perp(Vec2 p, Vec2 v) const {
  if (kind_ == Kind::Conformal) {
    // eps action reduces to the flat clockwise rotation
    return {v.y, -v.x};
  }
  const Mat2 g = metric(p);
  const double sq = std::sqrt(g.det());
  const Vec2 cov = {sq * v.y, -sq * v.x}; // eps_{ij} v^j
  const Mat2 gi = g.inverse();
  return gi * cov;
}

Frame MetricField::frame(Vec2 p) const {
  const Mat2 g = metric(p);
  const Vec2 e1 = {1.0 / std::sqrt(g.a11), 0.0};
  const Vec2 e2 = -rotate_perp(p, e1); // flips to counterclockwise: det[e1 e2] > 0
  return {e1, e2};
}

Vec2 MetricField::from_angle(Vec2 p, double beta) const {
  const Frame f = frame(p);
  return std::cos(beta) * f.e1 + std::sin(beta) * f.e2;
}

double MetricField::to_angle(Vec2 p, Vec2 v) const {
  const Frame f = frame(p);
  return std::atan2(inner(p, v, f.e2), inner(p, v, f.e1));
}

// ---- BoundaryChart ---------------------------------------------------------

double BoundaryChart::speed(double theta) const {
  const Vec2 p = {radius_ * std::cos(theta), radius_ * std::sin(theta)};
  const Vec2 t = {-radius_ * std::sin(theta), radius_ * std::cos(theta)};
  return m_->norm(p, t);
}

BoundaryChart::BoundaryChart(const MetricField& m, int table_nodes)
    : m_(&m), radius_(m.radius()), n_(table_nodes) {
  const double h = 2.0 * M_PI / n_;
  std::vector<double> s(n_ + 1);
  s[0] = 0.0;
  double prev = speed(0.0);
  for (int i = 0; i < n_; ++i) {
    const double mid = speed((i + 0.5) * h);
    const double next = speed((i + 1.0) * h);
    s[i + 1] = s[i] + h / 6.0 * (prev + 4.0 * mid + next); // per-cell Simpson
    prev = next;
  }
  length_ = s[n_];
  if (!(length_ > 0.0) || !std::isfinite(length_))
    throw ConfigError("degenerate boundary length");
  mean_speed_ = length_ / (2.0 * M_PI);
  dev_.resize(n_);
  for (int i = 0; i < n_; ++i) dev_[i] = s[i] - mean_speed_ * (i * h);
}

double BoundaryChart::s_of_theta(double theta) const {
  const double h = 2.0 * M_PI / n_;
  const double d =
      interp_periodic([&](int i) { return dev_[i]; }, n_, 0.0, h, wrap_periodic(theta, 2.0 * M_PI));
  return mean_speed_ * theta + d;
}

double BoundaryChart::theta_of_s(double s) const {
  double theta = s / mean_speed_;
  for (int it = 0; it < 12; ++it) {
    const double f = s_of_theta(theta) - s;
    if (std::abs(f) < 1e-14 * (1.0 + std::abs(s))) break;
    theta -= f / speed(theta);
  }
  return theta;
}

Vec2 BoundaryChart::point_of_s(double s) const {
  const double theta = theta_of_s(s);
  return {radius_ * std::cos(theta), radius_ * std::sin(theta)};
}

Vec2 BoundaryChart::tangent(double s) const {
  const double theta = theta_of_s(s);
  const Vec2 p = {radius_ * std::cos(theta), radius_ * std::sin(theta)};
  const Vec2 t = {-radius_ * std::sin(theta), radius_ * std::cos(theta)};
  return t / m_->norm(p, t);
}

Vec2 BoundaryChart::inner_normal(double s) const {
  const double theta = theta_of_s(s);
  const Vec2 p = {radius_ * std::cos(theta), radius_ * std::sin(theta)};
  const Vec2 t = {-radius_ * std::sin(theta), radius_ * std::cos(theta)};
  const Vec2 that = t / m_->norm(p, t);
  return -m_->rotate_perp(p, that); // points into the disk
}

Vec2 BoundaryChart::direction(double s, double phi) const {
  const double theta = theta_of_s(s);
  const Vec2 p = {radius_ * std::cos(theta), radius_ * std::sin(theta)};
  const Vec2 t = {-radius_ * std::sin(theta), radius_ * std::cos(theta)};
  const Vec2 that = t / m_->norm(p, t);
  const Vec2 nu = -m_->rotate_perp(p, that);
  return std::cos(phi) * nu + std::sin(phi) * that;
}

double BoundaryChart::angle_of(double s, Vec2 v) const {
  const double theta = theta_of_s(s);
  const Vec2 p = {radius_ * std::cos(theta), radius_ * std::sin(theta)};
  const Vec2 t = {-radius_ * std::sin(theta), radius_ * std::cos(theta)};
  const Vec2 that = t / m_->norm(p, t);
  const Vec2 nu = -m_->rotate_perp(p, that);
  return std::atan2(m_->inner(p, v, that), m_->inner(p, v, nu));
}

double BoundaryChart::second_fundamental_form(double s) const {
  // B = -g(D_T nu, T); covariant derivative along the boundary via a
  // five-point tangential stencil plus the Christoffel correction.
  const double h = 1e-4 * mean_speed_;
  Vec2 nn[4];
  const double off[4] = {-2.0, -1.0, 1.0, 2.0};
  for (int k = 0; k < 4; ++k) nn[k] = inner_normal(s + off[k] * h);
  const Vec2 dnu = (nn[0] - 8.0 * nn[1] + 8.0 * nn[2] - nn[3]) / (12.0 * h);
  const Vec2 p = point_of_s(s);
  const Vec2 t = tangent(s);
  const Vec2 nu = inner_normal(s);
  double gamma[2][2][2];
  m_->christoffel(p, gamma);
  Vec2 corr;
  corr.x = gamma[0][0][0] * t.x * nu.x + gamma[0][0][1] * (t.x * nu.y + t.y * nu.x) +
           gamma[0][1][1] * t.y * nu.y;
  corr.y = gamma[1][0][0] * t.x * nu.x + gamma[1][0][1] * (t.x * nu.y + t.y * nu.x) +
           gamma[1][1][1] * t.y * nu.y;
  const Vec2 cov = dnu + corr;
  return -m_->inner(p, cov, t);
}

} // namespace geotomo
