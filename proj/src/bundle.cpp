#include "geotomo/bundle.hpp"

#include <cmath>

#include "geotomo/errors.hpp"
#include "geotomo/interp.hpp"

namespace geotomo {

BoundaryFiberGrid BoundaryFiberGrid::zeros(Half half, int ns, int nphi, double length) {
  BoundaryFiberGrid g;
  g.half = half;
  g.ns = ns;
  g.nphi = nphi;
  g.length = length;
  g.v.assign(static_cast<size_t>(ns) * g.nodes_phi(), 0.0);
  return g;
}

double BoundaryFiberGrid::interp(double s, double phi) const {
  const int np = nodes_phi();
  const double hs = length / ns, hp = M_PI / nphi;
  int j0;
  double tp, wp[4];
  locate_cell(phi, phi_node(0), hp, j0, tp);
  cubic_weights(tp, wp);
  auto srow = [&](int j) {
    return interp_periodic([&](int i) { return at(i, j); }, ns, 0.0, hs, s);
  };
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    const int j = j0 - 1 + k;
    const double row = half == Half::Full ? srow(wrap_index(j, np)) : fetch_clamped(srow, np, j);
    acc += wp[k] * row;
  }
  return acc;
}

namespace {

void require_same_shape(const BoundaryFiberGrid& a, const BoundaryFiberGrid& b) {
  if (a.half != b.half || a.ns != b.ns || a.nphi != b.nphi)
    throw NumericalError("boundary grid shape mismatch");
}

void require_table_shape(const ScatterTable& t, const BoundaryFiberGrid& g) {
  if (t.ns() != g.ns || t.nphi() != g.nphi)
    throw NumericalError("scatter table does not match the grid layout");
}

} // namespace

double mu_dot(const BoundaryFiberGrid& a, const BoundaryFiberGrid& b, double band) {
  require_same_shape(a, b);
  const double hs = a.length / a.ns, hp = M_PI / a.nphi;
  double acc = 0.0;
  for (int j = 0; j < a.nodes_phi(); ++j) {
    const double mu = std::cos(a.phi_node(j));
    const double w = a.half == BoundaryFiberGrid::Half::Inward ? mu : std::abs(mu);
    if (std::abs(mu) <= band) continue;
    double col = 0.0;
    for (int i = 0; i < a.ns; ++i) col += a.at(i, j) * b.at(i, j);
    acc += col * w;
  }
  return acc * hs * hp;
}

double mu_mass(const BoundaryFiberGrid& g) {
  const double hs = g.length / g.ns, hp = M_PI / g.nphi;
  double acc = 0.0;
  for (int j = 0; j < g.nodes_phi(); ++j) acc += std::abs(std::cos(g.phi_node(j)));
  return acc * g.ns * hs * hp;
}

// ---- scattering table --------------------------------------------------------

ScatterTable::ScatterTable(const MetricField& m, const BoundaryChart& chart, int ns, int nphi,
                           FlowOptions opt)
    : ns_(ns), nphi_(nphi), length_(chart.length()) {
  const size_t n = static_cast<size_t>(ns) * nphi;
  exit_s_.resize(n);
  exit_phi_.resize(n);
  tau_.resize(n);
  dev_s_.resize(n);
  const double hp = M_PI / nphi;
  for (int i = 0; i < ns; ++i) {
    const double s = i * length_ / ns;
    const Vec2 x0 = chart.point_of_s(s);
    for (int j = 0; j < nphi; ++j) {
      const double phi = -0.5 * M_PI + (j + 0.5) * hp;
      const ExitState hit = exit_state(m, x0, chart.direction(s, phi), opt);
      const double sx = chart.s_of_theta(std::atan2(hit.p.x.y, hit.p.x.x));
      const double full = chart.angle_of(sx, hit.p.v); // outgoing, |full| > pi/2
      const double pm = wrap_angle(M_PI - full);       // reversed-normal chart
      const size_t id = static_cast<size_t>(i) * nphi + j;
      exit_s_[id] = sx;
      exit_phi_[id] = pm;
      tau_[id] = hit.tau;
      const double baseline = s + 0.5 * length_ - (length_ / M_PI) * phi;
      dev_s_[id] = std::remainder(sx - baseline, length_);
    }
  }
}

ScatterTable::Hit ScatterTable::row(int i, int j) const {
  const size_t id = static_cast<size_t>(i) * nphi_ + j;
  return {exit_s_[id], exit_phi_[id], tau_[id]};
}

double ScatterTable::interp_inward(const std::vector<double>& f, double s, double phi) const {
  const double hs = length_ / ns_, hp = M_PI / nphi_;
  int j0;
  double tp, wp[4];
  locate_cell(phi, -0.5 * M_PI + 0.5 * hp, hp, j0, tp);
  cubic_weights(tp, wp);
  auto srow = [&](int j) {
    return interp_periodic([&](int i) { return f[static_cast<size_t>(i) * nphi_ + j]; }, ns_, 0.0,
                           hs, s);
  };
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) acc += wp[k] * fetch_clamped(srow, nphi_, j0 - 1 + k);
  return acc;
}

ScatterTable::Hit ScatterTable::alpha_inward(double s, double phi) const {
  const double dev = interp_inward(dev_s_, s, phi);
  const double pm = interp_inward(exit_phi_, s, phi);
  const double tau = interp_inward(tau_, s, phi);
  const double sx = wrap_periodic(s + 0.5 * length_ - (length_ / M_PI) * phi + dev, length_);
  return {sx, pm, tau};
}

ScatterTable::Hit ScatterTable::alpha(double s, double phi) const {
  phi = wrap_angle(phi);
  const double half_pi = 0.5 * M_PI;
  if (phi == half_pi || phi == -half_pi) return {wrap_periodic(s, length_), phi, 0.0};
  if (std::abs(phi) < half_pi) {
    const Hit h = alpha_inward(s, phi);
    return {h.s, wrap_angle(M_PI - h.phi), h.tau};
  }
  const Hit h = alpha_inward(s, wrap_angle(phi - M_PI));
  return {h.s, -h.phi, h.tau};
}

double ScatterTable::chord_tau(double s, double phi) const {
  phi = wrap_angle(phi);
  if (std::abs(phi) >= 0.5 * M_PI) phi = wrap_angle(phi - M_PI);
  return interp_inward(tau_, s, phi);
}

// ---- continuation operators --------------------------------------------------

namespace {

BoundaryFiberGrid continue_signed(const ScatterTable& table, const BoundaryFiberGrid& w,
                                  double sign) {
  if (w.half != BoundaryFiberGrid::Half::Inward)
    throw NumericalError("continuation expects inward boundary data");
  require_table_shape(table, w);
  BoundaryFiberGrid out =
      BoundaryFiberGrid::zeros(BoundaryFiberGrid::Half::Full, w.ns, w.nphi, w.length);
  const int np = w.nphi;
  for (int i = 0; i < w.ns; ++i) {
    for (int j = 0; j < 2 * np; ++j) {
      const bool inward = j >= np / 2 && j < np / 2 + np;
      if (inward) {
        out.at(i, j) = w.at(i, j - np / 2);
      } else {
        // alpha of the outward node is the entry vector of the time-reversed
        // row at the same node: exact table data, no alpha interpolation
        const int jr = wrap_index(j + np, 2 * np) - np / 2;
        const ScatterTable::Hit h = table.row(i, jr);
        out.at(i, j) = sign * w.interp(h.s, -h.phi);
      }
    }
  }
  return out;
}

BoundaryFiberGrid adjoint_signed(const ScatterTable& table, const BoundaryFiberGrid& u,
                                 double sign) {
  if (u.half != BoundaryFiberGrid::Half::Full)
    throw NumericalError("adjoint expects full-circle boundary data");
  require_table_shape(table, u);
  BoundaryFiberGrid out =
      BoundaryFiberGrid::zeros(BoundaryFiberGrid::Half::Inward, u.ns, u.nphi, u.length);
  const int np = u.nphi;
  for (int i = 0; i < u.ns; ++i) {
    for (int j = 0; j < np; ++j) {
      const ScatterTable::Hit h = table.row(i, j);
      const double at_alpha = u.interp(h.s, wrap_angle(M_PI - h.phi));
      out.at(i, j) = u.at(i, j + np / 2) + sign * at_alpha;
    }
  }
  return out;
}

} // namespace

BoundaryFiberGrid a_plus(const ScatterTable& table, const BoundaryFiberGrid& w) {
  return continue_signed(table, w, 1.0);
}

BoundaryFiberGrid a_minus(const ScatterTable& table, const BoundaryFiberGrid& w) {
  return continue_signed(table, w, -1.0);
}

BoundaryFiberGrid a_star_plus(const ScatterTable& table, const BoundaryFiberGrid& u) {
  return adjoint_signed(table, u, 1.0);
}

BoundaryFiberGrid a_star_minus(const ScatterTable& table, const BoundaryFiberGrid& u) {
  return adjoint_signed(table, u, -1.0);
}

BoundaryFiberGrid pullback_alpha(const ScatterTable& table, const BoundaryFiberGrid& u) {
  if (u.half != BoundaryFiberGrid::Half::Full)
    throw NumericalError("pullback expects full-circle boundary data");
  require_table_shape(table, u);
  BoundaryFiberGrid out = BoundaryFiberGrid::zeros(u.half, u.ns, u.nphi, u.length);
  const int np = u.nphi;
  for (int i = 0; i < u.ns; ++i) {
    for (int j = 0; j < 2 * np; ++j) {
      const bool inward = j >= np / 2 && j < np / 2 + np;
      if (inward) {
        const ScatterTable::Hit h = table.row(i, j - np / 2);
        out.at(i, j) = u.interp(h.s, wrap_angle(M_PI - h.phi));
      } else {
        const int jr = wrap_index(j + np, 2 * np) - np / 2;
        const ScatterTable::Hit h = table.row(i, jr);
        out.at(i, j) = u.interp(h.s, -h.phi);
      }
    }
  }
  return out;
}

// ---- interior bundle ----------------------------------------------------------

BundleGrid BundleGrid::zeros(int nr, int nth, int nb, double radius) {
  BundleGrid g;
  g.nr = nr;
  g.nth = nth;
  g.nb = nb;
  g.radius = radius;
  g.v.assign(static_cast<size_t>(nr) * nth * nb, 0.0);
  return g;
}

double BundleGrid::interp(double r, double theta, double beta) const {
  const double dr = radius / nr;
  const double dth = 2.0 * M_PI / nth;
  const double db = 2.0 * M_PI / nb;
  int i0;
  double tr, wr[4];
  locate_cell(r, 0.5 * dr, dr, i0, tr);
  cubic_weights(tr, wr);

  // One radial stencil row: a periodic surface interp in (theta, beta).
  auto row = [&](int i, double th) -> double {
    auto sheet = [&](int ii, double ang) {
      return interp_periodic(
          [&](int j) {
            return interp_periodic([&](int k) { return at(ii, j, k); }, nb, 0.0, db, beta);
          },
          nth, 0.0, dth, ang);
    };
    if (i < 0) return sheet(-1 - i, th + M_PI);
    if (i < nr) return sheet(i, th);
    const double u = static_cast<double>(nr - 1 - i); // negative
    return sheet(nr - 1, th) * (u - 1.0) * (u - 2.0) * 0.5 -
           sheet(nr - 2, th) * u * (u - 2.0) +
           sheet(nr - 3, th) * u * (u - 1.0) * 0.5;
  };

  double acc = 0.0;
  for (int k = 0; k < 4; ++k) acc += wr[k] * row(i0 - 1 + k, theta);
  return acc;
}

EntryMap::EntryMap(const MetricField& m, const BoundaryChart& chart, int nr, int nth, int nb,
                   FlowOptions opt)
    : nr_(nr), nth_(nth), nb_(nb), radius_(m.radius()) {
  shape_ = BundleGrid::zeros(nr, nth, nb, radius_);
  const size_t n = static_cast<size_t>(nr) * nth * nb;
  s_.resize(n);
  phi_.resize(n);
  t_.resize(n);
  for (int i = 0; i < nr; ++i) {
    const double r = shape_.r_node(i);
    for (int j = 0; j < nth; ++j) {
      const double th = shape_.theta_node(j);
      const Vec2 x{r * std::cos(th), r * std::sin(th)};
      for (int k = 0; k < nb; ++k) {
        const Vec2 v = m.from_angle(x, shape_.beta_node(k));
        const ExitState hit = exit_state(m, x, {-v.x, -v.y}, opt);
        const double se = chart.s_of_theta(std::atan2(hit.p.x.y, hit.p.x.x));
        const size_t id = shape_.idx(i, j, k);
        s_[id] = se;
        phi_[id] = chart.angle_of(se, {-hit.p.v.x, -hit.p.v.y}); // forward entry direction
        t_[id] = hit.tau;
      }
    }
  }
}

BundleGrid transport_extend(const EntryMap& entry, const BoundaryFiberGrid& w) {
  if (w.half != BoundaryFiberGrid::Half::Inward)
    throw NumericalError("transport extension expects inward boundary data");
  BundleGrid out = BundleGrid::zeros(entry.nr(), entry.nth(), entry.nb(), entry.radius());
  for (int i = 0; i < out.nr; ++i)
    for (int j = 0; j < out.nth; ++j)
      for (int k = 0; k < out.nb; ++k)
        out.at(i, j, k) = w.interp(entry.entry_s(i, j, k), entry.entry_phi(i, j, k));
  return out;
}

// ---- fold diagnostic -----------------------------------------------------------

FoldReport fold_diagnostic(const MetricField& m, const BoundaryChart& chart, double s, double phi,
                           double delta, double fd_step, FlowOptions opt) {
  const MetricField big = m.with_radius(m.radius() * (1.0 + delta));
  const BoundaryChart big_chart(big);
  const double ln = big_chart.length();
  auto exit_chart = [&](double ss, double pp) -> Vec2 {
    const Vec2 x = chart.point_of_s(ss);
    const Vec2 v = chart.direction(ss, pp);
    const ExitState hit = exit_state(big, x, v, opt);
    const double se = big_chart.s_of_theta(std::atan2(hit.p.x.y, hit.p.x.x));
    return {se, big_chart.angle_of(se, hit.p.v)};
  };
  const Vec2 sp = exit_chart(s + fd_step, phi), sm = exit_chart(s - fd_step, phi);
  const Vec2 pp = exit_chart(s, phi + fd_step), pm = exit_chart(s, phi - fd_step);
  Mat2 jac;
  jac.a11 = std::remainder(sp.x - sm.x, ln) / (2 * fd_step);
  jac.a12 = std::remainder(pp.x - pm.x, ln) / (2 * fd_step);
  jac.a21 = wrap_angle(sp.y - sm.y) / (2 * fd_step);
  jac.a22 = wrap_angle(pp.y - pm.y) / (2 * fd_step);
  FoldReport rep;
  singular_values(jac, rep.sigma_max, rep.sigma_min);
  return rep;
}

} // namespace geotomo
