#include "geotomo/dnmap.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "geotomo/errors.hpp"
#include "geotomo/hilbert.hpp"
#include "geotomo/jet.hpp"

namespace geotomo {

namespace {

double cubic_eval(double p0, double p1, double p2, double p3, double t) {
  return 0.5 * (2.0 * p1 +
                t * (p2 - p0 +
                     t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                          t * (3.0 * (p1 - p2) + p3 - p0))));
}

// Trigonometric interpolant of n uniform samples with the given period.
double fourier_eval(const std::vector<std::complex<double>>& c, int n, double period, double x) {
  const double w = 2.0 * M_PI * x / period;
  double acc = c[0].real();
  for (int k = 1; k < n / 2; ++k) acc += 2.0 * (c[k] * std::polar(1.0, k * w)).real();
  acc += (c[n / 2] * std::polar(1.0, 0.5 * n * w)).real();
  return acc;
}

} // namespace

// ---- boundary traces ----------------------------------------------------------

BoundaryTrace BoundaryTrace::zeros(int ns, double length) {
  if (ns < 8 || ns % 2 != 0) throw NumericalError("boundary trace needs an even node count >= 8");
  if (!(length > 0.0)) throw NumericalError("boundary trace needs a positive period");
  BoundaryTrace t;
  t.ns = ns;
  t.length = length;
  t.v.assign(ns, 0.0);
  return t;
}

double BoundaryTrace::interp(double s) const {
  const double u = s / (length / ns);
  const double base = std::floor(u);
  const int i1 = static_cast<int>(base);
  auto node = [&](int i) { return v[((i % ns) + ns) % ns]; };
  return cubic_eval(node(i1 - 1), node(i1), node(i1 + 1), node(i1 + 2), u - base);
}

double BoundaryTrace::mean() const {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / ns;
}

BoundaryTrace BoundaryTrace::mean_zero() const {
  BoundaryTrace out = *this;
  const double m = mean();
  for (double& x : out.v) x -= m;
  return out;
}

double trace_norm(const BoundaryTrace& f) {
  double acc = 0.0;
  for (double x : f.v) acc += x * x;
  return std::sqrt(acc * f.length / f.ns);
}

BoundaryTrace trace_derivative(const BoundaryTrace& f) {
  auto c = real_spectrum(f.v);
  const std::complex<double> i1(0.0, 1.0);
  for (int k = 0; k < f.ns / 2; ++k) c[k] *= i1 * (2.0 * M_PI * k / f.length);
  c[f.ns / 2] = 0.0; // the Nyquist cosine has no resolvable derivative
  BoundaryTrace out = f;
  out.v = real_synthesis(c, f.ns);
  return out;
}

// ---- dense boundary operators -------------------------------------------------

BoundaryTrace DnOperator::apply(const BoundaryTrace& f) const {
  if (a.rows() != a.cols() || f.ns != a.cols())
    throw NumericalError("operator and trace sizes do not match");
  if (std::abs(f.length - length) > 1e-9 * length)
    throw NumericalError("operator and trace periods do not match");
  BoundaryTrace out = BoundaryTrace::zeros(f.ns, f.length);
  Eigen::Map<Eigen::VectorXd>(out.v.data(), f.ns) =
      a * Eigen::Map<const Eigen::VectorXd>(f.v.data(), f.ns);
  return out;
}

DnOperator dn_analytic_disk(int ns) {
  if (ns < 8 || ns % 2 != 0) throw NumericalError("analytic DN needs an even node count >= 8");
  DnOperator op;
  op.length = 2.0 * M_PI;
  op.a = Eigen::MatrixXd::Zero(ns, ns);
  std::vector<double> e(ns, 0.0);
  for (int j = 0; j < ns; ++j) {
    e[j] = 1.0;
    auto c = real_spectrum(e);
    for (int k = 0; k <= ns / 2; ++k) c[k] *= static_cast<double>(k);
    const std::vector<double> col = real_synthesis(c, ns);
    for (int i = 0; i < ns; ++i) op.a(i, j) = col[i];
    e[j] = 0.0;
  }
  return op;
}

// ---- Dirichlet problem --------------------------------------------------------

namespace {

// Inverse metric in polar components and the polar area density at a point
// away from the origin.
struct PolarCoeff {
  double grr = 0.0, grt = 0.0, gtt = 0.0;
  double w = 0.0; // sqrt(det g_polar) = r sqrt(det g)
};

PolarCoeff polar_coeff(const MetricField& m, double r, double theta) {
  const double ct = std::cos(theta), st = std::sin(theta);
  const Vec2 p{r * ct, r * st};
  const Mat2 gi = m.metric_inv(p);
  const Vec2 a{ct, st};
  const Vec2 b{-st / r, ct / r};
  const Vec2 gia = gi * a, gib = gi * b;
  PolarCoeff c;
  c.grr = edot(a, gia);
  c.grt = edot(a, gib);
  c.gtt = edot(b, gib);
  c.w = r * m.sqrt_det(p);
  return c;
}

// Cell-centered finite volumes for the Laplace-Beltrami Dirichlet problem on
// the polar grid; returns the outward conormal derivative at the theta nodes.
// The r = 0 face has zero measure, radial stencils cross the center through
// the antipodal column, and the rim closes with a linear Dirichlet ghost.
std::vector<double> fv_dn(const MetricField& m, const BoundaryChart& chart,
                          const std::vector<std::complex<double>>& cf, int f_ns, double f_len,
                          int nr, int nth) {
  const double R = m.radius();
  const double hr = R / nr, ht = 2.0 * M_PI / nth;
  const int N = nr * nth;
  auto id = [&](int i, int j) { return i * nth + ((j % nth) + nth) % nth; };

  std::vector<double> fb(nth), dfb(nth);
  for (int j = 0; j < nth; ++j) fb[j] = fourier_eval(cf, f_ns, f_len, chart.s_of_theta(j * ht));
  {
    auto cb = real_spectrum(fb);
    const std::complex<double> i1(0.0, 1.0);
    for (int k = 0; k < nth / 2; ++k) cb[k] *= i1 * static_cast<double>(k);
    cb[nth / 2] = 0.0;
    dfb = real_synthesis(cb, nth);
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(N) * 24);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
  auto add = [&](int row, int i, int j, double val) { trip.emplace_back(row, id(i, j), val); };

  // radial faces; the flux leaves the inner cell and enters the outer one
  for (int fi = 1; fi <= nr; ++fi) {
    for (int j = 0; j < nth; ++j) {
      const PolarCoeff pc = polar_coeff(m, fi * hr, j * ht);
      if (fi < nr) {
        const int lo = id(fi - 1, j), hi = id(fi, j);
        const double cr = pc.w * pc.grr * ht / hr;
        const double cm = pc.w * pc.grt * 0.25;
        for (int s = 0; s < 2; ++s) {
          const int row = s == 0 ? lo : hi;
          const double sg = s == 0 ? 1.0 : -1.0;
          trip.emplace_back(row, hi, sg * cr);
          trip.emplace_back(row, lo, -sg * cr);
          add(row, fi - 1, j + 1, sg * cm);
          add(row, fi, j + 1, sg * cm);
          add(row, fi - 1, j - 1, -sg * cm);
          add(row, fi, j - 1, -sg * cm);
        }
      } else {
        // one-sided quadratic for the radial derivative at the rim keeps the
        // boundary flux second order
        const int row = id(nr - 1, j);
        const double cb = pc.w * pc.grr * ht / hr;
        trip.emplace_back(row, row, -3.0 * cb);
        add(row, nr - 2, j, cb / 3.0);
        rhs(row) -= (8.0 / 3.0) * cb * fb[j] + pc.w * pc.grt * ht * dfb[j];
      }
    }
  }

  // angular faces between columns j and j+1
  for (int i = 0; i < nr; ++i) {
    for (int j = 0; j < nth; ++j) {
      const PolarCoeff pc = polar_coeff(m, (i + 0.5) * hr, (j + 0.5) * ht);
      const int lo = id(i, j), hi = id(i, j + 1);
      const double ct = pc.w * pc.gtt * hr / ht;
      const double cm = pc.w * pc.grt * 0.25;
      for (int s = 0; s < 2; ++s) {
        const int row = s == 0 ? lo : hi;
        const double sg = s == 0 ? 1.0 : -1.0;
        trip.emplace_back(row, hi, sg * ct);
        trip.emplace_back(row, lo, -sg * ct);
        if (i + 1 < nr) {
          add(row, i + 1, j, sg * cm);
          add(row, i + 1, j + 1, sg * cm);
        } else {
          // quadratic ghost above the rim for the mixed-term average
          add(row, nr - 1, j, -sg * cm * 2.0);
          add(row, nr - 1, j + 1, -sg * cm * 2.0);
          add(row, nr - 2, j, sg * cm / 3.0);
          add(row, nr - 2, j + 1, sg * cm / 3.0);
          rhs(row) -= sg * cm * (8.0 / 3.0) * (fb[j] + fb[(j + 1) % nth]);
        }
        if (i - 1 >= 0) {
          add(row, i - 1, j, -sg * cm);
          add(row, i - 1, j + 1, -sg * cm);
        } else {
          add(row, 0, j + nth / 2, -sg * cm);
          add(row, 0, j + 1 + nth / 2, -sg * cm);
        }
      }
    }
  }

  Eigen::SparseMatrix<double> A(N, N);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) throw NumericalError("dirichlet solve failed to factorize");
  const Eigen::VectorXd u = lu.solve(rhs);

  // one-sided cubic derivative in depth below the rim
  const std::array<double, 4> depth{0.0, 0.5 * hr, 1.5 * hr, 2.5 * hr};
  Eigen::Matrix4d V;
  for (int mr = 0; mr < 4; ++mr)
    for (int k = 0; k < 4; ++k) V(mr, k) = std::pow(depth[k], mr);
  const Eigen::Vector4d wts = V.fullPivLu().solve(Eigen::Vector4d(0.0, 1.0, 0.0, 0.0));

  std::vector<double> dn(nth);
  for (int j = 0; j < nth; ++j) {
    const PolarCoeff pc = polar_coeff(m, R, j * ht);
    const double du_depth = wts(0) * fb[j] + wts(1) * u(id(nr - 1, j)) +
                            wts(2) * u(id(nr - 2, j)) + wts(3) * u(id(nr - 3, j));
    dn[j] = (pc.grr * -du_depth + pc.grt * dfb[j]) / std::sqrt(pc.grr);
  }
  return dn;
}

} // namespace

BoundaryTrace dn_pde(const MetricField& m, const BoundaryChart& chart, const BoundaryTrace& f,
                     int nr, int nth) {
  const double L = chart.length();
  if (std::abs(f.length - L) > 1e-6 * L)
    throw NumericalError("boundary data period does not match the chart");
  const auto cf = real_spectrum(f.v);
  BoundaryTrace out = BoundaryTrace::zeros(f.ns, f.length);

  if (m.kind() == MetricField::Kind::Conformal) {
    // harmonic extensions agree with the euclidean disk; only the boundary
    // frame rescales the normal derivative
    if (nth < 8 || nth % 2 != 0)
      throw NumericalError("conformal DN needs an even theta count >= 8");
    const double R = m.radius();
    std::vector<double> g(nth);
    for (int j = 0; j < nth; ++j)
      g[j] = fourier_eval(cf, f.ns, f.length, chart.s_of_theta(j * 2.0 * M_PI / nth));
    auto cg = real_spectrum(g);
    for (int k = 0; k <= nth / 2; ++k) cg[k] *= static_cast<double>(k) / R;
    std::vector<double> dn = real_synthesis(cg, nth);
    for (int j = 0; j < nth; ++j) {
      const double th = j * 2.0 * M_PI / nth;
      dn[j] *= std::exp(-m.lambda({R * std::cos(th), R * std::sin(th)}));
    }
    const auto cd = real_spectrum(dn);
    for (int i = 0; i < f.ns; ++i)
      out.v[i] = fourier_eval(cd, nth, 2.0 * M_PI, chart.theta_of_s(out.s_node(i)));
    return out;
  }

  if (nr < 8 || nr % 2 != 0 || nth < 16 || nth % 4 != 0)
    throw NumericalError("finite volume DN needs nr even >= 8 and nth a multiple of 4 >= 16");
  const std::vector<double> fine = fv_dn(m, chart, cf, f.ns, f.length, nr, nth);
  const std::vector<double> coarse = fv_dn(m, chart, cf, f.ns, f.length, nr / 2, nth / 2);
  const auto cfine = real_spectrum(fine);
  const auto ccoarse = real_spectrum(coarse);
  // extrapolation in spectrum space; a coarse Nyquist line becomes a regular
  // (twice-counted) mode on the finer grid
  const bool third = nr % 4 == 0 && nr / 4 >= 8 && nth % 8 == 0 && nth / 4 >= 16;
  std::vector<std::complex<double>> ccoarsest;
  if (third)
    ccoarsest = real_spectrum(fv_dn(m, chart, cf, f.ns, f.length, nr / 4, nth / 4));
  std::vector<std::complex<double>> comb(nth / 2 + 1, 0.0);
  for (int k = 0; k <= nth / 2; ++k) {
    if (k > nth / 4) {
      comb[k] = cfine[k];
      continue;
    }
    const std::complex<double> c2 = (k == nth / 4) ? 0.5 * ccoarse[k] : ccoarse[k];
    comb[k] = (4.0 * cfine[k] - c2) / 3.0;
    if (third && k <= nth / 8) {
      // a third level removes the cubic error term as well
      const std::complex<double> c3 = (k == nth / 8) ? 0.5 * ccoarsest[k] : ccoarsest[k];
      comb[k] += (c3 - 5.0 * c2 + 4.0 * cfine[k]) / 21.0;
    }
  }
  for (int i = 0; i < f.ns; ++i)
    out.v[i] = fourier_eval(comb, nth, 2.0 * M_PI, chart.theta_of_s(out.s_node(i)));
  return out;
}

// ---- boundary fiber transform and the w equation ------------------------------

BoundaryFiberGrid boundary_hilbert_even(const BoundaryFiberGrid& u) {
  if (u.half != BoundaryFiberGrid::Half::Full)
    throw NumericalError("fiber hilbert transform needs the full circle");
  const int n = 2 * u.nphi;
  BoundaryFiberGrid out = u;
  std::vector<double> row(n);
  const std::complex<double> i1(0.0, 1.0);
  for (int i = 0; i < u.ns; ++i) {
    for (int j = 0; j < n; ++j) row[j] = u.at(i, j);
    auto c = real_spectrum(row);
    for (int k = 0; k <= n / 2; ++k) {
      // the chart angle runs against the fiber orientation, hence +i sgn(k)
      if (k == 0 || k == n / 2 || k % 2 != 0)
        c[k] = 0.0;
      else
        c[k] *= i1;
    }
    row = real_synthesis(c, n);
    for (int j = 0; j < n; ++j) out.at(i, j) = row[j];
  }
  return out;
}

namespace {

// Dense matrix of 2 pi A-* He A+ on the table's inward grid, one impulse
// column at a time; the continuation operators are exactly linear in the
// grid values, so this reproduces them without truncation.
Eigen::MatrixXd w_equation_matrix(const ScatterTable& table) {
  const int ns = table.ns(), np = table.nphi();
  const int N = ns * np;
  Eigen::MatrixXd L(N, N);
  BoundaryFiberGrid e =
      BoundaryFiberGrid::zeros(BoundaryFiberGrid::Half::Inward, ns, np, table.length());
  for (int col = 0; col < N; ++col) {
    e.v[col] = 1.0;
    const BoundaryFiberGrid am = a_star_minus(table, boundary_hilbert_even(a_plus(table, e)));
    for (int q = 0; q < N; ++q) L(q, col) = 2.0 * M_PI * am.v[q];
    e.v[col] = 0.0;
  }
  return L;
}

Eigen::VectorXd w_equation_rhs(const ScatterTable& table, const BoundaryTrace& h_star0) {
  if (std::abs(h_star0.length - table.length()) > 1e-6 * table.length())
    throw NumericalError("boundary data period does not match the scattering table");
  const int ns = table.ns(), np = table.nphi();
  const auto ch = real_spectrum(h_star0.v);
  BoundaryFiberGrid lift =
      BoundaryFiberGrid::zeros(BoundaryFiberGrid::Half::Full, ns, np, table.length());
  for (int i = 0; i < ns; ++i) {
    const double val = fourier_eval(ch, h_star0.ns, h_star0.length, lift.s_node(i));
    for (int j = 0; j < 2 * np; ++j) lift.at(i, j) = val;
  }
  const BoundaryFiberGrid am = a_star_minus(table, lift);
  Eigen::VectorXd rhs(ns * np);
  for (int q = 0; q < ns * np; ++q) rhs(q) = -am.v[q];
  return rhs;
}

struct TruncatedSolve {
  Eigen::VectorXd x;
  double residual = 0.0;
  int rank = 0;
};

// Minimal-norm least squares through the truncated singular expansion.
TruncatedSolve svd_solve(const Eigen::BDCSVD<Eigen::MatrixXd>& svd, const Eigen::MatrixXd& a,
                         const Eigen::VectorXd& rhs, double cutoff) {
  const Eigen::VectorXd& sig = svd.singularValues();
  const double tol = cutoff * sig(0);
  Eigen::VectorXd y = svd.matrixU().transpose() * rhs;
  TruncatedSolve out;
  for (int i = 0; i < sig.size(); ++i) {
    if (sig(i) > tol) {
      y(i) /= sig(i);
      ++out.rank;
    } else {
      y(i) = 0.0;
    }
  }
  out.x = svd.matrixV() * y;
  // data below the operator's roundoff floor has no meaningful relative scale
  const double floor = 1e-12 * std::max(sig(0), 1.0);
  out.residual = (a * out.x - rhs).norm() / std::max(rhs.norm(), floor);
  return out;
}

BoundaryFiberGrid grid_of(const Eigen::VectorXd& x, const ScatterTable& table) {
  BoundaryFiberGrid w = BoundaryFiberGrid::zeros(BoundaryFiberGrid::Half::Inward, table.ns(),
                                                 table.nphi(), table.length());
  for (int q = 0; q < x.size(); ++q) w.v[q] = x(q);
  return w;
}

} // namespace

WSolution solve_w_equation(const ScatterTable& table, const BoundaryTrace& h_star0,
                           const WSolveOptions& opt) {
  const Eigen::MatrixXd L = w_equation_matrix(table);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(L, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const TruncatedSolve sol = svd_solve(svd, L, w_equation_rhs(table, h_star0), opt.svd_cutoff);
  WSolution out;
  out.w = grid_of(sol.x, table);
  out.residual = sol.residual;
  out.rank = sol.rank;
  return out;
}

DnColumns extract_dn(const ScatterTable& table, const DnExtractOptions& opt) {
  const int ns = table.ns(), np = table.nphi();
  const double L = table.length();
  if (opt.kmax < 1 || 4 * opt.kmax > ns)
    throw NumericalError("requested band exceeds the table resolution");
  const Eigen::MatrixXd M = w_equation_matrix(table);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);

  DnColumns cols;
  cols.length = L;
  auto push = [&](const BoundaryTrace& h_star0) {
    const TruncatedSolve sol = svd_solve(svd, M, w_equation_rhs(table, h_star0),
                                         opt.wsolve.svd_cutoff);
    // the fiber average of the even continuation recovers the conjugate trace
    const BoundaryFiberGrid ap = a_plus(table, grid_of(sol.x, table));
    BoundaryTrace h0 = BoundaryTrace::zeros(ns, L);
    for (int i = 0; i < ns; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 2 * np; ++j) acc += ap.at(i, j);
      h0.v[i] = M_PI * acc / np;
    }
    BoundaryTrace image = trace_derivative(h0);
    for (double& x : image.v) x = -x;
    cols.input.push_back(h_star0);
    cols.image.push_back(image.mean_zero());
    cols.residuals.push_back(sol.residual);
  };

  push(BoundaryTrace::sample(ns, L, [](double) { return 1.0; }));
  for (int k = 1; k <= opt.kmax; ++k) {
    const double om = 2.0 * M_PI * k / L;
    push(BoundaryTrace::sample(ns, L, [&](double s) { return std::cos(om * s); }));
    push(BoundaryTrace::sample(ns, L, [&](double s) { return std::sin(om * s); }));
  }
  return cols;
}

double dn_subspace_gap(const DnColumns& cols, int kmax) {
  const int d = 2 * kmax;
  if (static_cast<int>(cols.image.size()) < 1 + d)
    throw NumericalError("not enough extracted columns for the requested band");
  Eigen::MatrixXd e(d, d);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(d, d);
  for (int q = 0; q < d; ++q) {
    const BoundaryTrace& im = cols.image[q + 1];
    for (int p = 0; p < d; ++p) {
      const int k = p / 2 + 1;
      double acc = 0.0;
      for (int i = 0; i < im.ns; ++i) {
        const double a = 2.0 * M_PI * k * im.s_node(i) / im.length;
        acc += im.v[i] * (p % 2 == 0 ? std::cos(a) : std::sin(a));
      }
      e(p, q) = 2.0 * acc / im.ns;
    }
    t(q, q) = q / 2 + 1;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> gap(e - t);
  return gap.singularValues()(0) / kmax;
}

// ---- conjugate pairs ------------------------------------------------------------

double conjugate_pair_check(const MetricField& m, const ScalarField& h,
                            const ScalarField& h_star, double margin) {
  if (h.nr != h_star.nr || h.nth != h_star.nth || std::abs(h.radius - h_star.radius) > 1e-12)
    throw NumericalError("conjugate pair fields must share a grid");
  const int nr = h.nr, nth = h.nth;
  const double hr = h.radius / nr, ht = 2.0 * M_PI / nth;
  double acc = 0.0;
  for (int i = 0; i + 1 < nr; ++i) {
    const double r = h.r_node(i);
    if (r > h.radius - margin) continue;
    for (int j = 0; j < nth; ++j) {
      auto dpolar = [&](const ScalarField& f, double& dr, double& dt) {
        const double below = i == 0 ? f.at(0, (j + nth / 2) % nth) : f.at(i - 1, j);
        dr = (f.at(i + 1, j) - below) / (2.0 * hr);
        dt = (f.at(i, (j + 1) % nth) - f.at(i, (j + nth - 1) % nth)) / (2.0 * ht);
      };
      double h_r, h_t, s_r, s_t;
      dpolar(h, h_r, h_t);
      dpolar(h_star, s_r, s_t);
      const double ct = std::cos(h.theta_node(j)), st = std::sin(h.theta_node(j));
      const Vec2 dh{ct * h_r - st / r * h_t, st * h_r + ct / r * h_t};
      const Vec2 ds{ct * s_r - st / r * s_t, st * s_r + ct / r * s_t};
      const Vec2 p = h.node_xy(i, j);
      const Mat2 gi = m.metric_inv(p);
      const double sd = m.sqrt_det(p);
      const Vec2 grad_star = gi * ds;
      // covector of the rotated gradient: eps_kj (grad h*)^j
      const Vec2 res{dh.x - sd * grad_star.y, dh.y + sd * grad_star.x};
      const Vec2 gires = gi * res;
      acc += edot(res, gires) * sd * r * hr * ht;
    }
  }
  return std::sqrt(acc);
}

// ---- boundary distances and the inverse problem ---------------------------------

DistanceData boundary_distances(const MetricField& m, const BoundaryChart& chart, int n_anchor,
                                const FlowOptions& opt) {
  if (n_anchor < 3) throw NumericalError("distance data needs at least 3 anchors");
  DistanceData out;
  out.theta.resize(n_anchor);
  out.d = Eigen::MatrixXd::Zero(n_anchor, n_anchor);
  std::vector<double> s(n_anchor);
  for (int a = 0; a < n_anchor; ++a) {
    out.theta[a] = 2.0 * M_PI * a / n_anchor;
    s[a] = chart.s_of_theta(out.theta[a]);
  }
  for (int a = 0; a < n_anchor; ++a)
    for (int b = a + 1; b < n_anchor; ++b)
      out.d(a, b) = out.d(b, a) = boundary_distance(m, chart, s[a], s[b], opt);
  return out;
}

namespace {

// Chebyshev-in-radius times harmonic-polynomial-in-angle product basis for
// the log conformal factor; every member stays order one on the unit disk.
template <class T>
void basis_table(int nrad, int nang, const T& x, const T& y, std::vector<T>& out) {
  thread_local std::vector<T> rad, ang;
  const T q = x * x + y * y;
  const T t = make_const<T>(2.0) * q - make_const<T>(1.0);
  rad.assign(nrad, make_const<T>(1.0));
  if (nrad > 1) rad[1] = t;
  for (int a = 2; a < nrad; ++a) rad[a] = make_const<T>(2.0) * t * rad[a - 1] - rad[a - 2];
  ang.assign(nang, make_const<T>(1.0));
  T re = x, im = y;
  for (int b = 1; b < nang; ++b) {
    ang[b] = (b % 2 == 1) ? re : im;
    if (b % 2 == 0) {
      const T re_next = x * re - y * im;
      im = x * im + y * re;
      re = re_next;
    }
  }
  out.resize(static_cast<size_t>(nrad) * nang);
  for (int a = 0; a < nrad; ++a)
    for (int b = 0; b < nang; ++b) out[static_cast<size_t>(a) * nang + b] = rad[a] * ang[b];
}

template <class T>
T basis_sum(const std::vector<double>& c, int nrad, int nang, const T& x, const T& y) {
  thread_local std::vector<T> b;
  basis_table(nrad, nang, x, y, b);
  T acc = make_const<T>(0.0);
  for (size_t i = 0; i < b.size(); ++i) acc = acc + make_const<T>(c[i]) * b[i];
  return acc;
}

MetricField coeff_metric(const std::vector<double>& c, int nrad, int nang, double radius) {
  std::string desc = "gn-basis " + std::to_string(nrad) + "x" + std::to_string(nang);
  char buf[32];
  for (double ci : c) {
    std::snprintf(buf, sizeof buf, " %.17g", ci);
    desc += buf;
  }
  auto f = [c, nrad, nang](double x, double y) { return basis_sum<double>(c, nrad, nang, x, y); };
  auto g = [c, nrad, nang](double x, double y) {
    return basis_sum<Grad>(c, nrad, nang, make_x<Grad>(x), make_y<Grad>(y));
  };
  auto j = [c, nrad, nang](double x, double y) {
    return basis_sum<Jet2>(c, nrad, nang, make_x<Jet2>(x), make_y<Jet2>(y));
  };
  return MetricField::conformal_fn(std::move(f), std::move(g), std::move(j), std::move(desc),
                                   radius);
}

// Shoots the geodesic from arclength sa whose exit lies the given fraction of
// the perimeter ahead; the exit arclength decreases monotonically in the
// entry angle on simple metrics, so a bracketed secant converges.
GeodesicRecord connect_boundary(const MetricField& m, const BoundaryChart& chart, double sa,
                                double target, const FlowOptions& opt) {
  const double L = chart.length();
  const Vec2 p0 = chart.point_of_s(sa);
  const double cap = 0.5 * M_PI - 1e-3;
  GeodesicRecord rec;
  auto mismatch = [&](double phi) {
    rec = trace_geodesic(m, p0, chart.direction(sa, phi), opt);
    const Vec2 e = rec.x.back();
    return wrap_periodic(chart.s_of_theta(std::atan2(e.y, e.x)) - sa, L) - target;
  };
  double lo = -cap, hi = cap; // mismatch(lo) > 0 > mismatch(hi)
  double phi = std::clamp(0.5 * M_PI * (1.0 - 2.0 * target / L), -cap, cap);
  double f = mismatch(phi);
  GeodesicRecord best = rec;
  double best_f = std::abs(f);
  double phi_prev = phi, f_prev = f;
  for (int it = 0; it < 60 && std::abs(f) > 1e-10 * L; ++it) {
    if (f > 0.0)
      lo = phi;
    else
      hi = phi;
    double next;
    if (it == 0) {
      next = phi + (f > 0.0 ? 0.1 : -0.1);
    } else {
      const double df = f - f_prev;
      next = std::abs(df) > 1e-300 ? phi - f * (phi - phi_prev) / df : 0.5 * (lo + hi);
    }
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    phi_prev = phi;
    f_prev = f;
    phi = next;
    f = mismatch(phi);
    if (std::abs(f) < best_f) {
      best_f = std::abs(f);
      best = rec;
    }
  }
  if (best_f > 1e-6 * L) throw NumericalError("boundary shooting did not converge");
  return best;
}

} // namespace

InversionResult invert_conformal(const DistanceData& data, const InvertOptions& opt) {
  const int n = static_cast<int>(data.theta.size());
  if (n < 3 || data.d.rows() != n || data.d.cols() != n)
    throw NumericalError("distance data must be a square matrix over the anchors");
  const int nb = opt.n_radial * opt.n_angular;
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  const int npair = static_cast<int>(pairs.size());
  Eigen::VectorXd dvec(npair);
  for (int p = 0; p < npair; ++p) dvec(p) = data.d(pairs[p].first, pairs[p].second);
  const double dnorm = std::max(dvec.norm(), 1e-300);

  // forward model and travel-time Jacobian at a coefficient vector; the
  // first length variation along the frozen path is the basis integral
  auto forward = [&](const std::vector<double>& cs, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const MetricField mm = coeff_metric(cs, opt.n_radial, opt.n_angular, 1.0);
    const BoundaryChart chart(mm);
    const double L = chart.length();
    std::vector<double> s(n);
    for (int a = 0; a < n; ++a) s[a] = chart.s_of_theta(data.theta[a]);
    std::vector<double> bvals;
    for (int p = 0; p < npair; ++p) {
      const double sa = s[pairs[p].first];
      const double target = wrap_periodic(s[pairs[p].second] - sa, L);
      const GeodesicRecord rec = connect_boundary(mm, chart, sa, target, opt.flow);
      r(p) = rec.tau() - dvec(p);
      if (jac) {
        jac->row(p).setZero();
        for (size_t k = 0; k < rec.t.size(); ++k) {
          double wq = 0.0;
          if (k > 0) wq += 0.5 * (rec.t[k] - rec.t[k - 1]);
          if (k + 1 < rec.t.size()) wq += 0.5 * (rec.t[k + 1] - rec.t[k]);
          basis_table<double>(opt.n_radial, opt.n_angular, rec.x[k].x, rec.x[k].y, bvals);
          for (int q = 0; q < nb; ++q) (*jac)(p, q) += wq * bvals[q];
        }
      }
    }
  };

  InversionResult res;
  std::vector<double> coeffs(nb, 0.0);
  Eigen::VectorXd r(npair);
  Eigen::MatrixXd jac(npair, nb);
  forward(coeffs, r, &jac);
  double rel = r.norm() / dnorm;
  res.residual_history.push_back(rel);

  double mu = 1e-3;
  for (int it = 0; it < opt.max_iter && rel >= opt.tol; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    const double dmax = jtj.diagonal().maxCoeff();
    bool accepted = false;
    double step_norm = 0.0;
    for (int tries = 0; tries < 10; ++tries) {
      Eigen::MatrixXd a = jtj;
      a.diagonal().array() += (mu + opt.damping) * dmax;
      const Eigen::VectorXd step = a.ldlt().solve(-jtr);
      std::vector<double> cand = coeffs;
      for (int q = 0; q < nb; ++q) cand[q] += step(q);
      Eigen::VectorXd rc(npair);
      Eigen::MatrixXd jc(npair, nb);
      bool ok = true;
      try {
        forward(cand, rc, &jc);
      } catch (const NumericalError&) {
        ok = false; // the trial factor lost simplicity; retreat
      }
      if (ok && rc.norm() < r.norm()) {
        coeffs = std::move(cand);
        r = rc;
        jac = jc;
        mu = std::max(mu / 3.0, 1e-12);
        step_norm = step.norm();
        accepted = true;
        break;
      }
      mu *= 10.0;
    }
    if (!accepted) break;
    rel = r.norm() / dnorm;
    res.residual_history.push_back(rel);
    if (step_norm < 1e-12) break;
  }

  res.converged = rel < opt.tol;
  res.coeffs = coeffs;
  res.lambda = ScalarField::sample(opt.nr_out, opt.nth_out, 1.0, [&](Vec2 p) {
    return basis_sum<double>(coeffs, opt.n_radial, opt.n_angular, p.x, p.y);
  });
  return res;
}

} // namespace geotomo

