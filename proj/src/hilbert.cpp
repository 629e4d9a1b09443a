#include "geotomo/hilbert.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>

#include "geotomo/errors.hpp"

namespace geotomo {

namespace {

// FFTW plans bound to private scratch rows; copy in, execute, copy out.
// One instance per call keeps the module free of shared mutable state.
struct FiberFFT {
  int n;
  std::vector<double> re;
  std::vector<std::complex<double>> sp;
  fftw_plan fwd, inv;

  explicit FiberFFT(int nb) : n(nb), re(nb), sp(nb / 2 + 1) {
    if (nb < 4 || nb % 2 != 0) throw NumericalError("fiber FFT needs an even count >= 4");
    fwd = fftw_plan_dft_r2c_1d(n, re.data(), reinterpret_cast<fftw_complex*>(sp.data()),
                               FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(sp.data()), re.data(),
                               FFTW_ESTIMATE);
  }
  FiberFFT(const FiberFFT&) = delete;
  FiberFFT& operator=(const FiberFFT&) = delete;
  ~FiberFFT() {
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
};

// The 1d helpers run once per boundary row inside dense operator assembly,
// so their plans are cached per transform size instead of rebuilt per call.
FiberFFT& cached_fft(int n) {
  thread_local std::map<int, std::unique_ptr<FiberFFT>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FiberFFT>(n);
  return *slot;
}

} // namespace

FiberSpectrum fiber_spectrum(const BundleGrid& u) {
  FiberFFT fft(u.nb);
  FiberSpectrum s;
  s.nr = u.nr;
  s.nth = u.nth;
  s.nb = u.nb;
  s.radius = u.radius;
  s.c.resize(static_cast<size_t>(u.nr) * u.nth * s.nk());
  const double scale = 1.0 / u.nb;
  for (int i = 0; i < u.nr; ++i)
    for (int j = 0; j < u.nth; ++j) {
      for (int k = 0; k < u.nb; ++k) fft.re[k] = u.at(i, j, k);
      fftw_execute(fft.fwd);
      for (int k = 0; k < s.nk(); ++k) s.at(i, j, k) = scale * fft.sp[k];
    }
  return s;
}

BundleGrid fiber_synthesis(const FiberSpectrum& s) {
  FiberFFT fft(s.nb);
  BundleGrid u = BundleGrid::zeros(s.nr, s.nth, s.nb, s.radius);
  for (int i = 0; i < s.nr; ++i)
    for (int j = 0; j < s.nth; ++j) {
      for (int k = 0; k < s.nk(); ++k) fft.sp[k] = s.at(i, j, k);
      fftw_execute(fft.inv);
      for (int k = 0; k < s.nb; ++k) u.at(i, j, k) = fft.re[k];
    }
  return u;
}

std::vector<std::complex<double>> real_spectrum(const std::vector<double>& u) {
  const int n = static_cast<int>(u.size());
  FiberFFT& fft = cached_fft(n);
  for (int k = 0; k < n; ++k) fft.re[k] = u[k];
  fftw_execute(fft.fwd);
  std::vector<std::complex<double>> c(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) c[k] = fft.sp[k] / static_cast<double>(n);
  return c;
}

std::vector<double> real_synthesis(const std::vector<std::complex<double>>& c, int n) {
  if (static_cast<int>(c.size()) != n / 2 + 1)
    throw NumericalError("spectrum length does not match the sample count");
  FiberFFT& fft = cached_fft(n);
  for (int k = 0; k <= n / 2; ++k) fft.sp[k] = c[k];
  fftw_execute(fft.inv);
  return fft.re;
}

ScalarField fiber_mean(const BundleGrid& u) {
  ScalarField f = ScalarField::zeros(u.nr, u.nth, u.radius);
  const double scale = 1.0 / u.nb;
  for (int i = 0; i < u.nr; ++i)
    for (int j = 0; j < u.nth; ++j) {
      double acc = 0.0;
      for (int k = 0; k < u.nb; ++k) acc += u.at(i, j, k);
      f.at(i, j) = acc * scale;
    }
  return f;
}

BundleGrid lift_fiber(const ScalarField& f, int nb) {
  BundleGrid u = BundleGrid::zeros(f.nr, f.nth, nb, f.radius);
  for (int i = 0; i < f.nr; ++i)
    for (int j = 0; j < f.nth; ++j)
      for (int k = 0; k < nb; ++k) u.at(i, j, k) = f.at(i, j);
  return u;
}

namespace {

// Shared core of the three transforms: multiplier -i sgn(k) on the kept
// harmonics, zero on the rest; the mean and Nyquist modes always drop.
// keep = -1 keeps everything, 0 / 1 keep even / odd k only.
BundleGrid hilbert_multiplier(const BundleGrid& u, int keep) {
  FiberSpectrum s = fiber_spectrum(u);
  const std::complex<double> mi(0.0, -1.0);
  const int nyq = u.nb / 2;
  for (int i = 0; i < s.nr; ++i)
    for (int j = 0; j < s.nth; ++j)
      for (int k = 0; k < s.nk(); ++k) {
        std::complex<double>& c = s.at(i, j, k);
        if (k == 0 || k == nyq || (keep >= 0 && k % 2 != keep))
          c = 0.0;
        else
          c *= mi;
      }
  return fiber_synthesis(s);
}

} // namespace

BundleGrid hilbert_fiber(const BundleGrid& u) { return hilbert_multiplier(u, -1); }
BundleGrid hilbert_even(const BundleGrid& u) { return hilbert_multiplier(u, 0); }
BundleGrid hilbert_odd(const BundleGrid& u) { return hilbert_multiplier(u, 1); }

namespace {

PhasePoint flow_steps(const MetricField& m, PhasePoint s, double t, double cap) {
  const int n = std::max(1, static_cast<int>(std::lround(std::abs(t) / cap)));
  const double h = t / n;
  for (int q = 0; q < n; ++q) s = rk4_step(m, s, h);
  return s;
}

struct LegEnd {
  Vec2 x;
  double r, theta;
  double dbeta; // fiber rotation carried by the transported frame
};

LegEnd transport_leg(const MetricField& m, Vec2 x0, Vec2 v0, Vec2 e1, double len, double cap) {
  const int n = std::max(2, static_cast<int>(std::lround(len / cap)));
  const double h = len / n;
  GeodesicRecord rec;
  rec.t.resize(n + 1);
  rec.x.resize(n + 1);
  rec.v.resize(n + 1);
  PhasePoint s{x0, v0};
  rec.t[0] = 0.0;
  rec.x[0] = s.x;
  rec.v[0] = s.v;
  for (int q = 1; q <= n; ++q) {
    s = rk4_step(m, s, h);
    rec.t[q] = q * h;
    rec.x[q] = s.x;
    rec.v[q] = s.v;
  }
  const Mat2 P = parallel_transport(m, rec);
  LegEnd e;
  e.x = s.x;
  e.r = std::hypot(s.x.x, s.x.y);
  e.theta = std::atan2(s.x.y, s.x.x);
  e.dbeta = m.to_angle(s.x, P * e1);
  return e;
}

} // namespace

BundleGrid geodesic_derivative(const MetricField& m, const BundleGrid& u,
                               const DiffOptions& opt) {
  BundleGrid out = BundleGrid::zeros(u.nr, u.nth, u.nb, u.radius);
  auto val = [&](const PhasePoint& p) {
    return u.interp(std::hypot(p.x.x, p.x.y), std::atan2(p.x.y, p.x.x), m.to_angle(p.x, p.v));
  };
  for (int i = 0; i < u.nr; ++i)
    for (int j = 0; j < u.nth; ++j) {
      const double r = u.r_node(i), th = u.theta_node(j);
      const Vec2 x{r * std::cos(th), r * std::sin(th)};
      const Frame fr = m.frame(x);
      for (int k = 0; k < u.nb; ++k) {
        const double b = u.beta_node(k);
        const Vec2 v = std::cos(b) * fr.e1 + std::sin(b) * fr.e2;
        const PhasePoint sp = flow_steps(m, {x, v}, opt.dt, opt.substep);
        const PhasePoint sm = flow_steps(m, {x, v}, -opt.dt, opt.substep);
        const bool okp = std::hypot(sp.x.x, sp.x.y) <= u.radius;
        const bool okm = std::hypot(sm.x.x, sm.x.y) <= u.radius;
        double d = 0.0;
        if (okp && okm)
          d = (val(sp) - val(sm)) / (2.0 * opt.dt);
        else if (okp)
          d = (val(sp) - u.at(i, j, k)) / opt.dt;
        else if (okm)
          d = (u.at(i, j, k) - val(sm)) / opt.dt;
        out.at(i, j, k) = d;
      }
    }
  return out;
}

BundleGrid horizontal_derivative(const MetricField& m, const BundleGrid& u, int axis,
                                 const DiffOptions& opt) {
  if (axis != 0 && axis != 1) throw NumericalError("horizontal derivative axis must be 0 or 1");
  BundleGrid out = BundleGrid::zeros(u.nr, u.nth, u.nb, u.radius);
  for (int i = 0; i < u.nr; ++i)
    for (int j = 0; j < u.nth; ++j) {
      const double r = u.r_node(i), th = u.theta_node(j);
      const Vec2 x{r * std::cos(th), r * std::sin(th)};
      const Frame fr = m.frame(x);
      const Vec2 dir = axis == 0 ? fr.e1 : fr.e2;
      const LegEnd lp = transport_leg(m, x, dir, fr.e1, opt.dx, opt.substep);
      const LegEnd lm = transport_leg(m, x, -dir, fr.e1, opt.dx, opt.substep);
      for (int k = 0; k < u.nb; ++k) {
        const double b = u.beta_node(k);
        out.at(i, j, k) = (u.interp(lp.r, lp.theta, b + lp.dbeta) -
                           u.interp(lm.r, lm.theta, b + lm.dbeta)) /
                          (2.0 * opt.dx);
      }
    }
  return out;
}

BundleGrid perp_derivative(const MetricField& m, const BundleGrid& u, const DiffOptions& opt) {
  const BundleGrid d1 = horizontal_derivative(m, u, 0, opt);
  const BundleGrid d2 = horizontal_derivative(m, u, 1, opt);
  BundleGrid out = BundleGrid::zeros(u.nr, u.nth, u.nb, u.radius);
  for (int i = 0; i < u.nr; ++i)
    for (int j = 0; j < u.nth; ++j)
      for (int k = 0; k < u.nb; ++k) {
        const double b = u.beta_node(k);
        out.at(i, j, k) = std::sin(b) * d1.at(i, j, k) - std::cos(b) * d2.at(i, j, k);
      }
  return out;
}

CommutatorReport commutator_residual(const MetricField& m, const BundleGrid& u,
                                     const DiffOptions& opt) {
  const BundleGrid gu = geodesic_derivative(m, u, opt);
  const BundleGrid g_he = geodesic_derivative(m, hilbert_even(u), opt);
  const BundleGrid g_ho = geodesic_derivative(m, hilbert_odd(u), opt);
  const BundleGrid he_gu = hilbert_even(gu);
  const BundleGrid ho_gu = hilbert_odd(gu);
  const BundleGrid pu = perp_derivative(m, u, opt);
  const BundleGrid pu0 = lift_fiber(fiber_mean(pu), u.nb);
  const BundleGrid p_u0 = perp_derivative(m, lift_fiber(fiber_mean(u), u.nb), opt);

  CommutatorReport rep;
  for (int i = 0; i < u.nr; ++i) {
    if (u.r_node(i) > u.radius - opt.band) continue;
    for (int j = 0; j < u.nth; ++j)
      for (int k = 0; k < u.nb; ++k) {
        const double even = he_gu.at(i, j, k) - g_ho.at(i, j, k) - pu0.at(i, j, k);
        const double odd = ho_gu.at(i, j, k) - g_he.at(i, j, k) - p_u0.at(i, j, k);
        rep.split_even = std::max(rep.split_even, std::abs(even));
        rep.split_odd = std::max(rep.split_odd, std::abs(odd));
        rep.full = std::max(rep.full, std::abs(even + odd));
      }
  }
  return rep;
}

} // namespace geotomo
