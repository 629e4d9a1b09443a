#pragma once

#include <complex>
#include <vector>

#include "geotomo/bundle.hpp"
#include "geotomo/flow.hpp"
#include "geotomo/geometry.hpp"
#include "geotomo/transport.hpp"

namespace geotomo {

// Fiberwise Fourier data of a circle-bundle grid: per base node the
// coefficients c_k of u(beta) = sum_k c_k e^{i k beta} for k = 0 .. nb/2.
// The signal is real, so c_0 and the Nyquist coefficient are real and c_0
// equals the fiber average.
struct FiberSpectrum {
  int nr = 0, nth = 0, nb = 0;
  double radius = 1.0;
  std::vector<std::complex<double>> c; // [r][theta][0..nb/2]

  int nk() const { return nb / 2 + 1; }
  size_t idx(int i, int j, int k) const {
    return (static_cast<size_t>(i) * nth + j) * nk() + k;
  }
  std::complex<double>& at(int i, int j, int k) { return c[idx(i, j, k)]; }
  std::complex<double> at(int i, int j, int k) const { return c[idx(i, j, k)]; }
};

// Forward / inverse fiber FFT.  The fiber count must be even.
FiberSpectrum fiber_spectrum(const BundleGrid& u);
BundleGrid fiber_synthesis(const FiberSpectrum& s);

// One-dimensional periodic helpers: coefficients c_k of
// u_n = sum_k c_k e^{2 pi i k n / n_samples} for k = 0 .. n/2, and back.
std::vector<std::complex<double>> real_spectrum(const std::vector<double>& u);
std::vector<double> real_synthesis(const std::vector<std::complex<double>>& c, int n);

// Fiber average u_0(x) = (1/2pi) int u(x, .) dbeta as a base-space field.
ScalarField fiber_mean(const BundleGrid& u);

// Constant-in-beta lift of a base-space field.
BundleGrid lift_fiber(const ScalarField& f, int nb);

// Fiberwise Hilbert transform: multiplier -i sgn(k) on e^{i k beta}, so
// cos(k beta) -> sin(k beta).  The mean and the Nyquist mode are annihilated.
BundleGrid hilbert_fiber(const BundleGrid& u);

// The transform restricted to the even (resp. odd) fiber harmonics; the two
// parts sum to hilbert_fiber(u).
BundleGrid hilbert_even(const BundleGrid& u);
BundleGrid hilbert_odd(const BundleGrid& u);

struct DiffOptions {
  double dt = 0.05;      // half width of the flow difference
  double dx = 0.03;      // stencil leg length of the horizontal derivative
  double substep = 0.025; // RK4 substep cap along flow legs
  double band = 0.12;    // rim band excluded from sup norms
};

// Derivative along the geodesic flow: central difference
// (u(phi_dt) - u(phi_-dt)) / 2dt.  Where a leg exits the disk the difference
// degrades to one-sided (lower order); such nodes sit inside the rim band.
BundleGrid geodesic_derivative(const MetricField& m, const BundleGrid& u,
                               const DiffOptions& opt = {});

// Horizontal derivative along frame leg e1 (axis 0) or e2 (axis 1): central
// difference over geodesic legs of length dx, the fiber angle carried by
// parallel transport of the frame.
BundleGrid horizontal_derivative(const MetricField& m, const BundleGrid& u, int axis,
                                 const DiffOptions& opt = {});

// Derivative along the rotated direction: contraction of the horizontal
// gradient with the perpendicular of xi(beta), i.e. sin(beta) e1 - cos(beta) e2.
BundleGrid perp_derivative(const MetricField& m, const BundleGrid& u,
                           const DiffOptions& opt = {});

// Residuals of the commutator identity between the fiber Hilbert transform H
// and the flow derivative G, sup over nodes with r <= radius - band:
//   full:       H G u - G H u - P u_0 - (P u)_0
//   split_even: H_e G u - G H_o u - (P u)_0
//   split_odd:  H_o G u - G H_e u - P u_0
// where P is the perpendicular derivative and (.)_0 the lifted fiber mean.
struct CommutatorReport {
  double full = 0.0;
  double split_even = 0.0;
  double split_odd = 0.0;
};

CommutatorReport commutator_residual(const MetricField& m, const BundleGrid& u,
                                     const DiffOptions& opt = {});

} // namespace geotomo
