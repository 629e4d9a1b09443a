#pragma once

#include <cmath>

namespace geotomo {

// Catmull-Rom cubic convolution.  Weights for samples at i0-1..i0+2 with the
// evaluation point at fraction t in [0,1) past node i0.  Reproduces quadratics
// exactly and interpolates nodal values.
inline void cubic_weights(double t, double w[4]) {
  const double t2 = t * t, t3 = t2 * t;
  w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
  w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
  w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
  w[3] = 0.5 * (t3 - t2);
}

// Splits u = (x - x0)/dx into base index and fraction.
inline void locate_cell(double x, double x0, double dx, int& i0, double& t) {
  const double u = (x - x0) / dx;
  const double f = std::floor(u);
  i0 = static_cast<int>(f);
  t = u - f;
}

inline int wrap_index(int i, int n) {
  int r = i % n;
  if (r < 0) r += n;
  return r;
}

// Out-of-range indices fall back to quadratic extrapolation through the
// nearest three samples; keeps cubic stencils usable half a cell past the
// ends of cell-centered grids.
template <class F>
double fetch_clamped(F&& at, int n, int i) {
  if (i >= 0 && i < n) return at(i);
  if (i < 0) {
    const double u = static_cast<double>(i);
    return at(0) * (u - 1.0) * (u - 2.0) * 0.5 - at(1) * u * (u - 2.0) + at(2) * u * (u - 1.0) * 0.5;
  }
  const double u = static_cast<double>(n - 1 - i); // negative
  return at(n - 1) * (u - 1.0) * (u - 2.0) * 0.5 - at(n - 2) * u * (u - 2.0) +
         at(n - 3) * u * (u - 1.0) * 0.5;
}

// 1D cubic interpolation over a periodic uniform grid.
template <class F>
double interp_periodic(F&& at, int n, double x0, double dx, double x) {
  int i0;
  double t, w[4];
  locate_cell(x, x0, dx, i0, t);
  cubic_weights(t, w);
  double s = 0.0;
  for (int k = 0; k < 4; ++k) s += w[k] * at(wrap_index(i0 - 1 + k, n));
  return s;
}

// 1D cubic interpolation over a non-periodic uniform grid (quadratic ghosts).
template <class F>
double interp_clamped(F&& at, int n, double x0, double dx, double x) {
  int i0;
  double t, w[4];
  locate_cell(x, x0, dx, i0, t);
  cubic_weights(t, w);
  double s = 0.0;
  for (int k = 0; k < 4; ++k) s += w[k] * fetch_clamped(at, n, i0 - 1 + k);
  return s;
}

} // namespace geotomo
