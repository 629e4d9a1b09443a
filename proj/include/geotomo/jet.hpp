#pragma once

#include <cmath>

#include "geotomo/errors.hpp"

namespace geotomo {

// Forward-mode derivatives in the two base variables (x, y).
//
// Grad carries value + gradient, Jet2 additionally the symmetric Hessian.
// Both satisfy the same arithmetic interface as double, so the expression
// evaluator is written once and instantiated per scalar type.

struct Grad {
  double v = 0.0;
  double dx = 0.0, dy = 0.0;
};

struct Jet2 {
  double v = 0.0;
  double dx = 0.0, dy = 0.0;
  double dxx = 0.0, dxy = 0.0, dyy = 0.0;
};

// Domain violation inside jet arithmetic; carries no source location.  The
// expression evaluator converts it to EvalError with the offending offset.
struct JetDomainError : Error {
  explicit JetDomainError(const char* msg) : Error(msg) {}
};

namespace jet_detail {
[[noreturn]] inline void fail(const char* what) { throw JetDomainError(what); }
} // namespace jet_detail

// ---- seeding -------------------------------------------------------------

inline double seed_const(double c, double) { return c; }
inline double seed_x(double x, double) { return x; }
inline double seed_y(double, double y) { return y; }

template <class T> T make_const(double c);
template <class T> T make_x(double x);
template <class T> T make_y(double y);

template <> inline double make_const<double>(double c) { return c; }
template <> inline double make_x<double>(double x) { return x; }
template <> inline double make_y<double>(double y) { return y; }

template <> inline Grad make_const<Grad>(double c) { return {c, 0, 0}; }
template <> inline Grad make_x<Grad>(double x) { return {x, 1, 0}; }
template <> inline Grad make_y<Grad>(double y) { return {y, 0, 1}; }

template <> inline Jet2 make_const<Jet2>(double c) { return {c, 0, 0, 0, 0, 0}; }
template <> inline Jet2 make_x<Jet2>(double x) { return {x, 1, 0, 0, 0, 0}; }
template <> inline Jet2 make_y<Jet2>(double y) { return {y, 0, 1, 0, 0, 0}; }

inline double value_of(double a) { return a; }
inline double value_of(const Grad& a) { return a.v; }
inline double value_of(const Jet2& a) { return a.v; }

// ---- Grad arithmetic ------------------------------------------------------

inline Grad operator+(const Grad& a, const Grad& b) { return {a.v + b.v, a.dx + b.dx, a.dy + b.dy}; }
inline Grad operator-(const Grad& a, const Grad& b) { return {a.v - b.v, a.dx - b.dx, a.dy - b.dy}; }
inline Grad operator-(const Grad& a) { return {-a.v, -a.dx, -a.dy}; }

inline Grad operator*(const Grad& a, const Grad& b) {
  return {a.v * b.v, a.dx * b.v + a.v * b.dx, a.dy * b.v + a.v * b.dy};
}

inline Grad operator/(const Grad& a, const Grad& b) {
  if (b.v == 0.0) jet_detail::fail("division by zero");
  const double q = a.v / b.v;
  return {q, (a.dx - q * b.dx) / b.v, (a.dy - q * b.dy) / b.v};
}

// Applies a scalar function with derivatives f, f' at a.v.
inline Grad chain(const Grad& a, double f, double f1) {
  return {f, f1 * a.dx, f1 * a.dy};
}

// ---- Jet2 arithmetic ------------------------------------------------------

inline Jet2 operator+(const Jet2& a, const Jet2& b) {
  return {a.v + b.v, a.dx + b.dx, a.dy + b.dy, a.dxx + b.dxx, a.dxy + b.dxy, a.dyy + b.dyy};
}
inline Jet2 operator-(const Jet2& a, const Jet2& b) {
  return {a.v - b.v, a.dx - b.dx, a.dy - b.dy, a.dxx - b.dxx, a.dxy - b.dxy, a.dyy - b.dyy};
}
inline Jet2 operator-(const Jet2& a) { return {-a.v, -a.dx, -a.dy, -a.dxx, -a.dxy, -a.dyy}; }

inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  return {a.v * b.v,
          a.dx * b.v + a.v * b.dx,
          a.dy * b.v + a.v * b.dy,
          a.dxx * b.v + 2.0 * a.dx * b.dx + a.v * b.dxx,
          a.dxy * b.v + a.dx * b.dy + a.dy * b.dx + a.v * b.dxy,
          a.dyy * b.v + 2.0 * a.dy * b.dy + a.v * b.dyy};
}

// f(a) with f, f', f'' evaluated at a.v.
inline Jet2 chain(const Jet2& a, double f, double f1, double f2) {
  return {f,
          f1 * a.dx,
          f1 * a.dy,
          f2 * a.dx * a.dx + f1 * a.dxx,
          f2 * a.dx * a.dy + f1 * a.dxy,
          f2 * a.dy * a.dy + f1 * a.dyy};
}

inline Jet2 operator/(const Jet2& a, const Jet2& b) {
  if (b.v == 0.0) jet_detail::fail("division by zero");
  const Jet2 inv_b = chain(b, 1.0 / b.v, -1.0 / (b.v * b.v), 2.0 / (b.v * b.v * b.v));
  return a * inv_b;
}

// ---- elementary functions, all three scalar types -------------------------

inline double j_exp(double a) { return std::exp(a); }
inline double j_sin(double a) { return std::sin(a); }
inline double j_cos(double a) { return std::cos(a); }
inline double j_log(double a) {
  if (a <= 0.0) jet_detail::fail("log of non-positive value");
  return std::log(a);
}
inline double j_sqrt(double a) {
  if (a < 0.0) jet_detail::fail("sqrt of negative value");
  return std::sqrt(a);
}

inline Grad j_exp(const Grad& a) { const double e = std::exp(a.v); return chain(a, e, e); }
inline Grad j_sin(const Grad& a) { return chain(a, std::sin(a.v), std::cos(a.v)); }
inline Grad j_cos(const Grad& a) { return chain(a, std::cos(a.v), -std::sin(a.v)); }
inline Grad j_log(const Grad& a) {
  if (a.v <= 0.0) jet_detail::fail("log of non-positive value");
  return chain(a, std::log(a.v), 1.0 / a.v);
}
inline Grad j_sqrt(const Grad& a) {
  if (a.v < 0.0) jet_detail::fail("sqrt of negative value");
  const double r = std::sqrt(a.v);
  if (r == 0.0) jet_detail::fail("sqrt derivative at zero");
  return chain(a, r, 0.5 / r);
}

inline Jet2 j_exp(const Jet2& a) { const double e = std::exp(a.v); return chain(a, e, e, e); }
inline Jet2 j_sin(const Jet2& a) { const double s = std::sin(a.v), c = std::cos(a.v); return chain(a, s, c, -s); }
inline Jet2 j_cos(const Jet2& a) { const double s = std::sin(a.v), c = std::cos(a.v); return chain(a, c, -s, -c); }
inline Jet2 j_log(const Jet2& a) {
  if (a.v <= 0.0) jet_detail::fail("log of non-positive value");
  return chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v));
}
inline Jet2 j_sqrt(const Jet2& a) {
  if (a.v < 0.0) jet_detail::fail("sqrt of negative value");
  const double r = std::sqrt(a.v);
  if (r == 0.0) jet_detail::fail("sqrt derivative at zero");
  return chain(a, r, 0.5 / r, -0.25 / (r * a.v));
}

// ---- pow ------------------------------------------------------------------
//
// Exponent known to be a literal constant: plain power rule, valid for any base
// when the exponent is integral.  Otherwise a^b = exp(b log a), base must be > 0.

inline double j_pow_const(double a, double n) {
  if (a == 0.0 && n < 0.0) jet_detail::fail("zero base with negative exponent");
  if (a < 0.0 && n != std::rint(n)) jet_detail::fail("negative base with non-integer exponent");
  return std::pow(a, n);
}

inline Grad j_pow_const(const Grad& a, double n) {
  if (n == 0.0) return {1.0, 0.0, 0.0};
  const double f = j_pow_const(a.v, n);
  if (a.v == 0.0 && n < 1.0) jet_detail::fail("power derivative singular at zero");
  const double f1 = n * std::pow(a.v, n - 1.0);
  return chain(a, f, f1);
}

inline Jet2 j_pow_const(const Jet2& a, double n) {
  if (n == 0.0) return make_const<Jet2>(1.0);
  const double f = j_pow_const(a.v, n);
  if (a.v == 0.0 && n < 2.0 && n != 1.0) jet_detail::fail("power derivative singular at zero");
  const double f1 = n * std::pow(a.v, n - 1.0);
  const double f2 = (n == 1.0) ? 0.0 : n * (n - 1.0) * std::pow(a.v, n - 2.0);
  return chain(a, f, f1, f2);
}

inline double j_pow(double a, double b) { return j_pow_const(a, b); }

inline Grad j_pow(const Grad& a, const Grad& b) {
  if (b.dx == 0.0 && b.dy == 0.0) return j_pow_const(a, b.v);
  if (a.v <= 0.0) jet_detail::fail("non-constant exponent requires positive base");
  return j_exp(b * j_log(a));
}

inline Jet2 j_pow(const Jet2& a, const Jet2& b) {
  if (b.dx == 0.0 && b.dy == 0.0 && b.dxx == 0.0 && b.dxy == 0.0 && b.dyy == 0.0)
    return j_pow_const(a, b.v);
  if (a.v <= 0.0) jet_detail::fail("non-constant exponent requires positive base");
  return j_exp(b * j_log(a));
}

} // namespace geotomo
