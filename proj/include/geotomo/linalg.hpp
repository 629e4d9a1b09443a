#pragma once

#include <cmath>

namespace geotomo {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
inline Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
inline double edot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }  // Euclidean
inline double enorm(Vec2 a) { return std::hypot(a.x, a.y); }

// Row-major 2x2 matrix.
struct Mat2 {
  double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  double det() const { return a11 * a22 - a12 * a21; }
  Mat2 inverse() const {
    const double d = det();
    return {a22 / d, -a12 / d, -a21 / d, a11 / d};
  }
};

inline Vec2 operator*(const Mat2& m, Vec2 v) {
  return {m.a11 * v.x + m.a12 * v.y, m.a21 * v.x + m.a22 * v.y};
}
inline Mat2 operator*(const Mat2& m, const Mat2& n) {
  return {m.a11 * n.a11 + m.a12 * n.a21, m.a11 * n.a12 + m.a12 * n.a22,
          m.a21 * n.a11 + m.a22 * n.a21, m.a21 * n.a12 + m.a22 * n.a22};
}

// Singular values of a 2x2 matrix, closed form; s1 >= s2 >= 0.  s2 comes from
// |det|/s1 which stays accurate when the matrix is nearly singular.
inline void singular_values(const Mat2& m, double& s1, double& s2) {
  const double q = m.a11 * m.a11 + m.a12 * m.a12 + m.a21 * m.a21 + m.a22 * m.a22;
  const double d = m.det();
  const double root = std::sqrt(std::max(0.0, q * q - 4.0 * d * d));
  s1 = std::sqrt(0.5 * (q + root));
  s2 = s1 > 0.0 ? std::abs(d) / s1 : 0.0;
}

inline double wrap_angle(double a) {
  // into [-pi, pi)
  a = std::remainder(a, 2.0 * M_PI);
  if (a == M_PI) a = -M_PI;
  return a;
}

inline double wrap_periodic(double s, double period) {
  // into [0, period)
  double r = std::fmod(s, period);
  if (r < 0) r += period;
  if (r == period) r = 0.0;
  return r;
}

} // namespace geotomo
