#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "jmorph/errors.hpp"

namespace jmorph {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 &operator+=(const Vec3 &o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3 &o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

// Row-major 3x3.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }
  static Mat3 diag(double a, double b, double c) {
    Mat3 r;
    r.m = {a, 0, 0, 0, b, 0, 0, 0, c};
    return r;
  }

  double &operator()(int r, int c) { return m[size_t(r * 3 + c)]; }
  double operator()(int r, int c) const { return m[size_t(r * 3 + c)]; }

  Vec3 operator*(const Vec3 &v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3 &o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  Mat3 operator+(const Mat3 &o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[size_t(i)] = m[size_t(i)] + o.m[size_t(i)];
    return r;
  }

  Mat3 operator-(const Mat3 &o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[size_t(i)] = m[size_t(i)] - o.m[size_t(i)];
    return r;
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  Mat3 inverse() const {
    double d = det();
    if (std::abs(d) < 1e-300)
      throw InvariantError("Mat3::inverse: singular matrix");
    double id = 1.0 / d;
    Mat3 r;
    r.m[0] = (m[4] * m[8] - m[5] * m[7]) * id;
    r.m[1] = (m[2] * m[7] - m[1] * m[8]) * id;
    r.m[2] = (m[1] * m[5] - m[2] * m[4]) * id;
    r.m[3] = (m[5] * m[6] - m[3] * m[8]) * id;
    r.m[4] = (m[0] * m[8] - m[2] * m[6]) * id;
    r.m[5] = (m[2] * m[3] - m[0] * m[5]) * id;
    r.m[6] = (m[3] * m[7] - m[4] * m[6]) * id;
    r.m[7] = (m[1] * m[6] - m[0] * m[7]) * id;
    r.m[8] = (m[0] * m[4] - m[1] * m[3]) * id;
    return r;
  }

  double frobenius_norm() const {
    double s = 0;
    for (double v : m) s += v * v;
    return std::sqrt(s);
  }
};

// Rigid-style affine map p -> A*p + t. Used both for grid-to-world transforms
// and for registration transforms in world space.
struct AffineMap {
  Mat3 linear = Mat3::identity();
  Vec3 offset{};

  Vec3 apply(const Vec3 &p) const { return linear * p + offset; }

  // this(other(p))
  AffineMap compose(const AffineMap &other) const {
    AffineMap r;
    r.linear = linear * other.linear;
    r.offset = linear * other.offset + offset;
    return r;
  }

  AffineMap inverse() const {
    AffineMap r;
    r.linear = linear.inverse();
    r.offset = (r.linear * offset) * -1.0;
    return r;
  }

  static AffineMap identity() { return AffineMap{}; }
};

} // namespace jmorph
