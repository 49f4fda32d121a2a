#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>

#include "conestable/error.hpp"

namespace conestable {

/// Largest supported ambient dimension. Points live in fixed-capacity storage
/// so inner simulation loops never allocate.
inline constexpr int kMaxDim = 8;

/// A point of R^d with 2 <= d <= kMaxDim.
class Point {
 public:
  Point() = default;
  explicit Point(int d) : d_(d) {
    if (d < 1 || d > kMaxDim) throw DomainError("dimension out of supported range: " + std::to_string(d));
  }
  Point(std::initializer_list<double> xs) : Point(static_cast<int>(xs.size())) {
    int i = 0;
    for (double v : xs) c_[i++] = v;
  }
  explicit Point(std::span<const double> xs) : Point(static_cast<int>(xs.size())) {
    for (int i = 0; i < d_; ++i) c_[i] = xs[i];
  }

  static Point basis(int d, int k) {
    Point p(d);
    p[k] = 1.0;
    return p;
  }

  int dim() const { return d_; }
  double& operator[](int i) { return c_[i]; }
  double operator[](int i) const { return c_[i]; }
  std::span<const double> coords() const { return {c_.data(), static_cast<std::size_t>(d_)}; }

  double norm2() const {
    double s = 0.0;
    for (int i = 0; i < d_; ++i) s += c_[i] * c_[i];
    return s;
  }
  double norm() const { return std::sqrt(norm2()); }
  bool finite() const {
    for (int i = 0; i < d_; ++i)
      if (!std::isfinite(c_[i])) return false;
    return true;
  }

  Point& operator+=(const Point& o) {
    for (int i = 0; i < d_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Point& operator-=(const Point& o) {
    for (int i = 0; i < d_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Point& operator*=(double s) {
    for (int i = 0; i < d_; ++i) c_[i] *= s;
    return *this;
  }
  friend Point operator+(Point a, const Point& b) { return a += b; }
  friend Point operator-(Point a, const Point& b) { return a -= b; }
  friend Point operator*(Point a, double s) { return a *= s; }
  friend Point operator*(double s, Point a) { return a *= s; }
  friend bool operator==(const Point& a, const Point& b) {
    if (a.d_ != b.d_) return false;
    for (int i = 0; i < a.d_; ++i)
      if (a.c_[i] != b.c_[i]) return false;
    return true;
  }

 private:
  std::array<double, kMaxDim> c_{};
  int d_ = 0;
};

inline double dot(const Point& a, const Point& b) {
  double s = 0.0;
  for (int i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline double distance(const Point& a, const Point& b) { return (a - b).norm(); }

/// Unit vector on S^{d-1}. Renormalized on construction; rejects vectors that
/// cannot be normalized.
class Direction {
 public:
  Direction() = default;
  explicit Direction(const Point& v) : u_(v) {
    if (v.dim() < 2) throw DomainError("direction requires d >= 2");
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("cannot normalize a zero or non-finite vector");
    u_ *= 1.0 / n;
  }
  Direction(std::initializer_list<double> xs) : Direction(Point(xs)) {}

  int dim() const { return u_.dim(); }
  double operator[](int i) const { return u_[i]; }
  const Point& vec() const { return u_; }

 private:
  Point u_;
};

/// Angle in [0, pi] between two unit vectors.
inline double angle_between(const Direction& a, const Direction& b) {
  double c = dot(a.vec(), b.vec());
  c = std::fmax(-1.0, std::fmin(1.0, c));
  return std::acos(c);
}

}  // namespace conestable
