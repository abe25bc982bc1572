#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "artkit/errors.hpp"

namespace artkit {

using cplx = std::complex<double>;

/// Plain 3-vector used for positions, displacements and directions.
struct Vec3 {
  double x1 = 0.0, x2 = 0.0, x3 = 0.0;

  constexpr double operator[](std::size_t i) const { return i == 0 ? x1 : (i == 1 ? x2 : x3); }
  constexpr double& operator[](std::size_t i) { return i == 0 ? x1 : (i == 1 ? x2 : x3); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x1 + b.x1, a.x2 + b.x2, a.x3 + b.x3}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x1 - b.x1, a.x2 - b.x2, a.x3 - b.x3}; }
  friend constexpr Vec3 operator-(Vec3 a) { return {-a.x1, -a.x2, -a.x3}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x1, s * a.x2, s * a.x3}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
  friend constexpr bool operator==(Vec3, Vec3) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x1 * b.x1 + a.x2 * b.x2 + a.x3 * b.x3; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

using Point3 = Vec3;

/// Unit vector on S². Construction renormalizes; the zero vector is rejected.
class Direction {
public:
  Direction() = default;
  Direction(double a, double b, double c) : Direction(Vec3{a, b, c}) {}
  explicit Direction(Vec3 v) {
    double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw ArgumentError("direction must be a finite nonzero vector");
    v_ = (1.0 / n) * v;
    // one more pass pulls |ξ| to within a couple of ulps of 1
    v_ = (1.0 / norm(v_)) * v_;
  }

  const Vec3& vec() const { return v_; }
  double operator[](std::size_t i) const { return v_[i]; }
  operator Vec3() const { return v_; }
  Direction operator-() const { return Direction::unchecked(-v_); }

  static Direction unchecked(Vec3 unit) {
    Direction d;
    d.v_ = unit;
    return d;
  }

private:
  Vec3 v_{0.0, 0.0, 1.0};
};

/// The domain D: a closed ball. Only the ball is implemented; exit lengths
/// are closed form.
struct BallDomain {
  Point3 center{};
  double radius = 1.0;

  BallDomain() = default;
  BallDomain(Point3 c, double r) : center(c), radius(r) {
    if (!(r > 0.0)) throw ArgumentError("ball radius must be positive");
  }

  bool contains(Point3 x, double slack = 1e-12) const {
    return norm(x - center) <= radius * (1.0 + slack);
  }
};

/// Length of the backward ray x − sξ, s ≥ 0, inside the ball.
inline double ray_exit_length(Point3 x, const Direction& xi, const BallDomain& dom) {
  Vec3 d = x - dom.center;
  double r2 = dom.radius * dom.radius;
  double dd = dot(d, d);
  if (dd > r2 * (1.0 + 2e-12)) throw DomainError("point lies outside the domain ball");
  double b = dot(d, xi.vec());
  double disc = b * b - dd + r2;
  double s = b + std::sqrt(std::max(disc, 0.0));
  return std::max(s, 0.0);
}

/// Gauss–Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw ArgumentError("Gauss-Legendre order must be >= 1");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    {
      // recompute the derivative at the converged node
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
    }
    double w = 2.0 / ((1.0 - z * z) * dp * dp);
    nodes[i] = -z;
    nodes[n - 1 - i] = z;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) nodes[n / 2] = 0.0;
}

/// Product quadrature on S²: Gauss–Legendre in cos θ times the uniform
/// trapezoid rule in φ. Weights sum to 4π (the unnormalized angular measure).
struct SphereGrid {
  std::vector<Direction> nodes;
  std::vector<double> weights;
  int n_polar = 0;
  int n_azimuth = 0;

  std::size_t size() const { return nodes.size(); }
};

inline SphereGrid make_sphere_grid(int n_polar, int n_azimuth) {
  if (n_polar < 1 || n_azimuth < 1) throw ArgumentError("sphere grid counts must be positive");
  std::vector<double> mu, wmu;
  gauss_legendre(n_polar, mu, wmu);
  SphereGrid g;
  g.n_polar = n_polar;
  g.n_azimuth = n_azimuth;
  g.nodes.reserve(static_cast<std::size_t>(n_polar) * n_azimuth);
  g.weights.reserve(g.nodes.capacity());
  const double dphi = 2.0 * std::numbers::pi / n_azimuth;
  for (int i = 0; i < n_polar; ++i) {
    double st = std::sqrt(std::max(0.0, 1.0 - mu[i] * mu[i]));
    for (int j = 0; j < n_azimuth; ++j) {
      double phi = dphi * j;
      g.nodes.push_back(Direction(st * std::cos(phi), st * std::sin(phi), mu[i]));
      g.weights.push_back(wmu[i] * dphi);
    }
  }
  return g;
}

/// Σ w_i g(ξ_i).
template <class G>
auto sphere_integrate(const SphereGrid& grid, G&& g) {
  using R = decltype(g(grid.nodes.front()));
  R acc{};
  for (std::size_t i = 0; i < grid.size(); ++i) acc += grid.weights[i] * g(grid.nodes[i]);
  return acc;
}

} // namespace artkit
