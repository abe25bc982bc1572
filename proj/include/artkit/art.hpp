#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "artkit/errors.hpp"
#include "artkit/fields.hpp"
#include "artkit/geometry.hpp"
#include "artkit/tensor.hpp"

namespace artkit {

enum class RayRule { simpson, gauss_panel };

/// Discretization of the ray integrals ∫₀^{s*} … ds. Nodes sit at fixed
/// multiples of h_ray measured from the ray origin x, so the quadrature error
/// is a smooth function of x (finite differences of ray integrals rely on it).
struct RayQuadSpec {
  double h_ray = 2e-3;
  RayRule rule = RayRule::simpson;

  RayQuadSpec() = default;
  RayQuadSpec(double h, RayRule r = RayRule::simpson) : h_ray(h), rule(r) {
    if (!(h > 0.0)) throw ArgumentError("h_ray must be positive");
  }
  static RayQuadSpec for_domain(const BallDomain& dom) { return RayQuadSpec(1e-3 * 2.0 * dom.radius); }
};

/// Presets from physical optics: the ideal wave image (k = 1, ε = 0, ρ = −kw,
/// so the weight is s·e^{i·kw·s}) and the ideal photometric image (k = 0,
/// ρ = 0, ε = eps).
struct Preset {
  int k;
  AbsorptionSpec alpha;
};
inline Preset wave_preset(double kw) { return {1, AbsorptionSpec::constant(cplx(0.0, -kw))}; }
inline Preset photo_preset(double eps) { return {0, AbsorptionSpec::constant(cplx(eps, 0.0))}; }

namespace detail {

struct Window {
  double lo, hi;
};

template <class Source>
std::optional<Window> source_window(const Source& src, const Point3& x, const Vec3& xi) {
  if constexpr (requires { src.support(); }) {
    auto sup = src.support();
    if (!sup) return std::nullopt;
    Vec3 d = x - sup->first;
    double b = dot(d, xi);
    double disc = b * b - dot(d, d) + sup->second * sup->second;
    if (disc <= 0.0) return Window{1.0, 0.0};  // empty
    double r = std::sqrt(disc);
    return Window{b - r, b + r};
  } else {
    return std::nullopt;
  }
}

constexpr std::array<double, 4> kGauss4x{-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                         0.8611363115940526};
constexpr std::array<double, 4> kGauss4w{0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                         0.3478548451374538};

/// Accumulates out[k·ncomp + c] = ∫₀^L s^k exp(−∫₀^s α(x − σξ, ξ) dσ) g_c(s) ds
/// for k = 0..kmax in one pass. `sample(s, y, buf)` writes the ncomp values of
/// the source at y = x − sξ. `win` marks where the source can be nonzero.
template <class Sample>
void ray_integrals(const Point3& x, const Vec3& xi, double L, const AbsorptionSpec& alpha, const RayQuadSpec& q,
                   int kmax, std::size_t ncomp, std::optional<Window> win, Sample&& sample, std::span<cplx> out) {
  std::fill(out.begin(), out.end(), cplx{});
  if (!(L > 0.0)) return;
  double lo = 0.0, hi = L;
  if (win) {
    lo = std::max(lo, win->lo);
    hi = std::min(hi, win->hi);
    if (!(hi > lo)) return;
  }
  const double h = q.h_ray;
  const bool ray_const = !alpha.depends_on_x();
  const cplx a_ray = ray_const ? alpha(x, xi) : cplx{};
  std::vector<cplx> buf(ncomp);

  auto alpha_at = [&](double s) { return alpha(x - s * xi, xi); };

  auto accumulate = [&](double s, double w, cplx tau) {
    sample(s, x - s * xi, std::span<cplx>(buf));
    cplx base = w * std::exp(-tau);
    double sk = 1.0;
    for (int k = 0; k <= kmax; ++k) {
      for (std::size_t c = 0; c < ncomp; ++c) out[k * ncomp + c] += base * sk * buf[c];
      sk *= s;
    }
  };

  // Optical depth from s = a to s = b given τ(a), via Simpson on [a, b].
  auto local_depth = [&](double a, double b, cplx alpha_a) {
    return (b - a) / 6.0 * (alpha_a + 4.0 * alpha_at(0.5 * (a + b)) + alpha_at(b));
  };

  if (q.rule == RayRule::simpson) {
    std::size_t m2 = 2 * static_cast<std::size_t>(std::floor(L / (2.0 * h)));
    double a_tail = static_cast<double>(m2) * h;
    std::size_t i_lo = 0, i_hi = m2;
    if (win) {
      double flo = std::floor(lo / h);
      i_lo = flo <= 0.0 ? 0 : std::min<std::size_t>(m2, static_cast<std::size_t>(flo));
      double chi = std::ceil(hi / h);
      i_hi = chi <= 0.0 ? 0 : std::min<std::size_t>(m2, static_cast<std::size_t>(chi));
    }
    auto weight = [&](std::size_t i) {
      return ((i == 0 || i == m2) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0)) * h / 3.0;
    };
    cplx tau_tail = ray_const ? a_ray * a_tail : cplx{};
    if (m2 > 0 && ray_const) {
      if (i_hi > i_lo) {
        cplx ratio = std::exp(-a_ray * h);
        cplx e{};
        for (std::size_t i = i_lo; i <= i_hi; ++i) {
          double s = static_cast<double>(i) * h;
          // re-anchor the recurrence every 64 steps to bound drift
          if ((i - i_lo) % 64 == 0) e = std::exp(-a_ray * s);
          sample(s, x - s * xi, std::span<cplx>(buf));
          cplx base = weight(i) * e;
          double sk = 1.0;
          for (int k = 0; k <= kmax; ++k) {
            for (std::size_t c = 0; c < ncomp; ++c) out[k * ncomp + c] += base * sk * buf[c];
            sk *= s;
          }
          e *= ratio;
        }
      }
    } else if (m2 > 0) {
      // cumulative optical depth on the same partition; odd nodes use the
      // third-order half-panel rule
      cplx tau = 0.0;
      cplx a0 = alpha_at(0.0);
      for (std::size_t i = 0; i < m2; i += 2) {
        double s = static_cast<double>(i) * h;
        cplx a1 = alpha_at(s + h), a2 = alpha_at(s + 2.0 * h);
        if (i >= i_lo && i <= i_hi) accumulate(s, weight(i), tau);
        if (i + 1 >= i_lo && i + 1 <= i_hi) accumulate(s + h, weight(i + 1), tau + h * (5.0 * a0 + 8.0 * a1 - a2) / 12.0);
        tau += h * (a0 + 4.0 * a1 + a2) / 3.0;
        a0 = a2;
      }
      if (m2 >= i_lo && m2 <= i_hi) accumulate(a_tail, weight(m2), tau);
      tau_tail = tau;
    }
    // tail [m2·h, L], shorter than 2h
    double tail = L - a_tail;
    if (tail > 1e-14 * h && hi > a_tail) {
      double sm = a_tail + 0.5 * tail;
      cplx tau_m = ray_const ? a_ray * sm : tau_tail + local_depth(a_tail, sm, alpha_at(a_tail));
      cplx tau_b = ray_const ? a_ray * L : tau_tail + local_depth(a_tail, L, alpha_at(a_tail));
      accumulate(a_tail, tail / 6.0, tau_tail);
      accumulate(sm, 4.0 * tail / 6.0, tau_m);
      accumulate(L, tail / 6.0, tau_b);
    }
    return;
  }

  // Panel Gauss: 4-point Gauss–Legendre on panels [j·h, (j+1)·h] plus a tail panel.
  std::size_t panels = static_cast<std::size_t>(std::floor(L / h));
  double tail = L - static_cast<double>(panels) * h;
  std::size_t total = panels + (tail > 1e-14 * h ? 1 : 0);
  auto gauss_depth = [&](double a, double b) {
    cplx acc{};
    double c = 0.5 * (a + b), r = 0.5 * (b - a);
    for (std::size_t g = 0; g < 4; ++g) acc += kGauss4w[g] * alpha_at(c + r * kGauss4x[g]);
    return r * acc;
  };
  cplx tau_start = 0.0;
  for (std::size_t j = 0; j < total; ++j) {
    double a = static_cast<double>(j) * h;
    double b = j < panels ? a + h : L;
    if (a > hi) break;
    if (b >= lo) {
      double c = 0.5 * (a + b), r = 0.5 * (b - a);
      for (std::size_t g = 0; g < 4; ++g) {
        double s = c + r * kGauss4x[g];
        cplx tau = ray_const ? a_ray * s : tau_start + gauss_depth(a, s);
        accumulate(s, r * kGauss4w[g], tau);
      }
    }
    if (!ray_const) tau_start += gauss_depth(a, b);
  }
}

} // namespace detail

/// ∫₀^s α(x − σξ, ξ) dσ. Exact for ray-constant α; composite Simpson at step
/// h_ray otherwise.
inline cplx optical_depth(const AbsorptionSpec& a, const Point3& x, const Direction& xi, double s,
                          const RayQuadSpec& q = {}) {
  if (s < 0.0) throw ArgumentError("optical_depth: s must be nonnegative");
  if (s == 0.0) return {};
  if (!a.depends_on_x()) return a(x, xi) * s;
  std::size_t n = 2 * static_cast<std::size_t>(std::ceil(s / (2.0 * q.h_ray)));
  double h = s / static_cast<double>(n);
  cplx acc{};
  for (std::size_t i = 0; i <= n; ++i) {
    double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    double si = static_cast<double>(i) * h;
    acc += w * a(x - si * xi.vec(), xi);
  }
  return acc * (h / 3.0);
}

/// u_k for k = 0..kmax in one pass.
template <class Source>
std::vector<cplx> art_k_all(int kmax, const Source& f, const AbsorptionSpec& a, const Point3& x, const Direction& xi,
                            const RayQuadSpec& q = {}, const BallDomain& dom = {}) {
  if (kmax < 0) throw ArgumentError("ART order must be nonnegative");
  double L = ray_exit_length(x, xi, dom);
  std::vector<cplx> out(static_cast<std::size_t>(kmax) + 1);
  const Vec3 v = xi.vec();
  detail::ray_integrals(
      x, v, L, a, q, kmax, 1, detail::source_window(f, x, v),
      [&](double, const Point3& y, std::span<cplx> buf) { buf[0] = f(y, v); }, std::span<cplx>(out));
  return out;
}

/// Stationary ART of order k:
///   u_k(x, ξ) = ∫₀^{s*} s^k exp(−∫₀^s α(x − σξ, ξ) dσ) f(x − sξ, ξ) ds.
template <class Source>
cplx art_k(int k, const Source& f, const AbsorptionSpec& a, const Point3& x, const Direction& xi,
           const RayQuadSpec& q = {}, const BallDomain& dom = {}) {
  if (k < 0) throw ArgumentError("ART order must be nonnegative");
  return art_k_all(k, f, a, x, xi, q, dom)[static_cast<std::size_t>(k)];
}

/// Non-stationary ART: the source is read at the retarded time t − s, and the
/// ray stops at min(s*, t) since causal sources vanish for negative times.
template <class Source>
std::vector<cplx> art_k_time_all(int kmax, const Source& f, const AbsorptionSpec& a, double t, const Point3& x,
                                 const Direction& xi, const RayQuadSpec& q = {}, const BallDomain& dom = {}) {
  if (kmax < 0) throw ArgumentError("ART order must be nonnegative");
  if (!std::isfinite(t)) throw ArgumentError("time must be finite");
  std::vector<cplx> out(static_cast<std::size_t>(kmax) + 1);
  double L = std::min(ray_exit_length(x, xi, dom), t);
  if (!(L > 0.0)) return out;
  const Vec3 v = xi.vec();
  detail::ray_integrals(
      x, v, L, a, q, kmax, 1, detail::source_window(f, x, v),
      [&](double s, const Point3& y, std::span<cplx> buf) { buf[0] = f(t - s, y, v); }, std::span<cplx>(out));
  return out;
}

template <class Source>
cplx art_k_time(int k, const Source& f, const AbsorptionSpec& a, double t, const Point3& x, const Direction& xi,
                const RayQuadSpec& q = {}, const BallDomain& dom = {}) {
  if (k < 0) throw ArgumentError("ART order must be nonnegative");
  return art_k_time_all(k, f, a, t, x, xi, q, dom)[static_cast<std::size_t>(k)];
}

/// Longitudinal ray transform ∫ ⟨W(x − sξ), ξ^m⟩ ds.
inline cplx lrt(const TensorFieldSpec& w, const Point3& x, const Direction& xi, const RayQuadSpec& q = {},
                const BallDomain& dom = {}) {
  return art_k(0, PhaseField::tensor_generated(w), AbsorptionSpec::constant(0.0), x, xi, q, dom);
}

/// Componentwise attenuated ray integral of W: a rank-m tensor whose
/// contraction with ξ^m is the scalar ART of ⟨W, ξ^m⟩.
inline SymTensor art_tensor(int k, const TensorFieldSpec& w, const AbsorptionSpec& a, const Point3& x,
                            const Direction& xi, const RayQuadSpec& q = {}, const BallDomain& dom = {}) {
  if (k < 0) throw ArgumentError("ART order must be nonnegative");
  std::size_t nc = sym_size(w.rank);
  std::vector<cplx> out((static_cast<std::size_t>(k) + 1) * nc);
  double L = ray_exit_length(x, xi, dom);
  const Vec3 v = xi.vec();
  PhaseField as_source = PhaseField::tensor_generated(w);
  detail::ray_integrals(
      x, v, L, a, q, k, nc, detail::source_window(as_source, x, v),
      [&](double, const Point3& y, std::span<cplx> buf) {
        SymTensor t = w(y);
        for (std::size_t c = 0; c < nc; ++c) buf[c] = t[c];
      },
      std::span<cplx>(out));
  return SymTensor(w.rank, std::vector<cplx>(out.begin() + static_cast<std::ptrdiff_t>(k * nc), out.end()));
}

/// Back-projection of ray data h(x, ξ) to a rank-m tensor:
///   (1/4π²) ∫ ξ^{i1}…ξ^{im} h(x, ξ) dλ(ξ).
template <class Data>
SymTensor back_projection_lrt(Data&& h, int m, const Point3& x, const SphereGrid& grid) {
  SymTensor out(m);
  std::vector<double> mono;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    cplx v = grid.weights[i] * h(x, grid.nodes[i]);
    if (v == cplx{}) continue;
    monomials(grid.nodes[i].vec(), m, mono);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += mono[c] * v;
  }
  return (1.0 / (4.0 * std::numbers::pi * std::numbers::pi)) * out;
}

} // namespace artkit
