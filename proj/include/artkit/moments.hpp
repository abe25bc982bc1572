#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "artkit/art.hpp"
#include "artkit/calculus.hpp"
#include "artkit/errors.hpp"
#include "artkit/fields.hpp"
#include "artkit/geometry.hpp"
#include "artkit/parallel.hpp"
#include "artkit/tensor.hpp"

namespace artkit {

// ---------------------------------------------------------------------------
// Pointwise angular moments
// ---------------------------------------------------------------------------

enum class MomentNorm {
  unnormalized,  ///< ∫ … dλ with total measure 4π
  back_projection  ///< times 1/4π², the back-projection scaling
};

inline double moment_scale(MomentNorm n) {
  return n == MomentNorm::unnormalized ? 1.0 : 1.0 / (4.0 * std::numbers::pi * std::numbers::pi);
}

/// E_kp(x) = ∫ u_k(x, ξ) ξ^{i1}…ξ^{ip} dλ(ξ) by sphere × ray quadrature.
template <class Source>
SymTensor angular_moment(int k, int p, const Source& f, const AbsorptionSpec& a, const Point3& x,
                         const SphereGrid& sgrid, const RayQuadSpec& q = {}, const BallDomain& dom = {},
                         MomentNorm norm = MomentNorm::unnormalized) {
  if (p < 0) throw ArgumentError("moment rank must be nonnegative");
  if (k < 0) throw ArgumentError("ART order must be nonnegative");
  SymTensor out(p);
  std::vector<double> mono;
  for (std::size_t d = 0; d < sgrid.size(); ++d) {
    cplx v = sgrid.weights[d] * art_k(k, f, a, x, sgrid.nodes[d], q, dom);
    monomials(sgrid.nodes[d].vec(), p, mono);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += mono[c] * v;
  }
  return moment_scale(norm) * out;
}

/// f_p(x) = ∫ f(x, ξ) ξ^{j1}…ξ^{jp} dλ(ξ).
template <class Source>
SymTensor f_moment(int p, const Source& f, const Point3& x, const SphereGrid& sgrid) {
  if (p < 0) throw ArgumentError("moment rank must be nonnegative");
  SymTensor out(p);
  std::vector<double> mono;
  for (std::size_t d = 0; d < sgrid.size(); ++d) {
    cplx v = sgrid.weights[d] * f(x, sgrid.nodes[d].vec());
    monomials(sgrid.nodes[d].vec(), p, mono);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += mono[c] * v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Moment tables on grids
// ---------------------------------------------------------------------------

/// A moment field E_kp with the discretization it came from.
struct MomentField {
  int k = 0;
  int p = 0;
  SymTensorGridField field;
  int n_polar = 0, n_azimuth = 0;
  double h_ray = 0.0;
};

struct MomentTableSpec {
  int kmax = 2;
  int pmax = 2;
  int hf_max = -1;             ///< moments of H^j f for j ≤ hf_max (−1: none)
  double hf_step = 1e-3;       ///< step of the nested differences for H^j f
  bool alpha_weighted = false;  ///< also ∫ α u_k ξ^p dλ
  std::optional<double> time;   ///< non-stationary transform at this time
};

/// All moments E_kp, k ≤ kmax, p ≤ pmax, of one source on one grid, built in
/// a single pass per node (one set of rays per direction serves every k and
/// p). Optional companions: the α-weighted moments of the general relation,
/// and moments of H^j f.
class MomentTable {
public:
  MomentTable() = default;

  template <class Source>
  MomentTable(const Source& f, const AbsorptionSpec& a, const GridGeometry& geom, const SphereGrid& sgrid,
              const RayQuadSpec& q, const BallDomain& dom, MomentTableSpec spec)
      : spec_(spec), geom_(geom), n_polar_(sgrid.n_polar), n_azimuth_(sgrid.n_azimuth), h_ray_(q.h_ray) {
    if (spec.kmax < 0 || spec.pmax < 0) throw ArgumentError("moment table needs kmax, pmax >= 0");
    for (int k = 0; k <= spec.kmax; ++k)
      for (int p = 0; p <= spec.pmax; ++p) {
        e_.emplace_back(p, geom);
        if (spec.alpha_weighted) ae_.emplace_back(p, geom);
      }
    for (int j = 0; j <= spec.hf_max; ++j)
      for (int p = 0; p <= spec.pmax; ++p) hf_.emplace_back(p, geom);

    // per-direction monomials, all ranks
    std::vector<std::vector<std::vector<double>>> mono(sgrid.size());
    for (std::size_t d = 0; d < sgrid.size(); ++d) {
      mono[d].resize(static_cast<std::size_t>(spec.pmax) + 1);
      for (int p = 0; p <= spec.pmax; ++p) monomials(sgrid.nodes[d].vec(), p, mono[d][static_cast<std::size_t>(p)]);
    }

    parallel_for(geom.node_count(), [&](std::size_t n) {
      const Point3 x = geom.node(n);
      std::vector<cplx> u;
      for (std::size_t d = 0; d < sgrid.size(); ++d) {
        const Direction& xi = sgrid.nodes[d];
        const double w = sgrid.weights[d];
        if (spec.time)
          u = art_k_time_all(spec.kmax, f, a, *spec.time, x, xi, q, dom);
        else
          u = art_k_all(spec.kmax, f, a, x, xi, q, dom);
        const cplx al = spec.alpha_weighted ? a(x, xi) : cplx{};
        for (int k = 0; k <= spec.kmax; ++k) {
          cplx wu = w * u[static_cast<std::size_t>(k)];
          if (wu == cplx{}) continue;
          for (int p = 0; p <= spec.pmax; ++p) {
            const auto& m = mono[d][static_cast<std::size_t>(p)];
            auto& E = e_[slot(k, p)];
            for (std::size_t c = 0; c < m.size(); ++c) E(c, n) += m[c] * wu;
            if (spec.alpha_weighted) {
              auto& A = ae_[slot(k, p)];
              for (std::size_t c = 0; c < m.size(); ++c) A(c, n) += m[c] * (al * wu);
            }
          }
        }
        for (int j = 0; j <= spec.hf_max; ++j) {
          cplx v = w * hf_value(f, j, x, xi);
          if (v == cplx{}) continue;
          for (int p = 0; p <= spec.pmax; ++p) {
            const auto& m = mono[d][static_cast<std::size_t>(p)];
            auto& F = hf_[static_cast<std::size_t>(j * (spec.pmax + 1) + p)];
            for (std::size_t c = 0; c < m.size(); ++c) F(c, n) += m[c] * v;
          }
        }
      }
    });
  }

  const GridGeometry& geometry() const { return geom_; }
  const MomentTableSpec& spec() const { return spec_; }
  int n_polar() const { return n_polar_; }
  int n_azimuth() const { return n_azimuth_; }
  double h_ray() const { return h_ray_; }

  bool has(int k, int p) const { return k >= 0 && p >= 0 && k <= spec_.kmax && p <= spec_.pmax; }

  const SymTensorGridField& E(int k, int p) const {
    if (!has(k, p)) throw ArgumentError("moment table has no E_" + std::to_string(k) + "," + std::to_string(p));
    return e_[slot(k, p)];
  }
  /// ∫ α u_k ξ^p dλ.
  const SymTensorGridField& alpha_E(int k, int p) const {
    if (!spec_.alpha_weighted || !has(k, p)) throw ArgumentError("moment table has no alpha-weighted moments");
    return ae_[slot(k, p)];
  }
  /// Moment of rank p of H^j f.
  const SymTensorGridField& Hf(int j, int p) const {
    if (j < 0 || j > spec_.hf_max || p < 0 || p > spec_.pmax) throw ArgumentError("moment table has no (H^j f)_p");
    return hf_[static_cast<std::size_t>(j * (spec_.pmax + 1) + p)];
  }

  MomentField field(int k, int p) const { return {k, p, E(k, p), n_polar_, n_azimuth_, h_ray_}; }

private:
  std::size_t slot(int k, int p) const { return static_cast<std::size_t>(k * (spec_.pmax + 1) + p); }

  template <class Source>
  cplx hf_value(const Source& f, int j, const Point3& x, const Direction& xi) const {
    const Vec3 v = xi.vec();
    auto eval = [&](const Point3& y) {
      if (spec_.time) {
        if constexpr (requires { f(0.0, y, v); }) return cplx(f(*spec_.time, y, v));
      }
      return cplx(f(y, v));
    };
    if (j == 0) return eval(x);
    const double h = spec_.hf_step;
    std::vector<cplx> vals(2 * static_cast<std::size_t>(j) + 1);
    for (int i = -j; i <= j; ++i) vals[static_cast<std::size_t>(i + j)] = eval(x + (i * h) * v);
    return detail::nested_transport(std::move(vals), std::vector<cplx>(vals.size(), cplx{}), h, j, false);
  }

  MomentTableSpec spec_{};
  GridGeometry geom_{};
  int n_polar_ = 0, n_azimuth_ = 0;
  double h_ray_ = 0.0;
  std::vector<SymTensorGridField> e_, ae_, hf_;
};

/// Grid moment field E_kp.
template <class Source>
MomentField moment_field(int k, int p, const Source& f, const AbsorptionSpec& a, const GridGeometry& geom,
                         const SphereGrid& sgrid, const RayQuadSpec& q = {}, const BallDomain& dom = {}) {
  MomentTableSpec s;
  s.kmax = k;
  s.pmax = p;
  return MomentTable(f, a, geom, sgrid, q, dom, s).field(k, p);
}

// ---------------------------------------------------------------------------
// Divergence relations
// ---------------------------------------------------------------------------

namespace detail {

inline SymTensorGridField scaled(SymTensorGridField f, cplx s) {
  f *= s;
  return f;
}

/// Q * E per node.
inline SymTensorGridField convolve_field(const SymTensor& q, const SymTensorGridField& e) {
  int out_rank = e.rank() - q.rank();
  if (out_rank < 0) throw ArgumentError("convolution rank mismatch");
  SymTensorGridField out(out_rank, e.geometry());
  for (std::size_t n = 0; n < e.nodes(); ++n) out.set(n, convolve_tensor(q, e.at(n)));
  return out;
}

inline void check_same_grid(const SymTensorGridField& a, const SymTensorGridField& b) {
  if (!(a.geometry() == b.geometry())) throw ArgumentError("moment fields live on different grids");
}

} // namespace detail

/// The right-hand side of the one-step divergence relation for E_kp:
///   k ≥ 1: k E_{(k−1)(p−1)} − ∫ α u_k ξ^{p−1} dλ
///   k = 0: f_{p−1} − ∫ α u_0 ξ^{p−1} dλ
/// where the α-term is α E_{k(p−1)} for constant α, Σ_r Q^r * E_{k(p+r−1)}
/// for a ξ-polynomial (its constant part being the rank-0 term) and the
/// tabulated α-weighted moment otherwise.
inline SymTensorGridField divergence_rhs(int k, int p, const AbsorptionSpec& a, const MomentTable& t) {
  if (k < 0 || p < 1) throw ArgumentError("divergence relation needs k >= 0, p >= 1");
  SymTensorGridField rhs = k >= 1 ? detail::scaled(t.E(k - 1, p - 1), static_cast<double>(k)) : t.Hf(0, p - 1);
  switch (a.kind()) {
  case AbsorptionKind::constant:
    rhs -= detail::scaled(t.E(k, p - 1), a.base());
    break;
  case AbsorptionKind::xi_polynomial:
    for (const auto& q : a.polynomial_terms()) {
      if (q.rank() == 0)
        rhs -= detail::scaled(t.E(k, p - 1), q[0]);
      else
        rhs -= detail::convolve_field(q, t.E(k, p + q.rank() - 1));
    }
    break;
  case AbsorptionKind::spatial:
    rhs -= t.alpha_E(k, p - 1);
    break;
  }
  return rhs;
}

/// Residual values of δE_kp − rhs on nodes `margin` away from every face.
inline std::vector<cplx> interior_values(const SymTensorGridField& f, std::size_t margin) {
  std::vector<cplx> out;
  const auto& g = f.geometry();
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    if (!g.interior(n, margin)) continue;
    for (std::size_t c = 0; c < f.components(); ++c) out.push_back(f(c, n));
  }
  return out;
}

inline double interior_scale(const SymTensorGridField& f, std::size_t margin) {
  double m = 0.0;
  for (const auto& v : interior_values(f, margin)) m = std::max(m, std::abs(v));
  return m;
}

/// Default margin: nested divergences with doubled stride stay central.
inline std::size_t moment_margin(int n) { return static_cast<std::size_t>(2 * n); }

inline ResidualSet moment_div_residual_set(int k, int p, const AbsorptionSpec& a, const MomentTable& t,
                                           std::size_t stride, std::size_t margin) {
  SymTensorGridField lhs = divergence(t.E(k, p), stride);
  SymTensorGridField rhs = divergence_rhs(k, p, a, t);
  detail::check_same_grid(lhs, rhs);
  ResidualSet rs;
  rs.r = interior_values(lhs - rhs, margin);
  const double h = t.geometry().spacing(0) * static_cast<double>(stride);
  rs.scale = std::max(interior_scale(lhs, margin), interior_scale(t.E(k, p), margin) / h);
  return rs;
}

inline std::string grid_label(const MomentTable& t) {
  const auto& d = t.geometry().dims;
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]) + "/S" +
         std::to_string(t.n_polar()) + "x" + std::to_string(t.n_azimuth());
}

/// One-step divergence relation with a Richardson-fitted tolerance: the FD
/// estimate compares stride 1 with stride 2 on the same table, the ray
/// estimate compares against a table built at twice the ray step.
inline ResidualReport moment_div_residual(const std::string& name, int k, int p, const AbsorptionSpec& a,
                                          const MomentTable& fine, const MomentTable& coarse_ray) {
  if (!(fine.geometry() == coarse_ray.geometry())) throw ArgumentError("moment tables on different grids");
  const std::size_t margin = moment_margin(1);
  auto fr = fitted_check(
      [&](const StepSet& s) {
        const MomentTable& t = s.h_ray > fine.h_ray() ? coarse_ray : fine;
        const auto stride = static_cast<std::size_t>(std::lround(s.h_fd / fine.geometry().spacing(0)));
        return moment_div_residual_set(k, p, a, t, stride, margin);
      },
      StepSet{fine.h_ray(), fine.geometry().spacing(0), 0.0}, kVaryRay | kVaryFd);
  ResidualReport r = make_report(name, k, fr, {fine.h_ray(), fine.geometry().spacing(0), 0.0},
                                 interior_values(fine.E(k, p), margin).size());
  r.p = p;
  r.n = 1;
  r.grid = grid_label(fine);
  return r;
}

// ---------------------------------------------------------------------------
// Iterated divergences: coefficient algebra
// ---------------------------------------------------------------------------

/// Polynomial in a commuting symbol with integer coefficients; entry i is the
/// coefficient of symbol^i. The symbol is α in the stationary relations and
/// (∂/∂t + α) in the non-stationary ones.
using SymbolPoly = std::vector<long long>;

/// A term of an iterated divergence: E_{m·} (order m) or (H^m f)_·.
struct MomentTerm {
  enum Kind { moment, source } kind;
  int order;
  friend auto operator<=>(const MomentTerm&, const MomentTerm&) = default;
};

using MomentExpansion = std::map<MomentTerm, SymbolPoly>;

inline void add_into(SymbolPoly& acc, const SymbolPoly& v, long long factor, std::size_t shift) {
  if (acc.size() < v.size() + shift) acc.resize(v.size() + shift, 0);
  for (std::size_t i = 0; i < v.size(); ++i) acc[i + shift] += factor * v[i];
}

inline void trim(MomentExpansion& e) {
  for (auto it = e.begin(); it != e.end();) {
    auto& poly = it->second;
    while (!poly.empty() && poly.back() == 0) poly.pop_back();
    it = poly.empty() ? e.erase(it) : std::next(it);
  }
}

/// Applies δ once to every term using the one-step relations
///   δE_m = m E_{m−1} − α E_m (m ≥ 1),  δE_0 = f − α E_0,  δ(H^j f) = H^{j+1} f
/// (ranks drop by one in every term and are left implicit).
inline MomentExpansion divergence_step(const MomentExpansion& in) {
  MomentExpansion out;
  for (const auto& [term, poly] : in) {
    if (term.kind == MomentTerm::source) {
      add_into(out[{MomentTerm::source, term.order + 1}], poly, 1, 0);
    } else {
      if (term.order >= 1)
        add_into(out[{MomentTerm::moment, term.order - 1}], poly, term.order, 0);
      else
        add_into(out[{MomentTerm::source, 0}], poly, 1, 0);
      add_into(out[{MomentTerm::moment, term.order}], poly, -1, 1);
    }
  }
  trim(out);
  return out;
}

/// n-fold composition of the one-step relation starting from E_{start}.
inline MomentExpansion compose_divergence(int n, int start) {
  if (n < 0 || start < 0) throw ArgumentError("composition needs n, start >= 0");
  MomentExpansion e{{{MomentTerm::moment, start}, SymbolPoly{1}}};
  for (int i = 0; i < n; ++i) e = divergence_step(e);
  return e;
}

inline long long binomial(int n, int j) {
  if (j < 0 || j > n) return 0;
  long long b = 1;
  for (int i = 1; i <= j; ++i) b = b * (n - j + i) / i;
  return b;
}

inline long long falling_ratio(int top, int bottom) {  // top!/bottom!
  long long r = 1;
  for (int i = bottom + 1; i <= top; ++i) r *= i;
  return r;
}

/// The closed form δ^n E_{(k+n)(p+n)} = Σ_j (−1)^j C(n,j) α^j (k+n)!/(k+j)! E_{(k+j)p}.
inline MomentExpansion thm41_coefficients(int n, int k) {
  if (n < 1 || k < 0) throw ArgumentError("closed form needs n >= 1, k >= 0");
  MomentExpansion e;
  for (int j = 0; j <= n; ++j) {
    SymbolPoly poly(static_cast<std::size_t>(j) + 1, 0);
    poly[static_cast<std::size_t>(j)] = (j % 2 ? -1 : 1) * binomial(n, j) * falling_ratio(k + n, k + j);
    e[{MomentTerm::moment, k + j}] = poly;
  }
  trim(e);
  return e;
}

/// Candidate closed forms for δ^n E_{0(p+n)}:
///   with_binomial: Σ_{j<n} (−1)^j C(n,j) α^j (H^{n−j−1}f)_p + (−α)^n E_0p
///   plain:         Σ_{j<n} (−α)^j (H^{n−j−1}f)_p + (−α)^n E_0p
enum class SourceForm { with_binomial, plain };

inline MomentExpansion k0_coefficients(int n, SourceForm form) {
  if (n < 1) throw ArgumentError("closed form needs n >= 1");
  MomentExpansion e;
  for (int j = 0; j < n; ++j) {
    SymbolPoly poly(static_cast<std::size_t>(j) + 1, 0);
    long long c = form == SourceForm::with_binomial ? binomial(n, j) : 1;
    poly[static_cast<std::size_t>(j)] = (j % 2 ? -1 : 1) * c;
    e[{MomentTerm::source, n - j - 1}] = poly;
  }
  SymbolPoly tail(static_cast<std::size_t>(n) + 1, 0);
  tail[static_cast<std::size_t>(n)] = n % 2 ? -1 : 1;
  e[{MomentTerm::moment, 0}] = tail;
  trim(e);
  return e;
}

/// The form of the k = 0 closed form that equals the n-fold composition,
/// or nothing if neither does.
inline std::optional<SourceForm> audit_k0_form(int n) {
  auto truth = compose_divergence(n, 0);
  if (k0_coefficients(n, SourceForm::plain) == truth) return SourceForm::plain;
  if (k0_coefficients(n, SourceForm::with_binomial) == truth) return SourceForm::with_binomial;
  return std::nullopt;
}

inline cplx eval_poly(const SymbolPoly& p, cplx x) {
  cplx acc{};
  for (std::size_t i = p.size(); i-- > 0;) acc = acc * x + static_cast<double>(p[i]);
  return acc;
}

/// Σ over an expansion evaluated on a moment table with α constant: terms of
/// rank p (moments E_{m p} and (H^j f)_p).
inline SymTensorGridField assemble_expansion(const MomentExpansion& e, int p, cplx alpha, const MomentTable& t) {
  SymTensorGridField acc(p, t.geometry());
  for (const auto& [term, poly] : e) {
    const SymTensorGridField& src = term.kind == MomentTerm::moment ? t.E(term.order, p) : t.Hf(term.order, p);
    acc += detail::scaled(src, eval_poly(poly, alpha));
  }
  return acc;
}

/// Right-hand side of δ^n E_{(k+n)(p+n)} from the closed form.
inline SymTensorGridField thm41_rhs(int n, int k, int p, cplx alpha, const MomentTable& t) {
  for (int j = 0; j <= n; ++j)
    if (!t.has(k + j, p)) throw ArgumentError("moment table does not cover the closed form");
  return assemble_expansion(thm41_coefficients(n, k), p, alpha, t);
}

/// Right-hand side of δ^n E_{0(p+n)} in the chosen form.
inline SymTensorGridField cor42_rhs(int n, int p, cplx alpha, const MomentTable& t,
                                    SourceForm form = SourceForm::plain) {
  return assemble_expansion(k0_coefficients(n, form), p, alpha, t);
}

inline SymTensorGridField nested_divergence(const SymTensorGridField& f, int n, std::size_t stride) {
  SymTensorGridField g = f;
  for (int i = 0; i < n; ++i) g = divergence(g, stride);
  return g;
}

/// δ^n E_{top,(p+n)} − rhs as a fitted check, reported under order `k`.
/// `rhs(table)` assembles the right side from a table.
template <class Rhs>
ResidualReport iterated_divergence_check(const std::string& name, int n, int k, int top, int p,
                                         const MomentTable& fine, const MomentTable& coarse_ray, Rhs&& rhs) {
  const std::size_t margin = moment_margin(n);
  auto fr = fitted_check(
      [&](const StepSet& s) {
        const MomentTable& t = s.h_ray > fine.h_ray() ? coarse_ray : fine;
        const auto stride = static_cast<std::size_t>(std::lround(s.h_fd / fine.geometry().spacing(0)));
        SymTensorGridField lhs = nested_divergence(t.E(top, p + n), n, stride);
        ResidualSet rs;
        rs.r = interior_values(lhs - rhs(t), margin);
        const double h = fine.geometry().spacing(0) * static_cast<double>(stride);
        rs.scale = std::max(interior_scale(lhs, margin), interior_scale(t.E(top, p + n), margin) / std::pow(h, n));
        return rs;
      },
      StepSet{fine.h_ray(), fine.geometry().spacing(0), 0.0}, kVaryRay | kVaryFd);
  ResidualReport r = make_report(name, k, fr, {fine.h_ray(), fine.geometry().spacing(0), 0.0},
                                 interior_values(fine.E(0, p), margin).size());
  r.p = p;
  r.n = n;
  r.grid = grid_label(fine);
  return r;
}

// ---------------------------------------------------------------------------
// Non-stationary iterated relations
// ---------------------------------------------------------------------------

/// Moment tables of the non-stationary transform at t0 + i·h_t, |i| ≤ levels.
struct TimeMomentTables {
  double t0 = 0.0;
  double h_t = 0.0;
  int levels = 0;
  std::vector<MomentTable> tables;  ///< index i + levels

  const MomentTable& at(int i) const {
    if (std::abs(i) > levels) throw ArgumentError("time level out of range");
    return tables[static_cast<std::size_t>(i + levels)];
  }
};

template <class Source>
TimeMomentTables build_time_tables(const Source& f, const AbsorptionSpec& a, const GridGeometry& geom,
                                   const SphereGrid& sgrid, const RayQuadSpec& q, const BallDomain& dom,
                                   MomentTableSpec spec, double t0, double h_t, int levels) {
  TimeMomentTables out{t0, h_t, levels, {}};
  for (int i = -levels; i <= levels; ++i) {
    MomentTableSpec s = spec;
    s.time = t0 + i * h_t;
    out.tables.emplace_back(f, a, geom, sgrid, q, dom, s);
  }
  return out;
}

/// (∂/∂t + α)^j applied to a field given at time offsets i·step (j nested
/// central differences, so |i| ≤ j·stride is used).
template <class FieldAt>
SymTensorGridField time_operator_power(int j, cplx alpha, double h_t, int stride, FieldAt&& at) {
  const double h = h_t * stride;
  // Expand (D + α)^j with D the nested central difference: Σ C(j,i) α^{j−i} D^i.
  SymTensorGridField acc = detail::scaled(at(0), std::pow(alpha, j));
  for (int i = 1; i <= j; ++i) {
    // D^i by nested central differences: coefficients of ((E − E^{-1})/2h)^i
    SymTensorGridField di = detail::scaled(at(0), 0.0);
    for (int m = 0; m <= i; ++m) {
      double c = static_cast<double>(binomial(i, m)) * ((m % 2) ? -1.0 : 1.0);
      di += detail::scaled(at((i - 2 * m) * stride), c);
    }
    di *= 1.0 / std::pow(2.0 * h, i);
    acc += detail::scaled(di, static_cast<double>(binomial(j, i)) * std::pow(alpha, j - i));
  }
  return acc;
}

/// Non-stationary residual δ^n E_{(k+n)(p+n)} − Σ_j coef_j (∂/∂t + α)^j E_{(k+j)p}
/// for k ≥ 1. For k = 0 the left side is δ^n E_{0(p+n)} and the right side the
/// plain source form with (∂/∂t + α) in place of α.
/// The ∂/∂t step is varied by using every second time level.
inline ResidualReport thm43_residual(int n, int k, int p, cplx alpha, const TimeMomentTables& fine,
                                     const TimeMomentTables& coarse_ray) {
  if (fine.levels < 2 * n) throw ArgumentError("not enough time levels for the step-doubling estimate");
  const MomentExpansion e = k >= 1 ? thm41_coefficients(n, k) : k0_coefficients(n, SourceForm::plain);
  const int top = k >= 1 ? k + n : 0;
  const MomentTable& centre = fine.at(0);
  const std::size_t margin = moment_margin(n);
  const double hx = centre.geometry().spacing(0);
  auto fr = fitted_check(
      [&](const StepSet& s) {
        const TimeMomentTables& T = s.h_ray > centre.h_ray() ? coarse_ray : fine;
        const auto stride = static_cast<std::size_t>(std::lround(s.h_fd / hx));
        const int tstride = static_cast<int>(std::lround(s.h_t / fine.h_t));
        SymTensorGridField lhs = nested_divergence(T.at(0).E(top, p + n), n, stride);
        SymTensorGridField rhs(p, centre.geometry());
        for (const auto& [term, poly] : e) {
          // poly has a single nonzero entry at the power j
          for (std::size_t j = 0; j < poly.size(); ++j) {
            if (poly[j] == 0) continue;
            auto at = [&](int i) -> const SymTensorGridField& {
              const MomentTable& tb = T.at(i);
              return term.kind == MomentTerm::moment ? tb.E(term.order, p) : tb.Hf(term.order, p);
            };
            rhs += detail::scaled(time_operator_power(static_cast<int>(j), alpha, fine.h_t, tstride, at),
                                  static_cast<double>(poly[j]));
          }
        }
        ResidualSet rs;
        rs.r = interior_values(lhs - rhs, margin);
        rs.scale = std::max(interior_scale(lhs, margin),
                            interior_scale(T.at(0).E(top, p + n), margin) *
                                (1.0 / std::pow(hx * stride, n) + 1.0 / std::pow(fine.h_t * tstride, n)));
        return rs;
      },
      StepSet{centre.h_ray(), hx, fine.h_t}, kVaryRay | kVaryFd | kVaryTime);
  ResidualReport r = make_report("thm4.3", k, fr, {centre.h_ray(), hx, fine.h_t},
                                 interior_values(centre.E(0, p), margin).size());
  r.p = p;
  r.n = n;
  r.grid = grid_label(centre);
  return r;
}

// ---------------------------------------------------------------------------
// Volume potentials
// ---------------------------------------------------------------------------

/// Kernel e^{−αr} r^{k−2}.
inline cplx volume_kernel(int k, cplx alpha, double r) { return std::exp(-alpha * r) * std::pow(r, k - 2); }

/// Value assigned to the cell containing the target for k = 1: the integral
/// of 1/r over the ball of equal volume, 2π r_eq² with r_eq = (3h³/4π)^{1/3},
/// divided by the cell volume.
inline double singular_cell_weight(double cell_volume) {
  double r_eq = std::cbrt(3.0 * cell_volume / (4.0 * std::numbers::pi));
  return 2.0 * std::numbers::pi * r_eq * r_eq / cell_volume;
}

namespace detail {
inline void check_scalar_uniform(const SymTensorGridField& f) {
  if (f.rank() != 0) throw ArgumentError("volume potential expects a scalar source grid");
}
} // namespace detail

/// E_k0(x) = ∫ e^{−α|x−q|} |x−q|^{k−2} f(q) dV_q by the lattice sum over the
/// sampled source (cell volume h³ per node).
inline cplx volume_potential(int k, const SymTensorGridField& f, cplx alpha, const Point3& x) {
  if (k < 1) throw ArgumentError("volume potential needs k >= 1");
  detail::check_scalar_uniform(f);
  const auto& g = f.geometry();
  const double cell = g.spacing(0) * g.spacing(1) * g.spacing(2);
  const double tiny = 1e-9 * std::cbrt(cell);
  cplx acc{};
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    cplx v = f(0, n);
    if (v == cplx{}) continue;
    double r = norm(x - g.node(n));
    if (r < tiny)
      acc += v * (k == 1 ? singular_cell_weight(cell) : (k == 2 ? 1.0 : 0.0));
    else
      acc += v * volume_kernel(k, alpha, r);
  }
  return acc * cell;
}

/// E_k0 at every node of the source grid. Offsets are tabulated once, so the
/// cost is (nonzero sources) × (targets) multiply-adds.
inline SymTensorGridField volume_potential_grid(int k, const SymTensorGridField& f, cplx alpha) {
  if (k < 1) throw ArgumentError("volume potential needs k >= 1");
  detail::check_scalar_uniform(f);
  const auto& g = f.geometry();
  const auto& d = g.dims;
  const double hx = g.spacing(0), hy = g.spacing(1), hz = g.spacing(2);
  const double cell = hx * hy * hz;
  std::vector<cplx> table(g.node_count());
  for (std::size_t c = 0; c < d[2]; ++c)
    for (std::size_t b = 0; b < d[1]; ++b)
      for (std::size_t a = 0; a < d[0]; ++a) {
        double r = std::sqrt(std::pow(a * hx, 2) + std::pow(b * hy, 2) + std::pow(c * hz, 2));
        cplx v = (a == 0 && b == 0 && c == 0)
                     ? cplx(k == 1 ? singular_cell_weight(cell) : (k == 2 ? 1.0 : 0.0))
                     : volume_kernel(k, alpha, r);
        table[g.index(a, b, c)] = v * cell;
      }
  std::vector<std::size_t> src;
  for (std::size_t n = 0; n < g.node_count(); ++n)
    if (f(0, n) != cplx{}) src.push_back(n);
  std::vector<std::array<std::size_t, 3>> src_ijk(src.size());
  for (std::size_t s = 0; s < src.size(); ++s) src_ijk[s] = g.ijk(src[s]);

  SymTensorGridField out(0, g);
  auto dist = [](std::size_t u, std::size_t v) { return u > v ? u - v : v - u; };
  parallel_for(g.node_count(), [&](std::size_t n) {
    auto t = g.ijk(n);
    cplx acc{};
    for (std::size_t s = 0; s < src.size(); ++s) {
      const auto& q = src_ijk[s];
      acc += table[g.index(dist(t[0], q[0]), dist(t[1], q[1]), dist(t[2], q[2]))] * f(0, src[s]);
    }
    out(0, n) = acc;
  });
  return out;
}

/// ‖ΔE + κ²E + 4πf‖_∞ / ‖4πf‖_∞ over the nodes one away from every face, with
/// the 7-point Laplacian.
inline double helmholtz_relative_residual(const SymTensorGridField& e10, const SymTensorGridField& f, double kappa) {
  detail::check_same_grid(e10, f);
  SymTensorGridField lap = laplacian(e10);
  SymTensorGridField ei = restrict_interior(e10, 1), fi = restrict_interior(f, 1);
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < lap.nodes(); ++n) {
    cplx r = lap(0, n) + kappa * kappa * ei(0, n) + 4.0 * std::numbers::pi * fi(0, n);
    num = std::max(num, std::abs(r));
    den = std::max(den, 4.0 * std::numbers::pi * std::abs(fi(0, n)));
  }
  if (den == 0.0) return num;
  return num / den;
}

/// Per-node residual ΔE + κ²E + 4πf on the grid shrunk by one.
inline SymTensorGridField helmholtz_residual_field(const SymTensorGridField& e10, const SymTensorGridField& f,
                                                   double kappa) {
  detail::check_same_grid(e10, f);
  SymTensorGridField r = laplacian(e10);
  r += detail::scaled(restrict_interior(e10, 1), kappa * kappa);
  r += detail::scaled(restrict_interior(f, 1), 4.0 * std::numbers::pi);
  return r;
}

namespace detail {

/// Direct-convolution potential at grid nodes, memoized by node index.
class NodePotential {
public:
  NodePotential(int k, const SymTensorGridField& f, cplx alpha) : k_(k), f_(f), alpha_(alpha) {}
  cplx operator()(long i, long j, long k) {
    std::size_t n = f_.geometry().index(i, j, k);
    auto it = cache_.find(n);
    if (it != cache_.end()) return it->second;
    cplx v = volume_potential(k_, f_, alpha_, f_.geometry().node(n));
    cache_.emplace(n, v);
    return v;
  }

private:
  int k_;
  const SymTensorGridField& f_;
  cplx alpha_;
  std::map<std::size_t, cplx> cache_;
};

/// Centre node of an odd grid, checked to leave `reach` nodes around a
/// 5³ block of the given stride.
inline std::array<long, 3> probe_centre(const GridGeometry& g, std::size_t stride, long reach) {
  std::array<long, 3> c{};
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] % 2 == 0 || static_cast<long>(g.dims[a] / 2) < 2 * static_cast<long>(stride) + reach)
      throw ArgumentError("probe block needs odd dims with room for the block");
    c[a] = static_cast<long>(g.dims[a] / 2);
  }
  return c;
}

template <class Fn>
cplx seven_point_laplacian(Fn&& v, const GridGeometry& g, long i, long j, long k) {
  const double hx = g.spacing(0), hy = g.spacing(1), hz = g.spacing(2);
  cplx c = v(i, j, k);
  return (v(i + 1, j, k) - 2.0 * c + v(i - 1, j, k)) / (hx * hx) +
         (v(i, j + 1, k) - 2.0 * c + v(i, j - 1, k)) / (hy * hy) +
         (v(i, j, k + 1) - 2.0 * c + v(i, j, k - 1)) / (hz * hz);
}

} // namespace detail

/// Relative Helmholtz residual on a 5³ block of nodes around the grid centre,
/// spaced `stride` nodes apart, with E_10 from direct convolution at just the
/// block nodes and their Laplacian neighbours. Stride 2 on a grid refined by
/// two lands on the same physical points as stride 1 on the coarse grid.
inline double helmholtz_probe_residual(const SymTensorGridField& f, double kappa, std::size_t stride = 1) {
  detail::check_scalar_uniform(f);
  const auto& g = f.geometry();
  const auto c = detail::probe_centre(g, stride, 1);
  detail::NodePotential e10(1, f, cplx(0.0, kappa));
  const long s = static_cast<long>(stride);
  double num = 0.0, den = 0.0;
  for (long z = -2; z <= 2; ++z)
    for (long y = -2; y <= 2; ++y)
      for (long x = -2; x <= 2; ++x) {
        long i = c[0] + x * s, j = c[1] + y * s, k = c[2] + z * s;
        cplx lap = detail::seven_point_laplacian(e10, g, i, j, k);
        cplx fv = f(0, g.index(i, j, k));
        num = std::max(num, std::abs(lap + kappa * kappa * e10(i, j, k) + 4.0 * std::numbers::pi * fv));
        den = std::max(den, 4.0 * std::numbers::pi * std::abs(fv));
      }
  return den > 0.0 ? num / den : num;
}

/// The two routes to E_k0 at grid nodes: the volume potential on an n³ grid
/// and on the grid with half as many intervals, against the sphere × ray
/// moment with a sphere grid and with one doubled in both counts. Probe
/// points are nodes of the coarse grid so both convolutions hit them exactly.
/// Tolerance: 2(|V_h − V_2h|/3 + |A − A_fine|) plus a rounding floor, the
/// comparison being V_h against A_fine.
inline ResidualReport cross_route_check(int k, const Blob& f, cplx alpha, std::size_t n, double half_width,
                                        const SphereGrid& sgrid, const SphereGrid& sgrid_fine,
                                        const RayQuadSpec& q, std::size_t n_probes = 10,
                                        const BallDomain& dom = {}) {
  if (k < 1) throw ArgumentError("cross-route check needs k >= 1");
  if (n % 2 == 0 || n < 9) throw ArgumentError("cross-route grid needs odd n >= 9");
  const GridGeometry fine = GridGeometry::cube(n, half_width), coarse = GridGeometry::cube(n / 2 + 1, half_width);
  auto sample = [&](const GridGeometry& g) {
    return SymTensorGridField::sample(0, g, [&](const Point3& x) { return SymTensor::scalar(f(x)); });
  };
  const SymTensorGridField ff = sample(fine), fc = sample(coarse);
  const PhaseField src{PhaseKind::ball_bump, f, {}, {}};
  const AbsorptionSpec a = AbsorptionSpec::constant(alpha);

  // coarse nodes from a Halton walk inside half the box, no repeats
  std::vector<std::array<std::size_t, 3>> probes;
  const double hc = coarse.spacing(0);
  const auto mid = static_cast<long>(coarse.dims[0] / 2);
  for (std::uint64_t i = 1; probes.size() < n_probes && i < 10000; ++i) {
    std::array<std::size_t, 3> c{};
    for (int d = 0; d < 3; ++d) {
      const unsigned base = d == 0 ? 2u : (d == 1 ? 3u : 5u);
      long off = std::lround((radical_inverse(i, base) - 0.5) * half_width / hc);
      c[static_cast<std::size_t>(d)] = static_cast<std::size_t>(mid + off);
    }
    if (!dom.contains(coarse.node(c[0], c[1], c[2]))) continue;
    if (std::find(probes.begin(), probes.end(), c) == probes.end()) probes.push_back(c);
  }

  std::vector<cplx> r(probes.size());
  double est = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& c = probes[i];
    const Point3 x = coarse.node(c[0], c[1], c[2]);
    cplx vh = volume_potential(k, ff, alpha, x), v2h = volume_potential(k, fc, alpha, x);
    cplx an = angular_moment(k, 0, src, a, x, sgrid, q, dom)[0];
    cplx af = angular_moment(k, 0, src, a, x, sgrid_fine, q, dom)[0];
    r[i] = vh - af;
    est = std::max(est, std::abs(vh - v2h) / 3.0 + std::abs(an - af));
    scale = std::max(scale, std::abs(af));
  }
  ResidualReport rep;
  rep.identity = "cross-route";
  rep.k = k;
  rep.grid = std::to_string(n) + "^3/S" + std::to_string(sgrid_fine.n_polar) + "x" + std::to_string(sgrid_fine.n_azimuth);
  rep.samples = probes.size();
  rep.h_ray = q.h_ray;
  rep.h_fd = fine.spacing(0);
  rep.residual_max = max_abs(r);
  rep.residual_l2 = rms(r);
  rep.tolerance = 2.0 * est + 64.0 * std::numeric_limits<double>::epsilon() * scale;
  rep.pass = rep.residual_max <= rep.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Radial kernels G_k(r) = r^{k−2} e^{−αr}
// ---------------------------------------------------------------------------

class GKernel {
public:
  GKernel(int k, cplx alpha) : k_(k), alpha_(alpha) {
    if (k < 1) throw ArgumentError("G_k needs k >= 1");
    if (alpha == cplx{}) throw ArgumentError("G_k needs Re(alpha) and Im(alpha) not both zero");
  }
  int k() const { return k_; }
  cplx alpha() const { return alpha_; }
  cplx operator()(double r) const { return std::pow(r, k_ - 2) * std::exp(-alpha_ * r); }
  /// G_j with the same α, any integer j.
  cplx order(int j, double r) const { return std::pow(r, j - 2) * std::exp(-alpha_ * r); }

private:
  int k_;
  cplx alpha_;
};

/// (Δ − α²)G_k = a_{k−2} G_{k−2} + a_{k−1} G_{k−1} + (a_k − α²) G_k with
///   a_{k−2} = (k−1)(k−2), a_{k−1} = −2(k−1)α, a_k = α².
/// The integer parts are kept exact.
struct GCoefficients {
  long long lower = 0;         ///< a_{k−2}
  long long middle_alpha = 0;  ///< a_{k−1} / α
  cplx alpha{};

  cplx a_km2() const { return static_cast<double>(lower); }
  cplx a_km1() const { return static_cast<double>(middle_alpha) * alpha; }
  cplx a_k() const { return alpha * alpha; }
};

inline GCoefficients g_radial_apply(int k, cplx alpha) {
  if (k < 1) throw ArgumentError("G_k needs k >= 1");
  return {static_cast<long long>(k - 1) * (k - 2), -2LL * (k - 1), alpha};
}

/// Largest relative deviation between the radial operator
/// ∂²/∂r² + (2/r)∂/∂r − α² applied to G_k by central differences of step h
/// and the three-term combination, over the radii given.
inline double g_radial_check(int k, cplx alpha, const std::vector<double>& radii, double h) {
  GKernel G(k, alpha);
  GCoefficients c = g_radial_apply(k, alpha);
  double worst = 0.0;
  for (double r : radii) {
    if (!(r > h)) throw ArgumentError("radial check needs r > h");
    cplx gm = G(r - h), g0 = G(r), gp = G(r + h);
    cplx lhs = (gp - 2.0 * g0 + gm) / (h * h) + (2.0 / r) * (gp - gm) / (2.0 * h) - alpha * alpha * g0;
    cplx rhs = c.a_km2() * G.order(k - 2, r) + c.a_km1() * G.order(k - 1, r) + (c.a_k() - alpha * alpha) * g0;
    double scale = std::max({std::abs(rhs), std::abs(alpha * alpha * g0), std::abs(g0) / (r * r)});
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Reconstruction from E_20
// ---------------------------------------------------------------------------

/// Estimate of f from (Δ − α²)² [E_20/(8πα)] = f, using the 7-point
/// Laplacian twice; the result lives on the grid shrunk by two nodes.
inline SymTensorGridField reconstruct_prop44(const SymTensorGridField& e20, cplx alpha) {
  if (alpha == cplx{}) throw ArgumentError("reconstruction from E_20 requires alpha != 0");
  if (alpha.real() < 0.0) throw ArgumentError("reconstruction requires Re(alpha) >= 0");
  if (e20.rank() != 0) throw ArgumentError("E_20 must be a scalar field");
  SymTensorGridField u = detail::scaled(e20, 1.0 / (8.0 * std::numbers::pi * alpha));
  auto helm = [&](const SymTensorGridField& v) {
    SymTensorGridField out = laplacian(v);
    out -= detail::scaled(restrict_interior(v, 1), alpha * alpha);
    return out;
  };
  return helm(helm(u));
}

/// Relative L² error ‖est − f‖/‖f‖ with f restricted to the estimate's grid.
inline double relative_l2_error(const SymTensorGridField& est, const SymTensorGridField& f_full) {
  const auto& g = f_full.geometry();
  const auto& e = est.geometry();
  const std::size_t margin = (g.dims[0] - e.dims[0]) / 2;
  SymTensorGridField f = restrict_interior(f_full, margin);
  detail::check_same_grid(est, f);
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < f.nodes(); ++n) {
    num += std::norm(est(0, n) - f(0, n));
    den += std::norm(f(0, n));
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Relative L² error of the E_20 reconstruction on a 5³ probe block around the
/// grid centre, E_20 taken by direct convolution at the nodes the two nested
/// Helmholtz stencils touch. Same stride convention as the Helmholtz probe.
inline double prop44_probe_error(const SymTensorGridField& f, cplx alpha, std::size_t stride = 1) {
  if (alpha == cplx{}) throw ArgumentError("reconstruction from E_20 requires alpha != 0");
  if (alpha.real() < 0.0) throw ArgumentError("reconstruction requires Re(alpha) >= 0");
  detail::check_scalar_uniform(f);
  const auto& g = f.geometry();
  const auto c = detail::probe_centre(g, stride, 2);
  detail::NodePotential e20(2, f, alpha);
  const cplx scale = 1.0 / (8.0 * std::numbers::pi * alpha);
  auto helm1 = [&](long i, long j, long k) {
    return scale * (detail::seven_point_laplacian(e20, g, i, j, k) - alpha * alpha * e20(i, j, k));
  };
  const long s = static_cast<long>(stride);
  double num = 0.0, den = 0.0;
  for (long z = -2; z <= 2; ++z)
    for (long y = -2; y <= 2; ++y)
      for (long x = -2; x <= 2; ++x) {
        long i = c[0] + x * s, j = c[1] + y * s, k = c[2] + z * s;
        cplx est = detail::seven_point_laplacian(helm1, g, i, j, k) - alpha * alpha * helm1(i, j, k);
        cplx fv = f(0, g.index(i, j, k));
        num += std::norm(est - fv);
        den += std::norm(fv);
      }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace artkit
