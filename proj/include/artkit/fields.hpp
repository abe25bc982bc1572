#pragma once

#include <algorithm>
#include <bit>
#include <iterator>
#include <utility>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "artkit/errors.hpp"
#include "artkit/geometry.hpp"
#include "artkit/tensor.hpp"

namespace artkit {

// ---------------------------------------------------------------------------
// Scalar spatial profiles
// ---------------------------------------------------------------------------

enum class BlobKind { constant, gaussian, ball_bump };

/// Scalar spatial profile g(x).
///   gaussian:  amp · exp(−|x − c|² / w²)
///   ball_bump: amp · exp(1 − 1/(1 − |x − c|²/w²)) for |x − c| < w, else 0
///              (C∞ with compact support; w is the support radius)
///   constant:  amp
struct Blob {
  BlobKind kind = BlobKind::constant;
  Point3 center{};
  double width = 1.0;
  cplx amplitude{0.0, 0.0};

  static Blob constant(cplx amp) { return {BlobKind::constant, {}, 1.0, amp}; }
  static Blob gaussian(Point3 c, double w, cplx amp = 1.0) {
    if (!(w > 0.0)) throw ArgumentError("gaussian width must be positive");
    return {BlobKind::gaussian, c, w, amp};
  }
  static Blob ball_bump(Point3 c, double radius, cplx amp = 1.0) {
    if (!(radius > 0.0)) throw ArgumentError("ball_bump radius must be positive");
    return {BlobKind::ball_bump, c, radius, amp};
  }

  double shape(const Point3& x) const {
    switch (kind) {
    case BlobKind::constant:
      return 1.0;
    case BlobKind::gaussian: {
      Vec3 d = x - center;
      return std::exp(-dot(d, d) / (width * width));
    }
    case BlobKind::ball_bump: {
      Vec3 d = x - center;
      double q = dot(d, d) / (width * width);
      if (q >= 1.0) return 0.0;
      return std::exp(1.0 - 1.0 / (1.0 - q));
    }
    }
    return 0.0;
  }

  cplx operator()(const Point3& x) const { return amplitude * shape(x); }

  /// Radius around `center` outside which |g| < 1e-16·|amp|; none for constants.
  std::optional<double> support_radius() const {
    switch (kind) {
    case BlobKind::constant:
      return std::nullopt;
    case BlobKind::gaussian:
      return 6.1 * width;
    case BlobKind::ball_bump:
      return width;
    }
    return std::nullopt;
  }
};

using SupportSphere = std::optional<std::pair<Point3, double>>;

// ---------------------------------------------------------------------------
// Temporal profiles
// ---------------------------------------------------------------------------

enum class TemporalKind { off, gaussian_pulse, causal_ramp };

namespace detail {
// C∞ step: 0 for u <= 0, 1 for u >= 1.
inline double smooth_step(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  double a = std::exp(-1.0 / u);
  double b = std::exp(-1.0 / (1.0 - u));
  return a / (a + b);
}
} // namespace detail

/// Time factor τ ↦ p(τ) multiplying a source.
///   off:            1 (stationary)
///   gaussian_pulse: exp(−((τ − c)/w)²) for τ > 0, 0 otherwise; c ≥ 6w so the
///                   cut at τ = 0 sits below 1e-15
///   causal_ramp:    C∞ step rising from 0 at τ = c to 1 at τ = c + w, c ≥ 0
struct TemporalProfile {
  TemporalKind kind = TemporalKind::off;
  double center = 0.0;
  double width = 1.0;

  static TemporalProfile off() { return {}; }
  static TemporalProfile gaussian_pulse(double c, double w) {
    if (!(w > 0.0) || c < 6.0 * w * (1.0 - 1e-12)) throw ArgumentError("gaussian_pulse needs width > 0 and center >= 6*width");
    return {TemporalKind::gaussian_pulse, c, w};
  }
  static TemporalProfile causal_ramp(double c, double w) {
    if (!(w > 0.0) || c < 0.0) throw ArgumentError("causal_ramp needs width > 0 and start >= 0");
    return {TemporalKind::causal_ramp, c, w};
  }

  bool causal() const { return kind != TemporalKind::off; }

  /// Time after which the profile is identically 1 (ramp only).
  double settle_time() const { return kind == TemporalKind::causal_ramp ? center + width : 0.0; }

  double operator()(double tau) const {
    switch (kind) {
    case TemporalKind::off:
      return 1.0;
    case TemporalKind::gaussian_pulse: {
      if (tau <= 0.0) return 0.0;
      double u = (tau - center) / width;
      return std::exp(-u * u);
    }
    case TemporalKind::causal_ramp:
      if (tau <= 0.0) return 0.0;
      return detail::smooth_step((tau - center) / width);
    }
    return 0.0;
  }
};

// ---------------------------------------------------------------------------
// Symmetric tensor field specs and phase-space sources
// ---------------------------------------------------------------------------

/// W(x) = Σ_j C_j g_j(x): constant symmetric tensors times scalar profiles.
struct TensorFieldSpec {
  struct Term {
    SymTensor coefficient;
    Blob profile;
  };

  int rank = 0;
  std::vector<Term> terms;

  TensorFieldSpec() = default;
  explicit TensorFieldSpec(int m) : rank(m) {
    if (m < 0) throw ArgumentError("tensor field rank must be nonnegative");
  }

  TensorFieldSpec& add(SymTensor c, Blob g) {
    if (c.rank() != rank) throw ArgumentError("tensor term rank mismatch");
    terms.push_back({std::move(c), g});
    return *this;
  }

  /// A sphere containing the support of every term.
  SupportSphere support() const {
    if (terms.empty()) return std::pair<Point3, double>{Point3{}, 0.0};
    Point3 c0 = terms.front().profile.center;
    double r = 0.0;
    for (const auto& t : terms) {
      auto rt = t.profile.support_radius();
      if (!rt) return std::nullopt;
      r = std::max(r, norm(t.profile.center - c0) + *rt);
    }
    return std::pair<Point3, double>{c0, r};
  }

  SymTensor operator()(const Point3& x) const {
    SymTensor w(rank);
    for (const auto& t : terms) {
      cplx g = t.profile(x);
      if (g == cplx{}) continue;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += g * t.coefficient[i];
    }
    return w;
  }

  /// ⟨W(x), ξ^m⟩ without materializing W(x).
  cplx contract(const Point3& x, const Vec3& xi) const {
    cplx acc{};
    for (const auto& t : terms) {
      cplx g = t.profile(x);
      if (g == cplx{}) continue;
      acc += g * contract_direction(t.coefficient, xi);
    }
    return acc;
  }
};

enum class PhaseKind { gaussian, ball_bump, tensor_generated, separable_time };

/// Source f(t, x, ξ) on the phase space. Scalar kinds do not depend on ξ;
/// tensor_generated gives f = ⟨W(x), ξ^m⟩. Every kind carries an optional
/// temporal factor; the stationary overload drops it.
struct PhaseField {
  PhaseKind kind = PhaseKind::gaussian;
  Blob blob{};
  TensorFieldSpec tensor{};
  TemporalProfile temporal{};

  static PhaseField zero() { return gaussian({}, 1.0, 0.0); }
  static PhaseField gaussian(Point3 c, double w, cplx amp = 1.0) {
    PhaseField f;
    f.kind = PhaseKind::gaussian;
    f.blob = Blob::gaussian(c, w, amp);
    return f;
  }
  static PhaseField ball_bump(Point3 c, double radius, cplx amp = 1.0) {
    PhaseField f;
    f.kind = PhaseKind::ball_bump;
    f.blob = Blob::ball_bump(c, radius, amp);
    return f;
  }
  static PhaseField tensor_generated(TensorFieldSpec w, TemporalProfile tp = TemporalProfile::off()) {
    PhaseField f;
    f.kind = PhaseKind::tensor_generated;
    f.tensor = std::move(w);
    f.temporal = tp;
    return f;
  }
  static PhaseField separable_time(Blob spatial, TemporalProfile tp) {
    if (!tp.causal()) throw ArgumentError("separable_time needs a causal temporal profile");
    PhaseField f;
    f.kind = PhaseKind::separable_time;
    f.blob = spatial;
    f.temporal = tp;
    return f;
  }

  bool stationary() const { return !temporal.causal(); }

  /// A sphere outside which the source is negligible (< 1e-16 relative).
  SupportSphere support() const {
    if (kind == PhaseKind::tensor_generated) return tensor.support();
    if (blob.amplitude == cplx{}) return std::pair<Point3, double>{blob.center, 0.0};
    auto r = blob.support_radius();
    if (!r) return std::nullopt;
    return std::pair<Point3, double>{blob.center, *r};
  }
  bool causal() const { return temporal.causal(); }
  int rank() const { return kind == PhaseKind::tensor_generated ? tensor.rank : 0; }

  cplx operator()(const Point3& x, const Vec3& xi) const {
    if (kind == PhaseKind::tensor_generated) return tensor.contract(x, xi);
    return blob(x);
  }

  cplx operator()(double t, const Point3& x, const Vec3& xi) const {
    double p = temporal(t);
    if (p == 0.0) return {};
    return p * (*this)(x, xi);
  }

  /// The generating quantity at (t, x): the blob value for scalar kinds, W(t, x)
  /// for tensor_generated.
  SymTensor generator(double t, const Point3& x) const {
    double p = temporal(t);
    if (kind == PhaseKind::tensor_generated) return cplx(p) * tensor(x);
    return SymTensor::scalar(p * blob(x));
  }

  /// Scales the source by c.
  PhaseField scaled(cplx c) const {
    PhaseField f = *this;
    f.blob.amplitude *= c;
    for (auto& t : f.tensor.terms) t.profile.amplitude *= c;
    return f;
  }
};

// ---------------------------------------------------------------------------
// Absorption α(x, ξ) = ε + iρ
// ---------------------------------------------------------------------------

enum class AbsorptionKind { constant, spatial, xi_polynomial };

/// Complex absorption. ε ≥ 0 is enforced structurally: spatial ε profiles have
/// real nonnegative amplitude, ξ-polynomial terms on ε must have even rank and
/// are probed for nonnegativity; odd ranks are allowed on ρ only.
class AbsorptionSpec {
public:
  struct XiTerm {
    SymTensor q;            ///< real coefficient tensor Q^r
    bool on_imaginary_part;  ///< true: contributes iρ, false: contributes ε
  };

  AbsorptionSpec() = default;

  static AbsorptionSpec constant(cplx alpha) {
    if (alpha.real() < 0.0) throw ArgumentError("absorption must have Re(alpha) >= 0");
    AbsorptionSpec a;
    a.kind_ = AbsorptionKind::constant;
    a.base_ = alpha;
    return a;
  }

  /// α(x) = base + ε_blob(x) + i·ρ_blob(x).
  static AbsorptionSpec spatial(cplx base, Blob eps_blob, Blob rho_blob) {
    if (base.real() < 0.0) throw ArgumentError("absorption must have Re(alpha) >= 0");
    if (eps_blob.amplitude.imag() != 0.0 || eps_blob.amplitude.real() < 0.0)
      throw ArgumentError("epsilon profile amplitude must be real and nonnegative");
    if (rho_blob.amplitude.imag() != 0.0) throw ArgumentError("rho profile amplitude must be real");
    AbsorptionSpec a;
    a.kind_ = AbsorptionKind::spatial;
    a.base_ = base;
    a.eps_blob_ = eps_blob;
    a.rho_blob_ = rho_blob;
    return a;
  }

  /// α(ξ) = base + Σ (1 or i)·⟨Q^r, ξ^r⟩.
  static AbsorptionSpec xi_polynomial(cplx base, std::vector<XiTerm> terms) {
    if (base.real() < 0.0) throw ArgumentError("absorption must have Re(alpha) >= 0");
    for (const auto& t : terms) {
      for (const auto& c : t.q.components())
        if (c.imag() != 0.0) throw ArgumentError("polynomial coefficients must be real tensors");
      if (!t.on_imaginary_part && t.q.rank() % 2 == 1)
        throw ArgumentError("odd-degree polynomial terms may only enter the imaginary part");
    }
    AbsorptionSpec a;
    a.kind_ = AbsorptionKind::xi_polynomial;
    a.base_ = base;
    a.terms_ = std::move(terms);
    a.probe_nonnegative();
    return a;
  }

  AbsorptionKind kind() const { return kind_; }
  bool is_constant() const { return kind_ == AbsorptionKind::constant; }
  bool depends_on_xi() const { return kind_ == AbsorptionKind::xi_polynomial && !terms_.empty(); }
  bool depends_on_x() const { return kind_ == AbsorptionKind::spatial; }
  /// The ξ- and x-independent part.
  cplx base() const { return base_; }
  const std::vector<XiTerm>& xi_terms() const { return terms_; }

  cplx operator()(const Point3& x, const Vec3& xi) const {
    switch (kind_) {
    case AbsorptionKind::constant:
      return base_;
    case AbsorptionKind::spatial:
      return base_ + eps_blob_(x).real() + cplx(0.0, rho_blob_(x).real());
    case AbsorptionKind::xi_polynomial: {
      cplx a = base_;
      for (const auto& t : terms_) {
        double v = contract_direction(t.q, xi).real();
        a += t.on_imaginary_part ? cplx(0.0, v) : cplx(v, 0.0);
      }
      return a;
    }
    }
    return base_;
  }

  /// Coefficient tensors of α as a sum of homogeneous ξ-polynomials, the base
  /// included as the rank-0 term. Only meaningful for x-independent α.
  std::vector<SymTensor> polynomial_terms() const {
    if (depends_on_x()) throw ArgumentError("polynomial form requires x-independent absorption");
    std::vector<SymTensor> out;
    out.push_back(SymTensor::scalar(base_));
    for (const auto& t : terms_) out.push_back((t.on_imaginary_part ? cplx(0.0, 1.0) : cplx(1.0, 0.0)) * t.q);
    return out;
  }

private:
  void probe_nonnegative() const {
    SphereGrid g = make_sphere_grid(24, 48);
    for (const auto& xi : g.nodes)
      if ((*this)(Point3{}, xi).real() < -1e-14) throw ArgumentError("epsilon polynomial is negative somewhere");
  }

  AbsorptionKind kind_ = AbsorptionKind::constant;
  cplx base_{0.0, 0.0};
  Blob eps_blob_ = Blob::constant(0.0);
  Blob rho_blob_ = Blob::constant(0.0);
  std::vector<XiTerm> terms_;
};

inline cplx eval_field(const PhaseField& f, double t, const Point3& x, const Direction& xi) { return f(t, x, xi); }
inline cplx eval_alpha(const AbsorptionSpec& a, const Point3& x, const Direction& xi) { return a(x, xi); }

// ---------------------------------------------------------------------------
// GridField and the ARTK file format
//
//   offset  size  content
//   0       4     magic "ARTK"
//   4       4     u32 version (1)
//   8       4     u32 rank m
//   12      4     u32 nt (0 = stationary)
//   16      12    u32 nx, ny, nz
//   28      48    f64 × 6 bounding box (min xyz, max xyz)
//   76      8     f64 dt (0 if stationary)
//   84      ...   data: (f64 re, f64 im) pairs
//
// Data order: time slowest, then component (sorted multi-index order), then
// nodes x-fastest. All values little-endian.
// ---------------------------------------------------------------------------

struct GridField {
  int rank = 0;
  GridGeometry geometry{};
  std::uint32_t nt = 0;  ///< 0: stationary (one frame)
  double dt = 0.0;
  std::vector<cplx> data;

  std::size_t frames() const { return nt == 0 ? 1 : nt; }
  std::size_t frame_size() const { return sym_size(rank) * geometry.node_count(); }

  SymTensorGridField frame(std::size_t i = 0) const {
    if (i >= frames()) throw ArgumentError("frame index out of range");
    auto first = data.begin() + static_cast<std::ptrdiff_t>(i * frame_size());
    return SymTensorGridField(rank, geometry, std::vector<cplx>(first, first + static_cast<std::ptrdiff_t>(frame_size())));
  }

  static GridField from(const SymTensorGridField& f) {
    return GridField{f.rank(), f.geometry(), 0, 0.0, f.data()};
  }
};

/// Node-centred sampling of gen(t, x) -> SymTensor (rank m). With nt > 0 the
/// frames sit at t = n·dt.
template <class Gen>
GridField sample_grid(int rank, const GridGeometry& geom, Gen&& gen, std::uint32_t nt = 0, double dt = 0.0) {
  if (nt > 0 && !(dt > 0.0)) throw ArgumentError("time axis needs dt > 0");
  GridField g{rank, geom, nt, nt > 0 ? dt : 0.0, {}};
  std::size_t nn = geom.node_count();
  std::size_t nc = sym_size(rank);
  g.data.assign(g.frames() * nc * nn, cplx{});
  for (std::size_t f = 0; f < g.frames(); ++f) {
    double t = static_cast<double>(f) * g.dt;
    for (std::size_t n = 0; n < nn; ++n) {
      SymTensor v = gen(t, geom.node(n));
      if (v.rank() != rank) throw ArgumentError("sampled tensor rank mismatch");
      for (std::size_t c = 0; c < nc; ++c) g.data[(f * nc + c) * nn + n] = v[c];
    }
  }
  return g;
}

/// Samples the generating quantity of a phantom (blob for scalar kinds, W for
/// tensor_generated).
inline GridField sample_grid(const PhaseField& f, const GridGeometry& geom, std::uint32_t nt = 0, double dt = 0.0) {
  return sample_grid(f.rank(), geom, [&](double t, const Point3& x) { return f.generator(nt > 0 ? t : 0.0, x); }, nt,
                     dt);
}

namespace detail {

inline constexpr char kMagic[4] = {'A', 'R', 'T', 'K'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 84;

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

class ByteReader {
public:
  ByteReader(const std::vector<unsigned char>& buf) : buf_(buf) {}

  template <class T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > buf_.size())
      throw FormatError(std::string("truncated ARTK file while reading ") + what, pos_);
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

private:
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline std::vector<unsigned char> encode_grid(const GridField& g) {
  if (g.data.size() != g.frames() * g.frame_size()) throw ArgumentError("grid field data length mismatch");
  std::vector<unsigned char> out;
  out.reserve(detail::kHeaderBytes + g.data.size() * 16);
  out.insert(out.end(), detail::kMagic, detail::kMagic + 4);
  detail::put_le<std::uint32_t>(out, detail::kVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.rank));
  detail::put_le<std::uint32_t>(out, g.nt);
  for (std::size_t a = 0; a < 3; ++a) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.geometry.dims[a]));
  for (std::size_t a = 0; a < 3; ++a) detail::put_le<double>(out, g.geometry.lo[a]);
  for (std::size_t a = 0; a < 3; ++a) detail::put_le<double>(out, g.geometry.hi[a]);
  detail::put_le<double>(out, g.nt == 0 ? 0.0 : g.dt);
  for (const auto& v : g.data) {
    detail::put_le<double>(out, v.real());
    detail::put_le<double>(out, v.imag());
  }
  return out;
}

inline GridField decode_grid(const std::vector<unsigned char>& buf) {
  detail::ByteReader r(buf);
  if (buf.size() < 4) throw FormatError("truncated ARTK file while reading magic", buf.size());
  if (std::memcmp(buf.data(), detail::kMagic, 4) != 0) throw FormatError("bad magic: expected \"ARTK\" (41 52 54 4B)", 0);
  r.get<std::uint32_t>("magic");
  std::size_t at = r.pos();
  auto version = r.get<std::uint32_t>("version");
  if (version != detail::kVersion)
    throw FormatError("unsupported ARTK version " + std::to_string(version) + ", expected 1", at);
  at = r.pos();
  auto rank = r.get<std::uint32_t>("rank");
  if (rank > 16) throw FormatError("implausible tensor rank " + std::to_string(rank), at);
  auto nt = r.get<std::uint32_t>("nt");
  std::array<std::size_t, 3> dims{};
  for (std::size_t a = 0; a < 3; ++a) {
    at = r.pos();
    dims[a] = r.get<std::uint32_t>("dims");
    if (dims[a] < 2) throw FormatError("grid dimension below 2", at);
  }
  Point3 lo, hi;
  for (std::size_t a = 0; a < 3; ++a) lo[a] = r.get<double>("bounding box");
  for (std::size_t a = 0; a < 3; ++a) hi[a] = r.get<double>("bounding box");
  for (std::size_t a = 0; a < 3; ++a)
    if (!(hi[a] > lo[a])) throw FormatError("degenerate bounding box", 28);
  double dt = r.get<double>("dt");

  GridField g;
  g.rank = static_cast<int>(rank);
  g.geometry = GridGeometry(dims, lo, hi);
  g.nt = nt;
  g.dt = dt;
  std::size_t count = g.frames() * g.frame_size();
  if (r.remaining() < count * 16)
    throw FormatError("truncated ARTK data section: expected " + std::to_string(count * 16) + " bytes, found " +
                          std::to_string(r.remaining()),
                      buf.size());
  g.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    at = r.pos();
    double re = r.get<double>("data");
    double im = r.get<double>("data");
    if (!std::isfinite(re) || !std::isfinite(im)) throw FormatError("non-finite value in data section", at);
    g.data[i] = {re, im};
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after data section", r.pos());
  return g;
}

inline void save_grid(const GridField& g, const std::string& path) {
  auto bytes = encode_grid(g);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline GridField load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_grid(buf);
}

} // namespace artkit
