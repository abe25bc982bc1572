#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <vector>

#include "artkit/errors.hpp"
#include "artkit/geometry.hpp"

namespace artkit {

// ---------------------------------------------------------------------------
// Sorted multi-indices
//
// A symmetric rank-m tensor in 3-D is stored by its sorted multi-indices
// i1 <= ... <= im. A sorted index is identified by its counts (a, b, c): how
// many 1s, 2s and 3s it holds, a + b + c = m. Positions follow lexicographic
// order of the sorted tuples (11, 12, 13, 22, 23, 33 for m = 2).
// ---------------------------------------------------------------------------

using Counts = std::array<int, 3>;

constexpr std::size_t sym_size(int m) { return static_cast<std::size_t>((m + 1) * (m + 2) / 2); }

constexpr std::size_t sym_position(const Counts& c) {
  int m = c[0] + c[1] + c[2];
  int r = m - c[0];
  return static_cast<std::size_t>(r * (r + 1) / 2 + (r - c[1]));
}

namespace detail {

struct RankTable {
  std::vector<Counts> counts;
  std::vector<double> multiplicity;
};

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

inline const RankTable& rank_table(int m) {
  constexpr int kMaxRank = 24;
  if (m < 0 || m > kMaxRank) throw ArgumentError("tensor rank out of supported range");
  static std::array<RankTable, kMaxRank + 1> tables;
  static std::once_flag once;
  std::call_once(once, [] {
    for (int r = 0; r <= kMaxRank; ++r) {
      RankTable& t = tables[r];
      t.counts.resize(sym_size(r));
      t.multiplicity.resize(sym_size(r));
      for (int a = r; a >= 0; --a)
        for (int b = r - a; b >= 0; --b) {
          Counts c{a, b, r - a - b};
          std::size_t pos = sym_position(c);
          t.counts[pos] = c;
          t.multiplicity[pos] = factorial(r) / (factorial(a) * factorial(b) * factorial(c[2]));
        }
    }
  });
  return tables[m];
}

inline double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

} // namespace detail

/// Sorted-index counts of every stored component of a rank-m tensor.
inline const std::vector<Counts>& sym_counts(int m) { return detail::rank_table(m).counts; }

/// Number of index tuples in {1,2,3}^m collapsing onto each stored component.
inline const std::vector<double>& sym_multiplicity(int m) { return detail::rank_table(m).multiplicity; }

/// Counts of an arbitrary (unsorted, 0-based) index tuple.
template <class Range>
Counts counts_of(const Range& indices) {
  Counts c{0, 0, 0};
  for (int i : indices) ++c[static_cast<std::size_t>(i)];
  return c;
}

// ---------------------------------------------------------------------------
// SymTensor
// ---------------------------------------------------------------------------

/// Fully symmetric complex tensor of rank m over R³.
class SymTensor {
public:
  SymTensor() : SymTensor(0) {}
  explicit SymTensor(int rank) : rank_(rank), c_(sym_size(check_rank(rank)), cplx{}) {}
  SymTensor(int rank, std::vector<cplx> components) : rank_(check_rank(rank)), c_(std::move(components)) {
    if (c_.size() != sym_size(rank)) throw ArgumentError("component count does not match rank");
  }

  static SymTensor scalar(cplx v) { return SymTensor(0, {v}); }
  static SymTensor vector(cplx a, cplx b, cplx c) { return SymTensor(1, {a, b, c}); }

  /// Kronecker δ_ij.
  static SymTensor kronecker() {
    SymTensor d(2);
    d.at(Counts{2, 0, 0}) = 1.0;
    d.at(Counts{0, 2, 0}) = 1.0;
    d.at(Counts{0, 0, 2}) = 1.0;
    return d;
  }

  int rank() const { return rank_; }
  std::size_t size() const { return c_.size(); }

  cplx& operator[](std::size_t pos) { return c_[pos]; }
  const cplx& operator[](std::size_t pos) const { return c_[pos]; }
  cplx& at(const Counts& c) { return c_[sym_position(c)]; }
  const cplx& at(const Counts& c) const { return c_[sym_position(c)]; }

  /// Component for an arbitrary index tuple (0-based indices).
  cplx component(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank_) throw ArgumentError("index tuple length must equal rank");
    return at(counts_of(idx));
  }

  const std::vector<cplx>& components() const { return c_; }

  SymTensor& operator+=(const SymTensor& o) {
    same_rank(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  SymTensor& operator-=(const SymTensor& o) {
    same_rank(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  SymTensor& operator*=(cplx s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  friend SymTensor operator+(SymTensor a, const SymTensor& b) { return a += b; }
  friend SymTensor operator-(SymTensor a, const SymTensor& b) { return a -= b; }
  friend SymTensor operator*(cplx s, SymTensor a) { return a *= s; }
  friend SymTensor operator*(SymTensor a, cplx s) { return a *= s; }

  double max_abs() const {
    double m = 0.0;
    for (auto& v : c_) m = std::max(m, std::abs(v));
    return m;
  }

private:
  static int check_rank(int m) {
    if (m < 0) throw ArgumentError("tensor rank must be nonnegative");
    return m;
  }
  void same_rank(const SymTensor& o) const {
    if (o.rank_ != rank_) throw ArgumentError("tensor rank mismatch");
  }

  int rank_;
  std::vector<cplx> c_;
};

/// ξ ⊗ … ⊗ ξ (m factors); component (a,b,c) is ξ1^a ξ2^b ξ3^c.
inline SymTensor outer_power(const Vec3& xi, int m) {
  SymTensor t(m);
  const auto& cs = sym_counts(m);
  for (std::size_t i = 0; i < cs.size(); ++i)
    t[i] = detail::ipow(xi.x1, cs[i][0]) * detail::ipow(xi.x2, cs[i][1]) * detail::ipow(xi.x3, cs[i][2]);
  return t;
}

/// Real monomial values ξ^{i1}…ξ^{im} for every stored component, written to out.
inline void monomials(const Vec3& xi, int m, std::vector<double>& out) {
  const auto& cs = sym_counts(m);
  out.resize(cs.size());
  for (std::size_t i = 0; i < cs.size(); ++i)
    out[i] = detail::ipow(xi.x1, cs[i][0]) * detail::ipow(xi.x2, cs[i][1]) * detail::ipow(xi.x3, cs[i][2]);
}

/// ⟨w, ξ^m⟩ = w_{i1…im} ξ^{i1}…ξ^{im}.
inline cplx contract_direction(const SymTensor& w, const Vec3& xi) {
  const auto& cs = sym_counts(w.rank());
  const auto& mult = sym_multiplicity(w.rank());
  cplx acc{};
  for (std::size_t i = 0; i < cs.size(); ++i)
    acc += mult[i] * detail::ipow(xi.x1, cs[i][0]) * detail::ipow(xi.x2, cs[i][1]) *
           detail::ipow(xi.x3, cs[i][2]) * w[i];
  return acc;
}

/// u_{i1…im} v^{i1…im} over all 3^m tuples (bilinear, no conjugation).
inline cplx sym_inner(const SymTensor& u, const SymTensor& v) {
  if (u.rank() != v.rank()) throw ArgumentError("sym_inner: rank mismatch");
  const auto& mult = sym_multiplicity(u.rank());
  cplx acc{};
  for (std::size_t i = 0; i < u.size(); ++i) acc += mult[i] * u[i] * v[i];
  return acc;
}

/// (Q * E)^{j1…j_{q}} = Q_{l1…lr} E^{l1…lr j1…jq}, q = rank(E) − rank(Q).
inline SymTensor convolve_tensor(const SymTensor& q, const SymTensor& e) {
  int r = q.rank();
  int out_rank = e.rank() - r;
  if (out_rank < 0) throw ArgumentError("convolve_tensor: rank(E) must be at least rank(Q)");
  SymTensor out(out_rank);
  const auto& lc = sym_counts(r);
  const auto& lm = sym_multiplicity(r);
  const auto& jc = sym_counts(out_rank);
  for (std::size_t j = 0; j < jc.size(); ++j) {
    cplx acc{};
    for (std::size_t l = 0; l < lc.size(); ++l) {
      Counts c{lc[l][0] + jc[j][0], lc[l][1] + jc[j][1], lc[l][2] + jc[j][2]};
      acc += lm[l] * q[l] * e.at(c);
    }
    out[j] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cartesian grids
// ---------------------------------------------------------------------------

/// Node-centred uniform grid: node (i,j,k) sits at lo + (i,j,k)·h.
struct GridGeometry {
  std::array<std::size_t, 3> dims{2, 2, 2};
  Point3 lo{-1.0, -1.0, -1.0};
  Point3 hi{1.0, 1.0, 1.0};

  GridGeometry() = default;
  GridGeometry(std::array<std::size_t, 3> d, Point3 lo_, Point3 hi_) : dims(d), lo(lo_), hi(hi_) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (dims[a] < 2) throw ArgumentError("grid needs at least 2 nodes per axis");
      if (!(hi[a] > lo[a])) throw ArgumentError("degenerate bounding box");
    }
  }
  static GridGeometry cube(std::size_t n, double half_width) {
    return GridGeometry({n, n, n}, {-half_width, -half_width, -half_width}, {half_width, half_width, half_width});
  }

  std::size_t node_count() const { return dims[0] * dims[1] * dims[2]; }
  double spacing(std::size_t axis) const { return (hi[axis] - lo[axis]) / static_cast<double>(dims[axis] - 1); }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + dims[0] * (j + dims[1] * k); }
  std::array<std::size_t, 3> ijk(std::size_t n) const {
    return {n % dims[0], (n / dims[0]) % dims[1], n / (dims[0] * dims[1])};
  }
  Point3 node(std::size_t i, std::size_t j, std::size_t k) const {
    return {lo.x1 + static_cast<double>(i) * spacing(0), lo.x2 + static_cast<double>(j) * spacing(1),
            lo.x3 + static_cast<double>(k) * spacing(2)};
  }
  Point3 node(std::size_t n) const {
    auto c = ijk(n);
    return node(c[0], c[1], c[2]);
  }
  bool interior(std::size_t n, std::size_t margin) const {
    auto c = ijk(n);
    for (std::size_t a = 0; a < 3; ++a)
      if (c[a] < margin || c[a] + margin >= dims[a]) return false;
    return true;
  }
  /// The sub-grid obtained by dropping `margin` nodes on every face.
  GridGeometry shrunk(std::size_t margin) const {
    std::array<std::size_t, 3> d{};
    Point3 l = lo, h = hi;
    for (std::size_t a = 0; a < 3; ++a) {
      if (dims[a] < 2 * margin + 2) throw ArgumentError("grid too small to shrink");
      d[a] = dims[a] - 2 * margin;
      l[a] = lo[a] + static_cast<double>(margin) * spacing(a);
      h[a] = hi[a] - static_cast<double>(margin) * spacing(a);
    }
    return GridGeometry(d, l, h);
  }
  /// Same dims and a bounding box equal up to rounding (shrinking twice by one
  /// node and once by two may differ in the last bits).
  friend bool operator==(const GridGeometry& a, const GridGeometry& b) {
    if (a.dims != b.dims) return false;
    for (std::size_t i = 0; i < 3; ++i) {
      double tol = 1e-12 * std::max(1.0, std::abs(a.hi[i] - a.lo[i]));
      if (std::abs(a.lo[i] - b.lo[i]) > tol || std::abs(a.hi[i] - b.hi[i]) > tol) return false;
    }
    return true;
  }
};

/// A symmetric rank-m tensor per grid node. Storage is component-major, then
/// x-fastest over nodes.
class SymTensorGridField {
public:
  SymTensorGridField() = default;
  SymTensorGridField(int rank, GridGeometry geom)
      : rank_(rank), geom_(geom), data_(sym_size(rank) * geom.node_count(), cplx{}) {
    if (rank < 0) throw ArgumentError("tensor rank must be nonnegative");
  }
  SymTensorGridField(int rank, GridGeometry geom, std::vector<cplx> data)
      : rank_(rank), geom_(geom), data_(std::move(data)) {
    if (data_.size() != sym_size(rank) * geom.node_count()) throw ArgumentError("data length mismatch");
  }

  /// Samples fn(x) -> SymTensor of the given rank at every node.
  template <class Fn>
  static SymTensorGridField sample(int rank, const GridGeometry& geom, Fn&& fn) {
    SymTensorGridField f(rank, geom);
    for (std::size_t n = 0; n < geom.node_count(); ++n) f.set(n, fn(geom.node(n)));
    return f;
  }

  int rank() const { return rank_; }
  const GridGeometry& geometry() const { return geom_; }
  std::size_t components() const { return sym_size(rank_); }
  std::size_t nodes() const { return geom_.node_count(); }

  cplx& operator()(std::size_t comp, std::size_t node) { return data_[comp * nodes() + node]; }
  const cplx& operator()(std::size_t comp, std::size_t node) const { return data_[comp * nodes() + node]; }

  SymTensor at(std::size_t node) const {
    SymTensor t(rank_);
    for (std::size_t c = 0; c < components(); ++c) t[c] = (*this)(c, node);
    return t;
  }
  void set(std::size_t node, const SymTensor& t) {
    if (t.rank() != rank_) throw ArgumentError("node tensor rank mismatch");
    for (std::size_t c = 0; c < components(); ++c) (*this)(c, node) = t[c];
  }

  const std::vector<cplx>& data() const { return data_; }
  std::vector<cplx>& data() { return data_; }

  SymTensorGridField& operator+=(const SymTensorGridField& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  SymTensorGridField& operator-=(const SymTensorGridField& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  SymTensorGridField& operator*=(cplx s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend SymTensorGridField operator+(SymTensorGridField a, const SymTensorGridField& b) { return a += b; }
  friend SymTensorGridField operator-(SymTensorGridField a, const SymTensorGridField& b) { return a -= b; }
  friend SymTensorGridField operator*(cplx s, SymTensorGridField a) { return a *= s; }

private:
  void check_same(const SymTensorGridField& o) const {
    if (o.rank_ != rank_ || !(o.geom_ == geom_)) throw ArgumentError("grid fields differ in rank or geometry");
  }

  int rank_ = 0;
  GridGeometry geom_{};
  std::vector<cplx> data_;
};

namespace detail {

/// ∂/∂x^axis at a node with step stride·h: central where the stencil fits,
/// second-order one-sided otherwise.
inline cplx axis_derivative(const SymTensorGridField& f, std::size_t comp, std::size_t node, std::size_t axis,
                            std::size_t stride) {
  const auto& g = f.geometry();
  auto c = g.ijk(node);
  std::size_t n = g.dims[axis];
  std::size_t step = axis == 0 ? 1 : (axis == 1 ? g.dims[0] : g.dims[0] * g.dims[1]);
  std::size_t s = stride;
  double h = g.spacing(axis) * static_cast<double>(s);
  std::size_t i = c[axis];
  if (i >= s && i + s < n) return (f(comp, node + s * step) - f(comp, node - s * step)) / (2.0 * h);
  if (i + s < n)  // forward
    return (-3.0 * f(comp, node) + 4.0 * f(comp, node + s * step) - f(comp, node + 2 * s * step)) / (2.0 * h);
  return (3.0 * f(comp, node) - 4.0 * f(comp, node - s * step) + f(comp, node - 2 * s * step)) / (2.0 * h);
}

} // namespace detail

/// (δw)_{j1…j_{m−1}} = ∂w_{j1…j_{m−1}p}/∂x^p. `stride` > 1 uses the same
/// stencils with step stride·h; Richardson sweeps use it to vary the step on
/// a fixed grid.
inline SymTensorGridField divergence(const SymTensorGridField& f, std::size_t stride = 1) {
  if (f.rank() < 1) throw ArgumentError("divergence of a rank-0 field is undefined");
  const auto& g = f.geometry();
  for (std::size_t a = 0; a < 3; ++a)
    if (g.dims[a] < 2 * stride + 1) throw ArgumentError("divergence needs at least 2*stride+1 nodes per axis");
  int out_rank = f.rank() - 1;
  SymTensorGridField out(out_rank, g);
  const auto& jc = sym_counts(out_rank);
  for (std::size_t j = 0; j < jc.size(); ++j) {
    std::array<std::size_t, 3> in_comp{};
    for (std::size_t p = 0; p < 3; ++p) {
      Counts c = jc[j];
      ++c[p];
      in_comp[p] = sym_position(c);
    }
    for (std::size_t n = 0; n < g.node_count(); ++n) {
      cplx acc{};
      for (std::size_t p = 0; p < 3; ++p) acc += detail::axis_derivative(f, in_comp[p], n, p, stride);
      out(j, n) = acc;
    }
  }
  return out;
}

/// 7-point Laplacian of a rank-0 field, returned on the grid shrunk by one
/// node per face.
inline SymTensorGridField laplacian(const SymTensorGridField& f) {
  if (f.rank() != 0) throw ArgumentError("laplacian expects a scalar field");
  const auto& g = f.geometry();
  GridGeometry inner = g.shrunk(1);
  SymTensorGridField out(0, inner);
  std::array<double, 3> ih2{};
  for (std::size_t a = 0; a < 3; ++a) ih2[a] = 1.0 / (g.spacing(a) * g.spacing(a));
  const std::size_t sx = 1, sy = g.dims[0], sz = g.dims[0] * g.dims[1];
  for (std::size_t n = 0; n < inner.node_count(); ++n) {
    auto c = inner.ijk(n);
    std::size_t m = g.index(c[0] + 1, c[1] + 1, c[2] + 1);
    cplx v = f(0, m);
    out(0, n) = (f(0, m + sx) + f(0, m - sx) - 2.0 * v) * ih2[0] + (f(0, m + sy) + f(0, m - sy) - 2.0 * v) * ih2[1] +
                (f(0, m + sz) + f(0, m - sz) - 2.0 * v) * ih2[2];
  }
  return out;
}

/// Restriction of a field to the sub-grid dropping `margin` nodes per face.
inline SymTensorGridField restrict_interior(const SymTensorGridField& f, std::size_t margin) {
  const auto& g = f.geometry();
  GridGeometry inner = g.shrunk(margin);
  SymTensorGridField out(f.rank(), inner);
  for (std::size_t n = 0; n < inner.node_count(); ++n) {
    auto c = inner.ijk(n);
    std::size_t m = g.index(c[0] + margin, c[1] + margin, c[2] + margin);
    for (std::size_t comp = 0; comp < f.components(); ++comp) out(comp, n) = f(comp, m);
  }
  return out;
}

} // namespace artkit
