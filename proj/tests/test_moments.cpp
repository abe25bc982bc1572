#include <gtest/gtest.h>

#include <numbers>

#include "artkit/moments.hpp"
#include "oracles.hpp"

using namespace artkit;
constexpr double kPi = std::numbers::pi;

namespace {

const cplx kAlpha{0.4, 0.3};

SymTensorGridField sampled(const Blob& b, std::size_t n, double half) {
  return SymTensorGridField::sample(0, GridGeometry::cube(n, half), [&](const Point3& x) { return SymTensor::scalar(b(x)); });
}

MomentExpansion expansion(std::initializer_list<std::tuple<MomentTerm::Kind, int, SymbolPoly>> terms) {
  MomentExpansion e;
  for (const auto& [kind, order, poly] : terms) e[{kind, order}] = poly;
  return e;
}

} // namespace

// ---------------------------------------------------------------------------
// pointwise moments

TEST(FMoment, ScalarSourceMoments) {
  auto f = PhaseField::gaussian({0.1, 0, 0}, 0.3, cplx(2.0, -1.0));
  auto g = make_sphere_grid(8, 16);
  Point3 x{0.2, -0.1, 0.05};
  cplx fx = f(x, Vec3{0, 0, 1});
  EXPECT_NEAR(std::abs(f_moment(0, f, x, g)[0] - 4.0 * kPi * fx), 0.0, 1e-12);
  for (int p : {1, 3}) EXPECT_LT(f_moment(p, f, x, g).max_abs(), 1e-12) << p;
  auto m2 = f_moment(2, f, x, g);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      EXPECT_NEAR(std::abs(m2.component({i, j}) - (i == j ? 4.0 * kPi / 3.0 * fx : 0.0)), 0.0, 1e-12);
}

TEST(FMoment, VectorGeneratedSource) {
  TensorFieldSpec w(1);
  w.add(SymTensor::vector(1.0, cplx(0, 2), -0.5), Blob::constant(1.0));
  auto f = PhaseField::tensor_generated(w);
  auto m = f_moment(1, f, {}, make_sphere_grid(8, 16));
  EXPECT_NEAR(std::abs(m.component({0}) - 4.0 * kPi / 3.0), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(m.component({1}) - cplx(0, 8.0 * kPi / 3.0)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(m.component({2}) + 2.0 * kPi / 3.0), 0.0, 1e-12);
}

TEST(AngularMoment, RadialSourceAtCentreAgainstOracle) {
  // E_k0(0) = 4π ∫ s^k e^{−αs} g(s) ds for a centred radial source
  auto b = Blob::ball_bump({}, 0.8);
  auto f = PhaseField::ball_bump({}, 0.8);
  auto a = AbsorptionSpec::constant(kAlpha);
  auto g = make_sphere_grid(4, 8);
  for (int k = 0; k <= 3; ++k) {
    cplx ref = 4.0 * kPi *
               oracle::integrate([&](double s) { return std::pow(s, k) * std::exp(-kAlpha * s) * b(Point3{s, 0, 0}); },
                                 0.0, 1.0, 1e-14);
    EXPECT_NEAR(std::abs(angular_moment(k, 0, f, a, {}, g, RayQuadSpec(1e-3))[0] - ref), 0.0, 1e-9) << k;
    // odd ranks vanish at the centre
    EXPECT_LT(angular_moment(k, 1, f, a, {}, g, RayQuadSpec(1e-3)).max_abs(), 1e-12);
    EXPECT_LT(angular_moment(k, 3, f, a, {}, g, RayQuadSpec(1e-3)).max_abs(), 1e-12);
  }
}

TEST(AngularMoment, BackProjectionScaling) {
  auto f = PhaseField::gaussian({0.1, 0, 0}, 0.3);
  auto a = AbsorptionSpec::constant(kAlpha);
  auto g = make_sphere_grid(4, 8);
  auto u = angular_moment(1, 2, f, a, {}, g);
  auto s = angular_moment(1, 2, f, a, {}, g, {}, {}, MomentNorm::back_projection);
  for (std::size_t c = 0; c < u.size(); ++c) EXPECT_NEAR(std::abs(s[c] - u[c] / (4 * kPi * kPi)), 0.0, 1e-15);
}

TEST(MomentTable, MatchesPointwiseMoments) {
  auto f = PhaseField::ball_bump({0.03, -0.02, 0.04}, 0.9);
  auto a = AbsorptionSpec::constant(kAlpha);
  auto geom = GridGeometry::cube(5, 0.5);
  auto sg = make_sphere_grid(4, 8);
  MomentTableSpec s;
  s.kmax = 2;
  s.pmax = 2;
  MomentTable t(f, a, geom, sg, RayQuadSpec(4e-3), {}, s);
  for (std::size_t n : {std::size_t{0}, std::size_t{62}, std::size_t{124}})
    for (int k = 0; k <= 2; ++k)
      for (int p = 0; p <= 2; ++p) {
        auto ref = angular_moment(k, p, f, a, geom.node(n), sg, RayQuadSpec(4e-3));
        for (std::size_t c = 0; c < ref.size(); ++c) EXPECT_NEAR(std::abs(t.E(k, p)(c, n) - ref[c]), 0.0, 1e-12);
      }
  EXPECT_THROW(t.E(3, 0), ArgumentError);
  EXPECT_THROW(t.alpha_E(0, 0), ArgumentError);
}

// ---------------------------------------------------------------------------
// divergence relations

TEST(DivergenceRelation, ClosedFormOneStepEqualsSingleStepRhs) {
  auto f = PhaseField::ball_bump({0.03, -0.02, 0.04}, 0.9);
  auto a = AbsorptionSpec::constant(kAlpha);
  MomentTableSpec s;
  s.kmax = 2;
  s.pmax = 2;
  s.hf_max = 0;
  MomentTable t(f, a, GridGeometry::cube(5, 0.5), make_sphere_grid(3, 6), RayQuadSpec(8e-3), {}, s);
  for (int k = 0; k <= 1; ++k)
    for (int p = 0; p <= 1; ++p) {
      auto closed = thm41_rhs(1, k, p, kAlpha, t);
      auto step = divergence_rhs(k + 1, p + 1, a, t);
      for (std::size_t c = 0; c < closed.components(); ++c)
        for (std::size_t n = 0; n < closed.nodes(); ++n) EXPECT_EQ(closed(c, n), step(c, n));
    }
}

TEST(DivergenceRelation, OneStepOnSmallGrid) {
  auto f = PhaseField::ball_bump({0.03, -0.02, 0.04}, 0.9);
  auto a = AbsorptionSpec::constant(kAlpha);
  MomentTableSpec s;
  s.kmax = 1;
  s.pmax = 1;
  s.hf_max = 0;
  auto g = GridGeometry::cube(11, 0.5);
  auto sg = make_sphere_grid(6, 12);
  MomentTable fine(f, a, g, sg, RayQuadSpec(4e-3), {}, s), coarse(f, a, g, sg, RayQuadSpec(8e-3), {}, s);
  for (int k : {0, 1}) {
    auto r = moment_div_residual("one-step", k, 1, a, fine, coarse);
    EXPECT_TRUE(r.pass) << k << " " << r.residual_max << " > " << r.tolerance;
    EXPECT_EQ(r.grid, "11x11x11/S6x12");
  }
  // dropping the absorption term must fail
  auto r = moment_div_residual("wrong", 1, 1, AbsorptionSpec::constant(0.0), fine, coarse);
  EXPECT_FALSE(r.pass);
}

TEST(CoefficientAlgebra, OneStepValues) {
  for (int k = 0; k <= 3; ++k) {
    auto e = thm41_coefficients(1, k);
    EXPECT_EQ(e, expansion({{MomentTerm::moment, k, {k + 1}}, {MomentTerm::moment, k + 1, {0, -1}}}));
    EXPECT_EQ(e, compose_divergence(1, k + 1));
  }
  EXPECT_EQ(compose_divergence(1, 0), expansion({{MomentTerm::source, 0, {1}}, {MomentTerm::moment, 0, {0, -1}}}));
}

TEST(CoefficientAlgebra, ClosedFormEqualsComposition) {
  for (int n = 1; n <= 4; ++n)
    for (int k = 0; k <= 2; ++k) EXPECT_EQ(thm41_coefficients(n, k), compose_divergence(n, k + n)) << n << " " << k;
}

TEST(CoefficientAlgebra, TwoStepExpansion) {
  // δ²E_{k} = k(k−1)E_{k−2} − 2kαE_{k−1} + α²E_k
  for (int top = 2; top <= 5; ++top) {
    auto e = expansion({{MomentTerm::moment, top - 2, {top * (top - 1)}},
                        {MomentTerm::moment, top - 1, {0, -2 * top}},
                        {MomentTerm::moment, top, {0, 0, 1}}});
    EXPECT_EQ(compose_divergence(2, top), e) << top;
  }
}

TEST(CoefficientAlgebra, SourceFormAudit) {
  EXPECT_EQ(k0_coefficients(1, SourceForm::plain), k0_coefficients(1, SourceForm::with_binomial));
  for (int n = 2; n <= 5; ++n) {
    EXPECT_EQ(audit_k0_form(n), SourceForm::plain) << n;
    EXPECT_NE(k0_coefficients(n, SourceForm::with_binomial), compose_divergence(n, 0));
  }
  // n = 2 written out: (Hf)_p − α f_p + α² E_0p
  EXPECT_EQ(compose_divergence(2, 0), expansion({{MomentTerm::source, 1, {1}},
                                                 {MomentTerm::source, 0, {0, -1}},
                                                 {MomentTerm::moment, 0, {0, 0, 1}}}));
}

TEST(CoefficientAlgebra, EvalPoly) {
  EXPECT_EQ(eval_poly({1, -2, 3}, cplx(2.0, 0.0)), cplx(1 - 4 + 12));
  EXPECT_EQ(binomial(5, 2), 10);
  EXPECT_EQ(binomial(5, 6), 0);
}

// ---------------------------------------------------------------------------
// volume potentials

TEST(VolumePotential, ZeroSource) {
  auto f = SymTensorGridField(0, GridGeometry::cube(9, 1.0));
  EXPECT_EQ(volume_potential(2, f, kAlpha, {}), cplx(0.0));
  EXPECT_THROW(volume_potential(0, f, kAlpha, {}), ArgumentError);
  EXPECT_THROW(volume_potential(1, SymTensorGridField(1, GridGeometry::cube(9, 1.0)), kAlpha, {}), ArgumentError);
}

TEST(VolumePotential, SingularCellWeight) {
  // ∫ over the equal-volume ball of 1/r is 2π r_eq²
  double h = 0.1, v = h * h * h;
  double r_eq = std::cbrt(3.0 * v / (4.0 * kPi));
  EXPECT_NEAR(singular_cell_weight(v) * v, 2.0 * kPi * r_eq * r_eq, 1e-15);
}

TEST(VolumePotential, CentreValueAgainstRadialOracle) {
  // E_k0(0) = 4π ∫ r^k e^{−αr} g(r) dr; second order in the grid step
  auto b = Blob::ball_bump({}, 0.9);
  for (int k : {1, 2}) {
    cplx ref =
        4.0 * kPi * oracle::integrate([&](double r) { return std::pow(r, k) * std::exp(-kAlpha * r) * b(Point3{r, 0, 0}); },
                                      0.0, 0.9, 1e-14);
    double e17 = std::abs(volume_potential(k, sampled(b, 17, 1.0), kAlpha, {}) - ref);
    double e33 = std::abs(volume_potential(k, sampled(b, 33, 1.0), kAlpha, {}) - ref);
    EXPECT_LT(e33, 1e-2 * std::abs(ref)) << k;
    EXPECT_GT(e17 / e33, 3.0) << k;
  }
}

TEST(VolumePotential, GridMatchesPointwise) {
  auto f = sampled(Blob::ball_bump({0.1, 0, 0}, 0.7), 9, 1.0);
  auto grid = volume_potential_grid(1, f, kAlpha);
  const auto& g = f.geometry();
  for (std::size_t n = 0; n < g.node_count(); n += 37)
    EXPECT_NEAR(std::abs(grid(0, n) - volume_potential(1, f, kAlpha, g.node(n))), 0.0, 1e-13);
}

TEST(VolumePotential, FarFieldMatchesAngularMoment) {
  // small bump away from the target: both routes see the same lump
  auto b = Blob::ball_bump({0.4, 0.1, 0.0}, 0.2);
  auto f = sampled(b, 41, 1.0);
  Point3 x{-0.5, 0.0, 0.0};
  auto a = AbsorptionSpec::constant(cplx(0.5, 0.0));
  cplx vp = volume_potential(2, f, cplx(0.5, 0.0), x);
  cplx am = angular_moment(2, 0, PhaseField::ball_bump(b.center, b.width), a, x, make_sphere_grid(48, 96), RayQuadSpec(1e-3))[0];
  EXPECT_NEAR(std::abs(vp - am) / std::abs(am), 0.0, 1e-2);
}

TEST(VolumePotential, CrossRouteConsistency) {
  auto b = Blob::ball_bump({0.03, -0.02, 0.04}, 0.9);
  for (int k : {1, 2}) {
    auto r = cross_route_check(k, b, kAlpha, 17, 1.0, make_sphere_grid(8, 16), make_sphere_grid(16, 32), RayQuadSpec(4e-3), 4);
    EXPECT_EQ(r.samples, 4u);
    EXPECT_TRUE(r.pass) << k << " " << r.residual_max << " > " << r.tolerance;
  }
  EXPECT_THROW(cross_route_check(1, b, kAlpha, 16, 0.5, make_sphere_grid(8, 16), make_sphere_grid(16, 32), {}),
               ArgumentError);
}

TEST(Helmholtz, ResidualSmallOnFineGrid) {
  auto b = Blob::ball_bump({0.03, -0.02, 0.04}, 0.9);
  auto f = sampled(b, 25, 1.0);
  double kappa = 2.0;
  auto e10 = volume_potential_grid(1, f, cplx(0.0, kappa));
  double rel = helmholtz_relative_residual(e10, f, kappa);
  EXPECT_LT(rel, 0.1);
  // the wrong sign of κ² is far off
  EXPECT_GT(helmholtz_relative_residual(e10, f, 0.0), 2.0 * rel);
  auto field = helmholtz_residual_field(e10, f, kappa);
  EXPECT_EQ(field.geometry().dims[0], 23u);
}

TEST(Helmholtz, ProbeBlockSecondOrder) {
  auto b = Blob::ball_bump({0.03, -0.02, 0.04}, 0.9);
  double c = helmholtz_probe_residual(sampled(b, 17, 1.0), 2.0, 1);
  double f = helmholtz_probe_residual(sampled(b, 33, 1.0), 2.0, 2);
  double f1 = helmholtz_probe_residual(sampled(b, 33, 1.0), 2.0, 1);
  // stride 2 on 33 nodes probes the same physical block as stride 1 on 17
  EXPECT_NEAR(std::log2(c / f), 2.0, 0.25);
  EXPECT_LT(f1, c);
  EXPECT_THROW(helmholtz_probe_residual(sampled(b, 16, 1.0), 2.0, 1), ArgumentError);
}

// ---------------------------------------------------------------------------
// radial kernels

TEST(RadialKernel, DisplayedTriples) {
  const cplx al(0.2, 0.5);
  struct Want {
    int k;
    double lower;
    double middle;
  };
  for (Want w : {Want{2, 0, -2}, Want{3, 2, -4}, Want{4, 6, -6}, Want{5, 12, -8}}) {
    auto c = g_radial_apply(w.k, al);
    EXPECT_EQ(c.a_km2(), cplx(w.lower)) << w.k;
    EXPECT_EQ(c.a_km1(), w.middle * al) << w.k;
    EXPECT_EQ(c.a_k(), al * al);
  }
  EXPECT_THROW(g_radial_apply(0, al), ArgumentError);
}

TEST(RadialKernel, FiniteDifferenceCheck) {
  std::vector<double> radii;
  for (int i = 0; i < 20; ++i) radii.push_back(0.2 + 0.1 * i);
  for (int k = 1; k <= 6; ++k) EXPECT_LT(g_radial_check(k, cplx(0.2, 0.5), radii, 1e-4), 1e-6) << k;
  // perturbing a coefficient is visible: compare against a wrong α in the check
  GKernel G(3, cplx(0.2, 0.5));
  EXPECT_NEAR(std::abs(G(1.0) - std::exp(-cplx(0.2, 0.5))), 0.0, 1e-15);
  EXPECT_THROW(GKernel(2, 0.0), ArgumentError);
}

// ---------------------------------------------------------------------------
// reconstruction

TEST(Reconstruct, ZeroInputZeroOutput) {
  auto est = reconstruct_prop44(SymTensorGridField(0, GridGeometry::cube(9, 1.0)), cplx(0.6, 0.2));
  EXPECT_EQ(est.geometry().dims[0], 5u);
  for (std::size_t n = 0; n < est.nodes(); ++n) EXPECT_EQ(est(0, n), cplx(0.0));
  EXPECT_THROW(reconstruct_prop44(SymTensorGridField(0, GridGeometry::cube(9, 1.0)), 0.0), ArgumentError);
}

TEST(Reconstruct, KernelIsHomogeneousAwayFromOrigin) {
  // E_20 = e^{−α|x|}: the estimate at a fixed node off the origin is pure
  // discretization error and falls like h²
  const cplx al(0.6, 0.2);
  auto est_at = [&](std::size_t n) {
    auto g = GridGeometry::cube(n, 1.0);
    auto e = SymTensorGridField::sample(0, g, [&](const Point3& x) { return SymTensor::scalar(std::exp(-al * norm(x))); });
    auto est = reconstruct_prop44(e, al);
    const auto& eg = est.geometry();
    double h = g.spacing(0);
    auto idx = [&](double c) { return static_cast<std::size_t>(std::lround((c - eg.lo.x1) / h)); };
    return est(0, eg.index(idx(0.6), idx(0.4), idx(0.2)));
  };
  cplx c = est_at(21), f = est_at(41);
  EXPECT_NEAR(std::abs(c) / std::abs(f), 4.0, 0.6);
}

TEST(Reconstruct, RoundTripOnBump) {
  const cplx al(0.6, 0.2);
  auto b = Blob::ball_bump({0.03, -0.02, 0.04}, 0.9);
  auto f = sampled(b, 25, 1.0);
  auto est = reconstruct_prop44(volume_potential_grid(2, f, al), al);
  EXPECT_LT(relative_l2_error(est, f), 0.2);
  double c = prop44_probe_error(sampled(b, 17, 1.0), al, 1);
  double fi = prop44_probe_error(sampled(b, 33, 1.0), al, 2);
  EXPECT_NEAR(std::log2(c / fi), 2.0, 0.25);
  EXPECT_THROW(prop44_probe_error(f, 0.0), ArgumentError);
}
