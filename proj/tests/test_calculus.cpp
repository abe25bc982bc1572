#include <gtest/gtest.h>

#include <random>

#include "artkit/calculus.hpp"

using namespace artkit;

namespace {

std::mt19937_64 rng(99);

Direction rand_dir() {
  std::normal_distribution<double> n;
  return Direction(Vec3{n(rng), n(rng), n(rng)});
}

Point3 rand_point(double r) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 v{n(rng), n(rng), n(rng)};
  return (r * std::cbrt(u(rng)) / norm(v)) * v;
}

double hermite(int n, double u) {
  double h0 = 1.0, h1 = 2.0 * u;
  if (n == 0) return h0;
  for (int i = 1; i < n; ++i) {
    double h2 = 2.0 * u * h1 - 2.0 * i * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

// exp(−|x − c|²/w²) and its j-th derivative along ξ:
// d^j/dτ^j g(x + τξ) = (−1)^j H_j(b/w) g(x) / w^j, b = ⟨ξ, x − c⟩
struct Gauss {
  Point3 c;
  double w;
  double operator()(const Point3& x) const { return std::exp(-dot(x - c, x - c) / (w * w)); }
  double dir(int j, const Point3& x, const Vec3& v) const {
    double b = dot(v, x - c);
    return (j % 2 ? -1.0 : 1.0) * hermite(j, b / w) / std::pow(w, j) * (*this)(x);
  }
};

// exp(−((t − t0)/s)²) and its time derivatives
struct Pulse {
  double t0, s;
  double operator()(double t) const { return std::exp(-std::pow((t - t0) / s, 2)); }
  double d(int j, double t) const { return (j % 2 ? -1.0 : 1.0) * hermite(j, (t - t0) / s) / std::pow(s, j) * (*this)(t); }
};

double binom(int n, int j) { return std::tgamma(n + 1) / (std::tgamma(j + 1) * std::tgamma(n - j + 1)); }

const AbsorptionSpec kAlpha = AbsorptionSpec::constant(cplx(0.5, 0.3));
const AbsorptionSpec kZero = AbsorptionSpec::constant(0.0);

RayCheckSetup gaussian_setup(std::size_t n = 16) {
  RayCheckSetup c{PhaseField::gaussian({0.05, -0.03, 0.02}, 0.15), kAlpha, {}, {}, {}};
  SampleSpec ss;
  ss.count = n;
  ss.target = {0.05, -0.03, 0.02};
  c.samples = make_samples(ss, BallDomain{});
  c.steps = {1e-3, 1e-3, 1e-3};
  return c;
}

RayCheckSetup pulse_setup(std::size_t n = 12, double fraction = 0.8) {
  RayCheckSetup c{PhaseField::separable_time(Blob::gaussian({0.05, -0.03, 0.02}, 0.15),
                                             TemporalProfile::gaussian_pulse(0.6, 0.1)),
                  kAlpha, {}, {}, {}};
  SampleSpec ss;
  ss.count = n;
  ss.fraction = fraction;
  ss.target = {0.05, -0.03, 0.02};
  ss.t_lo = 0.6;
  ss.t_hi = 1.4;
  c.samples = make_samples(ss, BallDomain{});
  c.steps = {1e-3, 2e-3, 2e-3};
  return c;
}

} // namespace

// ---------------------------------------------------------------------------
// transport operators

TEST(ApplyH, ExactOnLinearAndQuadratic) {
  FDSpec fd;
  fd.h_fd = 0.01;
  for (int i = 0; i < 10; ++i) {
    Point3 x = rand_point(0.8);
    Direction xi = rand_dir();
    auto lin = [](const Point3& y, const Direction& d) { return cplx(dot(d.vec(), y)); };
    auto quad = [](const Point3& y, const Direction&) { return cplx(dot(y, y)); };
    EXPECT_NEAR(std::abs(apply_H(lin, x, xi, fd) - 1.0), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(apply_H(quad, x, xi, fd) - 2.0 * dot(xi.vec(), x)), 0.0, 1e-12);
  }
}

TEST(ApplyH, GaussianSecondOrderRichardson) {
  Gauss g{{0.1, 0.0, -0.1}, 0.3};
  auto psi = [&](const Point3& y, const Direction&) { return cplx(g(y)); };
  for (int i = 0; i < 10; ++i) {
    Point3 x = rand_point(0.5);
    Direction xi = rand_dir();
    double exact = g.dir(1, x, xi.vec());
    FDSpec a, b;
    a.h_fd = 2e-3;
    b.h_fd = 1e-3;
    double ea = std::abs(apply_H(psi, x, xi, a) - exact), eb = std::abs(apply_H(psi, x, xi, b) - exact);
    // C from the coarse run; the fine run must sit under C·h² (with slack)
    double C = ea / (a.h_fd * a.h_fd);
    EXPECT_LE(eb, 1.1 * C * b.h_fd * b.h_fd + 1e-12);
    if (ea > 1e-9) {
      EXPECT_NEAR(ea / eb, 4.0, 0.2);
    }
  }
}

TEST(ApplyL, Trivial) {
  Point3 x = rand_point(0.5);
  Direction xi = rand_dir();
  auto lin = [](const Point3& y, const Direction& d) { return cplx(dot(d.vec(), y)); };
  EXPECT_NEAR(std::abs(apply_L(1, lin, x, xi, kZero) - 1.0), 0.0, 1e-10);
  auto one = [](const Point3&, const Direction&) { return cplx(1.0); };
  cplx c(0.7, -0.4);
  EXPECT_NEAR(std::abs(apply_L(2, one, x, xi, AbsorptionSpec::constant(c)) - c * c), 0.0, 1e-12);
  EXPECT_THROW(apply_L(0, one, x, xi, kZero), ArgumentError);
}

TEST(ApplyL, OrderThreeOnGaussianAgainstSymbolic) {
  // L_3 = ½(H + α)³ for constant α
  Gauss g{{0.0, 0.1, 0.0}, 0.35};
  auto psi = [&](const Point3& y, const Direction&) { return cplx(g(y)); };
  const cplx al = kAlpha.base();
  for (int i = 0; i < 6; ++i) {
    Point3 x = rand_point(0.5);
    Direction xi = rand_dir();
    cplx exact{};
    for (int j = 0; j <= 3; ++j) exact += binom(3, j) * std::pow(al, 3 - j) * g.dir(j, x, xi.vec());
    exact *= 0.5;
    FDSpec a, b;
    a.h_fd = 4e-3;
    b.h_fd = 2e-3;
    double ea = std::abs(apply_L(3, psi, x, xi, kAlpha, a) - exact);
    double eb = std::abs(apply_L(3, psi, x, xi, kAlpha, b) - exact);
    EXPECT_LE(eb, 1.2 * ea / 4.0 + 1e-8);
    EXPECT_LT(eb, 1e-3 * std::max(1.0, std::abs(exact)));
  }
}

TEST(ApplyLt, TimeIndependentReducesToTransportNesting) {
  Gauss g{{0.0, 0.1, 0.0}, 0.35};
  auto psi_t = [&](double, const Point3& y, const Direction&) { return cplx(g(y)); };
  auto psi = [&](const Point3& y, const Direction&) { return cplx(g(y)); };
  Point3 x = rand_point(0.5);
  Direction xi = rand_dir();
  FDSpec fd;
  fd.h_fd = 2e-3;
  EXPECT_NEAR(std::abs(apply_Lt(1, psi_t, 0.3, x, xi, kAlpha, fd) - apply_L(1, psi, x, xi, kAlpha, fd)), 0.0, 1e-12);
  // verbatim form carries no 1/(k−1) factors: L^t_3 = (k−1)!·L_3 = 2·L_3 here
  cplx lt3 = apply_Lt(3, psi_t, 0.3, x, xi, kAlpha, fd);
  cplx l3 = apply_L(3, psi, x, xi, kAlpha, fd);
  EXPECT_NEAR(std::abs(lt3 - 2.0 * l3), 0.0, 1e-8 * std::abs(lt3));
  EXPECT_NEAR(std::abs(apply_Lt(3, psi_t, 0.3, x, xi, kAlpha, fd, LtForm::normalized) - l3), 0.0, 1e-8 * std::abs(l3));
}

TEST(ApplyLt, TimeRamp) {
  auto psi = [](double t, const Point3&, const Direction&) { return cplx(t); };
  EXPECT_NEAR(std::abs(apply_Lt(1, psi, 0.7, rand_point(0.5), rand_dir(), kZero) - 1.0), 0.0, 1e-12);
}

TEST(ApplyLt, SpaceTimeGaussianAgainstSymbolic) {
  // (∂t + H + α)² ψ with ψ = p(t)g(x): expand the square, everything commutes
  Gauss g{{0.05, 0.0, 0.0}, 0.3};
  Pulse p{0.5, 0.2};
  auto psi = [&](double t, const Point3& y, const Direction&) { return cplx(p(t) * g(y)); };
  const cplx al = kAlpha.base();
  for (int i = 0; i < 6; ++i) {
    Point3 x = rand_point(0.4);
    Direction xi = rand_dir();
    double t = 0.3 + 0.05 * i;
    const Vec3 v = xi.vec();
    cplx exact = p.d(2, t) * g(x) + p(t) * g.dir(2, x, v) + al * al * p(t) * g(x) + 2.0 * p.d(1, t) * g.dir(1, x, v) +
                 2.0 * al * p.d(1, t) * g(x) + 2.0 * al * p(t) * g.dir(1, x, v);
    FDSpec a, b;
    a.h_fd = a.h_t = 4e-3;
    b.h_fd = b.h_t = 2e-3;
    double ea = std::abs(apply_Lt(2, psi, t, x, xi, kAlpha, a) - exact);
    double eb = std::abs(apply_Lt(2, psi, t, x, xi, kAlpha, b) - exact);
    EXPECT_LE(eb, 1.2 * ea / 4.0 + 1e-8);
    EXPECT_LT(eb, 1e-3 * std::max(1.0, std::abs(exact)));
  }
}

// ---------------------------------------------------------------------------
// sample sets and fitted tolerances

TEST(Samples, DeterministicAndInside) {
  SampleSpec s;
  s.count = 40;
  s.fraction = 0.5;
  auto a = make_samples(s, BallDomain{});
  auto b = make_samples(s, BallDomain{});
  ASSERT_EQ(a.size(), 40u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].xi.vec(), b[i].xi.vec());
    EXPECT_LE(norm(a[i].x), 0.5 + 1e-15);
  }
  s.seed = 5;
  auto c = make_samples(s, BallDomain{});
  EXPECT_NE(a[0].x, c[0].x);
}

TEST(FittedCheck, ExactModelGivesMatchingEstimate) {
  // r(h) = C·h² per sample: estimate of the error at h is exactly C·h²
  auto fn = [](const StepSet& s) {
    ResidualSet r;
    r.r = {cplx(3.0 * s.h_fd * s.h_fd), cplx(-1.0 * s.h_fd * s.h_fd)};
    r.scale = 1.0;
    return r;
  };
  auto fr = fitted_check(fn, StepSet{1e-3, 1e-2, 1e-3}, kVaryFd);
  EXPECT_NEAR(fr.est_fd, 3e-4, 1e-15);
  EXPECT_NEAR(fr.fd_order, 2.0, 1e-12);
  EXPECT_TRUE(fr.pass);
  EXPECT_NEAR(fr.tolerance, 6e-4 + 64 * std::numeric_limits<double>::epsilon(), 1e-15);
}

TEST(FittedCheck, StepIndependentResidualFails) {
  auto fn = [](const StepSet&) {
    ResidualSet r;
    r.r = {cplx(0.1)};
    r.scale = 1.0;
    return r;
  };
  EXPECT_FALSE(fitted_check(fn, StepSet{}, kVaryRay | kVaryFd).pass);
}

// ---------------------------------------------------------------------------
// recurrence checks

TEST(Lemma21, ZeroSourceGivesZeroResidual) {
  auto c = gaussian_setup(8);
  c.f = PhaseField::zero();
  auto r = verify_lemma_2_1(1, c);
  EXPECT_EQ(r.residual_max, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(Lemma21, GaussianPassesWithSecondOrderFd) {
  auto c = gaussian_setup();
  for (int k = 1; k <= 2; ++k) {
    auto r = verify_lemma_2_1(k, c);
    EXPECT_TRUE(r.pass) << k << " " << r.residual_max << " > " << r.tolerance;
    EXPECT_NEAR(r.order, 2.0, 0.1) << k;
    EXPECT_EQ(r.identity, "lemma2.1");
  }
  EXPECT_THROW(verify_lemma_2_1(0, c), ArgumentError);
}

TEST(Lemma21, HalvingFdStepQuartersResidual) {
  auto c = gaussian_setup(8);
  c.steps.h_ray = 5e-4;
  auto r1 = verify_lemma_2_1(1, c);
  c.steps.h_fd /= 2.0;
  auto r2 = verify_lemma_2_1(1, c);
  EXPECT_NEAR(r1.residual_max / r2.residual_max, 4.0, 0.4);
}

TEST(Lemma21, WrongRightHandSideIsCaught) {
  // with the coefficient k dropped the residual is O(1), far above tolerance
  auto c = gaussian_setup(8);
  auto fr = fitted_check(
      [&](const StepSet& st) {
        auto rs = transport_residuals(c, 2, st);
        for (std::size_t i = 0; i < c.samples.size(); ++i)
          rs.r[i] += cplx(1.0) * art_k(1, c.f, c.alpha, c.samples[i].x, c.samples[i].xi, RayQuadSpec(st.h_ray));
        return rs;
      },
      c.steps, kVaryRay | kVaryFd);
  EXPECT_FALSE(fr.pass);
}

TEST(Lemma22, TransportSourceIdentity) {
  auto r = verify_lemma_2_2(gaussian_setup());
  EXPECT_TRUE(r.pass) << r.residual_max << " > " << r.tolerance;
}

TEST(Cor23, TensorSourceAndContraction) {
  SymTensor c1(2);
  c1.at({2, 0, 0}) = 1.0;
  c1.at({0, 1, 1}) = cplx(0.3, -0.2);
  TensorFieldSpec w(2);
  w.add(c1, Blob::gaussian({0.05, -0.03, 0.02}, 0.15));
  auto c = gaussian_setup(8);
  c.f = PhaseField::tensor_generated(w);
  auto rows = verify_corollary_2_3(c);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.identity << " " << r.residual_max << " > " << r.tolerance;
  EXPECT_EQ(rows[1].tolerance, 1e-10);
  EXPECT_THROW(verify_corollary_2_3(gaussian_setup(2)), ArgumentError);
}

TEST(Thm24, HigherOrderEquation) {
  auto c = gaussian_setup(12);
  c.steps.h_fd = 2e-3;
  for (int k = 0; k <= 2; ++k) {
    auto r = verify_theorem_2_4(k, c);
    EXPECT_TRUE(r.pass) << k << " " << r.residual_max << " > " << r.tolerance;
  }
}

TEST(Lemma25, NonStationaryRecurrence) {
  auto c = pulse_setup();
  c.steps = {1e-3, 1e-3, 1e-3};
  for (int k = 0; k <= 2; ++k) {
    auto r = verify_lemma_2_5(k, c);
    EXPECT_TRUE(r.pass) << k << " " << r.residual_max << " > " << r.tolerance;
  }
}

TEST(Thm26, NormalizedFormPassesVerbatimFormMisses) {
  auto c = pulse_setup();
  auto audit = pulse_setup(12, 0.1);
  for (int k = 0; k <= 1; ++k) {
    auto rows = verify_theorem_2_6(k, c, &audit);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_TRUE(rows[0].pass) << k;
  }
  auto rows = verify_theorem_2_6(2, c, &audit);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].pass) << rows[0].residual_max << " > " << rows[0].tolerance;
  EXPECT_EQ(rows[1].identity, "thm2.6:verbatim-audit");
  EXPECT_TRUE(rows[1].pass) << rows[1].residual_max << " vs " << rows[1].tolerance;
}

// ---------------------------------------------------------------------------
// sweep

TEST(Sweep, ZeroDataGivesExactZero) {
  auto sw = sweep_transport(PhaseField::zero(), kAlpha, GridGeometry::cube(9, 1.0), make_sphere_grid(4, 8), 0.02);
  for (const auto& v : sw.u) EXPECT_EQ(v, cplx(0.0));
}

TEST(Sweep, IsLinearInSource) {
  auto g = GridGeometry::cube(7, 0.9);
  auto sg = make_sphere_grid(3, 6);
  auto f = PhaseField::gaussian({0.1, 0, 0}, 0.2);
  cplx c(1.5, -0.5);
  auto a = sweep_transport(f, kAlpha, g, sg, 0.02);
  auto b = sweep_transport(f.scaled(c), kAlpha, g, sg, 0.02);
  for (std::size_t i = 0; i < a.u.size(); ++i) EXPECT_NEAR(std::abs(b.u[i] - c * a.u[i]), 0.0, 1e-13);
}

TEST(Sweep, ApproachesRayTransformAtFirstOrder) {
  auto g = GridGeometry::cube(9, 1.0);
  auto sg = make_sphere_grid(4, 8);
  auto f = PhaseField::gaussian({0.05, -0.03, 0.02}, 0.15);
  const RayQuadSpec q(2e-3);
  double gc = sweep_gap_l2(sweep_transport(f, kAlpha, g, sg, 0.02), f, kAlpha, sg, q);
  double gf = sweep_gap_l2(sweep_transport(f, kAlpha, g, sg, 0.01), f, kAlpha, sg, q);
  EXPECT_GT(gc, 0.0);
  EXPECT_NEAR(gc / gf, 2.0, 0.3);
}

TEST(Sweep, EnergyBalanceShrinksWithStep) {
  auto eps = AbsorptionSpec::constant(0.7);
  auto inflow = [](const Point3& y, const Direction& xi) { return cplx(1.0 + 0.5 * y.x1 - 0.3 * dot(y, xi.vec()), 0.2 * y.x2); };
  auto sg = make_sphere_grid(4, 8);
  double b1 = std::abs(sweep_energy_balance(eps, inflow, sg, 0.04));
  double b2 = std::abs(sweep_energy_balance(eps, inflow, sg, 0.02));
  EXPECT_LT(b2, b1 / 1.7);
  EXPECT_LT(b2, 0.05);
}

TEST(Report, CsvRow) {
  ResidualReport r;
  r.identity = "x,y";
  r.k = 2;
  r.grid = "g";
  r.residual_max = 0.5;
  r.pass = true;
  EXPECT_EQ(ResidualReport::csv_header(), "identity,k,p,n,grid,h_ray,h_fd,h_t,residual_max,residual_l2,tolerance,pass");
  EXPECT_EQ(r.csv_row(), "\"x,y\",2,0,0,g,0,0,0,0.5,0,0,pass");
  r.informational = true;
  EXPECT_EQ(r.csv_row().substr(r.csv_row().size() - 5), ",info");
}
