#pragma once

// Named identity checks with their default phantoms, steps and grids. The CLI
// `verify` subcommand and the acceptance runner both go through here.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "artkit/art.hpp"
#include "artkit/calculus.hpp"
#include "artkit/errors.hpp"
#include "artkit/fields.hpp"
#include "artkit/geometry.hpp"
#include "artkit/moments.hpp"
#include "artkit/tensor.hpp"

namespace artkit {

struct SuiteOptions {
  bool quick = false;
  std::uint64_t seed = 0;
  std::optional<int> k, p, n;
  std::optional<cplx> alpha;
  std::optional<std::size_t> samples;
};

/// Sizes that differ between the quick and the full preset.
struct SuitePreset {
  std::size_t samples;
  std::size_t moment_grid;  ///< nodes per axis of the moment grid on [−½, ½]³
  int n_polar, n_azimuth;
  double moment_h_ray;
  double sweep_step;  ///< finer of the two sweep steps

  static SuitePreset quick() { return {16, 17, 8, 16, 4e-3, 0.01}; }
  static SuitePreset full() { return {64, 25, 12, 24, 2e-3, 0.005}; }
};

inline const std::vector<std::string>& identity_registry() {
  static const std::vector<std::string> names{"lemma2.1", "lemma2.2", "cor2.3",  "thm2.4", "lemma2.5", "thm2.6",
                                              "sweep3.1", "eq4.6",    "eq4.7",   "eq4.10", "eq4.11",   "thm4.1",
                                              "cor4.2",   "thm4.3",   "eq4.14", "helmholtz", "prop4.4"};
  return names;
}

inline bool is_registered_identity(const std::string& name) {
  const auto& r = identity_registry();
  return std::find(r.begin(), r.end(), name) != r.end();
}

/// True if no report counts as a failure (informational rows are ignored).
inline bool all_pass(const std::vector<ResidualReport>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const ResidualReport& r) { return r.informational || r.pass; });
}

namespace suite_defaults {
inline constexpr Point3 kRayCenter{0.05, -0.03, 0.02};
inline constexpr double kRayWidth = 0.15;
inline const cplx kRayAlpha{0.5, 0.3};
inline constexpr Point3 kBumpCenter{0.03, -0.02, 0.04};
inline constexpr double kBumpRadius = 0.9;
inline const cplx kMomentAlpha{0.4, 0.3};
inline const cplx kReconAlpha{0.6, 0.2};
inline const cplx kRadialAlpha{0.2, 0.5};
inline constexpr double kKappa = 2.0;
} // namespace suite_defaults

/// A row whose verdict is a plain comparison residual ≤ tolerance.
inline ResidualReport plain_row(std::string name, int k, int p, int n, std::string grid, double residual,
                                double tolerance) {
  ResidualReport r;
  r.identity = std::move(name);
  r.k = k;
  r.p = p;
  r.n = n;
  r.grid = std::move(grid);
  r.residual_max = residual;
  r.residual_l2 = residual;
  r.tolerance = tolerance;
  r.pass = residual <= tolerance;
  return r;
}

class VerifySuite {
public:
  explicit VerifySuite(SuiteOptions o) : opt_(o), preset_(o.quick ? SuitePreset::quick() : SuitePreset::full()) {
    if (opt_.samples) preset_.samples = *opt_.samples;
  }

  const SuitePreset& preset() const { return preset_; }

  /// Rows for one registered identity or for `all`.
  std::vector<ResidualReport> run(const std::string& id) {
    if (id == "all") {
      std::vector<ResidualReport> out;
      for (const auto& name : identity_registry()) {
        auto rows = run(name);
        out.insert(out.end(), rows.begin(), rows.end());
      }
      return out;
    }
    if (id == "lemma2.1") return lemma21();
    if (id == "lemma2.2") return {verify_lemma_2_2(ray_setup())};
    if (id == "cor2.3") return verify_corollary_2_3(tensor_setup());
    if (id == "thm2.4") return thm24();
    if (id == "lemma2.5") return lemma25();
    if (id == "thm2.6") return thm26();
    if (id == "sweep3.1") return sweep31();
    if (id == "eq4.6") return one_step("eq4.6", false, {{1, 1}, {2, 1}, {2, 2}});
    if (id == "eq4.7") return one_step("eq4.7", true, {{1, 1}, {2, 1}, {2, 2}});
    if (id == "eq4.10") return one_step("eq4.10", false, {{0, 1}, {0, 2}});
    if (id == "eq4.11") return one_step("eq4.11", true, {{0, 1}, {0, 2}});
    if (id == "thm4.1") return thm41();
    if (id == "cor4.2") return cor42();
    if (id == "thm4.3") return thm43();
    if (id == "eq4.14") return eq414();
    if (id == "helmholtz") return helmholtz();
    if (id == "prop4.4") return prop44();
    throw ArgumentError("unknown identity '" + id + "'");
  }

private:
  // -------------------------------------------------------------------------
  // ray identities

  std::vector<PhaseSample> samples(double t_lo = 0.0, double t_hi = 0.0) const {
    SampleSpec ss;
    ss.count = preset_.samples;
    ss.seed = opt_.seed;
    ss.target = suite_defaults::kRayCenter;
    ss.t_lo = t_lo;
    ss.t_hi = t_hi;
    return make_samples(ss, BallDomain{});
  }

  AbsorptionSpec ray_alpha() const {
    return AbsorptionSpec::constant(opt_.alpha.value_or(suite_defaults::kRayAlpha));
  }

  RayCheckSetup ray_setup(double h_fd = 1e-3) const {
    RayCheckSetup c{PhaseField::gaussian(suite_defaults::kRayCenter, suite_defaults::kRayWidth), ray_alpha(), {}, {}, {}};
    c.samples = samples();
    c.steps = {1e-3, h_fd, 1e-3};
    return c;
  }

  RayCheckSetup time_setup(double h_fd = 1e-3, double h_t = 1e-3) const {
    RayCheckSetup c{PhaseField::separable_time(Blob::gaussian(suite_defaults::kRayCenter, suite_defaults::kRayWidth),
                                               TemporalProfile::gaussian_pulse(0.6, 0.1)),
                    ray_alpha(), {}, {}, {}};
    c.samples = samples(0.6, 1.4);
    c.steps = {1e-3, h_fd, h_t};
    return c;
  }

  RayCheckSetup tensor_setup() const {
    SymTensor c1(2), c2(2);
    c1.at({2, 0, 0}) = 1.0;
    c1.at({1, 1, 0}) = 0.4;
    c1.at({0, 0, 2}) = cplx(0.3, -0.2);
    c2.at({0, 2, 0}) = 0.7;
    c2.at({0, 1, 1}) = -0.5;
    TensorFieldSpec w(2);
    w.add(c1, Blob::gaussian(suite_defaults::kRayCenter, suite_defaults::kRayWidth));
    w.add(c2, Blob::gaussian(suite_defaults::kRayCenter + Vec3{0.05, 0.0, -0.04}, 0.12));
    RayCheckSetup c{PhaseField::tensor_generated(w), ray_alpha(), {}, {}, {}};
    c.samples = samples();
    c.steps = {1e-3, 1e-3, 1e-3};
    return c;
  }

  std::vector<int> k_list(std::vector<int> defaults) const {
    if (opt_.k) return {*opt_.k};
    return defaults;
  }

  std::vector<ResidualReport> lemma21() const {
    auto c = ray_setup();
    std::vector<ResidualReport> out;
    for (int k : k_list({1, 2, 3})) out.push_back(verify_lemma_2_1(k, c));
    return out;
  }

  std::vector<ResidualReport> thm24() const {
    auto c = ray_setup(2e-3);
    std::vector<ResidualReport> out;
    for (int k : k_list({0, 1, 2, 3})) out.push_back(verify_theorem_2_4(k, c));
    return out;
  }

  std::vector<ResidualReport> lemma25() const {
    auto c = time_setup();
    std::vector<ResidualReport> out;
    for (int k : k_list({0, 1, 2})) out.push_back(verify_lemma_2_5(k, c));
    if (!opt_.k) out.push_back(stationary_limit());
    return out;
  }

  /// A source that switches on and stays on: once t exceeds every ray length
  /// plus the switch-on time, the retarded transform is the stationary one.
  ResidualReport stationary_limit() const {
    const auto f = PhaseField::separable_time(Blob::gaussian(suite_defaults::kRayCenter, suite_defaults::kRayWidth),
                                              TemporalProfile::causal_ramp(0.0, 0.1));
    const auto g = PhaseField::gaussian(suite_defaults::kRayCenter, suite_defaults::kRayWidth);
    const auto a = ray_alpha();
    const auto ss = samples();
    const RayQuadSpec q(1e-3);
    std::vector<cplx> r(ss.size());
    for (std::size_t i = 0; i < ss.size(); ++i)
      r[i] = art_k_time(1, f, a, 10.0, ss[i].x, ss[i].xi, q) - art_k(1, g, a, ss[i].x, ss[i].xi, q);
    ResidualReport rep = plain_row("lemma2.5:stationary-limit", 1, 0, 0, "-", max_abs(r), 1e-8);
    rep.residual_l2 = rms(r);
    rep.samples = ss.size();
    rep.h_ray = q.h_ray;
    return rep;
  }

  std::vector<ResidualReport> thm26() const {
    auto c = time_setup(2e-3, 2e-3);
    // audit samples sit inside the source, where the (k! − 1)f miss shows
    RayCheckSetup audit = c;
    SampleSpec ss;
    ss.count = preset_.samples;
    ss.seed = opt_.seed;
    ss.fraction = 0.1;
    ss.target = suite_defaults::kRayCenter;
    ss.t_lo = 0.6;
    ss.t_hi = 1.4;
    audit.samples = make_samples(ss, BallDomain{});
    std::vector<ResidualReport> out;
    for (int k : k_list({0, 1, 2})) {
      auto rows = verify_theorem_2_6(k, c, &audit);
      out.insert(out.end(), rows.begin(), rows.end());
    }
    return out;
  }

  // -------------------------------------------------------------------------
  // sweep

  std::vector<ResidualReport> sweep31() const {
    const auto f = PhaseField::gaussian(suite_defaults::kRayCenter, suite_defaults::kRayWidth);
    const auto a = ray_alpha();
    const auto g = GridGeometry::cube(17, 1.0);
    const auto sg = make_sphere_grid(8, 16);
    const double fine = preset_.sweep_step, coarse = 2.0 * fine;
    const std::string label = "17x17x17/S8x16";
    std::vector<ResidualReport> out;

    auto zero = sweep_transport(PhaseField::zero(), a, g, sg, fine);
    double zmax = 0.0;
    for (const auto& v : zero.u) zmax = std::max(zmax, std::abs(v));
    out.push_back(plain_row("sweep3.1:zero-data", 0, 0, 0, label, zmax, 0.0));

    const RayQuadSpec q(4e-3);
    double gap_c = sweep_gap_l2(sweep_transport(f, a, g, sg, coarse), f, a, sg, q);
    double gap_f = sweep_gap_l2(sweep_transport(f, a, g, sg, fine), f, a, sg, q);
    // halving the step halves the gap: ratio within [1.7, 2.3]
    ResidualReport ratio = plain_row("sweep3.1:gap-ratio", 0, 0, 0, label, std::abs(gap_c / gap_f - 2.0), 0.3);
    ratio.residual_l2 = gap_f;
    ratio.h_ray = fine;
    out.push_back(ratio);

    const auto eps = AbsorptionSpec::constant(0.7);
    auto inflow = [](const Point3& y, const Direction& xi) {
      return cplx(1.0 + 0.5 * y.x1 - 0.3 * dot(y, xi.vec()), 0.2 * y.x2);
    };
    double bal_c = std::abs(sweep_energy_balance(eps, inflow, sg, 2.0 * coarse));
    double bal_f = std::abs(sweep_energy_balance(eps, inflow, sg, coarse));
    // the relative imbalance must shrink at least like the step
    ResidualReport energy = plain_row("sweep3.1:energy", 0, 0, 0, "S8x16", bal_f, bal_c / 1.7);
    energy.h_ray = coarse;
    out.push_back(energy);
    return out;
  }

  // -------------------------------------------------------------------------
  // moment relations

  struct TablePair {
    MomentTable fine, coarse;
  };

  GridGeometry moment_grid() const { return GridGeometry::cube(preset_.moment_grid, 0.5); }
  SphereGrid moment_sphere() const { return make_sphere_grid(preset_.n_polar, preset_.n_azimuth); }
  PhaseField bump() const { return PhaseField::ball_bump(suite_defaults::kBumpCenter, suite_defaults::kBumpRadius); }
  cplx moment_alpha() const { return opt_.alpha.value_or(suite_defaults::kMomentAlpha); }

  AbsorptionSpec xi_alpha() const {
    SymTensor q(2);
    q.at({2, 0, 0}) = 0.3;
    q.at({0, 1, 1}) = 0.2;
    q.at({0, 0, 2}) = -0.1;
    return AbsorptionSpec::xi_polynomial(opt_.alpha.value_or(cplx(0.3, 0.0)), {{q, true}});
  }

  const TablePair& constant_tables() {
    if (!const_tables_) {
      MomentTableSpec s;
      s.kmax = 2;
      s.pmax = 2;
      s.hf_max = 1;
      const auto a = AbsorptionSpec::constant(moment_alpha());
      const auto g = moment_grid();
      const auto sg = moment_sphere();
      const double h = preset_.moment_h_ray;
      const_tables_.reset(new TablePair{MomentTable(bump(), a, g, sg, RayQuadSpec(h), {}, s),
                                        MomentTable(bump(), a, g, sg, RayQuadSpec(2.0 * h), {}, s)});
    }
    return *const_tables_;
  }

  const TablePair& xi_tables() {
    if (!xi_tables_) {
      MomentTableSpec s;
      s.kmax = 2;
      s.pmax = 3;
      s.hf_max = 0;
      const auto a = xi_alpha();
      const auto g = moment_grid();
      const auto sg = moment_sphere();
      const double h = preset_.moment_h_ray;
      xi_tables_.reset(new TablePair{MomentTable(bump(), a, g, sg, RayQuadSpec(h), {}, s),
                                     MomentTable(bump(), a, g, sg, RayQuadSpec(2.0 * h), {}, s)});
    }
    return *xi_tables_;
  }

  /// Defaults filtered by --k/--p; a filter that matches nothing is run as
  /// given (missing table entries then raise an argument error).
  std::vector<std::pair<int, int>> kp_list(const std::vector<std::pair<int, int>>& defaults) const {
    if (!opt_.k && !opt_.p) return defaults;
    std::vector<std::pair<int, int>> out;
    for (auto [k, p] : defaults)
      if ((!opt_.k || *opt_.k == k) && (!opt_.p || *opt_.p == p)) out.push_back({k, p});
    if (out.empty()) out.push_back({opt_.k.value_or(defaults.front().first), opt_.p.value_or(defaults.front().second)});
    return out;
  }

  std::vector<ResidualReport> one_step(const std::string& name, bool xi, const std::vector<std::pair<int, int>>& defaults) {
    const TablePair& t = xi ? xi_tables() : constant_tables();
    const AbsorptionSpec a = xi ? xi_alpha() : AbsorptionSpec::constant(moment_alpha());
    std::vector<ResidualReport> out;
    for (auto [k, p] : kp_list(defaults)) out.push_back(moment_div_residual(name, k, p, a, t.fine, t.coarse));
    return out;
  }

  /// Exact agreement of the closed form with n-fold composition of the single
  /// divergence step, and for n = 2 with the expansion
  /// k(k−1)E_{k−2} − 2kαE_{k−1} + α²E_k.
  static ResidualReport algebra_row(int n, int k) {
    std::size_t mismatches = thm41_coefficients(n, k) == compose_divergence(n, k + n) ? 0 : 1;
    if (n == 2) {
      const int top = k + 2;
      MomentExpansion shown;
      if (top >= 2) shown[{MomentTerm::moment, top - 2}] = {static_cast<long long>(top) * (top - 1)};
      shown[{MomentTerm::moment, top - 1}] = {0, -2LL * top};
      shown[{MomentTerm::moment, top}] = {0, 0, 1};
      trim(shown);
      if (!(shown == compose_divergence(2, top))) ++mismatches;
    }
    return plain_row("thm4.1:algebra", k, 0, n, "-", static_cast<double>(mismatches), 0.0);
  }

  std::vector<ResidualReport> thm41() {
    std::vector<ResidualReport> out;
    for (int n = 1; n <= 4; ++n)
      for (int k = 0; k <= 2; ++k)
        if ((!opt_.n || *opt_.n == n) && (!opt_.k || *opt_.k == k)) out.push_back(algebra_row(n, k));
    const TablePair& t = constant_tables();
    const cplx al = moment_alpha();
    struct Inst {
      int n, k, p;
    };
    for (Inst in : {Inst{2, 0, 0}, Inst{1, 1, 1}, Inst{1, 0, 1}}) {
      if ((opt_.n && *opt_.n != in.n) || (opt_.k && *opt_.k != in.k) || (opt_.p && *opt_.p != in.p)) continue;
      out.push_back(iterated_divergence_check("thm4.1", in.n, in.k, in.k + in.n, in.p, t.fine, t.coarse,
                                              [&](const MomentTable& tb) { return thm41_rhs(in.n, in.k, in.p, al, tb); }));
    }
    return out;
  }

  std::vector<ResidualReport> cor42() {
    const TablePair& t = constant_tables();
    const cplx al = moment_alpha();
    std::vector<ResidualReport> out;
    ResidualReport plain2;
    for (int n : {1, 2}) {
      if (opt_.n && *opt_.n != n) continue;
      auto r = iterated_divergence_check("cor4.2", n, 0, 0, 0, t.fine, t.coarse,
                                         [&](const MomentTable& tb) { return cor42_rhs(n, 0, al, tb); });
      if (n == 2) plain2 = r;
      out.push_back(r);
    }
    if (!opt_.n || *opt_.n == 2) {
      // the source terms with binomial weights must miss by far more than the
      // plain form's tolerance, and only the plain form matches the algebra
      auto bin = iterated_divergence_check(
          "cor4.2:binomial-audit", 2, 0, 0, 0, t.fine, t.coarse,
          [&](const MomentTable& tb) { return cor42_rhs(2, 0, al, tb, SourceForm::with_binomial); });
      bool algebra = true;
      for (int n = 2; n <= 4; ++n) algebra = algebra && audit_k0_form(n) == SourceForm::plain;
      bin.tolerance = 10.0 * plain2.tolerance;
      bin.pass = plain2.pass && algebra && bin.residual_max > bin.tolerance;
      out.push_back(bin);
    }
    return out;
  }

  std::vector<ResidualReport> thm43() {
    if (!time_tables_) {
      MomentTableSpec s;
      s.kmax = 2;
      s.pmax = 2;
      s.hf_max = 0;
      const auto f = PhaseField::separable_time(Blob::ball_bump(suite_defaults::kBumpCenter, suite_defaults::kBumpRadius),
                                                TemporalProfile::gaussian_pulse(0.6, 0.1));
      const auto a = AbsorptionSpec::constant(moment_alpha());
      const auto g = moment_grid();
      const auto sg = moment_sphere();
      const double h = preset_.moment_h_ray;
      auto fine = build_time_tables(f, a, g, sg, RayQuadSpec(h), {}, s, 0.9, 0.01, 2);
      auto coarse = build_time_tables(f, a, g, sg, RayQuadSpec(2.0 * h), {}, s, 0.9, 0.01, 2);
      time_tables_.reset(new std::pair<TimeMomentTables, TimeMomentTables>(std::move(fine), std::move(coarse)));
    }
    std::vector<ResidualReport> out;
    for (auto [k, p] : kp_list({{1, 1}, {0, 1}}))
      out.push_back(thm43_residual(1, k, p, moment_alpha(), time_tables_->first, time_tables_->second));
    if (!opt_.k || *opt_.k == 0) {
      // with (∂/∂t + α) as the commuting symbol the k = 0 algebra is the
      // stationary one; n = 2 selects the form without binomial weights
      bool plain = audit_k0_form(2) == SourceForm::plain;
      out.push_back(plain_row("thm4.3:k0-form-audit", 0, 0, 2, "-", plain ? 0.0 : 1.0, 0.0));
    }
    return out;
  }

  // -------------------------------------------------------------------------
  // radial kernels, Helmholtz, reconstruction

  std::vector<ResidualReport> eq414() const {
    const cplx al = opt_.alpha.value_or(suite_defaults::kRadialAlpha);
    std::vector<double> radii;
    for (int i = 0; i < 20; ++i) radii.push_back(0.2 + 0.1 * i);
    std::vector<ResidualReport> out;
    for (int k : k_list({2, 3, 4, 5})) {
      GCoefficients c = g_radial_apply(k, al);
      // the displayed formulas, k = 2..5: (0, −2α), (2, −4α), (6, −6α), (12, −8α)
      const double lower[] = {0.0, 2.0, 6.0, 12.0};
      bool shown = true;
      if (k >= 2 && k <= 5)
        shown = c.a_km2() == cplx(lower[k - 2]) && c.a_km1() == -2.0 * (k - 1) * al && c.a_k() == al * al;
      double rel = g_radial_check(k, al, radii, 1e-4);
      ResidualReport r = plain_row("eq4.14", k, 0, 0, "-", rel, 1e-6);
      r.samples = radii.size();
      r.h_fd = 1e-4;
      r.pass = r.pass && shown;
      out.push_back(r);
    }
    return out;
  }

  static SymTensorGridField sampled_bump(std::size_t n) {
    const Blob b = Blob::ball_bump(suite_defaults::kBumpCenter, suite_defaults::kBumpRadius);
    return SymTensorGridField::sample(0, GridGeometry::cube(n, 1.0),
                                      [&](const Point3& x) { return SymTensor::scalar(b(x)); });
  }

  /// Order test on the 5³ probe block at the grid centre, 17³ against 33³.
  static ResidualReport order_row(std::string name, double coarse, double fine) {
    double order = std::log2(coarse / fine);
    ResidualReport r = plain_row(std::move(name), 0, 0, 0, "17->33/probe5", std::abs(order - 2.0), 0.25);
    r.residual_l2 = fine;
    r.order = order;
    return r;
  }

  std::vector<ResidualReport> helmholtz() const {
    double kappa = suite_defaults::kKappa;
    if (opt_.alpha && opt_.alpha->real() == 0.0 && opt_.alpha->imag() != 0.0) kappa = std::abs(opt_.alpha->imag());
    const auto f33 = sampled_bump(33);
    const auto e10 = volume_potential_grid(1, f33, cplx(0.0, kappa));
    ResidualReport full = plain_row("helmholtz", 1, 0, 0, "33x33x33", helmholtz_relative_residual(e10, f33, kappa), 5e-2);
    full.h_fd = f33.geometry().spacing(0);
    double c = helmholtz_probe_residual(sampled_bump(17), kappa, 1);
    double fi = helmholtz_probe_residual(f33, kappa, 2);
    ResidualReport ord = order_row("helmholtz:order", c, fi);
    ord.k = 1;
    return {full, ord};
  }

  std::vector<ResidualReport> prop44() const {
    const cplx al = opt_.alpha.value_or(suite_defaults::kReconAlpha);
    const auto f33 = sampled_bump(33);
    const auto est = reconstruct_prop44(volume_potential_grid(2, f33, al), al);
    ResidualReport full = plain_row("prop4.4", 2, 0, 0, "33x33x33", relative_l2_error(est, f33), 0.1);
    full.h_fd = f33.geometry().spacing(0);
    ResidualReport ord =
        order_row("prop4.4:order", prop44_probe_error(sampled_bump(17), al, 1), prop44_probe_error(f33, al, 2));
    ord.k = 2;
    bool rejected = false;
    try {
      (void)reconstruct_prop44(f33, cplx{});
    } catch (const ArgumentError&) {
      rejected = true;
    }
    ResidualReport zero = plain_row("prop4.4:alpha-zero-rejected", 2, 0, 0, "-", rejected ? 0.0 : 1.0, 0.0);
    return {full, ord, zero};
  }

  SuiteOptions opt_;
  SuitePreset preset_;
  std::unique_ptr<TablePair> const_tables_, xi_tables_;
  std::unique_ptr<std::pair<TimeMomentTables, TimeMomentTables>> time_tables_;
};

} // namespace artkit
