#include <gtest/gtest.h>

#include <set>

#include "artkit/suite.hpp"

using namespace artkit;

namespace {
SuiteOptions opts(std::optional<int> k = {}, std::optional<std::size_t> samples = {}, std::uint64_t seed = 0) {
  SuiteOptions o;
  o.quick = true;
  o.k = k;
  o.samples = samples;
  o.seed = seed;
  return o;
}
} // namespace

TEST(Registry, SeventeenUniqueNames) {
  const auto& r = identity_registry();
  EXPECT_EQ(r.size(), 17u);
  EXPECT_EQ(std::set<std::string>(r.begin(), r.end()).size(), r.size());
  EXPECT_TRUE(is_registered_identity("lemma2.1"));
  EXPECT_FALSE(is_registered_identity("all"));
  EXPECT_FALSE(is_registered_identity("lemma9.9"));
}

TEST(Registry, AllPassIgnoresInformational) {
  auto ok = plain_row("a", 0, 0, 0, "-", 1.0, 2.0);
  auto bad = plain_row("b", 0, 0, 0, "-", 3.0, 2.0);
  EXPECT_TRUE(all_pass({ok}));
  EXPECT_FALSE(all_pass({ok, bad}));
  bad.informational = true;
  EXPECT_TRUE(all_pass({ok, bad}));
  EXPECT_TRUE(all_pass({}));
}

TEST(Suite, Presets) {
  EXPECT_EQ(VerifySuite(opts()).preset().moment_grid, 17u);
  EXPECT_EQ(VerifySuite(SuiteOptions{}).preset().samples, 64u);
  EXPECT_EQ(VerifySuite(opts({}, 5)).preset().samples, 5u);
}

TEST(Suite, UnknownIdentityThrows) {
  VerifySuite s(opts());
  EXPECT_THROW(s.run("nope"), ArgumentError);
}

TEST(Suite, RadialRowsAndFilter) {
  VerifySuite s(opts());
  auto rows = s.run("eq4.14");
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.csv_row();
  VerifySuite only3(opts(3));
  rows = only3.run("eq4.14");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].k, 3);
}

TEST(Suite, DeterministicRows) {
  auto csv = [] {
    VerifySuite s(opts(1, 4, 7));
    std::string out;
    for (const auto& r : s.run("lemma2.2")) out += r.csv_row() + "\n";
    for (const auto& r : s.run("eq4.14")) out += r.csv_row() + "\n";
    return out;
  };
  EXPECT_EQ(csv(), csv());
}

TEST(Suite, RayIdentitiesPassOnFewSamples) {
  VerifySuite s(opts(1, 4));
  for (const char* id : {"lemma2.1", "lemma2.2", "cor2.3"})
    for (const auto& r : s.run(id)) EXPECT_TRUE(r.pass || r.informational) << r.csv_row();
}
