#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "artkit/fields.hpp"

using namespace artkit;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("artkit_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string tmp(const std::string& name) { return (scratch() / name).string(); }

/// Exit status of `artkit args`, stdout to `out` if given, stderr dropped.
int run(const std::string& args, const std::string& out = "") {
  std::string cmd = std::string(ARTKIT_CLI_PATH) + " " + args + " > " + (out.empty() ? "/dev/null" : out) + " 2>/dev/null";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("verify --identity lemma9.9"), 2);
  EXPECT_EQ(run("forward --preset wave --k 1"), 2);
  EXPECT_EQ(run("forward --preset photo --alpha 1"), 2);
  EXPECT_EQ(run("forward --alpha 1+x"), 2);
  EXPECT_EQ(run("reconstruct --synthetic --alpha 0 --out " + tmp("r.artk")), 2);
  EXPECT_EQ(run("reconstruct --synthetic --alpha -0.5 --out " + tmp("r.artk")), 2);
  EXPECT_EQ(run("moments --box 0.9 --out " + tmp("m.artk")), 2);
  EXPECT_EQ(run("forward --temporal gaussian_pulse --t-center 0.1 --t-width 0.1 --time 0.2"), 2);
}

TEST(Cli, IoErrors) {
  EXPECT_EQ(run("phantom --dims 5 --out /nonexistent-dir/p.artk"), 3);
  EXPECT_EQ(run("reconstruct --in " + tmp("missing.artk") + " --alpha 1 --out " + tmp("r.artk")), 3);
  std::ofstream(tmp("junk.artk")) << "not a grid";
  EXPECT_EQ(run("reconstruct --in " + tmp("junk.artk") + " --alpha 1 --out " + tmp("r.artk")), 3);
}

TEST(Cli, PhantomFileSizes) {
  ASSERT_EQ(run("phantom --kind gaussian --dims 33 --out " + tmp("g.artk")), 0);
  EXPECT_EQ(fs::file_size(tmp("g.artk")), 84u + 33u * 33u * 33u * 16u);
  ASSERT_EQ(run("phantom --kind tensor --rank 2 --dims 9 --out " + tmp("t.artk")), 0);
  EXPECT_EQ(fs::file_size(tmp("t.artk")), 70068u);
  GridField g = load_grid(tmp("t.artk"));
  EXPECT_EQ(g.rank, 2);
  EXPECT_EQ(g.geometry.dims[0], 9u);
  ASSERT_EQ(run("phantom --kind ball_bump --temporal causal_ramp --dims 5 --nt 3 --dt 0.1 --out " + tmp("s.artk")), 0);
  EXPECT_EQ(load_grid(tmp("s.artk")).nt, 3u);
}

TEST(Cli, ForwardDeterministic) {
  ASSERT_EQ(run("forward --k 1 --samples 8 --seed 3", tmp("f1.csv")), 0);
  ASSERT_EQ(run("forward --k 1 --samples 8 --seed 3 --out " + tmp("f2.csv")), 0);
  std::string a = slurp(tmp("f1.csv"));
  EXPECT_EQ(a, slurp(tmp("f2.csv")));
  EXPECT_EQ(lines(a), 9u);
  EXPECT_EQ(a.substr(0, a.find('\n')), "x1,x2,x3,xi1,xi2,xi3,t,re,im");
  ASSERT_EQ(run("forward --k 1 --samples 8 --seed 4", tmp("f3.csv")), 0);
  EXPECT_NE(a, slurp(tmp("f3.csv")));
  EXPECT_EQ(run("forward --preset wave --samples 2"), 0);
  EXPECT_EQ(run("forward --kind separable_time --time 0.7 --samples 2"), 0);
}

TEST(Cli, VerifyReport) {
  ASSERT_EQ(run("verify --identity eq4.14 --quick --out " + tmp("v1.csv")), 0);
  ASSERT_EQ(run("verify --identity eq4.14 --quick", tmp("v2.csv")), 0);
  std::string a = slurp(tmp("v1.csv"));
  EXPECT_EQ(a, slurp(tmp("v2.csv")));
  EXPECT_EQ(lines(a), 5u);
  EXPECT_EQ(run("verify --identity eq4.14 --k 2", tmp("v3.csv")), 0);
  EXPECT_EQ(lines(slurp(tmp("v3.csv"))), 2u);
}

TEST(Cli, MomentsWithPgmAndHelmholtz) {
  ASSERT_EQ(run("moments --kind ball_bump --width 0.4 --dims 7 --sphere 4x8 --h-ray 1e-2 --k 1 --p 0 --alpha 2i"
                " --out " + tmp("m.artk") + " --pgm " + tmp("m.pgm") + " --helmholtz-out " + tmp("h.artk"),
                tmp("m.txt")),
            0);
  GridField m = load_grid(tmp("m.artk"));
  EXPECT_EQ(m.rank, 0);
  std::string pgm = slurp(tmp("m.pgm"));
  EXPECT_EQ(pgm.substr(0, 13), "P5\n7 7\n65535\n");
  EXPECT_EQ(pgm.size(), 13u + 2u * 49u);
  EXPECT_EQ(load_grid(tmp("h.artk")).geometry.dims[0], 5u);
  EXPECT_NE(slurp(tmp("m.txt")).find("helmholtz relative residual"), std::string::npos);
  // the Helmholtz output needs a purely imaginary absorption
  EXPECT_EQ(run("moments --dims 5 --sphere 4x8 --k 1 --alpha 1+2i --out " + tmp("m2.artk") + " --helmholtz-out " +
                tmp("h2.artk")),
            2);
}

TEST(Cli, ReconstructZeroInput) {
  SymTensorGridField z(0, GridGeometry::cube(9, 1.0));
  save_grid(GridField::from(z), tmp("z.artk"));
  ASSERT_EQ(run("reconstruct --in " + tmp("z.artk") + " --alpha 0.6+0.2i --out " + tmp("e.artk"), tmp("e.csv")), 0);
  GridField e = load_grid(tmp("e.artk"));
  EXPECT_EQ(e.geometry.dims[0], 5u);
  for (cplx v : e.data) EXPECT_EQ(v, cplx(0.0));
  EXPECT_NE(slurp(tmp("e.csv")).find(",info"), std::string::npos);
}

TEST(Cli, ReconstructSynthetic) {
  EXPECT_EQ(run("reconstruct --synthetic --kind ball_bump --width 0.9 --dims 25 --alpha 0.6+0.2i --out " + tmp("s.artk"),
                tmp("s.txt")),
            0);
  // an impossible bound reports failure through the exit code
  EXPECT_EQ(run("reconstruct --synthetic --kind ball_bump --width 0.9 --dims 17 --bound 1e-9 --alpha 0.6+0.2i --out " +
                tmp("s.artk")),
            1);
}
