#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef LCRL_CLI
#error "LCRL_CLI must name the command-line binary"
#endif

namespace fs = std::filesystem;

namespace {

const std::string kConfig = std::string(LCRL_SOURCE_DIR) + "/configs/paper_lq3d.json";

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / ("lcrl_cli_" + std::to_string(::getpid()) + ".log");
  const std::string cmd = std::string(LCRL_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  fs::remove(log);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("lcrl_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string write(const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p.string();
  }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, RiccatiWritesCsvAndPrintsNorm) {
  const Result r = run("riccati --config " + kConfig + " --out " + (dir / "a").string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("P0_frobenius"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "a" / "riccati.csv"));
  const auto pos = r.out.find("P0_change_dt_halved ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 20)), 1e-6);
}

TEST_F(Cli, InvalidInputsExitWithTwo) {
  std::string text = slurp(kConfig);
  text.replace(text.find("\"horizon\": 1.5"), 14, "\"horizon\": 0.0");
  EXPECT_EQ(run("riccati --config " + write("bad.json", text)).code, 2);
  EXPECT_EQ(run("gls --config " + kConfig + " --out " + dir.string()).code, 2);  // no seed
  EXPECT_EQ(run("decouple --config " + kConfig + " --out " + dir.string()).code, 2);  // not scalar
  EXPECT_NE(run("unknown-command").code, 0);
}

TEST_F(Cli, NumericalFailureExitsWithThree) {
  const std::string scalar = R"({
    "model": {"A": [[0.0]], "B": [[1.0]]}, "noise": {"sigma": [[1.0]]},
    "cost": {"type": "lq", "Q": [[1.0]], "R": [[1.0]], "G": [[0.0]]}, "horizon": 1.0,
    "decouple": {"x_max": 2.0, "dx": 0.05, "dt": 0.01}})";
  EXPECT_EQ(run("decouple --config " + write("cfl.json", scalar) + " --out " + dir.string()).code, 3);
}

TEST_F(Cli, EvalOfOptimalAndMisspecifiedPolicies) {
  const Result opt = run("eval --config " + kConfig);
  ASSERT_EQ(opt.code, 0) << opt.out;
  EXPECT_NE(opt.out.find("gap 0\n"), std::string::npos);
  const std::string pol = write("p.json", R"({"type": "greedy", "theta": {"A": [[1,0,0],[0,1,0],[0,0,1]], "B": [[2,0,0],[0,1,0],[0,0,1]]}})");
  const Result mis = run("eval --config " + kConfig + " --policy " + pol);
  ASSERT_EQ(mis.code, 0) << mis.out;
  const auto pos = mis.out.find("gap ");
  EXPECT_GT(std::stod(mis.out.substr(pos + 4)), 0.0);
}

TEST_F(Cli, GlsIsBitReproducible) {
  std::string text = slurp(kConfig);
  text.replace(text.find("\"updates\": 11"), 13, "\"updates\": 5");
  const std::string cfg = write("small.json", text);
  const Result a = run("gls --config " + cfg + " --seed 3 --runs 3 --out " + (dir / "a").string());
  const Result b = run("gls --config " + cfg + " --seed 3 --runs 3 --threads 2 --out " + (dir / "b").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(slurp(dir / "a" / "report.jsonl"), slurp(dir / "b" / "report.jsonl"));
  EXPECT_EQ(slurp(dir / "a" / "regret.csv"), slurp(dir / "b" / "regret.csv"));
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("regret_slope"), std::string::npos);
}

TEST_F(Cli, SimulateConcentrationAndDecouple) {
  const Result s = run("simulate --config " + kConfig + " --seed 1 --runs 4 --out " + dir.string());
  EXPECT_EQ(s.code, 0) << s.out;
  EXPECT_TRUE(fs::exists(dir / "trajectory.csv"));

  const std::string scalar = write("scalar.json", R"({
    "model": {"A": [[0.0]], "B": [[1.0]]}, "noise": {"sigma": [[1.0]]},
    "cost": {"type": "lq", "Q": [[1.0]], "R": [[1.0]], "G": [[0.0]]}, "horizon": 1.0,
    "sim": {"dt": 0.02},
    "concentration": {"statistic": "U", "row": 0, "col": 0, "epsilon": 0.1, "m_list": [2, 4, 8], "trials": 200}})");
  const Result c1 = run("concentration --config " + scalar + " --seed 2 --out " + (dir / "c1").string());
  const Result c2 = run("concentration --config " + scalar + " --seed 2 --threads 3 --out " + (dir / "c2").string());
  EXPECT_EQ(c1.code, 0) << c1.out;
  EXPECT_EQ(slurp(dir / "c1" / "concentration.csv"), slurp(dir / "c2" / "concentration.csv"));

  const Result d = run("decouple --config " + scalar + " --out " + dir.string());
  EXPECT_EQ(d.code, 0) << d.out;
  EXPECT_TRUE(fs::exists(dir / "field.csv"));
}
