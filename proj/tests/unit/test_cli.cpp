#include "cli.hpp"
#include "sinkformer/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sinkformer;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sinkformer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sinkformer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  fs::path dir_;
};

constexpr const char* kTwoAtoms = R"({"support":[[0.0],[1.0]],"weights":[0.25,0.75]})";
constexpr const char* kThreeAtoms = R"({"support":[[0.0],[0.5],[1.0]],"weights":[0.5,0.25,0.25]})";

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"ot"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"ot", "solve", "--mu", "a.json"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"stability", "--probe", "shift", "--trials", "0"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"stability", "--probe", "bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"model", "train", "--family", "gaussian", "--out", (dir_ / "m").string()}).code,
            cli::kExitUsage);
  EXPECT_EQ(invoke({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, ZeroCostGivesProductPlan) {
  const auto mu = write("mu.json", kTwoAtoms);
  const auto nu = write("nu.json", kThreeAtoms);
  const auto cost = write("cost.csv", "0,0,0\n0,0,0\n");
  const Outcome r = invoke({"ot", "solve", "--cost", cost, "--mu", mu, "--nu", nu, "--tol", "1e-12"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 3u);
  std::istringstream csv(lines[0] + "\n" + lines[1] + "\n");
  const Matrix plan = read_matrix_csv(csv);
  const Matrix expected = (Matrix(2, 3) << 0.125, 0.0625, 0.0625, 0.375, 0.1875, 0.1875).finished();
  EXPECT_LE((plan - expected).cwiseAbs().maxCoeff(), 1e-15);
  const Json diag = Json::parse(lines[2]);
  EXPECT_LE(diag.at("final_violation").get<double>(), 1e-12);
  EXPECT_EQ(diag.at("u")[0].get<double>(), 1.0);
  EXPECT_EQ(diag.at("v").size(), 3u);
}

TEST_F(CliTest, DomainErrorsExitOne) {
  const auto mu = write("mu.json", kTwoAtoms);
  const auto nu = write("nu.json", kThreeAtoms);
  const auto wrong = write("cost.csv", "0,0\n0,0\n");
  const Outcome r = invoke({"ot", "solve", "--cost", wrong, "--mu", mu, "--nu", nu});
  EXPECT_EQ(r.code, cli::kExitDomain);
  EXPECT_NE(r.err.find("dimension"), std::string::npos) << r.err;

  const auto stiff = write("stiff.csv", "900,901,900\n902,900,901\n");
  const Outcome k = invoke({"ot", "solve", "--cost", stiff, "--mu", mu, "--nu", nu, "--kernel"});
  EXPECT_EQ(k.code, cli::kExitDomain);
  EXPECT_NE(k.err.find("log_domain"), std::string::npos) << k.err;
}

TEST_F(CliTest, MalformedInputIsAUsageError) {
  const auto mu = write("mu.json", R"({"support":[[0.0]],"weights":[1.0],"extra":1})");
  const auto cost = write("cost.csv", "0\n");
  const Outcome r = invoke({"ot", "solve", "--cost", cost, "--mu", mu, "--nu", mu});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("extra"), std::string::npos) << r.err;
}

TEST_F(CliTest, ApproxDemoReport) {
  const auto pi = write("pi.json",
                        R"({"rows":{"support":[[0,0],[1,1]],"weights":[0.5,0.5]},
                            "cols":{"support":[[0,1],[1,0]],"weights":[0.5,0.5]},
                            "mass":[[0.5,0.0],[0.0,0.5]]})");
  const auto out = (dir_ / "report.csv").string();
  const Outcome r = invoke({"approx", "demo", "--input", pi, "--k", "1,2,4", "--out", out});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  std::ifstream in(out);
  std::stringstream text;
  text << in.rdbuf();
  const auto lines = lines_of(text.str());
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "k,cells_x,cells_y,w1_gap,max_test_error,bound");
  EXPECT_EQ(invoke({"approx", "demo", "--input", pi, "--k", "0", "--out", out}).code, cli::kExitUsage);
}

TEST_F(CliTest, StabilityIsReproducible) {
  for (const char* probe : {"lipschitz", "cost-sequence", "shift", "schrodinger"}) {
    const Outcome a = invoke({"stability", "--probe", probe, "--trials", "2", "--seed", "5"});
    const Outcome b = invoke({"stability", "--probe", probe, "--trials", "2", "--seed", "5"});
    ASSERT_EQ(a.code, cli::kExitOk) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_GE(lines_of(a.out).size(), 3u);
  }
}

TEST_F(CliTest, TrainThenEvaluate) {
  const auto config = write("config.json",
                            R"({"iterations":3,"eval_every":1,"batch_size":2,"unroll":10,
                                "data":{"count":4,"n_max":4,"m_max":4},"heldout_count":2,
                                "model":{"hidden":4}})");
  const auto out = dir_ / "run";
  const Outcome t =
      invoke({"model", "train", "--family", "planted-entropic", "--seed", "3", "--config", config, "--out", out.string()});
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;
  for (const char* f : {"params.json", "heldout.json", "config.json", "history.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  std::ifstream hist(out / "history.csv");
  std::stringstream h;
  h << hist.rdbuf();
  EXPECT_EQ(lines_of(h.str()).size(), 5u);

  const Outcome e = invoke({"model", "eval", "--params", (out / "params.json").string(), "--dataset",
                            (out / "heldout.json").string()});
  ASSERT_EQ(e.code, cli::kExitOk) << e.err;
  const auto rows = lines_of(e.out);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "sample,n,m,w1,diameter,rel_w1");
}

TEST_F(CliTest, LogLevelFromEnvironment) {
  ::setenv("ST_LOG", "loud", 1);
  EXPECT_EQ(invoke({"stability", "--probe", "shift", "--trials", "1"}).code, cli::kExitUsage);
  ::setenv("ST_LOG", "quiet", 1);
  EXPECT_EQ(invoke({"stability", "--probe", "shift", "--trials", "1"}).code, cli::kExitOk);
  ::unsetenv("ST_LOG");
}
