#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "ohj/cli.hpp"

using namespace ohj;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ohj_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p.string();
}

int run_cli(const std::string& sub, const cli::Options& o, Json* summary = nullptr) {
  std::ostringstream os;
  const int code = cli::run(sub, o, os);
  if (summary) *summary = Json::parse(os.str());
  return code;
}

}  // namespace

TEST(Config, ParsesSectionsListsAndDefaults) {
  const auto c = Config::parse(
      "seed = 7   # top-level keys go to [run]\n"
      "[rate-study]\n"
      "epsilon = 0.4, 0.2,0.1\n"
      "N = 64\n"
      "flag = yes\n");
  EXPECT_EQ(c.get_int("run", "seed", 0), 7);
  EXPECT_EQ(c.get_list("rate-study", "epsilon", {}), (std::vector<double>{0.4, 0.2, 0.1}));
  EXPECT_TRUE(c.get_bool("rate-study", "flag", false));
  EXPECT_EQ(c.get_double("rate-study", "missing", 1.5), 1.5);
  EXPECT_EQ(c.unused({"run", "rate-study"}), std::vector<std::string>{"rate-study.N"});
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(Config::parse("[run\n"), ConfigError);
  EXPECT_THROW(Config::parse("novalue\n"), ConfigError);
  EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
  const auto c = Config::parse("[s]\nn = 1.5\nb = maybe\n");
  EXPECT_THROW(c.get_int("s", "n", 0), ConfigError);
  EXPECT_THROW(c.get_bool("s", "b", false), ConfigError);
}

TEST(Config, ProblemRoundTripsThroughEcho) {
  for (const auto& key : catalog_keys()) {
    const auto p = catalog_problem(key);
    Config c;
    const Json echo = problem_to_json(p);
    for (const auto& [k, v] : echo.items()) c.set("problem", k, cli::detail::config_value(v));
    const auto q = problem_from_config(c);
    EXPECT_EQ(problem_to_json(q), problem_to_json(p)) << key;
    EXPECT_TRUE(c.unused({"problem"}).empty()) << key;
  }
}

TEST(Config, CustomProblemNeedsEveryCoefficient) {
  EXPECT_THROW(problem_from_config(Config::parse("[problem]\ndim = 1\npotential = -1\n")), ConfigError);
  EXPECT_THROW(problem_from_config(Config::parse("[problem]\ncatalog = nope\n")), ConfigError);
  const auto p = problem_from_config(Config::parse(
      "[problem]\ndim = 1\npotential = -1; cos 1 0 0.2\nobstacle = 0\ninitial = -1\ndiffusion = isotropic\na = 0.05\n"));
  EXPECT_DOUBLE_EQ(p.diffusion.coefficient(0, {0.3, 0.0}), 0.05);
  EXPECT_NEAR(p.hamiltonian.potential.value({0.0, 0.0}), -0.8, 1e-15);
}

TEST(Export, CsvKeepsFullPrecision) {
  CsvWriter csv({"a", "b", "c"});
  csv.row({0.1, 3LL, std::string("x")});
  EXPECT_EQ(csv.text(), "a,b,c\n0.10000000000000001,3,x\n");
  EXPECT_THROW(csv.row({1.0}), InvalidArgument);
}

TEST(Export, ChecksumsDoNotDependOnOutputMode) {
  const auto dir = scratch("sink");
  ExperimentReport on("x"), off("x");
  ArtifactSink(dir).write("f.txt", "hello", &on);
  ArtifactSink().write("f.txt", "hello", &off);
  EXPECT_EQ(on.fingerprint(), off.fingerprint());
  EXPECT_TRUE(fs::exists(dir / "f.txt"));
}

TEST(Report, FingerprintIgnoresWallClock) {
  ExperimentReport a("r"), b("r");
  a.scalar("v", 1.0);
  b.scalar("v", 1.0);
  a.require_le("c", 1.0, 2.0);
  b.require_le("c", 1.0, 2.0);
  a.finish();
  std::this_thread::sleep_for(std::chrono::milliseconds(5));
  b.finish();
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.scalar("w", 0.0);
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Report, BooleanChecksCiteMeasuredAndThreshold) {
  ExperimentReport r("r");
  const auto& c = r.require("holds", false, 3.5, "why");
  EXPECT_EQ(c.verdict, Verdict::fail);
  EXPECT_EQ(c.measured, 0.0);
  EXPECT_EQ(c.threshold, 1.0);
  EXPECT_NE(c.note.find("3.5"), std::string::npos);
}

TEST(ParallelMap, OrderedAndRethrowsFirstError) {
  const auto v = parallel_map(50, 4, [](std::size_t i) { return int(i * i); });
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], int(i * i));
  try {
    parallel_map(20, 4, [](std::size_t i) -> int {
      if (i == 3 || i == 11) throw InvalidArgument("cell " + std::to_string(i));
      return 0;
    });
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_STREQ(e.what(), "cell 3");
  }
}

TEST(Cli, PassingRunExitsZeroAndWritesReport) {
  const auto dir = scratch("pass");
  cli::Options o;
  o.out_dir = dir.string();
  o.problem = "supercritical-1d";
  Json s;
  EXPECT_EQ(run_cli("dichotomy", o, &s), cli::kExitOk);
  EXPECT_EQ(s["status"], "ok");
  EXPECT_TRUE(fs::exists(dir / "dichotomy" / "report.json"));
}

TEST(Cli, FailingVerdictExitsOne) {
  const auto dir = scratch("fail");
  cli::Options o;
  o.out_dir = dir.string();
  o.config_path = write_file(dir / "c.conf", "[rate-study]\nN = 64\nepsilon = 0.4, 0.2, 0.1\nmin_slope = 50\n");
  Json s;
  EXPECT_EQ(run_cli("rate-study", o, &s), cli::kExitFail);
  EXPECT_FALSE(s["passed"].get<bool>());
}

TEST(Cli, ConfigErrorsExitTwoWithErrorJson) {
  const auto dir = scratch("cfg");
  cli::Options o;
  o.out_dir = dir.string();
  Json s;
  o.config_path = write_file(dir / "typo.conf", "[rate-study]\nNN = 64\n");
  EXPECT_EQ(run_cli("rate-study", o, &s), cli::kExitConfig);
  EXPECT_EQ(s["error"]["kind"], "config");
  o.config_path = write_file(dir / "section.conf", "[solve]\nN = 64\n");
  EXPECT_EQ(run_cli("rate-study", o, &s), cli::kExitConfig);
  o.config_path = write_file(dir / "range.conf", "[rate-study]\nepsilon = 0.4, 2\n");
  EXPECT_EQ(run_cli("rate-study", o, &s), cli::kExitConfig);
  o.config_path = (dir / "missing.conf").string();
  EXPECT_EQ(run_cli("rate-study", o, &s), cli::kExitConfig);
  o.config_path.clear();
  o.problem = "no-such-problem";
  EXPECT_EQ(run_cli("solve", o, &s), cli::kExitConfig);
  EXPECT_EQ(run_cli("no-such-subcommand", cli::Options{}, &s), cli::kExitConfig);
}

TEST(Cli, OutDirFromEnvironment) {
  const auto dir = scratch("env");
  ::setenv(cli::kOutDirEnv, dir.string().c_str(), 1);
  cli::Options o;
  o.problem = "supercritical-1d";
  EXPECT_EQ(cli::resolve_out_dir(o), dir);
  EXPECT_EQ(run_cli("dichotomy", o), cli::kExitOk);
  ::unsetenv(cli::kOutDirEnv);
  EXPECT_TRUE(fs::exists(dir / "dichotomy" / "report.json"));
  o.out_dir = "explicit";
  EXPECT_EQ(cli::resolve_out_dir(o), fs::path("explicit"));
}

TEST(Cli, ReportEchoReproducesMeasurementsBitwise) {
  const auto dir = scratch("echo");
  struct Case {
    std::string sub, config;
  };
  const std::vector<Case> cases{
      {"solve", "[solve]\nN = 64\nT = 0.5\nmode = penalized\nepsilon = 0.3\n"},
      {"dichotomy", "[dichotomy]\nN = 64\nT_max = 5\n"},
      {"rate-study", "[rate-study]\nN = 64\nepsilon = 0.4, 0.2, 0.1\n"},
      {"key-stability", "[key-stability]\nN = 64\n"},
      {"adjoint-audit", "[adjoint-audit]\nN = 32\nkey_N = 32\nkey_epsilon = 0.4, 0.2, 0.1\n"},
      {"mc-verify", "[mc-verify]\nN = 64\nM = 200\nnodes = 2\nt = 0.2\npde_snapshots = 20\n"},
      {"ergodic",
       "[ergodic]\nproblems = eikonal-cos-1d\nN = 64\nlongtime_T = 2\noracle_N = 64\noracle_alpha = 0.01\n"
       "oracle_delta = 1e-4\ntolerance = 1\n"},
  };
  for (const auto& c : cases) {
    cli::Options first;
    first.out_dir = (dir / "a").string();
    first.config_path = write_file(dir / (c.sub + ".conf"), c.config);
    Json s1, s2;
    const int code1 = run_cli(c.sub, first, &s1);
    ASSERT_NE(code1, cli::kExitConfig) << c.sub << " " << s1.dump();
    cli::Options again;
    again.out_dir = (dir / "b").string();
    again.report_path = (dir / "a" / c.sub / "report.json").string();
    again.jobs = 3;
    EXPECT_EQ(run_cli(c.sub, again, &s2), code1) << c.sub << " " << s2.dump();
    EXPECT_EQ(s1["fingerprint"], s2["fingerprint"]) << c.sub;
  }
}

TEST(Cli, ReportFromAnotherSubcommandIsRejected) {
  const auto dir = scratch("wrong");
  cli::Options o;
  o.out_dir = dir.string();
  o.problem = "supercritical-1d";
  ASSERT_EQ(run_cli("dichotomy", o), cli::kExitOk);
  cli::Options r;
  r.out_dir = dir.string();
  r.report_path = (dir / "dichotomy" / "report.json").string();
  EXPECT_EQ(run_cli("rate-study", r), cli::kExitConfig);
}
