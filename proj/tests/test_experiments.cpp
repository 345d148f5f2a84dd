#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "sep/experiments.hpp"

using namespace sep;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sep_test_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SEP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig small_superexp() {
  ExperimentConfig c;
  c.levels = {2, 3};
  c.replicas = 200;
  c.exact_sites = 4;
  return c;
}

}  // namespace

TEST(Config, DefaultsAndParsing) {
  const auto c = parse_config_text(
      "[tower]\nfamily = integer_lattice\ndimension = 2\nbase = 3\nlevels = 1, 2\n"
      "[experiment]\neps = 0.25,0.5\ni = 1,2,3\ndelta = 0.1\nreplicas = 7\nt_m = 4, 9\nmode = literal\n"
      "[output]\ndirectory = out\nsvg = true\n");
  EXPECT_EQ(c.dimension, 2);
  EXPECT_EQ(c.base, 3);
  EXPECT_EQ(c.levels, (std::vector<int>{1, 2}));
  EXPECT_EQ(c.eps, (std::vector<double>{0.25, 0.5}));
  EXPECT_EQ(c.i, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(c.replicas, 7u);
  EXPECT_EQ(c.t_m, (std::vector<double>{4, 9}));
  EXPECT_EQ(c.mode, SimulationMode::Literal);
  EXPECT_TRUE(c.svg);
  const auto d = parse_config_text("");
  EXPECT_EQ(d.levels, (std::vector<int>{3, 4, 5, 6, 7}));
  EXPECT_EQ(d.bundle, "neighbor_product");
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config_text("[tower]\ncolour = red\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[plots]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\nreplicas = 0\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\nreplicas = many\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\neps = 0.5x\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\neps = ,\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\neps = -1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\ni = 0\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\nrho = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\nmode = fast\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\nbundle = nope\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\nrate = edge_sum\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\nrate = file:/nonexistent/rate.txt\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[tower]\nfamily = free\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[tower]\nbase = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[tower]\nlevels = 0\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[tower]\nlevels = 3,4\n[experiment]\nt_m = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\nspectral_sites = 20\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[output]\nsvg = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[tower\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST(Config, RejectsAsymmetricRateFileBeforeSimulation) {
  TempDir tmp;
  const auto z = TowerSpec::integer_lattice(1, 2);
  const auto directed =
      EdgeBundle::from_rule("directed", z, 0, [](int s, Pattern, const auto&) { return s == 0 ? 1.0 : 2.0; });
  const auto file = tmp.path / "directed.txt";
  {
    std::ofstream out(file);
    write_bundle(out, directed);
  }
  EXPECT_THROW(parse_config_text("[experiment]\nrate = file:" + file.string() + "\n"), ConfigError);
  const auto ok = file.parent_path() / "ex4.txt";
  {
    std::ofstream out(ok);
    write_bundle(out, ex4_symmetrized(z).bundle());
  }
  EXPECT_NO_THROW(parse_config_text("[experiment]\nrate = file:" + ok.string() + "\n"));
}

TEST(Config, OverridesAndOutputRoot) {
  const auto c = parse_config_text("[experiment]\nreplicas = 10\n", {"experiment.replicas=20", "tower.levels=4"});
  EXPECT_EQ(c.replicas, 20u);
  EXPECT_EQ(c.levels, (std::vector<int>{4}));
  EXPECT_THROW(parse_config_text("", {"replicas=3"}), ConfigError);
  EXPECT_THROW(parse_config_text("", {"experiment.replicas"}), ConfigError);
  EXPECT_THROW(parse_config_text("", {"experiment.bogus=1"}), ConfigError);

  ExperimentConfig rel;
  rel.output = "results/x";
  ExperimentConfig abs;
  abs.output = "/tmp/abs";
  ::setenv("SEP_OUTPUT_ROOT", "/data/root", 1);
  EXPECT_EQ(output_directory(rel), fs::path("/data/root/results/x"));
  EXPECT_EQ(output_directory(abs), fs::path("/tmp/abs"));
  ::unsetenv("SEP_OUTPUT_ROOT");
  EXPECT_EQ(output_directory(rel), fs::path("results/x"));
}

TEST(Config, ShippedConfigsLoad) {
  for (const auto& e : fs::directory_iterator(SEP_CONFIG_DIR)) {
    if (e.path().extension() == ".ini") {
      EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
    }
  }
}

TEST(Outputs, EmptyReportListWritesNothing) {
  TempDir tmp;
  const auto dir = tmp.path / "never";
  EXPECT_TRUE(emit_outputs({}, dir).empty());
  EXPECT_FALSE(fs::exists(dir));
}

TEST(Outputs, CsvJsonSvgAndUnwritableDirectory) {
  TempDir tmp;
  Report r;
  r.name = "demo";
  r.columns = {"m", "y"};
  r.rows = {{3, 0.1}, {4, std::numeric_limits<double>::quiet_NaN()}};
  r.summary["note"] = "x";
  r.plot_x = "m";
  r.plot_y = "y";
  const auto files = emit_outputs({r}, tmp.path, true);
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(slurp(tmp.path / "demo.csv"), "m,y\n3,0.10000000000000001\n4,nan\n");
  const auto j = nlohmann::json::parse(slurp(tmp.path / "demo.json"));
  EXPECT_EQ(j["experiment"], "demo");
  EXPECT_EQ(j["rows"][0]["m"], 3);
  EXPECT_EQ(j["rows"][1]["y"], "nan");
  EXPECT_NE(slurp(tmp.path / "demo.svg").find("<polyline"), std::string::npos);
  {
    std::ofstream blocker(tmp.path / "file");
  }
  EXPECT_THROW(emit_outputs({r}, tmp.path / "file" / "sub"), Error);
}

TEST(Statistics, SlopeTrendAndBinomialOracle) {
  EXPECT_NEAR(loglog_slope({1, 2, 4, 8}, {1, 0.5, 0.25, 0.125}), -1.0, 1e-12);
  EXPECT_NEAR(loglog_slope({1, 10}, {3, 300}), 2.0, 1e-12);
  EXPECT_THROW(loglog_slope({1}, {1}), Error);
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_TRUE(trend_violations({-1, -2, -inf}, {-0.5, -0.6, -0.4}, {3, 4, 5}).empty());
  EXPECT_EQ(trend_violations({-1, -0.4}, {-0.5, -0.1}, {3, 4}), (std::vector<int>{4}));
  // n = 1: |X − X'| is Bernoulli(2ρ(1−ρ))
  EXPECT_NEAR(binomial_abs_difference(1, 0.3), 2 * 0.3 * 0.7, 1e-15);
  // n = 2, ρ = 1/2: P(|X−X'| = 1) = 1/2, P(= 2) = 1/8
  EXPECT_NEAR(binomial_abs_difference(2, 0.5), (0.5 + 2 * 0.125) / 2, 1e-15);
}

TEST(Superexp, SchemaAndZeroDeltaRow) {
  auto c = small_superexp();
  c.delta = 0;
  const auto r = run_superexp(c).front();
  const std::vector<std::string> head{"m", "N", "eps", "i", "delta", "p_hat", "ci_lo", "ci_hi", "log_rate"};
  ASSERT_GE(r.columns.size(), head.size());
  EXPECT_TRUE(std::equal(head.begin(), head.end(), r.columns.begin()));
  ASSERT_EQ(r.rows.size(), 2u);
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    EXPECT_EQ(r.at(k, "p_hat"), 1.0);
    EXPECT_EQ(r.at(k, "log_rate"), 0.0);
    EXPECT_GT(r.at(k, "t_m"), 0.0);
    EXPECT_GE(r.at(k, "b"), 1.0);
  }
  EXPECT_EQ(r.at(0, "exact_p"), 1.0);
  EXPECT_TRUE(r.summary["trend"][0]["non_increasing"].get<bool>());
}

TEST(Superexp, OccupancyAtMatchingIndexNeverExceeds) {
  auto c = small_superexp();
  c.bundle = "occupancy";
  c.eps = {0.5};
  c.levels = {3};
  // t_m = 16, ε√t_m = 2, so b = 2
  c.i = {2};
  c.delta = 0.01;
  const auto r = run_superexp(c).front();
  EXPECT_EQ(r.at(0, "b"), 2.0);
  EXPECT_EQ(r.at(0, "hits"), 0.0);
  EXPECT_EQ(r.at(0, "censored"), 1.0);
  EXPECT_EQ(r.at(0, "ci_lo"), 0.0);
  EXPECT_EQ(r.at(0, "log_rate_lo"), -std::numeric_limits<double>::infinity());
}

TEST(Superexp, SpectralBoundDominatesExactProbability) {
  auto c = small_superexp();
  c.levels = {2};
  c.delta = 0.2;
  c.eps = {0.5};
  c.i = {1};
  const auto r = run_superexp(c).front();
  EXPECT_LE(r.at(0, "exact_p"), r.at(0, "fk_bound") + 1e-12);
  EXPECT_LT(std::abs(r.at(0, "exact_z")), 3.0);
}

TEST(OneBlock, OccupancyExactVarianceAndMonotoneDecay) {
  ExperimentConfig c;
  c.levels = {6};
  c.bundle = "occupancy";
  c.i = {1, 3, 9};
  c.replicas = 60;
  c.samples = 5;
  const auto r = run_one_block(c).front();
  double prev = 1;
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    EXPECT_NEAR(r.at(k, "exact_variance"), 0.25 / r.at(k, "F_size"), 1e-15);
    EXPECT_EQ(r.at(k, "one_block_mean"), 0.0);
    EXPECT_LT(r.at(k, "sim_variance"), prev);
    prev = r.at(k, "sim_variance");
  }
  EXPECT_NEAR(r.summary["slopes"][0]["exact_slope"].get<double>(), -1.0, 1e-9);
}

TEST(TwoBlocks, ConstantConfigurationGivesZero) {
  ExperimentConfig c;
  c.levels = {5};
  c.bundle = "occupancy";
  c.eps = {0.5};
  c.i = {1};
  c.rho = 1.0;
  c.replicas = 5;
  c.samples = 3;
  const auto r = run_two_blocks(c).front();
  ASSERT_FALSE(r.rows.empty());
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    EXPECT_GT(r.at(k, "norm"), c.L);
    EXPECT_EQ(r.at(k, "mean_abs_difference"), 0.0);
  }
}

TEST(TwoBlocks, DisjointWindowsMatchBinomialOracle) {
  ExperimentConfig c;
  c.levels = {6};
  c.bundle = "occupancy";
  c.eps = {0.25};
  c.i = {2};
  c.replicas = 100;
  c.samples = 10;
  const auto r = run_two_blocks(c).front();
  int compared = 0;
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    if (std::isnan(r.at(k, "exact_iid"))) continue;
    EXPECT_NEAR(r.at(k, "exact_iid"), binomial_abs_difference(5, 0.5), 1e-15);
    EXPECT_LT(std::abs(r.at(k, "mean_abs_difference") - r.at(k, "exact_iid")), 4 * r.at(k, "se") + 1e-3);
    ++compared;
  }
  EXPECT_GT(compared, 0);
}

TEST(FolnerReport, CycleAtLevelSixIsExact) {
  ExperimentConfig c;
  c.levels = {6};
  c.eps = {0.5};
  c.i = {1};
  c.samples = 1000;
  const auto r = run_folner_report(c).front();
  // diam 32, t_m = 1024, ε√t_m = 16 = b; |F_b| = 33, |∂F_b| = 2, |B(1)| = 3
  EXPECT_EQ(r.at(0, "b"), 16.0);
  EXPECT_EQ(r.at(0, "F_size"), 33.0);
  EXPECT_EQ(r.at(0, "ratio_boundary"), 2.0 / 33.0);
  EXPECT_EQ(r.at(0, "ratio_ball"), 3.0 / 33.0);
  EXPECT_LE(r.at(0, "max_deviation"), r.at(0, "bound"));
}

TEST(FolnerReport, RatiosDecreaseAlongLevels) {
  ExperimentConfig c;
  c.dimension = 2;
  c.levels = {2, 3, 4};
  c.eps = {0.5};
  c.i = {1};
  c.samples = 20;
  const auto r = run_folner_report(c).front();
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    EXPECT_EQ(r.at(k, "ratio_boundary"), r.at(k, "closed_form"));
    if (k > 0) {
      EXPECT_LT(r.at(k, "ratio_boundary"), r.at(k - 1, "ratio_boundary"));
    }
  }
}

TEST(BuildTower, CoversAndSizes) {
  ExperimentConfig c;
  c.family = "heisenberg";
  c.levels = {1, 2};
  const auto r = run_build_tower(c, true).front();
  EXPECT_EQ(r.at(0, "N"), 8.0);
  EXPECT_EQ(r.at(1, "N"), 64.0);
  EXPECT_EQ(r.at(1, "covers_previous"), 1.0);
  EXPECT_TRUE(r.summary.contains("edge_list_m2"));
}

TEST(SpectralCheck, MarginsAndCap) {
  ExperimentConfig c;
  c.levels = {2};
  c.eps = {0.5};
  c.i = {1};
  c.a = {0.5, 1.0};
  const auto r = run_spectral_check(c).front();
  ASSERT_EQ(r.rows.size(), 2u);
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    EXPECT_GE(r.at(k, "bound_margin"), -1e-9);
    EXPECT_LT(std::abs(r.at(k, "variational_gap")), 1e-8);
  }
  EXPECT_EQ(r.summary["records"].size(), 2u);
  c.levels = {4};
  EXPECT_THROW(run_spectral_check(c), CapExceeded);
}

TEST(PathLemma, NoViolationsOnCycleOfFour) {
  ExperimentConfig c;
  c.levels = {2};
  c.functions = 50;
  const auto r = run_path_lemma(c).front();
  EXPECT_EQ(r.summary["violations"], 0);
  EXPECT_EQ(r.rows.size(), 4u);
}

TEST(Determinism, RerunGivesIdenticalCsv) {
  auto c = small_superexp();
  c.replicas = 100;
  const auto a = report_csv(run_superexp(c).front());
  c.threads = 3;
  EXPECT_EQ(a, report_csv(run_superexp(c).front()));
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const auto out = tmp.path.string();
  EXPECT_EQ(run_cli("build-tower --set tower.levels=1,2 -o " + out), 0);
  EXPECT_TRUE(fs::exists(tmp.path / "tower.csv"));
  EXPECT_EQ(run_cli("superexp --set experiment.replicas=0 -o " + out), 1);
  EXPECT_EQ(run_cli("superexp --set experiment.colour=red -o " + out), 1);
  EXPECT_EQ(run_cli("superexp --config /nonexistent.ini"), 1);
  EXPECT_EQ(run_cli("no-such-command"), 1);
  EXPECT_EQ(run_cli("spectral-check --set tower.levels=4 -o " + out), 2);
  EXPECT_EQ(run_cli("path-lemma --set tower.levels=2 --set experiment.functions=5 -o " + out), 0);
}

TEST(Cli, SameSeedSameBytes) {
  TempDir tmp;
  const auto a = tmp.path / "a", b = tmp.path / "b";
  const std::string args = "superexp --set tower.levels=2,3 --set experiment.replicas=50 --set experiment.exact_sites=4 -o ";
  ASSERT_EQ(run_cli(args + a.string()), 0);
  ASSERT_EQ(run_cli(args + b.string()), 0);
  EXPECT_EQ(slurp(a / "superexp.csv"), slurp(b / "superexp.csv"));
  EXPECT_EQ(slurp(a / "superexp.json"), slurp(b / "superexp.json"));
}
