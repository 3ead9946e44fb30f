#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ex2mcmc/bench.hpp"

using namespace ex2;
using namespace ex2::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ex2_bench_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string error_of(const std::vector<std::pair<std::string, std::string>>& pairs) {
  try {
    config_from_pairs(pairs);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EX2_SAMPLE_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, MinimalFileUsesDefaults) {
  const fs::path dir = scratch("minimal");
  const ExperimentConfig c = parse_config(write_file(dir / "a.cfg", "experiment = mixture-2d\nseed = 7  # trailing\n").string());
  EXPECT_EQ(c.experiment, "mixture-2d");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.n_particles, ExperimentConfig{}.n_particles);
  EXPECT_EQ(c.dims, std::vector<int>{c.dim});
}

TEST(Config, SerializedConfigParsesBack) {
  const ExperimentConfig c = config_from_pairs({{"experiment", "gauss-dim-sweep"},
                                                {"seed", "11"},
                                                {"dims", "2, 5, 9"},
                                                {"samplers", "isir, ex2"},
                                                {"mala_step", "0.0123"},
                                                {"checkpoints", "10, 40"},
                                                {"n_steps", "50"},
                                                {"burn_in", "10"},
                                                {"flow_hidden", "4"},
                                                {"extend_dims", "true"}});
  const fs::path dir = scratch("roundtrip");
  const std::string text = config_text(c);
  const ExperimentConfig back = parse_config(write_file(dir / "c.cfg", text).string());
  EXPECT_EQ(config_text(back), text);
  EXPECT_EQ(back.dims, (std::vector<int>{2, 5, 9}));
  EXPECT_EQ(back.samplers, (std::vector<std::string>{"isir", "ex2"}));
  EXPECT_EQ(back.mala_step, 0.0123);
  EXPECT_TRUE(back.extend_dims);
}

TEST(Config, UnknownKeysAreListedTogether) {
  const std::string msg = error_of({{"experiment", "funnel"}, {"seed", "1"}, {"nparticles", "3"}, {"colour", "red"}});
  EXPECT_NE(msg.find("nparticles"), std::string::npos);
  EXPECT_NE(msg.find("colour"), std::string::npos);
}

TEST(Config, SeedIsRequired) {
  EXPECT_NE(error_of({{"experiment", "funnel"}}).find("seed"), std::string::npos);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_NE(error_of({{"experiment", "nope"}, {"seed", "1"}}).find("nope"), std::string::npos);
  EXPECT_NE(error_of({{"experiment", "funnel"}, {"seed", "1"}, {"n_particles", "0"}}).find("n_particles"), std::string::npos);
  EXPECT_NE(error_of({{"experiment", "funnel"}, {"seed", "1"}, {"n_particles", "ten"}}).find("n_particles"), std::string::npos);
  EXPECT_NE(error_of({{"experiment", "funnel"}, {"seed", "1"}, {"dims", "200"}}).find("extend_dims"), std::string::npos);
  EXPECT_NE(error_of({{"experiment", "funnel"}, {"seed", "1"}, {"iota", "0.5"}}).find("iota"), std::string::npos);
  EXPECT_NE(error_of({{"experiment", "funnel"}, {"seed", "1"}, {"burn_in", "1000"}, {"n_steps", "1000"}}).find("burn_in"),
            std::string::npos);
  const fs::path dir = scratch("badline");
  EXPECT_THROW(parse_config(write_file(dir / "b.cfg", "experiment funnel\nseed = 1\n").string()), ConfigError);
  EXPECT_THROW(parse_config((dir / "missing.cfg").string()), ConfigError);
}

TEST(Config, OverridesApplyLast) {
  const fs::path dir = scratch("override");
  const ExperimentConfig c =
      parse_config(write_file(dir / "a.cfg", "experiment = funnel\nseed = 1\n").string(), {{"seed", "99"}});
  EXPECT_EQ(c.seed, 99u);
}

TEST(Csv, EmptyResultIsHeaderOnly) {
  EXPECT_EQ(csv_text({}), "experiment,sampler,dim,metric,value,replicate,seed\n");
}

TEST(Csv, DoublesRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Csv, RowsSortedBySamplerDimReplicateKeepingMetricOrder) {
  std::vector<ResultRow> rows = {{"x", "mala", 2, "ess", 1.0, 1, 5},
                                 {"x", "isir", 5, "ess", 2.0, 0, 5},
                                 {"x", "isir", 2, "tv", 3.0, 0, 5},
                                 {"x", "isir", 2, "ess", 4.0, 1, 5},
                                 {"x", "isir", 2, "ess", 5.0, 0, 5}};
  sort_rows(rows);
  std::vector<double> order;
  for (const auto& r : rows) order.push_back(r.value);
  EXPECT_EQ(order, (std::vector<double>{3.0, 5.0, 4.0, 2.0, 1.0}));
}

TEST(Determinism, RepeatedRunsAndThreadCountsGiveIdenticalCsv) {
  const ExperimentConfig c = parse_config(std::string(EX2_GOLDEN_DIR) + "/mixture-2d.cfg");
  const std::string a = csv_text(run_experiment(c, 1).rows);
  EXPECT_EQ(csv_text(run_experiment(c, 1).rows), a);
  EXPECT_EQ(csv_text(run_experiment(c, 4).rows), a);
}

TEST(Outputs, RunWritesCsvAndResolvedConfig) {
  const fs::path dir = scratch("outputs");
  const ExperimentConfig c = parse_config(std::string(EX2_GOLDEN_DIR) + "/isir-tv-bound.cfg");
  const ExperimentOutput out = run_experiment(c, 2);
  emit_outputs(out, dir.string());
  EXPECT_EQ(read_file(dir / "results.csv"), csv_text(out.rows));
  EXPECT_EQ(config_text(parse_config((dir / "config.cfg").string())), config_text(c));
}

class Golden : public ::testing::TestWithParam<std::string> {};

TEST_P(Golden, MatchesCheckedInCsv) {
  const std::string base = std::string(EX2_GOLDEN_DIR) + "/" + GetParam();
  const ExperimentConfig c = parse_config(base + ".cfg");
  EXPECT_EQ(csv_text(run_experiment(c, 2).rows), read_file(base + ".csv"));
}

INSTANTIATE_TEST_SUITE_P(Experiments, Golden,
                         ::testing::Values("isir-tv-bound", "mixture-2d", "gauss-dim-sweep", "funnel", "banana",
                                           "flex2-train", "theory-report"),
                         [](const auto& info) {
                           std::string s = info.param;
                           for (char& ch : s)
                             if (ch == '-') ch = '_';
                           return s;
                         });

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  EXPECT_EQ(run_cli("run " + std::string(EX2_GOLDEN_DIR) + "/isir-tv-bound.cfg --out " + (dir / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "results.csv"));
  write_file(dir / "bad.cfg", "experiment = funnel\nseed = 1\nbogus = 2\n");
  EXPECT_EQ(run_cli("run " + (dir / "bad.cfg").string() + " --out " + (dir / "bad").string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  write_file(dir / "ok.json", R"({"m": 0.1, "M": 2, "L": 1, "K": 5, "d": 2})");
  EXPECT_EQ(run_cli("theory " + (dir / "ok.json").string()), 0);
  write_file(dir / "infeasible.json", R"({"var_pi": 1, "var_lambda": 0.4})");
  EXPECT_EQ(run_cli("theory " + (dir / "infeasible.json").string()), 3);
  write_file(dir / "unknown.json", R"({"q": 1})");
  EXPECT_EQ(run_cli("theory " + (dir / "unknown.json").string()), 2);
}
