#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "burgers/harness.hpp"
#include "burgers/noise.hpp"

using namespace burgers;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.model.theta = 1.0;
  cfg.model.horizon = 0.01;
  cfg.model.modes = 32;
  cfg.model.grid_points = 64;
  cfg.model.dt = 1e-4;
  cfg.model.nonlinearity.burgers_coeff = 0.5;
  cfg.observation.deltas = {0.2, 0.1};
  cfg.observation.dt_obs = 2e-4;
  cfg.study.replications = 24;
  cfg.study.seed = 77;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("burgerslab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, DefaultsAndTemplateAgree) {
  const ExperimentConfig defaults;
  const auto from_template = parse_config(config_template());
  EXPECT_EQ(canonical_config(from_template), canonical_config(defaults));
  EXPECT_EQ(from_template.outputs.directory, defaults.outputs.directory);
  EXPECT_NO_THROW(defaults.validate());
}

TEST(Config, YamlRoundTrip) {
  auto cfg = small_config();
  cfg.model.nonlinearity.family = "nemytskii";
  cfg.model.initial = "coefficients";
  cfg.model.initial_coefficients = {0.1, -0.25};
  cfg.study.levels = {0.8};
  const auto back = parse_config(to_yaml(cfg));
  EXPECT_EQ(canonical_config(back), canonical_config(cfg));
  EXPECT_EQ(back.solver().initial_condition[1], -0.25);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("model: {thetta: 1}"), ConfigError);
  EXPECT_THROW(parse_config("model: {theta: abc}"), ConfigError);
  EXPECT_THROW(parse_config("model: [1, 2"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.yaml"), ConfigError);

  auto cfg = small_config();
  cfg.observation.deltas = {0.6};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.observation.dt_obs = 1.5e-4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.study.replications = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.model.nonlinearity.family = "nonlocal1";
  cfg.model.nonlinearity.f1 = "no_such_function";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.model.grid_points = 20;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.observation.deltas = {0.1, 0.1};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, NamedFunctions) {
  EXPECT_EQ(named_function("tanh")(0.5), std::tanh(0.5));
  EXPECT_THROW(named_function("nope"), ConfigError);
  auto cfg = small_config();
  cfg.model.nonlinearity.family = "nonlocal2";
  cfg.model.nonlinearity.g = "inv_one_plus_sq";
  cfg.model.nonlinearity.h = "sin_pi";
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ConfigHash, KnownDigestAndSensitivity) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto base = small_config();
  auto other = base;
  other.study.parallelism = 8;
  other.outputs.directory = "elsewhere";
  EXPECT_EQ(config_hash(base), config_hash(other));
  other.study.seed += 1;
  EXPECT_NE(config_hash(base), config_hash(other));
  EXPECT_EQ(config_hash(base), sha256_hex(canonical_config(base)));
}

// Reference values: scipy.stats.kstwobign.sf.
TEST(Kolmogorov, SurvivalFunctionMatchesScipy) {
  const std::pair<double, double> cases[] = {
      {0.3, 0.9999906941986655},    {0.5, 0.9639452436648751},
      {0.8, 0.5441424115741981},    {1.0, 0.26999967167735456},
      {1.2, 0.11224966667072497},   {1.36, 0.049485876755377876},
      {1.63, 0.009846364888486529}, {2.0, 0.0006709252557796953},
      {3.0, 3.045995948942526e-08},
  };
  for (const auto& [x, p] : cases) EXPECT_NEAR(kolmogorov_sf(x), p, 1e-13 + 1e-10 * p) << x;
  EXPECT_EQ(kolmogorov_sf(0.0), 1.0);
}

// Reference: scipy.stats.kstest(v, "norm", method="asymp").
TEST(KsNormality, MatchesScipyOnFixedSample) {
  std::vector<double> v;
  for (int i = 0; i < 40; ++i) v.push_back(1.5 * std::sin(1.7 * i));
  const auto r = ks_normality(v);
  EXPECT_NEAR(r.statistic, 0.13507580292071986, 1e-14);
  EXPECT_NEAR(r.p_value, 0.4588186334003862, 1e-10);
}

TEST(KsNormality, DegenerateAndShiftedSamples) {
  const auto constant = ks_normality(std::vector<double>(50, 0.0));
  EXPECT_GE(constant.statistic, 0.5);
  EXPECT_LT(constant.p_value, 1e-10);

  NoisePlan plan{3, 0, 1000, 1, 1.0};
  std::vector<double> z(1000);
  fill_standard_normals(plan, 0, z);
  for (auto& v : z) v += 3.0;
  // Population distance sup|Phi(x - 3) - Phi(x)| = 2 Phi(1.5) - 1.
  EXPECT_NEAR(ks_normality(z).statistic, 0.8663855974622838, 0.03);
  EXPECT_THROW(ks_normality(std::vector<double>(19, 0.0)), std::invalid_argument);
}

TEST(KsNormality, LevelHoldsOnOwnGenerator) {
  int rejections = 0;
  std::vector<double> z(10000);
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    NoisePlan plan{2024, trial, z.size(), 1, 1.0};
    fill_standard_normals(plan, 0, z);
    if (ks_normality(z).p_value < 0.01) ++rejections;
  }
  EXPECT_LE(rejections, 5);
}

TEST(Replication, DeterministicAndOrdered) {
  const StudyContext ctx(small_config());
  const auto a = run_replication(ctx, 5);
  const auto b = run_replication(ctx, 5);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(to_csv_row(a[0]), to_csv_row(b[0]));
  EXPECT_EQ(to_csv_row(a[1]), to_csv_row(b[1]));
  EXPECT_EQ(a[0].delta, 0.2);
  EXPECT_EQ(to_csv_row(run_replication(ctx, 0.1, 5)), to_csv_row(a[1]));
  EXPECT_NE(to_csv_row(run_replication(ctx, 6)[0]), to_csv_row(a[0]));
  EXPECT_TRUE(a[0].R.has_value());
  EXPECT_NE(*a[0].R, 0.0);
  EXPECT_THROW(run_replication(ctx, 0.3, 5), std::invalid_argument);
}

TEST(Replication, LinearModelHasZeroBiasTerm) {
  auto cfg = small_config();
  cfg.model.nonlinearity.burgers_coeff = 0.0;
  const StudyContext ctx(cfg);
  for (const auto& r : run_replication(ctx, 1)) {
    ASSERT_TRUE(r.R.has_value());
    EXPECT_EQ(*r.R, 0.0);
    EXPECT_NEAR(*r.Ibar / r.fisher_info, 1.0, 1e-12);
    EXPECT_NEAR(r.normalized_error,
                (r.theta_hat - 1.0) / (r.delta * ctx.sigma()), 1e-12);
  }
}

TEST(Replication, BlowUpIsRecordedNotFatal) {
  auto cfg = small_config();
  cfg.model.blowup_cap = 1e-3;
  cfg.study.replications = 3;
  const auto result = run_study(cfg);
  for (const auto& r : result.records) {
    EXPECT_TRUE(r.blow_up);
    EXPECT_TRUE(r.failed());
  }
  EXPECT_TRUE(result.summary.budget_exceeded);
  EXPECT_EQ(result.summary.at(0.1).blow_ups, 3u);
}

TEST(Study, SchedulingInvariance) {
  const auto cfg = small_config();
  StudyOptions serial, parallel;
  serial.parallelism = 1;
  parallel.parallelism = 4;
  const auto a = run_study(cfg, serial);
  const auto b = run_study(cfg, parallel);
  ASSERT_EQ(a.records.size(), 48u);
  std::ostringstream ca, cb;
  write_records_csv(ca, a.records);
  write_records_csv(cb, b.records);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(summary_json(a.summary, cfg, false), summary_json(b.summary, cfg, false));
  EXPECT_EQ(a.records.front().delta, 0.1);
  EXPECT_EQ(a.records.front().replication_id, 0u);
}

TEST(Study, SummaryStatistics) {
  const auto cfg = small_config();
  const auto result = run_study(cfg);
  const auto& d = result.summary.at(0.1);
  EXPECT_EQ(d.replications, 24u);
  EXPECT_EQ(d.failures, 0u);
  ASSERT_TRUE(d.ks.has_value());
  EXPECT_TRUE(d.variance_defined);
  double sq = 0.0;
  std::size_t covered = 0;
  for (const auto& r : result.records) {
    if (r.delta != 0.1) continue;
    sq += (r.theta_hat - 1.0) * (r.theta_hat - 1.0);
    if (r.ci_lo <= 1.0 && 1.0 <= r.ci_hi) ++covered;
  }
  EXPECT_NEAR(d.rmse, std::sqrt(sq / 24.0), 1e-12);
  EXPECT_DOUBLE_EQ(d.coverage.at(0.9), covered / 24.0);
  EXPECT_GE(d.coverage.at(0.95), d.coverage.at(0.9));
  EXPECT_NEAR(d.variance_ratio * d.target_variance, d.scaled_variance, 1e-12);
}

TEST(Study, SingleReplicationFlagsVariance) {
  auto cfg = small_config();
  cfg.study.replications = 1;
  const auto result = run_study(cfg);
  const auto& d = result.summary.at(0.2);
  EXPECT_FALSE(d.variance_defined);
  EXPECT_FALSE(d.ks.has_value());
  EXPECT_EQ(d.mean_theta_hat, result.records[1].theta_hat);
}

TEST(Study, ResumesFromProgressFile) {
  const auto dir = scratch_dir("resume");
  auto cfg = small_config();
  cfg.study.replications = 6;
  StudyOptions opts;
  opts.progress_file = dir / "progress.csv";
  const auto first = run_study(cfg, opts);

  std::size_t first_report = 99;
  opts.progress = [&](std::size_t done, std::size_t) {
    if (first_report == 99) first_report = done;
  };
  const auto again = run_study(cfg, opts);
  EXPECT_EQ(first_report, 6u);
  std::ostringstream a, b;
  write_records_csv(a, first.records);
  write_records_csv(b, again.records);
  EXPECT_EQ(a.str(), b.str());

  // The replication count is part of the hash, so nothing is reused.
  cfg.study.replications = 8;
  first_report = 99;
  const auto bigger = run_study(cfg, opts);
  EXPECT_EQ(first_report, 0u);
  EXPECT_EQ(bigger.records.size(), 16u);
  fs::remove_all(dir);
}

TEST(Study, ResumeSkipsTruncatedTail) {
  const auto dir = scratch_dir("truncated");
  auto cfg = small_config();
  cfg.study.replications = 4;
  StudyOptions opts;
  opts.progress_file = dir / "progress.csv";
  const auto full = run_study(cfg, opts);
  auto text = slurp(*opts.progress_file);
  text.resize(text.size() - 20);
  std::ofstream(*opts.progress_file, std::ios::trunc) << text;
  std::size_t first_report = 99;
  opts.progress = [&](std::size_t done, std::size_t) {
    if (first_report == 99) first_report = done;
  };
  const auto resumed = run_study(cfg, opts);
  EXPECT_EQ(first_report, 3u);
  std::ostringstream a, b;
  write_records_csv(a, full.records);
  write_records_csv(b, resumed.records);
  EXPECT_EQ(a.str(), b.str());
  fs::remove_all(dir);
}

TEST(Emit, FilesRoundTrip) {
  const auto dir = scratch_dir("emit");
  const auto cfg = small_config();
  const auto result = run_study(cfg);
  const auto files = emit_results(result, cfg, dir);
  EXPECT_TRUE(fs::exists(dir / "records.csv"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "rate.csv"));
  EXPECT_TRUE(fs::exists(dir / "hist_delta_0.1.csv"));
  EXPECT_TRUE(fs::exists(dir / "hist_delta_0.2.csv"));

  std::ifstream in(dir / "records.csv");
  const auto back = read_records_csv(in);
  ASSERT_EQ(back.size(), result.records.size());
  const auto again = summarize(cfg, back);
  for (const auto& d : result.summary.deltas) {
    const auto& e = again.at(d.delta);
    EXPECT_NEAR(d.rmse, e.rmse, 1e-9);
    EXPECT_NEAR(d.bias, e.bias, 1e-9);
    EXPECT_NEAR(d.scaled_variance, e.scaled_variance, 1e-9);
    EXPECT_NEAR(d.ks->statistic, e.ks->statistic, 1e-9);
    EXPECT_EQ(d.coverage, e.coverage);
  }

  const auto json = nlohmann::json::parse(slurp(dir / "summary.json"));
  const auto canonical = json["metadata"]["canonical_config"].get<std::string>();
  EXPECT_EQ(json["metadata"]["config_hash"].get<std::string>(), sha256_hex(canonical));
  EXPECT_EQ(canonical, canonical_config(cfg));
  fs::remove_all(dir);
}

TEST(Emit, EmptyRecordSetWritesHeaders) {
  const auto dir = scratch_dir("empty");
  const auto cfg = small_config();
  StudyResult empty;
  empty.summary = summarize(cfg, {});
  emit_results(empty, cfg, dir);
  EXPECT_EQ(slurp(dir / "records.csv"), std::string(kRecordHeader) + "\n");
  std::ifstream in(dir / "records.csv");
  EXPECT_TRUE(read_records_csv(in).empty());
  EXPECT_EQ(empty.summary.at(0.1).replications, 0u);
  fs::remove_all(dir);
}

TEST(Emit, UnwritableDirectoryIsAnOutputError) {
  StudyResult empty;
  const auto cfg = small_config();
  empty.summary = summarize(cfg, {});
  EXPECT_THROW(emit_results(empty, cfg, "/proc/burgerslab/out"), OutputError);
}
