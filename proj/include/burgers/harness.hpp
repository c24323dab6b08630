#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "burgers/dynamics.hpp"
#include "burgers/estimation.hpp"
#include "burgers/observation.hpp"

namespace burgers {

/// Invalid or unreadable configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Output files could not be written or read (CLI exit code 3).
class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scalar functions that configuration files may refer to by name.
ScalarFunction named_function(const std::string& name);
std::vector<std::string> named_functions();

struct NonlinearityConfig {
  double burgers_coeff = 0.5;
  std::string family = "none";  // none | nonlocal1 | nonlocal2 | nemytskii
  // nemytskii: f(x) = -c0 x |x|^eta g(|x|^{1-eta})
  double c0 = 1.0;
  double eta = 1.0;
  std::string g = "one";
  // nonlocal1 / nonlocal2
  std::string f1 = "one";
  std::string f2 = "identity";
  std::string h = "one";

  NonlinearitySpec build() const;
};

struct ModelConfig {
  double theta = 1.0;
  double horizon = 0.005;
  std::size_t modes = 512;
  std::size_t grid_points = 1023;
  double dt = 5e-8;
  std::string initial = "zero";  // zero | e1 | coefficients
  std::vector<double> initial_coefficients;
  bool noise = true;
  bool dealias = true;
  double blowup_cap = 1e8;
  NonlinearityConfig nonlinearity;
};

struct ObservationConfig {
  double x0 = 0.5;
  std::string kernel = "bump";
  std::vector<double> deltas{0.1, 0.05, 0.02};
  double dt_obs = 5e-8;
};

struct StudyConfig {
  std::size_t replications = 500;
  std::uint64_t seed = 20240611;
  std::vector<double> levels{0.9, 0.95};
  std::size_t parallelism = 1;
  double failure_budget = 0.2;
  bool diagnostics = true;  // track the linear part and record R, M, Ibar
};

struct OutputConfig {
  std::string directory = "results";
  std::vector<std::string> formats{"csv", "json"};
};

struct ExperimentConfig {
  ModelConfig model;
  ObservationConfig observation;
  StudyConfig study;
  OutputConfig outputs;

  SolverConfig solver() const;
  KernelSpec kernel() const;
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_yaml(const ExperimentConfig& cfg);
/// Commented template with every default spelled out.
std::string config_template();

/// Compact JSON of every field that affects results (parallelism and outputs
/// excluded); the config hash is the SHA-256 of this string.
std::string canonical_config(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);
std::string sha256_hex(const std::string& data);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Survival function of the Kolmogorov distribution, P(K > x).
double kolmogorov_sf(double x);
/// One-sample KS test against N(0,1); p-value from the asymptotic
/// distribution of sqrt(n) D_n. Requires at least 20 values.
KsResult ks_normality(std::vector<double> values);

/// Everything a replication needs that does not depend on replication_id.
class StudyContext {
 public:
  explicit StudyContext(ExperimentConfig cfg);

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const SolverConfig& solver() const noexcept { return solver_; }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  const std::vector<KernelCoefficients>& coefficients() const noexcept { return coeffs_; }
  /// sqrt(asymptotic_variance(theta, K, T)).
  double sigma() const noexcept { return sigma_; }
  std::size_t stride() const noexcept { return stride_; }

 private:
  ExperimentConfig cfg_;
  SolverConfig solver_;
  KernelSpec kernel_;
  std::vector<KernelCoefficients> coeffs_;
  double sigma_ = 0.0;
  std::size_t stride_ = 1;
};

/// One simulated path observed at every configured delta; records are in the
/// order of the delta list. The path depends only on (seed, replication_id),
/// so each record is deterministic in (seed, replication_id, delta).
std::vector<ReplicationRecord> run_replication(const StudyContext& ctx,
                                               std::uint64_t replication_id);
ReplicationRecord run_replication(const StudyContext& ctx, double delta,
                                  std::uint64_t replication_id);

struct DeltaSummary {
  double delta = 0.0;
  std::size_t replications = 0;
  std::size_t failures = 0;  // blow-ups plus degenerate observations
  std::size_t blow_ups = 0;
  double mean_theta_hat = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double scaled_variance = 0.0;  // sample variance of delta^{-1}(theta_hat - theta)
  double target_variance = 0.0;  // sigma_K^2
  double variance_ratio = 0.0;
  bool variance_defined = false;  // false with fewer than two successes
  std::optional<KsResult> ks;     // absent with fewer than 20 successes
  std::map<double, double> coverage;
  double mean_scaled_fisher = 0.0;  // mean of delta^2 I_delta
  std::optional<double> mean_abs_bias_term;  // mean |delta^{-1} I^{-1} R|
};

struct McSummary {
  std::vector<DeltaSummary> deltas;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::size_t replications = 0;
  std::size_t failures = 0;
  bool budget_exceeded = false;
  double wall_time_seconds = 0.0;

  const DeltaSummary& at(double delta) const;
};

/// Statistics from records sorted by (delta, replication_id).
McSummary summarize(const ExperimentConfig& cfg, const std::vector<ReplicationRecord>& records);

struct StudyOptions {
  std::optional<std::size_t> parallelism;
  /// When set, completed records are appended to this file as they finish and
  /// reloaded on a rerun with the same config hash.
  std::optional<std::filesystem::path> progress_file;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct StudyResult {
  std::vector<ReplicationRecord> records;  // sorted by (delta, replication_id)
  McSummary summary;
};

StudyResult run_study(const ExperimentConfig& cfg, const StudyOptions& options = {});

std::string summary_json(const McSummary& summary, const ExperimentConfig& cfg,
                         bool include_wall_time = true);

/// records.csv, summary.json, rate.csv and hist_delta_<delta>.csv in `dir`.
/// Throws OutputError on I/O failure.
std::vector<std::filesystem::path> emit_results(const StudyResult& result,
                                                const ExperimentConfig& cfg,
                                                const std::filesystem::path& dir);

}  // namespace burgers
