#include "burgers/estimation.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ostream.h>

namespace burgers {

MleSums augmented_mle(std::span<const double> x, std::span<const double> x_lap, double dt) {
  if (x.size() != x_lap.size()) throw std::invalid_argument("augmented_mle: series lengths differ");
  if (x.size() < 2) throw std::invalid_argument("augmented_mle: need at least two observations");
  if (!(dt > 0.0)) throw std::invalid_argument("augmented_mle: dt must be positive");
  MleSums s;
  double squares = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    s.numerator += x_lap[i] * (x[i + 1] - x[i]);
    squares += x_lap[i] * x_lap[i];
  }
  s.denominator = squares * dt;
  if (!(s.denominator > 0.0)) {
    throw DegenerateObservationError("augmented_mle: X^Delta vanishes, denominator is zero");
  }
  s.theta_hat = s.numerator / s.denominator;
  return s;
}

MleSums augmented_mle(const TrajectoryObservation& obs) {
  return augmented_mle(obs.x, obs.x_lap, obs.dt);
}

double fisher_information(const TrajectoryObservation& obs, double norm_K) {
  if (!(norm_K > 0.0)) throw std::invalid_argument("fisher_information: ||K|| must be positive");
  double squares = 0.0;
  for (std::size_t i = 0; i + 1 < obs.x_lap.size(); ++i) squares += obs.x_lap[i] * obs.x_lap[i];
  return squares * obs.dt / (norm_K * norm_K);
}

double asymptotic_variance(double theta, double norm_K, double norm_K_prime, double horizon) {
  if (!(theta > 0.0) || !(norm_K > 0.0) || !(norm_K_prime > 0.0) || !(horizon > 0.0)) {
    throw std::invalid_argument("asymptotic_variance: inputs must be positive");
  }
  return 2.0 * theta * norm_K * norm_K / (horizon * norm_K_prime * norm_K_prime);
}

double asymptotic_variance(double theta, const KernelSpec& kernel, double horizon) {
  return asymptotic_variance(theta, kernel.norm_K, kernel.norm_K_prime, horizon);
}

double fisher_limit(double theta, const KernelSpec& kernel, double horizon) {
  return horizon * kernel.norm_K_prime * kernel.norm_K_prime /
         (2.0 * theta * kernel.norm_K * kernel.norm_K);
}

ConfidenceInterval confidence_interval(double theta_hat, double fisher_info, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(fisher_info > 0.0)) throw std::invalid_argument("Fisher information must be positive");
  const double half = normal_quantile(1.0 - 0.5 * alpha) / std::sqrt(fisher_info);
  return {1.0 - alpha, theta_hat - half, theta_hat + half};
}

const ConfidenceInterval& EstimateResult::interval(double level) const {
  for (const auto& ci : intervals) {
    if (std::abs(ci.level - level) < 1e-12) return ci;
  }
  throw std::out_of_range(fmt::format("no interval at level {}", level));
}

EstimateResult estimate(const TrajectoryObservation& obs, double norm_K,
                        std::span<const double> levels) {
  const auto sums = augmented_mle(obs);
  EstimateResult r;
  r.delta = obs.delta;
  r.theta_hat = sums.theta_hat;
  r.numerator = sums.numerator;
  r.denominator = sums.denominator;
  r.fisher_info = sums.denominator / (norm_K * norm_K);
  for (double level : levels) {
    r.intervals.push_back(confidence_interval(r.theta_hat, r.fisher_info, 1.0 - level));
  }
  return r;
}

Decomposition error_decomposition(const Trajectory& traj, const TrajectoryObservation& obs,
                                  const KernelCoefficients& coeffs, const SolverConfig& cfg,
                                  double theta_true) {
  if (!traj.has_linear_part()) {
    throw std::invalid_argument("error_decomposition: trajectory lacks its linear part");
  }
  const std::size_t stride = observation_stride(traj.dt, obs.dt);
  const auto sums = augmented_mle(obs);
  const double norm2 = coeffs.norm_K * coeffs.norm_K;

  std::optional<DriftEvaluator> evaluator;
  if (!cfg.nonlinearity.is_linear()) {
    evaluator.emplace(cfg.modes, cfg.grid_points, cfg.dealias, cfg.nonlinearity);
  }
  if (cfg.modes != coeffs.modes()) {
    throw std::invalid_argument("error_decomposition: kernel and solver mode counts differ");
  }
  std::vector<double> drift(cfg.modes, 0.0);
  double bias = 0.0;
  double linear_squares = 0.0;
  for (std::size_t i = 0; i + 1 < obs.size(); ++i) {
    const auto& state = traj.states[i * stride];
    if (evaluator) {
      evaluator->total(state.coeffs(), drift);
      bias += obs.x_lap[i] * coeffs.observe(drift);
    }
    const double lin = coeffs.observe_laplacian(traj.linear_states[i * stride].coeffs());
    linear_squares += lin * lin;
  }
  Decomposition d;
  d.I = sums.denominator / norm2;
  d.R = bias * obs.dt / norm2;
  d.M = d.I * (sums.theta_hat - theta_true) - d.R;
  d.Ibar = linear_squares * obs.dt / norm2;
  return d;
}

EstimatorAccumulator::EstimatorAccumulator(const KernelCoefficients& coeffs, double dt_obs)
    : coeffs_(&coeffs), dt_(dt_obs) {
  if (!(dt_obs > 0.0)) throw std::invalid_argument("EstimatorAccumulator: dt must be positive");
}

void EstimatorAccumulator::add(std::span<const double> state, std::span<const double> drift,
                               std::span<const double> linear) {
  const double x = coeffs_->observe(state);
  const double lap = coeffs_->observe_laplacian(state);
  const double bias = drift.empty() ? 0.0 : coeffs_->observe(drift);
  const double linear_lap = linear.empty() ? 0.0 : coeffs_->observe_laplacian(linear);
  if (count_ > 0) {
    numerator_ += prev_lap_ * (x - prev_x_);
    squares_ += prev_lap_ * prev_lap_;
    bias_ += prev_lap_ * prev_bias_;
    linear_squares_ += prev_linear_lap_ * prev_linear_lap_;
  } else {
    has_linear_ = !linear.empty();
  }
  prev_x_ = x;
  prev_lap_ = lap;
  prev_bias_ = bias;
  prev_linear_lap_ = linear_lap;
  ++count_;
}

MleSums EstimatorAccumulator::mle() const {
  if (count_ < 2) throw std::invalid_argument("augmented_mle: need at least two observations");
  MleSums s;
  s.numerator = numerator_;
  s.denominator = squares_ * dt_;
  if (!(s.denominator > 0.0)) {
    throw DegenerateObservationError("augmented_mle: X^Delta vanishes, denominator is zero");
  }
  s.theta_hat = s.numerator / s.denominator;
  return s;
}

double EstimatorAccumulator::fisher_information() const {
  return squares_ * dt_ / (coeffs_->norm_K * coeffs_->norm_K);
}

Decomposition EstimatorAccumulator::decomposition(double theta_true) const {
  const auto sums = mle();
  const double norm2 = coeffs_->norm_K * coeffs_->norm_K;
  Decomposition d;
  d.I = sums.denominator / norm2;
  d.R = bias_ * dt_ / norm2;
  d.M = d.I * (sums.theta_hat - theta_true) - d.R;
  d.Ibar = has_linear_ ? linear_squares_ * dt_ / norm2 : std::numeric_limits<double>::quiet_NaN();
  return d;
}

bool ReplicationRecord::failed() const noexcept { return blow_up || !std::isfinite(theta_hat); }

namespace {

std::string optional_field(const std::optional<double>& v) {
  return v ? fmt::format("{:.17g}", *v) : std::string();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

}  // namespace

std::string to_csv_row(const ReplicationRecord& r) {
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{},{}",
                     r.replication_id, r.delta, r.theta_hat, r.fisher_info, r.ci_lo, r.ci_hi,
                     r.normalized_error, r.blow_up ? 1 : 0, optional_field(r.R),
                     optional_field(r.M), optional_field(r.Ibar));
}

ReplicationRecord parse_csv_row(const std::string& line) {
  const auto cells = split(line);
  if (cells.size() != 11) {
    throw std::runtime_error(fmt::format("record row has {} fields, expected 11: '{}'",
                                         cells.size(), line));
  }
  try {
    ReplicationRecord r;
    r.replication_id = std::stoull(cells[0]);
    r.delta = to_double(cells[1]);
    r.theta_hat = to_double(cells[2]);
    r.fisher_info = to_double(cells[3]);
    r.ci_lo = to_double(cells[4]);
    r.ci_hi = to_double(cells[5]);
    r.normalized_error = to_double(cells[6]);
    if (cells[7] != "0" && cells[7] != "1") throw std::invalid_argument("blow_up flag");
    r.blow_up = cells[7] == "1";
    if (!cells[8].empty()) r.R = to_double(cells[8]);
    if (!cells[9].empty()) r.M = to_double(cells[9]);
    if (!cells[10].empty()) r.Ibar = to_double(cells[10]);
    return r;
  } catch (const std::logic_error& e) {
    throw std::runtime_error(fmt::format("malformed record row '{}': {}", line, e.what()));
  }
}

void write_records_csv(std::ostream& os, std::span<const ReplicationRecord> records) {
  fmt::print(os, "{}\n", kRecordHeader);
  for (const auto& r : records) fmt::print(os, "{}\n", to_csv_row(r));
}

std::vector<ReplicationRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) return {};
  if (line != kRecordHeader) throw std::runtime_error("unexpected records header: " + line);
  std::vector<ReplicationRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(parse_csv_row(line));
  }
  return out;
}

}  // namespace burgers
