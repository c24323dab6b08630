#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "burgers/dynamics.hpp"
#include "burgers/normal.hpp"
#include "burgers/observation.hpp"

namespace burgers {

/// Raised when the denominator of the estimator vanishes (X^Delta == 0).
class DegenerateObservationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MleSums {
  double theta_hat = 0.0;
  double numerator = 0.0;    // sum_i XL_i (X_{i+1} - X_i)
  double denominator = 0.0;  // sum_i XL_i^2 dt
};

/// Augmented MLE with left-point sums over i = 0..n-2.
MleSums augmented_mle(std::span<const double> x, std::span<const double> x_lap, double dt);
MleSums augmented_mle(const TrajectoryObservation& obs);

/// I_delta = ||K||^{-2} sum_i XL_i^2 dt.
double fisher_information(const TrajectoryObservation& obs, double norm_K);

/// 2 theta ||K||^2 / (T ||K'||^2).
double asymptotic_variance(double theta, double norm_K, double norm_K_prime, double horizon);
double asymptotic_variance(double theta, const KernelSpec& kernel, double horizon);

/// Limit of delta^2 E[I_delta]: T ||K'||^2 / (2 theta ||K||^2).
double fisher_limit(double theta, const KernelSpec& kernel, double horizon);

struct ConfidenceInterval {
  double level = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double value) const noexcept { return lo <= value && value <= hi; }
  double width() const noexcept { return hi - lo; }
};

/// theta_hat -+ I^{-1/2} q_{1 - alpha/2}.
ConfidenceInterval confidence_interval(double theta_hat, double fisher_info, double alpha);

/// Terms of delta^{-1}(theta_hat - theta) = delta^{-1} I^{-1} (R + M).
struct Decomposition {
  double I = 0.0;
  double R = 0.0;
  double M = 0.0;
  double Ibar = 0.0;
};

struct EstimateResult {
  double delta = 0.0;
  double theta_hat = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  double fisher_info = 0.0;
  std::vector<ConfidenceInterval> intervals;
  std::optional<Decomposition> diagnostics;

  /// Interval for the given coverage level; throws std::out_of_range.
  const ConfidenceInterval& interval(double level) const;
};

EstimateResult estimate(const TrajectoryObservation& obs, double norm_K,
                        std::span<const double> levels);

/// Diagnostics from a stored trajectory that carries its linear part. The
/// drift is re-evaluated with the solver's resolution at each observation time.
Decomposition error_decomposition(const Trajectory& traj, const TrajectoryObservation& obs,
                                  const KernelCoefficients& coeffs, const SolverConfig& cfg,
                                  double theta_true);

/// Streaming counterpart of augmented_mle and error_decomposition: feed one
/// observation time at a time, in order. Produces the same sums as the batch
/// functions bit for bit.
class EstimatorAccumulator {
 public:
  EstimatorAccumulator(const KernelCoefficients& coeffs, double dt_obs);

  /// state: X(t_i); drift: Galerkin drift at X(t_i) (may be empty for the
  /// linear model); linear: Xbar(t_i) (may be empty).
  void add(std::span<const double> state, std::span<const double> drift,
           std::span<const double> linear);

  std::size_t count() const noexcept { return count_; }
  double delta() const noexcept { return coeffs_->delta; }
  MleSums mle() const;
  double fisher_information() const;
  Decomposition decomposition(double theta_true) const;

 private:
  const KernelCoefficients* coeffs_;
  double dt_;
  std::size_t count_ = 0;
  double prev_x_ = 0.0;
  double prev_lap_ = 0.0;
  double prev_bias_ = 0.0;
  double prev_linear_lap_ = 0.0;
  double numerator_ = 0.0;
  double squares_ = 0.0;
  double bias_ = 0.0;
  double linear_squares_ = 0.0;
  bool has_linear_ = false;
};

/// One CSV row per (replication, delta).
struct ReplicationRecord {
  std::uint64_t replication_id = 0;
  double delta = 0.0;
  double theta_hat = 0.0;  // NaN when the replication failed
  double fisher_info = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double normalized_error = 0.0;  // delta^{-1}(theta_hat - theta) / sigma_K
  bool blow_up = false;
  std::optional<double> R;
  std::optional<double> M;
  std::optional<double> Ibar;

  bool failed() const noexcept;
  friend bool operator==(const ReplicationRecord&, const ReplicationRecord&) = default;
};

inline constexpr const char* kRecordHeader =
    "replication_id,delta,theta_hat,fisher_info,ci_lo,ci_hi,normalized_error,blow_up,R,M,Ibar";

std::string to_csv_row(const ReplicationRecord& record);
ReplicationRecord parse_csv_row(const std::string& line);
void write_records_csv(std::ostream& os, std::span<const ReplicationRecord> records);
/// Reads rows after the header; throws std::runtime_error on malformed rows.
std::vector<ReplicationRecord> read_records_csv(std::istream& is);

}  // namespace burgers
