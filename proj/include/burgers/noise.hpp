#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace burgers {

/// Addresses the driving noise of one replication. The k-th increment of
/// mode n is a pure function of (seed, replication_id, n, k), so any subset
/// of increments can be generated in any order or in parallel.
struct NoisePlan {
  std::uint64_t seed = 0;
  std::uint64_t replication_id = 0;
  std::size_t modes = 0;
  std::size_t steps = 0;
  double dt = 0.0;

  void validate() const;
};

/// Independent streams derived from the same plan (e.g. for auxiliary
/// randomness) are selected with a substream tag; the driving noise uses 0.
inline constexpr std::uint32_t kDrivingNoise = 0;

/// Standard normal draw z_{n,k} underlying the k-th increment of mode n.
/// Modes are 1-based, steps 0-based.
double standard_normal(const NoisePlan& plan, std::size_t n, std::size_t k,
                       std::uint32_t substream = kDrivingNoise);

/// Writes z_{1,k}, ..., z_{N,k} into out (size plan.modes). Equal bit for bit
/// to calling standard_normal for each mode.
void fill_standard_normals(const NoisePlan& plan, std::size_t k, std::span<double> out,
                           std::uint32_t substream = kDrivingNoise);

/// beta_n(t_{k+1}) - beta_n(t_k) = sqrt(dt) z_{n,k}.
double brownian_increment(const NoisePlan& plan, std::size_t n, std::size_t k);

/// Standard deviation of the exact one-step OU noise,
/// sqrt((1 - exp(-2 theta lambda dt)) / (2 theta lambda)).
double ou_noise_scale(double theta, double lambda, double dt);

/// Exact transition of dY = -theta lambda Y dt + d beta over one step of
/// length dt, driven by the standard normal z.
double ou_exact_step(double theta, double lambda, double y, double dt, double z);

/// Spectral modes Y_n(t_k) of the stochastic convolution, k = 0..K.
class OUPath {
 public:
  OUPath(double theta, double dt, std::size_t modes, std::size_t steps);

  double theta() const noexcept { return theta_; }
  double dt() const noexcept { return dt_; }
  std::size_t modes() const noexcept { return modes_; }
  std::size_t steps() const noexcept { return steps_; }

  /// Y_n(t_k), n 1-based.
  double at(std::size_t n, std::size_t k) const { return values_[k * modes_ + (n - 1)]; }
  std::span<const double> state(std::size_t k) const {
    return std::span(values_).subspan(k * modes_, modes_);
  }
  std::span<double> state(std::size_t k) { return std::span(values_).subspan(k * modes_, modes_); }

 private:
  double theta_;
  double dt_;
  std::size_t modes_;
  std::size_t steps_;
  std::vector<double> values_;
};

/// Simulates the stochastic convolution (the linear equation with zero
/// initial condition) with exact per-mode OU transitions.
OUPath simulate_stochastic_convolution(const NoisePlan& plan, double theta);

}  // namespace burgers
