#include "burgers/noise.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/core.h>

#include "burgers/normal.hpp"
#include "burgers/philox.hpp"
#include "burgers/spectral.hpp"

namespace burgers {

namespace {

constexpr std::uint64_t kMaxIndex = std::numeric_limits<std::uint32_t>::max();

Philox4x32::Key key_of(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// One Philox block feeds two consecutive modes: n = 2p + 1 takes words 0-1,
// n = 2p + 2 takes words 2-3.
Philox4x32::Counter block(const NoisePlan& plan, std::size_t pair, std::size_t k,
                          std::uint32_t substream) {
  return Philox4x32::generate({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(pair),
                               static_cast<std::uint32_t>(plan.replication_id), substream},
                              key_of(plan.seed));
}

double lane_normal(const Philox4x32::Counter& words, std::size_t lane) {
  const std::uint64_t bits =
      (static_cast<std::uint64_t>(words[2 * lane]) << 32) | words[2 * lane + 1];
  return normal_quantile(open_unit_interval(bits));
}

void check_indices(const NoisePlan& plan, std::size_t n, std::size_t k) {
  if (n == 0 || n > plan.modes) {
    throw std::out_of_range(fmt::format("noise: mode {} outside 1..{}", n, plan.modes));
  }
  if (k >= plan.steps) {
    throw std::out_of_range(fmt::format("noise: step {} outside 0..{}", k, plan.steps));
  }
}

}  // namespace

void NoisePlan::validate() const {
  if (modes == 0) throw std::invalid_argument("NoisePlan: modes must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("NoisePlan: dt must be > 0");
  if (replication_id > kMaxIndex) {
    throw std::invalid_argument("NoisePlan: replication_id exceeds 32 bits");
  }
  if (steps > kMaxIndex || modes / 2 > kMaxIndex) {
    throw std::invalid_argument("NoisePlan: index space exceeds 32 bits");
  }
}

double standard_normal(const NoisePlan& plan, std::size_t n, std::size_t k,
                       std::uint32_t substream) {
  check_indices(plan, n, k);
  return lane_normal(block(plan, (n - 1) / 2, k, substream), (n - 1) % 2);
}

void fill_standard_normals(const NoisePlan& plan, std::size_t k, std::span<double> out,
                           std::uint32_t substream) {
  if (out.size() != plan.modes) throw std::invalid_argument("fill_standard_normals: size");
  if (k >= plan.steps) throw std::out_of_range("fill_standard_normals: step out of range");
  const std::size_t n = out.size();
  for (std::size_t pair = 0; 2 * pair < n; ++pair) {
    const auto words = block(plan, pair, k, substream);
    out[2 * pair] = lane_normal(words, 0);
    if (2 * pair + 1 < n) out[2 * pair + 1] = lane_normal(words, 1);
  }
}

double brownian_increment(const NoisePlan& plan, std::size_t n, std::size_t k) {
  return std::sqrt(plan.dt) * standard_normal(plan, n, k);
}

double ou_noise_scale(double theta, double lambda, double dt) {
  const double rate = theta * lambda;
  return std::sqrt(-std::expm1(-2.0 * rate * dt) / (2.0 * rate));
}

double ou_exact_step(double theta, double lambda, double y, double dt, double z) {
  return std::exp(-theta * lambda * dt) * y + ou_noise_scale(theta, lambda, dt) * z;
}

OUPath::OUPath(double theta, double dt, std::size_t modes, std::size_t steps)
    : theta_(theta), dt_(dt), modes_(modes), steps_(steps), values_((steps + 1) * modes, 0.0) {}

OUPath simulate_stochastic_convolution(const NoisePlan& plan, double theta) {
  plan.validate();
  if (!(theta > 0.0)) throw std::invalid_argument("stochastic convolution: theta must be > 0");
  OUPath path(theta, plan.dt, plan.modes, plan.steps);
  std::vector<double> decay(plan.modes);
  std::vector<double> scale(plan.modes);
  for (std::size_t i = 0; i < plan.modes; ++i) {
    const double lambda = eigenvalue(i + 1);
    decay[i] = std::exp(-theta * lambda * plan.dt);
    scale[i] = ou_noise_scale(theta, lambda, plan.dt);
  }
  std::vector<double> z(plan.modes);
  for (std::size_t k = 0; k < plan.steps; ++k) {
    fill_standard_normals(plan, k, z);
    const auto prev = path.state(k);
    auto next = path.state(k + 1);
    for (std::size_t i = 0; i < plan.modes; ++i) next[i] = decay[i] * prev[i] + scale[i] * z[i];
  }
  return path;
}

}  // namespace burgers
