#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "burgers/dynamics.hpp"
#include "burgers/spectral.hpp"

namespace burgers {

class SupportError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Observation kernel K = L' with L compactly supported on [support_lo,
/// support_hi], placed at x0. K, K' and K'' come from analytic formulas when
/// supplied and from fourth-order central differences of L otherwise.
struct KernelSpec {
  std::string name;
  ScalarFunction L;
  ScalarFunction K;
  ScalarFunction K_prime;
  ScalarFunction K_second;
  double support_lo = -1.0;
  double support_hi = 1.0;
  double x0 = 0.5;
  bool analytic_derivatives = false;
  double norm_K = 0.0;         // ||K||_{L^2(R)}
  double norm_K_prime = 0.0;   // ||K'||_{L^2(R)}
  double norm_K_second = 0.0;  // ||K''||_{L^2(R)}

  /// Largest delta with supp K_{delta,x0} inside [0,1].
  double max_delta() const;
  bool fits(double delta) const;
  /// Throws SupportError unless 0 < delta <= max_delta().
  void check_delta(double delta) const;
};

/// Builds a kernel from its antiderivative; missing derivatives are filled in
/// numerically and the norms are integrated adaptively.
KernelSpec make_kernel(std::string name, ScalarFunction L, double support_lo, double support_hi,
                       double x0, ScalarFunction K = nullptr, ScalarFunction K_prime = nullptr,
                       ScalarFunction K_second = nullptr);

/// L(x) = exp(-10 / (1 - x^2)) on (-1, 1), zero elsewhere.
KernelSpec bump_kernel(double x0);

/// Named kernels accepted in configuration files ("bump").
KernelSpec kernel_by_name(const std::string& name, double x0);

/// Adaptive Gauss-Kronrod (15-point) on [a, b] split into `panels` pieces;
/// each piece is bisected until its error estimate drops below its share of
/// abs_tol.
double adaptive_integrate(const std::function<double(double)>& f, double a, double b,
                          double abs_tol, std::size_t panels = 1, int max_depth = 16);

enum class KernelComponent { K, LaplacianK };

/// Sine coefficients of K_{delta,x0} and of its Laplacian for modes 1..N.
struct KernelCoefficients {
  double delta = 0.0;
  double x0 = 0.0;
  double norm_K = 0.0;
  SpectralField k;      // <K_{delta,x0}, e_n>
  SpectralField k_lap;  // <Delta K_{delta,x0}, e_n> = -lambda_n k_n

  std::size_t modes() const noexcept { return k.modes(); }
  double observe(std::span<const double> state) const;
  double observe_laplacian(std::span<const double> state) const;
};

/// k_n = delta^{1/2} int K(y) e_n(x0 + delta y) dy by adaptive quadrature,
/// absolute tolerance 1e-12.
KernelCoefficients scale_kernel(const KernelSpec& spec, double delta, std::size_t modes);
SpectralField scale_kernel(const KernelSpec& spec, double delta, std::size_t modes,
                           KernelComponent which);

/// <Delta K_{delta,x0}, e_n> integrated directly from K'' (independent of the
/// -lambda_n k_n construction).
SpectralField laplacian_kernel_by_quadrature(const KernelSpec& spec, double delta,
                                             std::size_t modes);

struct TrajectoryObservation {
  double delta = 0.0;
  double x0 = 0.0;
  double dt = 0.0;
  std::vector<double> x;      // X_{delta,x0}(t_i)
  std::vector<double> x_lap;  // X^Delta_{delta,x0}(t_i)

  std::size_t size() const noexcept { return x.size(); }
  double time(std::size_t i) const noexcept { return static_cast<double>(i) * dt; }
  double horizon() const noexcept { return size() == 0 ? 0.0 : time(size() - 1); }
};

/// Number of solver steps per observation step; throws unless dt_obs is an
/// integer multiple of dt.
std::size_t observation_stride(double dt, double dt_obs);

TrajectoryObservation observe(const Trajectory& traj, const KernelCoefficients& coeffs,
                              double dt_obs);
TrajectoryObservation observe(const Trajectory& traj, const KernelSpec& spec, double delta,
                              double dt_obs);

enum class SecondDerivative { Analytic, Stencil };

/// max_x |Delta z_delta(x) - delta^{-2} (z'')_delta(x)| on a fine grid over the
/// scaled support. The left side is obtained from z_delta itself, by the chain
/// rule (Analytic) or a five-point stencil in x (Stencil).
double scaling_identity_check(const ScalarFunction& z, const ScalarFunction& z_second,
                              double support_lo, double support_hi, double x0, double delta,
                              SecondDerivative method = SecondDerivative::Analytic,
                              std::size_t points = 4001);

struct KernelCheckItem {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct KernelReport {
  std::string kernel;
  double x0 = 0.0;
  double support_lo = 0.0;
  double support_hi = 0.0;
  double max_delta = 0.0;
  double norm_K = 0.0;
  double norm_K_prime = 0.0;
  double norm_K_second = 0.0;
  std::size_t modes = 0;
  struct PerDelta {
    double delta = 0.0;
    bool fits = false;
    double parseval_sum = 0.0;    // sum_n k_n^2
    double parseval_tail = 0.0;   // 1 - sum_n k_n^2 / ||K||^2
    double laplacian_mismatch = 0.0;  // max_n |k_lap_n - direct_n| / max_n |direct_n|
  };
  std::vector<PerDelta> deltas;
  std::vector<KernelCheckItem> checks;
  bool ok() const;
};

KernelReport kernel_self_test(const KernelSpec& spec, std::span<const double> deltas,
                              std::size_t modes);
std::string kernel_report_json(const KernelReport& report);
std::string kernel_report_text(const KernelReport& report);

}  // namespace burgers
