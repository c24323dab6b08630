#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "burgers/noise.hpp"
#include "burgers/spectral.hpp"

namespace burgers {

using ScalarFunction = std::function<double(double)>;

enum class ForcingFamily { None, Nonlocal1, Nonlocal2, Nemytskii };

std::string to_string(ForcingFamily family);
ForcingFamily forcing_family_from_string(const std::string& name);

/// Drift nonlinearity a d/dx(X^2) + F(X).
///
///  - Nonlocal1:  F(u)(x) = f1(||u||) f2(u(x)), f1 bounded and locally
///    Lipschitz, f2 globally Lipschitz.
///  - Nonlocal2:  F(u)(x) = g(||u||) h(x), g bounded and locally Lipschitz,
///    h bounded on (0,1).
///  - Nemytskii:  F(u)(x) = f(u(x)) with quadratic growth, linearly growing
///    derivative and the one-sided bound f(x+y) y <= C(1 + y^2 + |x|^q).
struct NonlinearitySpec {
  double burgers_coeff = 0.0;
  ForcingFamily family = ForcingFamily::None;
  ScalarFunction f1, f2;  // Nonlocal1
  ScalarFunction g, h;    // Nonlocal2 (h is a function of x in (0,1))
  ScalarFunction f;       // Nemytskii

  static NonlinearitySpec linear() { return {}; }
  static NonlinearitySpec burgers(double a = 0.5);
  /// f(x) = -c0 x |x|^eta g(|x|^{1-eta}) with g >= 0 bounded Lipschitz
  /// (g defaults to 1).
  static NonlinearitySpec nemytskii_power(double a, double c0, double eta,
                                          ScalarFunction g = nullptr);
  static NonlinearitySpec nonlocal1(double a, ScalarFunction f1, ScalarFunction f2);
  static NonlinearitySpec nonlocal2(double a, ScalarFunction g, ScalarFunction h);

  bool is_linear() const noexcept {
    return burgers_coeff == 0.0 && family == ForcingFamily::None;
  }
};

struct NonlinearityReport {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Finite-sample probes of the family hypotheses on [-range, range] (growth,
/// boundedness, Lipschitz and one-sided estimates). A violation is reported
/// when an estimated constant keeps growing from the inner to the outer
/// probe shell or a required function is missing.
NonlinearityReport validate_nonlinearity(const NonlinearitySpec& spec, double range = 10.0);

/// Galerkin projection of a d/dx(u^2) onto e_1..e_N, by pseudospectral
/// quadrature on grid_points points (at least 3N/2 when dealias is set).
SpectralField burgers_drift(const SpectralField& u, double a, std::size_t grid_points,
                            bool dealias = true);

/// Projection of F(u) onto e_1..e_N, with F evaluated pointwise on the grid.
SpectralField f_drift(const SpectralField& u, const NonlinearitySpec& spec,
                      std::size_t grid_points);

/// Evaluates drift terms repeatedly with a fixed resolution. Not thread-safe;
/// use one instance per worker.
class DriftEvaluator {
 public:
  DriftEvaluator(std::size_t modes, std::size_t grid_points, bool dealias,
                 NonlinearitySpec spec);

  std::size_t modes() const noexcept { return modes_; }
  std::size_t quadrature_points() const noexcept { return transform_.grid_points(); }
  const NonlinearitySpec& spec() const noexcept { return spec_; }

  void burgers(std::span<const double> u, std::span<double> out);
  void forcing(std::span<const double> u, std::span<double> out);
  /// Sum of both terms; also leaves u on the quadrature grid in grid().
  void total(std::span<const double> u, std::span<double> out);

  /// Grid values of the last argument of burgers/forcing/total.
  std::span<const double> grid() const noexcept { return grid_; }

 private:
  void synthesize(std::span<const double> u);
  void burgers_from_grid(std::span<double> out, bool accumulate);
  void forcing_from_grid(std::span<const double> u, std::span<double> out, bool accumulate);

  std::size_t modes_;
  NonlinearitySpec spec_;
  SineTransform transform_;
  std::vector<double> grid_;
  std::vector<double> work_;
  std::vector<double> proj_;
  std::vector<double> h_coeffs_;
};

/// (1 - exp(-z)) / z, with value 1 at z = 0.
double phi1(double z);

struct SolverConfig {
  double theta = 1.0;
  double horizon = 1.0;
  std::size_t modes = 512;
  std::size_t grid_points = 1024;
  double dt = 2e-5;
  SpectralField initial_condition;  // empty means X_0 = 0
  NonlinearitySpec nonlinearity = NonlinearitySpec::burgers();
  bool noise = true;
  bool dealias = true;
  double blowup_cap = 1e8;  // on the L^2 norm

  std::size_t steps() const;
  SpectralField initial_state() const;
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

NoisePlan make_noise_plan(const SolverConfig& cfg, std::uint64_t seed,
                          std::uint64_t replication_id);

/// Exponential Euler update with exact per-mode noise variance:
///   u_n <- e^{-theta lambda_n dt} u_n + phi1(theta lambda_n dt) dt drift_n
///          + sqrt((1 - e^{-2 theta lambda_n dt}) / (2 theta lambda_n)) z_n.
class ExponentialEuler {
 public:
  ExponentialEuler(double theta, double dt, std::size_t modes);

  void advance(std::span<double> state, std::span<const double> drift,
               std::span<const double> normals) const;
  /// Drift-free update; bitwise identical to ou_exact_step per mode.
  void advance_linear(std::span<double> state, std::span<const double> normals) const;
  void advance_deterministic(std::span<double> state, std::span<const double> drift) const;

 private:
  std::vector<double> decay_;
  std::vector<double> drift_weight_;
  std::vector<double> noise_scale_;
};

/// One step of the solver from state X(t_k) to X(t_{k+1}).
SpectralField step(const SpectralField& state, const SolverConfig& cfg, const NoisePlan& plan,
                   std::size_t k);

struct StepView {
  std::size_t step = 0;
  double time = 0.0;
  std::span<const double> state;
  std::span<const double> linear;  // empty unless the linear part is tracked
  std::span<const double> drift;   // empty for the linear model
  std::span<const double> grid;    // X(t) on the solver grid, when requested
};

using StepObserver = std::function<void(const StepView&)>;

struct SimulationOptions {
  bool with_linear_part = false;
  bool provide_grid = false;
};

struct SimulationOutcome {
  std::size_t steps_completed = 0;
  bool blow_up = false;
  std::optional<std::size_t> blow_up_step;  // index of the first offending state
  double max_advective_cfl = 0.0;           // dt |a| max|X| N pi, advisory
};

/// Advances the solver over [0, T] and reports every state X(t_k), k = 0..K,
/// to the observer. Stops at the first non-finite state or when the L^2 norm
/// exceeds the cap.
SimulationOutcome simulate(const SolverConfig& cfg, const NoisePlan& plan,
                           const SimulationOptions& options, const StepObserver& observer);

struct Trajectory {
  double dt = 0.0;
  std::vector<SpectralField> states;
  std::vector<SpectralField> linear_states;
  bool blow_up = false;
  std::optional<std::size_t> blow_up_step;

  std::size_t size() const noexcept { return states.size(); }
  double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt; }
  bool has_linear_part() const noexcept { return !linear_states.empty(); }
};

/// Stores the whole trajectory; intended for short runs and diagnostics.
Trajectory simulate(const SolverConfig& cfg, const NoisePlan& plan, bool with_linear_part);

/// Mean over trajectories of sup_{t_k <= horizon} ||X(t_k)||_{L^4}^k.
double moment_diagnostic(std::span<const Trajectory> trajectories, int k, std::size_t grid_points,
                         std::optional<double> horizon = std::nullopt);

/// Same statistic from per-replication running L^4 norms (one value per step).
double moment_diagnostic(std::span<const std::vector<double>> l4_paths, int k,
                         std::optional<std::size_t> last_step = std::nullopt);

struct TrajectoryDumpInfo {
  double theta = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t replication_id = 0;
};

/// CSV dump: a '#' header line with N, dt, theta and seed, then one row
/// "t,u_1,...,u_N" per stored state.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const TrajectoryDumpInfo& info);

}  // namespace burgers
