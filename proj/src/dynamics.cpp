#include "burgers/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <fmt/core.h>
#include <fmt/ostream.h>

namespace burgers {

namespace {

std::size_t quadrature_size(std::size_t modes, std::size_t grid_points, bool dealias) {
  if (grid_points < modes) {
    throw ResolutionError(
        fmt::format("{} grid points cannot resolve {} modes", grid_points, modes));
  }
  if (!dealias) return grid_points;
  return std::max(grid_points, (3 * modes + 1) / 2);
}

double l2_norm(std::span<const double> coeffs) {
  double sum = 0.0;
  for (double c : coeffs) sum += c * c;
  return std::sqrt(sum);
}

// Largest value of ratio(x) over a symmetric (or one-sided) probe interval.
template <typename Ratio>
double probe_sup(Ratio&& ratio, double lo, double hi, int samples = 4001) {
  double sup = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / (samples - 1);
    const double r = ratio(x);
    if (!std::isfinite(r)) return std::numeric_limits<double>::infinity();
    sup = std::max(sup, r);
  }
  return sup;
}

// True when the constant estimated on the outer shell is not explained by the
// inner one, i.e. the bound does not hold uniformly.
template <typename Ratio>
bool keeps_growing(Ratio&& ratio, double range, bool symmetric = true) {
  const double inner = probe_sup(ratio, symmetric ? -range : 0.0, range);
  const double outer = probe_sup(ratio, symmetric ? -10.0 * range : 0.0, 10.0 * range);
  return !std::isfinite(outer) || outer > 2.0 * inner + 1e-12;
}

double derivative(const ScalarFunction& fn, double x) {
  const double h = 1e-5 * std::max(1.0, std::abs(x));
  return (fn(x + h) - fn(x - h)) / (2.0 * h);
}

template <typename Fn>
double lipschitz_quotient(const Fn& fn, double x) {
  const double h = 1e-4 * std::max(1.0, std::abs(x));
  return std::abs(fn(x + h) - fn(x)) / h;
}

}  // namespace

std::string to_string(ForcingFamily family) {
  switch (family) {
    case ForcingFamily::None: return "none";
    case ForcingFamily::Nonlocal1: return "nonlocal1";
    case ForcingFamily::Nonlocal2: return "nonlocal2";
    case ForcingFamily::Nemytskii: return "nemytskii";
  }
  return "unknown";
}

ForcingFamily forcing_family_from_string(const std::string& name) {
  if (name == "none") return ForcingFamily::None;
  if (name == "nonlocal1") return ForcingFamily::Nonlocal1;
  if (name == "nonlocal2") return ForcingFamily::Nonlocal2;
  if (name == "nemytskii") return ForcingFamily::Nemytskii;
  throw std::invalid_argument(fmt::format("unknown forcing family '{}'", name));
}

NonlinearitySpec NonlinearitySpec::burgers(double a) {
  NonlinearitySpec spec;
  spec.burgers_coeff = a;
  return spec;
}

NonlinearitySpec NonlinearitySpec::nemytskii_power(double a, double c0, double eta,
                                                   ScalarFunction g) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("nemytskii: eta must be in [0,1]");
  if (!(c0 >= 0.0)) throw std::invalid_argument("nemytskii: c0 must be >= 0");
  NonlinearitySpec spec;
  spec.burgers_coeff = a;
  spec.family = ForcingFamily::Nemytskii;
  if (g) {
    spec.f = [c0, eta, g = std::move(g)](double x) {
      const double ax = std::abs(x);
      return -c0 * x * std::pow(ax, eta) * g(std::pow(ax, 1.0 - eta));
    };
  } else if (eta == 1.0) {
    spec.f = [c0](double x) { return -c0 * x * std::abs(x); };
  } else {
    spec.f = [c0, eta](double x) { return -c0 * x * std::pow(std::abs(x), eta); };
  }
  return spec;
}

NonlinearitySpec NonlinearitySpec::nonlocal1(double a, ScalarFunction f1, ScalarFunction f2) {
  NonlinearitySpec spec;
  spec.burgers_coeff = a;
  spec.family = ForcingFamily::Nonlocal1;
  spec.f1 = std::move(f1);
  spec.f2 = std::move(f2);
  return spec;
}

NonlinearitySpec NonlinearitySpec::nonlocal2(double a, ScalarFunction g, ScalarFunction h) {
  NonlinearitySpec spec;
  spec.burgers_coeff = a;
  spec.family = ForcingFamily::Nonlocal2;
  spec.g = std::move(g);
  spec.h = std::move(h);
  return spec;
}

NonlinearityReport validate_nonlinearity(const NonlinearitySpec& spec, double range) {
  NonlinearityReport report;
  auto flag = [&report](std::string msg) {
    report.ok = false;
    report.violations.push_back(std::move(msg));
  };
  if (!std::isfinite(spec.burgers_coeff)) flag("burgers coefficient is not finite");

  switch (spec.family) {
    case ForcingFamily::None:
      break;
    case ForcingFamily::Nemytskii: {
      if (!spec.f) {
        flag("nemytskii: f is missing");
        break;
      }
      const auto& f = spec.f;
      if (keeps_growing([&](double x) { return std::abs(f(x)) / (1.0 + x * x); }, range)) {
        flag("nemytskii: |f(x)| <= C(1 + x^2) fails");
      }
      if (keeps_growing([&](double x) { return std::abs(derivative(f, x)) / (1.0 + std::abs(x)); },
                        range)) {
        flag("nemytskii: |f'(x)| <= C(1 + |x|) fails");
      }
      if (keeps_growing([&](double y) { return std::max(0.0, f(y) * y) / (1.0 + y * y); },
                        range)) {
        flag("nemytskii: one-sided bound f(y) y <= C(1 + y^2) fails");
      }
      break;
    }
    case ForcingFamily::Nonlocal1: {
      if (!spec.f1 || !spec.f2) {
        flag("nonlocal1: f1 and f2 are required");
        break;
      }
      if (keeps_growing([&](double r) { return std::abs(spec.f1(r)); }, range, false)) {
        flag("nonlocal1: f1 is not bounded");
      }
      if (keeps_growing([&](double r) { return lipschitz_quotient(spec.f1, r); }, range, false) &&
          !std::isfinite(probe_sup([&](double r) { return lipschitz_quotient(spec.f1, r); }, 0.0,
                                   range))) {
        flag("nonlocal1: f1 is not locally Lipschitz");
      }
      if (keeps_growing([&](double x) { return lipschitz_quotient(spec.f2, x); }, range)) {
        flag("nonlocal1: f2 is not globally Lipschitz");
      }
      break;
    }
    case ForcingFamily::Nonlocal2: {
      if (!spec.g || !spec.h) {
        flag("nonlocal2: g and h are required");
        break;
      }
      if (keeps_growing([&](double r) { return std::abs(spec.g(r)); }, range, false)) {
        flag("nonlocal2: g is not bounded");
      }
      if (!std::isfinite(probe_sup([&](double x) { return std::abs(spec.h(x)); }, 0.0, 1.0))) {
        flag("nonlocal2: h is not bounded on (0,1)");
      }
      break;
    }
  }
  return report;
}

DriftEvaluator::DriftEvaluator(std::size_t modes, std::size_t grid_points, bool dealias,
                               NonlinearitySpec spec)
    : modes_(modes),
      spec_(std::move(spec)),
      transform_(quadrature_size(modes, grid_points, dealias)),
      grid_(transform_.grid_points()),
      work_(transform_.grid_points()),
      proj_(modes) {
  switch (spec_.family) {
    case ForcingFamily::Nemytskii:
      if (!spec_.f) throw std::invalid_argument("nemytskii forcing without f");
      break;
    case ForcingFamily::Nonlocal1:
      if (!spec_.f1 || !spec_.f2) throw std::invalid_argument("nonlocal1 forcing needs f1 and f2");
      break;
    case ForcingFamily::Nonlocal2: {
      if (!spec_.g || !spec_.h) throw std::invalid_argument("nonlocal2 forcing needs g and h");
      const double step = 1.0 / static_cast<double>(grid_.size() + 1);
      for (std::size_t j = 0; j < grid_.size(); ++j) {
        work_[j] = spec_.h(static_cast<double>(j + 1) * step);
      }
      h_coeffs_.resize(modes_);
      transform_.analyze(work_, h_coeffs_);
      break;
    }
    case ForcingFamily::None:
      break;
  }
}

void DriftEvaluator::synthesize(std::span<const double> u) {
  if (u.size() != modes_) throw std::invalid_argument("DriftEvaluator: mode count mismatch");
  transform_.synthesize(u, grid_);
}

void DriftEvaluator::burgers_from_grid(std::span<double> out, bool accumulate) {
  const double a = spec_.burgers_coeff;
  if (a == 0.0) {
    if (!accumulate) std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  for (std::size_t j = 0; j < grid_.size(); ++j) work_[j] = grid_[j] * grid_[j];
  transform_.cosine_analyze(work_, proj_);
  // <a (u^2)', e_n> = -a <u^2, e_n'> = -a n pi <u^2, sqrt(2) cos(n pi .)>
  for (std::size_t i = 0; i < modes_; ++i) {
    const double d = -a * std::numbers::pi * static_cast<double>(i + 1) * proj_[i];
    out[i] = accumulate ? out[i] + d : d;
  }
}

void DriftEvaluator::forcing_from_grid(std::span<const double> u, std::span<double> out,
                                       bool accumulate) {
  switch (spec_.family) {
    case ForcingFamily::None:
      if (!accumulate) std::fill(out.begin(), out.end(), 0.0);
      return;
    case ForcingFamily::Nemytskii:
      for (std::size_t j = 0; j < grid_.size(); ++j) work_[j] = spec_.f(grid_[j]);
      break;
    case ForcingFamily::Nonlocal1: {
      const double scale = spec_.f1(l2_norm(u));
      for (std::size_t j = 0; j < grid_.size(); ++j) work_[j] = scale * spec_.f2(grid_[j]);
      break;
    }
    case ForcingFamily::Nonlocal2: {
      const double scale = spec_.g(l2_norm(u));
      for (std::size_t i = 0; i < modes_; ++i) {
        out[i] = accumulate ? out[i] + scale * h_coeffs_[i] : scale * h_coeffs_[i];
      }
      return;
    }
  }
  transform_.analyze(work_, proj_);
  for (std::size_t i = 0; i < modes_; ++i) out[i] = accumulate ? out[i] + proj_[i] : proj_[i];
}

void DriftEvaluator::burgers(std::span<const double> u, std::span<double> out) {
  synthesize(u);
  burgers_from_grid(out, false);
}

void DriftEvaluator::forcing(std::span<const double> u, std::span<double> out) {
  synthesize(u);
  forcing_from_grid(u, out, false);
}

void DriftEvaluator::total(std::span<const double> u, std::span<double> out) {
  synthesize(u);
  burgers_from_grid(out, false);
  forcing_from_grid(u, out, true);
}

SpectralField burgers_drift(const SpectralField& u, double a, std::size_t grid_points,
                            bool dealias) {
  SpectralField out(u.modes());
  if (u.empty()) return out;
  DriftEvaluator eval(u.modes(), grid_points, dealias, NonlinearitySpec::burgers(a));
  eval.burgers(u.coeffs(), out.coeffs());
  return out;
}

SpectralField f_drift(const SpectralField& u, const NonlinearitySpec& spec,
                      std::size_t grid_points) {
  SpectralField out(u.modes());
  if (u.empty() || spec.family == ForcingFamily::None) return out;
  DriftEvaluator eval(u.modes(), grid_points, false, spec);
  eval.forcing(u.coeffs(), out.coeffs());
  return out;
}

double phi1(double z) {
  if (z == 0.0) return 1.0;
  return -std::expm1(-z) / z;
}

std::size_t SolverConfig::steps() const {
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

SpectralField SolverConfig::initial_state() const {
  if (initial_condition.empty()) return SpectralField(modes);
  if (initial_condition.modes() > modes) {
    throw std::invalid_argument("initial condition has more modes than the solver");
  }
  std::vector<double> c(modes, 0.0);
  std::copy(initial_condition.coeffs().begin(), initial_condition.coeffs().end(), c.begin());
  return SpectralField(std::move(c));
}

void SolverConfig::validate() const {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw std::invalid_argument("theta must be > 0");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("horizon T must be > 0");
  }
  if (!(dt > 0.0) || dt > horizon) throw std::invalid_argument("dt must lie in (0, T]");
  if (modes == 0) throw std::invalid_argument("modes must be positive");
  if (grid_points < modes) {
    throw ResolutionError(fmt::format("grid_points {} < modes {}", grid_points, modes));
  }
  const double ratio = horizon / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-6 * ratio) {
    throw std::invalid_argument("T must be an integer multiple of dt");
  }
  if (!(blowup_cap > 0.0)) throw std::invalid_argument("blowup_cap must be > 0");
  if (!initial_condition.empty() && !initial_condition.all_finite()) {
    throw std::invalid_argument("initial condition is not finite");
  }
  (void)initial_state();
}

NoisePlan make_noise_plan(const SolverConfig& cfg, std::uint64_t seed,
                          std::uint64_t replication_id) {
  NoisePlan plan{seed, replication_id, cfg.modes, cfg.steps(), cfg.dt};
  plan.validate();
  return plan;
}

ExponentialEuler::ExponentialEuler(double theta, double dt, std::size_t modes)
    : decay_(modes), drift_weight_(modes), noise_scale_(modes) {
  for (std::size_t i = 0; i < modes; ++i) {
    const double lambda = eigenvalue(i + 1);
    decay_[i] = std::exp(-theta * lambda * dt);
    drift_weight_[i] = phi1(theta * lambda * dt) * dt;
    noise_scale_[i] = ou_noise_scale(theta, lambda, dt);
  }
}

void ExponentialEuler::advance(std::span<double> state, std::span<const double> drift,
                               std::span<const double> normals) const {
  for (std::size_t i = 0; i < state.size(); ++i) {
    state[i] = decay_[i] * state[i] + noise_scale_[i] * normals[i] + drift_weight_[i] * drift[i];
  }
}

void ExponentialEuler::advance_linear(std::span<double> state,
                                      std::span<const double> normals) const {
  for (std::size_t i = 0; i < state.size(); ++i) {
    state[i] = decay_[i] * state[i] + noise_scale_[i] * normals[i];
  }
}

void ExponentialEuler::advance_deterministic(std::span<double> state,
                                             std::span<const double> drift) const {
  for (std::size_t i = 0; i < state.size(); ++i) {
    state[i] = decay_[i] * state[i] + drift_weight_[i] * drift[i];
  }
}

namespace {

void check_plan(const SolverConfig& cfg, const NoisePlan& plan) {
  if (!cfg.noise) return;
  plan.validate();
  if (plan.modes != cfg.modes) throw std::invalid_argument("noise plan mode count mismatch");
  if (plan.steps < cfg.steps()) throw std::invalid_argument("noise plan has too few steps");
  if (plan.dt != cfg.dt) throw std::invalid_argument("noise plan dt differs from solver dt");
}

}  // namespace

SpectralField step(const SpectralField& state, const SolverConfig& cfg, const NoisePlan& plan,
                   std::size_t k) {
  cfg.validate();
  check_plan(cfg, plan);
  if (state.modes() != cfg.modes) throw std::invalid_argument("step: state mode count mismatch");
  if (!state.all_finite()) throw std::invalid_argument("step: non-finite state");
  std::vector<double> next(state.vector());
  std::vector<double> drift(cfg.modes, 0.0);
  if (!cfg.nonlinearity.is_linear()) {
    DriftEvaluator eval(cfg.modes, cfg.grid_points, cfg.dealias, cfg.nonlinearity);
    eval.total(state.coeffs(), drift);
  }
  const ExponentialEuler scheme(cfg.theta, cfg.dt, cfg.modes);
  if (cfg.noise) {
    std::vector<double> z(cfg.modes);
    fill_standard_normals(plan, k, z);
    scheme.advance(next, drift, z);
  } else {
    scheme.advance_deterministic(next, drift);
  }
  return SpectralField(std::move(next));
}

SimulationOutcome simulate(const SolverConfig& cfg, const NoisePlan& plan,
                           const SimulationOptions& options, const StepObserver& observer) {
  cfg.validate();
  check_plan(cfg, plan);
  const std::size_t n_modes = cfg.modes;
  const std::size_t n_steps = cfg.steps();
  const bool nonlinear = !cfg.nonlinearity.is_linear();

  std::vector<double> state = cfg.initial_state().vector();
  std::vector<double> linear(options.with_linear_part ? n_modes : 0, 0.0);
  std::vector<double> drift(nonlinear ? n_modes : 0, 0.0);
  std::vector<double> normals(n_modes, 0.0);
  std::vector<double> grid(options.provide_grid ? cfg.grid_points : 0, 0.0);

  std::optional<DriftEvaluator> evaluator;
  if (nonlinear) evaluator.emplace(n_modes, cfg.grid_points, cfg.dealias, cfg.nonlinearity);
  std::optional<SineTransform> grid_transform;
  const bool reuse_quadrature_grid =
      evaluator && evaluator->quadrature_points() == cfg.grid_points;
  if (options.provide_grid && !reuse_quadrature_grid) grid_transform.emplace(cfg.grid_points);

  const ExponentialEuler scheme(cfg.theta, cfg.dt, n_modes);
  const double advective_factor =
      cfg.dt * std::abs(cfg.nonlinearity.burgers_coeff) * static_cast<double>(n_modes) *
      std::numbers::pi;

  SimulationOutcome outcome;
  for (std::size_t k = 0;; ++k) {
    StepView view;
    view.step = k;
    view.time = static_cast<double>(k) * cfg.dt;
    view.state = state;
    view.linear = linear;
    if (nonlinear) {
      evaluator->total(state, drift);
      view.drift = drift;
      if (advective_factor > 0.0) {
        double peak = 0.0;
        for (double v : evaluator->grid()) peak = std::max(peak, std::abs(v));
        outcome.max_advective_cfl = std::max(outcome.max_advective_cfl, advective_factor * peak);
      }
    }
    if (options.provide_grid) {
      if (reuse_quadrature_grid) {
        view.grid = evaluator->grid();
      } else {
        grid_transform->synthesize(state, grid);
        view.grid = grid;
      }
    }
    if (observer) observer(view);
    if (k == n_steps) break;

    if (cfg.noise) fill_standard_normals(plan, k, normals);
    if (nonlinear) {
      if (cfg.noise) {
        scheme.advance(state, drift, normals);
      } else {
        scheme.advance_deterministic(state, drift);
      }
    } else if (cfg.noise) {
      scheme.advance_linear(state, normals);
    } else {
      std::fill(normals.begin(), normals.end(), 0.0);
      scheme.advance_deterministic(state, normals);
    }
    if (options.with_linear_part && cfg.noise) scheme.advance_linear(linear, normals);
    outcome.steps_completed = k + 1;

    const double norm = l2_norm(state);
    if (!std::isfinite(norm) || norm > cfg.blowup_cap) {
      outcome.blow_up = true;
      outcome.blow_up_step = k + 1;
      break;
    }
  }
  return outcome;
}

Trajectory simulate(const SolverConfig& cfg, const NoisePlan& plan, bool with_linear_part) {
  Trajectory traj;
  traj.dt = cfg.dt;
  traj.states.reserve(cfg.steps() + 1);
  if (with_linear_part) traj.linear_states.reserve(cfg.steps() + 1);
  SimulationOptions options;
  options.with_linear_part = with_linear_part;
  const auto outcome = simulate(cfg, plan, options, [&](const StepView& v) {
    traj.states.emplace_back(std::vector<double>(v.state.begin(), v.state.end()));
    if (with_linear_part) {
      traj.linear_states.emplace_back(std::vector<double>(v.linear.begin(), v.linear.end()));
    }
  });
  traj.blow_up = outcome.blow_up;
  traj.blow_up_step = outcome.blow_up_step;
  return traj;
}

double moment_diagnostic(std::span<const Trajectory> trajectories, int k, std::size_t grid_points,
                         std::optional<double> horizon) {
  if (k < 1) throw std::invalid_argument("moment_diagnostic: k must be >= 1");
  if (trajectories.empty()) return 0.0;
  double total = 0.0;
  std::vector<double> grid(grid_points);
  SineTransform transform(grid_points);
  for (const auto& traj : trajectories) {
    double sup = 0.0;
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
      if (horizon && traj.time(i) > *horizon * (1.0 + 1e-12)) break;
      transform.synthesize(traj.states[i].coeffs(), grid);
      sup = std::max(sup, lp_norm(4.0, grid));
    }
    total += std::pow(sup, k);
  }
  return total / static_cast<double>(trajectories.size());
}

double moment_diagnostic(std::span<const std::vector<double>> l4_paths, int k,
                         std::optional<std::size_t> last_step) {
  if (k < 1) throw std::invalid_argument("moment_diagnostic: k must be >= 1");
  if (l4_paths.empty()) return 0.0;
  double total = 0.0;
  for (const auto& path : l4_paths) {
    const std::size_t end = last_step ? std::min(path.size(), *last_step + 1) : path.size();
    double sup = 0.0;
    for (std::size_t i = 0; i < end; ++i) sup = std::max(sup, path[i]);
    total += std::pow(sup, k);
  }
  return total / static_cast<double>(l4_paths.size());
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                          const TrajectoryDumpInfo& info) {
  const std::size_t n = traj.states.empty() ? 0 : traj.states.front().modes();
  fmt::print(os, "# N={},dt={:.17g},theta={:.17g},seed={},replication={},blow_up={}\n", n, traj.dt,
             info.theta, info.seed, info.replication_id, traj.blow_up ? 1 : 0);
  fmt::print(os, "t");
  for (std::size_t i = 1; i <= n; ++i) fmt::print(os, ",u{}", i);
  fmt::print(os, "\n");
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    fmt::print(os, "{:.17g}", traj.time(k));
    for (double c : traj.states[k].coeffs()) fmt::print(os, ",{:.17g}", c);
    fmt::print(os, "\n");
  }
}

}  // namespace burgers
