#include "burgers/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/core.h>
#include <json.hpp>

namespace burgers {

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 15>;

double integrate_piece(const std::function<double(double)>& f, double a, double b, double tol,
                       int depth) {
  double err = 0.0;
  double l1 = 0.0;
  const double value = GK::integrate(f, a, b, 0, 0.0, &err, &l1);
  // stop at the tolerance or once the estimate reaches the evaluation noise
  // (the sine phase n pi x carries ~1e-13 absolute error at n ~ 10^3)
  if (err <= tol || err <= 1e-10 * l1 || depth <= 0) return value;
  const double mid = 0.5 * (a + b);
  return integrate_piece(f, a, mid, 0.5 * tol, depth - 1) +
         integrate_piece(f, mid, b, 0.5 * tol, depth - 1);
}

// Finite-difference steps aimed at ~1e-8 accuracy for O(1) functions on a
// support of unit half-width.
constexpr double kStep1 = 1e-3;
constexpr double kStep2 = 2e-3;
constexpr double kStep3 = 5e-3;

ScalarFunction first_derivative(ScalarFunction f, double scale) {
  const double h = kStep1 * scale;
  return [f = std::move(f), h](double x) {
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
  };
}

ScalarFunction second_derivative(ScalarFunction f, double scale) {
  const double h = kStep2 * scale;
  return [f = std::move(f), h](double x) {
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) /
           (12 * h * h);
  };
}

ScalarFunction third_derivative(ScalarFunction f, double scale) {
  const double h = kStep3 * scale;
  return [f = std::move(f), h](double x) {
    return (-f(x + 3 * h) + 8 * f(x + 2 * h) - 13 * f(x + h) + 13 * f(x - h) - 8 * f(x - 2 * h) +
            f(x - 3 * h)) /
           (8 * h * h * h);
  };
}

double l2_norm_on(const ScalarFunction& f, double lo, double hi) {
  const auto sq = [&f](double x) {
    const double v = f(x);
    return v * v;
  };
  // relative accuracy well below 1e-10
  const double rough = integrate_piece(sq, lo, hi, 0.0, 6);
  return std::sqrt(integrate_piece(sq, lo, hi, 1e-14 * rough, 16));
}

// Projection of delta^{-1/2} g((x - x0)/delta) onto e_n, written in y.
SpectralField project_scaled(const ScalarFunction& g, double lo, double hi, double x0, double delta,
                             std::size_t modes, double abs_tol) {
  std::vector<double> out(modes);
  const double root = std::sqrt(delta);
  for (std::size_t n = 1; n <= modes; ++n) {
    const double w = static_cast<double>(n) * std::numbers::pi;
    const auto integrand = [&](double y) {
      return g(y) * std::numbers::sqrt2 * std::sin(w * (x0 + delta * y));
    };
    // about two panels per oscillation of the sine over the support
    const auto panels = static_cast<std::size_t>(
        std::max(4.0, std::ceil(static_cast<double>(n) * delta * (hi - lo))));
    out[n - 1] = root * adaptive_integrate(integrand, lo, hi, abs_tol / root, panels);
  }
  return SpectralField(std::move(out));
}

constexpr double kProjectionTolerance = 1e-12;

}  // namespace

double adaptive_integrate(const std::function<double(double)>& f, double a, double b,
                          double abs_tol, std::size_t panels, int max_depth) {
  if (panels == 0) panels = 1;
  const double width = (b - a) / static_cast<double>(panels);
  double sum = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    const double hi = p + 1 == panels ? b : lo + width;
    sum += integrate_piece(f, lo, hi, abs_tol / static_cast<double>(panels), max_depth);
  }
  return sum;
}

double KernelSpec::max_delta() const {
  double bound = std::numeric_limits<double>::infinity();
  if (support_lo < 0.0) bound = std::min(bound, x0 / -support_lo);
  if (support_hi > 0.0) bound = std::min(bound, (1.0 - x0) / support_hi);
  return bound;
}

bool KernelSpec::fits(double delta) const {
  return delta > 0.0 && x0 + delta * support_lo >= 0.0 && x0 + delta * support_hi <= 1.0;
}

void KernelSpec::check_delta(double delta) const {
  if (!(delta > 0.0)) throw SupportError(fmt::format("delta must be positive, got {}", delta));
  if (!fits(delta)) {
    throw SupportError(fmt::format(
        "kernel '{}' at x0={} scaled by delta={} leaves (0,1): support [{}, {}], max delta {}",
        name, x0, delta, x0 + delta * support_lo, x0 + delta * support_hi, max_delta()));
  }
}

KernelSpec make_kernel(std::string name, ScalarFunction L, double support_lo, double support_hi,
                       double x0, ScalarFunction K, ScalarFunction K_prime,
                       ScalarFunction K_second) {
  if (!L) throw std::invalid_argument("kernel: L is required");
  if (!(support_lo < support_hi)) throw std::invalid_argument("kernel: empty support");
  if (!(x0 > 0.0 && x0 < 1.0)) throw std::invalid_argument("kernel: x0 must lie in (0,1)");
  KernelSpec spec;
  spec.name = std::move(name);
  spec.support_lo = support_lo;
  spec.support_hi = support_hi;
  spec.x0 = x0;
  spec.analytic_derivatives = K && K_prime && K_second;
  const double scale = 0.5 * (support_hi - support_lo);
  spec.L = std::move(L);
  spec.K = K ? std::move(K) : first_derivative(spec.L, scale);
  spec.K_prime = K_prime ? std::move(K_prime) : second_derivative(spec.L, scale);
  spec.K_second = K_second ? std::move(K_second) : third_derivative(spec.L, scale);
  spec.norm_K = l2_norm_on(spec.K, support_lo, support_hi);
  spec.norm_K_prime = l2_norm_on(spec.K_prime, support_lo, support_hi);
  spec.norm_K_second = l2_norm_on(spec.K_second, support_lo, support_hi);
  return spec;
}

KernelSpec bump_kernel(double x0) {
  // f = exp(g), g = -10 / (1 - x^2); derivatives by repeated chain rule.
  struct Terms {
    double f, g1, g2, g3;
  };
  const auto terms = [](double x) -> std::optional<Terms> {
    if (!(std::abs(x) < 1.0)) return std::nullopt;
    const double s = 1.0 - x * x;
    const double f = std::exp(-10.0 / s);
    if (f == 0.0) return std::nullopt;
    const double x2 = x * x;
    return Terms{f, -20.0 * x / (s * s), -20.0 * (1.0 + 3.0 * x2) / (s * s * s),
                 -240.0 * x * (1.0 + x2) / (s * s * s * s)};
  };
  auto L = [terms](double x) {
    const auto t = terms(x);
    return t ? t->f : 0.0;
  };
  auto K = [terms](double x) {
    const auto t = terms(x);
    return t ? t->g1 * t->f : 0.0;
  };
  auto K1 = [terms](double x) {
    const auto t = terms(x);
    return t ? (t->g2 + t->g1 * t->g1) * t->f : 0.0;
  };
  auto K2 = [terms](double x) {
    const auto t = terms(x);
    if (!t) return 0.0;
    return (t->g3 + 3.0 * t->g1 * t->g2 + t->g1 * t->g1 * t->g1) * t->f;
  };
  return make_kernel("bump", L, -1.0, 1.0, x0, K, K1, K2);
}

KernelSpec kernel_by_name(const std::string& name, double x0) {
  if (name == "bump") return bump_kernel(x0);
  throw std::invalid_argument(fmt::format("unknown kernel '{}'", name));
}

double KernelCoefficients::observe(std::span<const double> state) const {
  if (state.size() != k.modes()) throw std::invalid_argument("observe: mode count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) s += state[i] * k[i];
  return s;
}

double KernelCoefficients::observe_laplacian(std::span<const double> state) const {
  if (state.size() != k_lap.modes()) throw std::invalid_argument("observe: mode count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) s += state[i] * k_lap[i];
  return s;
}

KernelCoefficients scale_kernel(const KernelSpec& spec, double delta, std::size_t modes) {
  spec.check_delta(delta);
  KernelCoefficients c;
  c.delta = delta;
  c.x0 = spec.x0;
  c.norm_K = spec.norm_K;
  c.k = project_scaled(spec.K, spec.support_lo, spec.support_hi, spec.x0, delta, modes,
                       kProjectionTolerance);
  std::vector<double> lap(modes);
  for (std::size_t i = 0; i < modes; ++i) lap[i] = -eigenvalue(i + 1) * c.k[i];
  c.k_lap = SpectralField(std::move(lap));
  return c;
}

SpectralField scale_kernel(const KernelSpec& spec, double delta, std::size_t modes,
                           KernelComponent which) {
  auto c = scale_kernel(spec, delta, modes);
  return which == KernelComponent::K ? std::move(c.k) : std::move(c.k_lap);
}

SpectralField laplacian_kernel_by_quadrature(const KernelSpec& spec, double delta,
                                             std::size_t modes) {
  spec.check_delta(delta);
  // Delta K_{delta,x0} = delta^{-2} (K'')_{delta,x0}; same relative accuracy as the K projection
  const double tol = kProjectionTolerance * spec.norm_K_second / spec.norm_K;
  auto direct = project_scaled(spec.K_second, spec.support_lo, spec.support_hi, spec.x0, delta,
                               modes, tol);
  for (auto& v : direct.coeffs()) v /= delta * delta;
  return direct;
}

std::size_t observation_stride(double dt, double dt_obs) {
  if (!(dt > 0.0) || !(dt_obs > 0.0)) throw std::invalid_argument("time steps must be positive");
  const double ratio = dt_obs / dt;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio) {
    throw std::invalid_argument(
        fmt::format("dt_obs={} is not an integer multiple of the solver dt={}", dt_obs, dt));
  }
  return static_cast<std::size_t>(rounded);
}

TrajectoryObservation observe(const Trajectory& traj, const KernelCoefficients& coeffs,
                              double dt_obs) {
  const std::size_t stride = observation_stride(traj.dt, dt_obs);
  TrajectoryObservation obs;
  obs.delta = coeffs.delta;
  obs.x0 = coeffs.x0;
  obs.dt = traj.dt * static_cast<double>(stride);
  for (std::size_t k = 0; k < traj.size(); k += stride) {
    if (traj.states[k].modes() != coeffs.modes()) {
      throw std::invalid_argument(fmt::format("observe: trajectory has {} modes, kernel table {}",
                                              traj.states[k].modes(), coeffs.modes()));
    }
    obs.x.push_back(coeffs.observe(traj.states[k].coeffs()));
    obs.x_lap.push_back(coeffs.observe_laplacian(traj.states[k].coeffs()));
  }
  return obs;
}

TrajectoryObservation observe(const Trajectory& traj, const KernelSpec& spec, double delta,
                              double dt_obs) {
  const std::size_t modes = traj.states.empty() ? 0 : traj.states.front().modes();
  return observe(traj, scale_kernel(spec, delta, modes), dt_obs);
}

double scaling_identity_check(const ScalarFunction& z, const ScalarFunction& z_second,
                              double support_lo, double support_hi, double x0, double delta,
                              SecondDerivative method, std::size_t points) {
  if (!(delta > 0.0)) throw std::invalid_argument("scaling check: delta must be positive");
  if (points < 2) throw std::invalid_argument("scaling check: need at least two points");
  const double root = std::sqrt(delta);
  const auto scaled = [&](const ScalarFunction& fn, double x) { return fn((x - x0) / delta) / root; };
  const double a = x0 + delta * support_lo;
  const double b = x0 + delta * support_hi;
  const double h = 1e-3 * delta;
  double worst = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
    double lhs = 0.0;
    if (method == SecondDerivative::Analytic) {
      // d^2/dx^2 [delta^{-1/2} z((x - x0)/delta)]
      lhs = z_second((x - x0) / delta) / root / (delta * delta);
    } else {
      lhs = (-scaled(z, x + 2 * h) + 16 * scaled(z, x + h) - 30 * scaled(z, x) +
             16 * scaled(z, x - h) - scaled(z, x - 2 * h)) /
            (12 * h * h);
    }
    const double rhs = scaled(z_second, x) / (delta * delta);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

bool KernelReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

KernelReport kernel_self_test(const KernelSpec& spec, std::span<const double> deltas,
                              std::size_t modes) {
  KernelReport r;
  r.kernel = spec.name;
  r.x0 = spec.x0;
  r.support_lo = spec.support_lo;
  r.support_hi = spec.support_hi;
  r.max_delta = spec.max_delta();
  r.norm_K = spec.norm_K;
  r.norm_K_prime = spec.norm_K_prime;
  r.norm_K_second = spec.norm_K_second;
  r.modes = modes;

  auto add = [&r](std::string name, bool passed, std::string detail) {
    r.checks.push_back({std::move(name), passed, std::move(detail)});
  };
  add("norm_K_positive", spec.norm_K > 0.0, fmt::format("||K|| = {:.10e}", spec.norm_K));
  add("norm_K_prime_positive", spec.norm_K_prime > 0.0,
      fmt::format("||K'||^2 / 2 = {:.10e}", 0.5 * spec.norm_K_prime * spec.norm_K_prime));
  add("K_in_H2", std::isfinite(spec.norm_K_second) && spec.norm_K_second > 0.0,
      fmt::format("||K''|| = {:.10e}", spec.norm_K_second));

  const double width = spec.support_hi - spec.support_lo;
  double outside = 0.0;
  for (int i = 1; i <= 50; ++i) {
    const double d = width * i / 50.0;
    outside = std::max({outside, std::abs(spec.L(spec.support_lo - d)),
                        std::abs(spec.L(spec.support_hi + d)), std::abs(spec.K(spec.support_hi + d))});
  }
  outside = std::max({outside, std::abs(spec.L(spec.support_lo)), std::abs(spec.L(spec.support_hi))});
  add("L_compactly_supported", outside == 0.0,
      fmt::format("max |L| on and beyond the support ends = {:.3e}", outside));

  const auto dL = first_derivative(spec.L, 0.5 * width);
  double mismatch = 0.0;
  double peak = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double y = spec.support_lo + width * i / 400.0;
    mismatch = std::max(mismatch, std::abs(spec.K(y) - dL(y)));
    peak = std::max(peak, std::abs(spec.K(y)));
  }
  add("K_equals_L_prime", mismatch <= 1e-6 * peak,
      fmt::format("max |K - dL/dx| / max |K| = {:.3e}", peak > 0 ? mismatch / peak : 0.0));

  const double mass = adaptive_integrate(spec.K, spec.support_lo, spec.support_hi, 1e-18, 8);
  const double abs_mass = adaptive_integrate([&](double y) { return std::abs(spec.K(y)); },
                                             spec.support_lo, spec.support_hi, 1e-18, 8);
  add("K_has_zero_mean", std::abs(mass) <= 1e-10 * abs_mass,
      fmt::format("|int K| / int |K| = {:.3e}", abs_mass > 0 ? std::abs(mass) / abs_mass : 0.0));

  for (double delta : deltas) {
    KernelReport::PerDelta pd;
    pd.delta = delta;
    pd.fits = spec.fits(delta);
    add(fmt::format("support_fits(delta={})", delta), pd.fits,
        fmt::format("[{:.6g}, {:.6g}] within [0, 1]", spec.x0 + delta * spec.support_lo,
                    spec.x0 + delta * spec.support_hi));
    if (pd.fits) {
      const auto c = scale_kernel(spec, delta, modes);
      for (double v : c.k.coeffs()) pd.parseval_sum += v * v;
      pd.parseval_tail = 1.0 - pd.parseval_sum / (spec.norm_K * spec.norm_K);
      const auto direct = laplacian_kernel_by_quadrature(spec, delta, modes);
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < modes; ++i) {
        diff = std::max(diff, std::abs(c.k_lap[i] - direct[i]));
        scale = std::max(scale, std::abs(direct[i]));
      }
      pd.laplacian_mismatch = scale > 0.0 ? diff / scale : diff;
      add(fmt::format("parseval_tail(delta={})", delta), std::abs(pd.parseval_tail) < 1e-6,
          fmt::format("1 - sum k_n^2 / ||K||^2 = {:.3e} at N = {}", pd.parseval_tail, modes));
      add(fmt::format("laplacian_coefficients(delta={})", delta), pd.laplacian_mismatch < 1e-6,
          fmt::format("max |(-lambda_n k_n) - <Delta K, e_n>| relative = {:.3e}",
                      pd.laplacian_mismatch));
    }
    r.deltas.push_back(pd);
  }
  return r;
}

std::string kernel_report_json(const KernelReport& r) {
  nlohmann::ordered_json j;
  j["kernel"] = r.kernel;
  j["x0"] = r.x0;
  j["support"] = {r.support_lo, r.support_hi};
  j["max_delta"] = r.max_delta;
  j["norm_K"] = r.norm_K;
  j["norm_K_prime"] = r.norm_K_prime;
  j["norm_K_second"] = r.norm_K_second;
  j["modes"] = r.modes;
  j["deltas"] = nlohmann::ordered_json::array();
  for (const auto& d : r.deltas) {
    j["deltas"].push_back({{"delta", d.delta},
                           {"fits", d.fits},
                           {"parseval_sum", d.parseval_sum},
                           {"parseval_tail", d.parseval_tail},
                           {"laplacian_mismatch", d.laplacian_mismatch}});
  }
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : r.checks) {
    j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  j["ok"] = r.ok();
  return j.dump(2);
}

std::string kernel_report_text(const KernelReport& r) {
  std::string out;
  out += fmt::format("kernel {} at x0 = {}\n", r.kernel, r.x0);
  out += fmt::format("  support [{}, {}], max delta {:.6g}\n", r.support_lo, r.support_hi,
                     r.max_delta);
  out += fmt::format("  ||K|| = {:.12e}  ||K'|| = {:.12e}  ||K''|| = {:.12e}\n", r.norm_K,
                     r.norm_K_prime, r.norm_K_second);
  for (const auto& c : r.checks) {
    out += fmt::format("  [{}] {}: {}\n", c.passed ? "ok" : "FAIL", c.name, c.detail);
  }
  out += fmt::format("verdict: {}\n", r.ok() ? "ok" : "FAIL");
  return out;
}

}  // namespace burgers
