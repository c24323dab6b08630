// Acceptance suite: one PASS/FAIL line per criterion.
//
// usage: acceptance [work_dir] [--only 1,2,...]
// Monte Carlo studies keep progress files under work_dir and resume from them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "burgers/harness.hpp"

using namespace burgers;
namespace fs = std::filesystem;

namespace {

const std::vector<double> kDeltas{0.1, 0.05, 0.02};
constexpr double kSmallest = 0.02;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o, double seconds) {
  if (!o.pass) ++failures;
  fmt::print("{} criterion {}: {} [{:.1f} s]\n    {}\n", o.pass ? "PASS" : "FAIL", id, title,
             seconds, o.detail);
  std::fflush(stdout);
}

template <class F>
void run(int id, const std::string& title, const std::set<int>& only, F&& body) {
  if (!only.empty() && !only.count(id)) return;
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
  report(id, title, o, took.count());
}

// ---- Monte Carlo studies shared by criteria 4 to 7 ----

ExperimentConfig study_config(const std::string& model) {
  ExperimentConfig cfg;
  auto& nl = cfg.model.nonlinearity;
  if (model == "linear") {
    nl.burgers_coeff = 0.0;
  } else if (model == "burgers") {
    nl.burgers_coeff = 0.5;
  } else {  // f(x) = -x|x|
    nl.burgers_coeff = 0.0;
    nl.family = "nemytskii";
    nl.c0 = 1.0;
    nl.eta = 1.0;
    nl.g = "one";
  }
  cfg.validate();
  return cfg;
}

class Studies {
 public:
  explicit Studies(fs::path dir) : dir_(std::move(dir)) {}

  const McSummary& get(const std::string& model) {
    auto it = cache_.find(model);
    if (it != cache_.end()) return it->second;
    const auto cfg = study_config(model);
    fs::create_directories(dir_);
    StudyOptions opts;
    opts.progress_file = dir_ / fmt::format("{}_progress.csv", model);
    const auto start = std::chrono::steady_clock::now();
    std::size_t last = 0;
    opts.progress = [&](std::size_t done, std::size_t total) {
      const std::size_t pct = 100 * done / total;
      if (pct >= last + 10 || done == total) {
        last = pct;
        const std::chrono::duration<double> t = std::chrono::steady_clock::now() - start;
        fmt::print(stderr, "  {} study: {}/{} replications ({:.0f} s)\n", model, done, total,
                   t.count());
      }
    };
    auto result = run_study(cfg, opts);
    emit_results(result, cfg, dir_ / model);
    return cache_.emplace(model, std::move(result.summary)).first->second;
  }

 private:
  fs::path dir_;
  std::map<std::string, McSummary> cache_;
};

std::string ks_text(const DeltaSummary& d) {
  return d.ks ? fmt::format("KS D={:.4f} p={:.4f}", d.ks->statistic, d.ks->p_value)
              : std::string("KS undefined");
}

bool ks_ok(const DeltaSummary& d) { return d.ks && d.ks->p_value > 0.01; }

// ---- criteria ----

Outcome exact_oracle() {
  SolverConfig cfg;
  cfg.modes = 256;
  cfg.grid_points = 512;
  cfg.dt = 1e-4;
  cfg.horizon = 1.0;
  cfg.nonlinearity = NonlinearitySpec::linear();
  const auto plan = make_noise_plan(cfg, 20240611, 0);
  const auto oracle = simulate_stochastic_convolution(plan, cfg.theta);
  double worst = 0.0;
  std::size_t states = 0;
  simulate(cfg, plan, {}, [&](const StepView& v) {
    const auto ref = oracle.state(v.step);
    for (std::size_t i = 0; i < cfg.modes; ++i) {
      worst = std::max(worst, std::abs(v.state[i] - ref[i]));
    }
    ++states;
  });
  const bool ok = states == cfg.steps() + 1 && cfg.steps() == 10000 && worst < 1e-12;
  return {ok, fmt::format("N={}, K={} steps, max |solver - exact OU| = {:.3e} (tol 1e-12)",
                          cfg.modes, cfg.steps(), worst)};
}

Outcome noiseless_identity() {
  SolverConfig cfg;
  cfg.theta = 1.0;
  cfg.modes = 64;
  cfg.grid_points = 128;
  cfg.dt = 1e-5;
  cfg.horizon = 1.0;
  cfg.noise = false;
  cfg.nonlinearity = NonlinearitySpec::linear();
  cfg.initial_condition = SpectralField(cfg.modes);
  cfg.initial_condition[0] = 1.0;
  const auto traj = simulate(cfg, make_noise_plan(cfg, 1, 0), false);
  // K is odd about x0 and e_1 even about 1/2, so x0 = 1/2 would observe nothing.
  const auto kernel = bump_kernel(0.4);
  double worst = 0.0;
  std::string parts;
  for (double delta : kDeltas) {
    const auto s = augmented_mle(observe(traj, kernel, delta, 1e-5));
    const double err = std::abs(s.theta_hat - 1.0);
    worst = std::max(worst, err);
    parts += fmt::format(" delta={}: {:.3e};", delta, err);
  }
  return {worst < 1e-3, fmt::format("x0=0.4, |theta_hat - 1| at dt_obs=1e-5:{} tol 1e-3", parts)};
}

Outcome kernel_invariants() {
  const auto kernel = bump_kernel(0.5);
  const auto r = kernel_self_test(kernel, kDeltas, 4096);
  double tail = 0.0, lap = 0.0, scaling = 0.0;
  for (const auto& d : r.deltas) {
    tail = std::max(tail, std::abs(d.parseval_tail));
    lap = std::max(lap, d.laplacian_mismatch);
  }
  // Residual of Delta z_delta = delta^-2 (z'')_delta with z = L, the left side
  // from a stencil on z_delta, relative to the peak of the right side.
  for (double delta : kDeltas) {
    double peak = 0.0;
    for (int i = 0; i <= 4000; ++i) {
      peak = std::max(peak, std::abs(kernel.K_prime(-1.0 + 2.0 * i / 4000.0)));
    }
    peak /= std::pow(delta, 2.5);
    const double res = scaling_identity_check(kernel.L, kernel.K_prime, kernel.support_lo,
                                              kernel.support_hi, kernel.x0, delta,
                                              SecondDerivative::Stencil);
    scaling = std::max(scaling, res / peak);
  }
  const bool ok = r.deltas.size() == kDeltas.size() && tail < 1e-6 && lap < 1e-6 &&
                  scaling < 1e-6;
  return {ok, fmt::format("N=4096: max Parseval tail {:.3e}, max Laplacian mismatch {:.3e}, "
                          "max scaling residual {:.3e} (tol 1e-6 each)",
                          tail, lap, scaling)};
}

Outcome fisher_asymptotics(Studies& studies) {
  const auto cfg = study_config("linear");
  const auto k = cfg.kernel();
  const double target = cfg.model.horizon * k.norm_K_prime * k.norm_K_prime /
                        (2.0 * cfg.model.theta * k.norm_K * k.norm_K);
  const auto& d = studies.get("linear").at(kSmallest);
  const double rel = d.mean_scaled_fisher / target - 1.0;
  return {std::abs(rel) <= 0.2 && d.replications == 500,
          fmt::format("linear, delta=0.02, R={}: delta^2 mean(I) = {:.6g}, target {:.6g}, "
                      "relative deviation {:+.4f} (tol 0.20)",
                      d.replications, d.mean_scaled_fisher, target, rel)};
}

Outcome clt_linear(Studies& studies) {
  const auto& d = studies.get("linear").at(kSmallest);
  const bool ok = d.variance_defined && d.variance_ratio >= 0.8 && d.variance_ratio <= 1.25 &&
                  ks_ok(d) && d.replications == 500;
  return {ok, fmt::format("linear, delta=0.02, R={}, failures {}: variance ratio {:.4f} "
                          "(target [0.8, 1.25]), {} (reject if p <= 0.01)",
                          d.replications, d.failures, d.variance_ratio, ks_text(d))};
}

Outcome clt_nonlinear(Studies& studies) {
  bool ok = true;
  std::string detail;
  for (const std::string model : {"burgers", "nemytskii"}) {
    const auto& s = studies.get(model);
    std::vector<double> rmse, bias_term;
    for (double delta : kDeltas) {
      const auto& d = s.at(delta);
      rmse.push_back(d.rmse);
      bias_term.push_back(d.mean_abs_bias_term.value_or(NAN));
    }
    bool rmse_dec = true, bias_dec = true;
    for (std::size_t i = 1; i < kDeltas.size(); ++i) {
      rmse_dec = rmse_dec && rmse[i] < rmse[i - 1];
      bias_dec = bias_dec && bias_term[i] < bias_term[i - 1];
    }
    const auto& small = s.at(kSmallest);
    const bool model_ok = rmse_dec && bias_dec && ks_ok(small) && small.replications == 500 &&
                          !s.budget_exceeded;
    ok = ok && model_ok;
    detail += fmt::format(
        "{}{}: RMSE {:.4g} > {:.4g} > {:.4g} [{}]; mean|R/(delta I)| {:.4g} > {:.4g} > {:.4g} "
        "[{}]; delta=0.02 {} [{}]; failures {}",
        detail.empty() ? "" : "\n    ", model, rmse[0], rmse[1], rmse[2],
        rmse_dec ? "ok" : "not decreasing", bias_term[0], bias_term[1], bias_term[2],
        bias_dec ? "ok" : "not decreasing", ks_text(small), ks_ok(small) ? "ok" : "rejected",
        s.failures);
  }
  return {ok, detail};
}

Outcome coverage(Studies& studies) {
  bool ok = true;
  std::string detail;
  for (const std::string model : {"linear", "burgers"}) {
    const auto& d = studies.get(model).at(kSmallest);
    const double c = d.coverage.at(0.9);
    ok = ok && c >= 0.86 && c <= 0.94 && d.replications == 500;
    detail += fmt::format("{}{}: {:.3f}", detail.empty() ? "" : ", ", model, c);
  }
  return {ok, fmt::format("nominal 90% coverage at delta=0.02, R=500: {} (target [0.86, 0.94])",
                          detail)};
}

struct MomentRun {
  double diagnostic = 0.0;
  std::size_t blow_ups = 0;
  bool finite = true;
};

MomentRun moment_run(std::size_t modes, std::size_t grid_points, std::size_t reps) {
  SolverConfig cfg;  // dynamics defaults: theta=1, T=1, dt=2e-5, a=1/2
  cfg.modes = modes;
  cfg.grid_points = grid_points;
  cfg.nonlinearity = NonlinearitySpec::burgers(0.5);
  MomentRun out;
  std::vector<std::vector<double>> sups;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    double sup = 0.0;
    SimulationOptions opts;
    opts.provide_grid = true;
    const auto o = simulate(cfg, make_noise_plan(cfg, 20240611, rep), opts,
                            [&](const StepView& v) { sup = std::max(sup, lp_norm(4.0, v.grid)); });
    if (o.blow_up) ++out.blow_ups;
    out.finite = out.finite && std::isfinite(sup);
    sups.push_back({sup});
  }
  out.diagnostic = moment_diagnostic(sups, 4);
  return out;
}

Outcome moment_stability() {
  const std::size_t reps = 100;
  const auto base = moment_run(512, 1024, reps);
  fmt::print(stderr, "  moment diagnostic N=512: {:.6g}\n", base.diagnostic);
  const auto fine = moment_run(1024, 2048, reps);
  const double ratio = fine.diagnostic / base.diagnostic;
  const bool ok = base.blow_ups == 0 && fine.blow_ups == 0 && base.finite && fine.finite &&
                  std::isfinite(ratio) && ratio >= 0.5 && ratio <= 2.0;
  return {ok, fmt::format("Burgers a=1/2, T=1, dt=2e-5, {} replications: blow-ups {} (N=512), "
                          "{} (N=1024); E sup ||X||_L4^4 = {:.6g} (N=512), {:.6g} (N=1024), "
                          "ratio {:.4f} (target [0.5, 2])",
                          reps, base.blow_ups, fine.blow_ups, base.diagnostic, fine.diagnostic,
                          ratio)};
}

Outcome determinism() {
  ExperimentConfig cfg;
  cfg.model.horizon = 0.02;
  cfg.model.modes = 64;
  cfg.model.grid_points = 128;
  cfg.model.dt = 1e-4;
  cfg.observation.dt_obs = 1e-4;
  cfg.observation.deltas = {0.2, 0.1, 0.05};
  cfg.study.replications = 64;
  cfg.validate();
  StudyOptions serial, parallel;
  serial.parallelism = 1;
  parallel.parallelism = 8;
  const auto a = run_study(cfg, serial);
  const auto b = run_study(cfg, parallel);
  bool records = a.records.size() == b.records.size();
  for (std::size_t i = 0; records && i < a.records.size(); ++i) {
    records = to_csv_row(a.records[i]) == to_csv_row(b.records[i]);
  }
  const bool summary = summary_json(a.summary, cfg, false) == summary_json(b.summary, cfg, false);
  return {records && summary,
          fmt::format("Burgers study, {} records: records {}, summary {} (parallelism 1 vs 8)",
                      a.records.size(), records ? "identical" : "differ",
                      summary ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::string list = argv[++i];
      std::size_t pos = 0;
      while (pos < list.size()) {
        const auto comma = list.find(',', pos);
        only.insert(std::stoi(list.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    } else {
      work = arg;
    }
  }

  Studies studies(work);
  run(1, "solver equals exact OU simulation", only, exact_oracle);
  run(2, "noiseless identity", only, noiseless_identity);
  run(3, "kernel invariants", only, kernel_invariants);
  run(4, "Fisher information asymptotics (linear)", only, [&] { return fisher_asymptotics(studies); });
  run(5, "CLT variance and normality (linear)", only, [&] { return clt_linear(studies); });
  run(6, "CLT for Burgers and Nemytskii models", only, [&] { return clt_nonlinear(studies); });
  run(7, "confidence interval coverage", only, [&] { return coverage(studies); });
  run(8, "moment diagnostic under N-doubling", only, moment_stability);
  run(9, "scheduling determinism", only, determinism);

  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
