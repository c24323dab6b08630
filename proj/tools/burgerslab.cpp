// burgerslab: command-line front end for the stochastic Burgers estimation study.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "burgers/harness.hpp"

using namespace burgers;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kRuntimeError = 2, kIoError = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallelism;
  std::string out;
  std::string format = "json";
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.study.seed = *c.seed;
  if (c.parallelism) cfg.study.parallelism = *c.parallelism;
  if (!c.out.empty()) cfg.outputs.directory = c.out;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw OutputError(fmt::format("cannot write '{}'", path.string()));
}

void add_common(CLI::App* app, Common& c, bool with_parallelism = false) {
  app->add_option("--config", c.config, "YAML experiment configuration");
  app->add_option("--seed", c.seed, "override study.seed");
  if (with_parallelism) app->add_option("--parallelism", c.parallelism, "worker threads");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

int cmd_init(const Common& c) {
  const auto text = config_template();
  if (c.out.empty()) {
    std::cout << text;
  } else {
    const auto path = fs::path(c.out) / "config.yaml";
    write_text(path, text);
    fmt::print(stderr, "wrote {}\n", path.string());
  }
  return kOk;
}

int cmd_kernel_check(const Common& c, std::size_t modes) {
  const auto cfg = load(c);
  const auto report = kernel_self_test(cfg.kernel(), cfg.observation.deltas, modes);
  std::cout << (c.format == "json" ? kernel_report_json(report) + "\n"
                                   : kernel_report_text(report));
  return report.ok() ? kOk : kRuntimeError;
}

int cmd_simulate(const Common& c, std::uint64_t rep, std::size_t every) {
  const auto cfg = load(c);
  const auto solver = cfg.solver();
  if (every == 0) every = std::max<std::size_t>(1, solver.steps() / 1000);
  Trajectory traj;
  traj.dt = solver.dt * static_cast<double>(every);
  const auto outcome = simulate(solver, make_noise_plan(solver, cfg.study.seed, rep), {},
                                [&](const StepView& v) {
                                  if (v.step % every == 0) {
                                    traj.states.emplace_back(std::vector<double>(
                                        v.state.begin(), v.state.end()));
                                  }
                                });
  traj.blow_up = outcome.blow_up;
  traj.blow_up_step = outcome.blow_up_step;
  std::ostringstream os;
  write_trajectory_csv(os, traj, {solver.theta, cfg.study.seed, rep});
  const auto path = fs::path(cfg.outputs.directory) / fmt::format("trajectory_{}.csv", rep);
  write_text(path, os.str());
  fmt::print(stderr, "wrote {} ({} states{})\n", path.string(), traj.size(),
             outcome.blow_up ? ", blow-up" : "");
  return outcome.blow_up ? kRuntimeError : kOk;
}

int cmd_estimate(const Common& c, std::uint64_t rep, bool decompose) {
  auto cfg = load(c);
  if (decompose) cfg.study.diagnostics = true;
  const StudyContext ctx(cfg);
  const auto records = run_replication(ctx, rep);
  bool failed = false;
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  std::string csv = decompose ? "delta,I,R,M,Ibar,bias_term,martingale_term\n"
                              : std::string(kRecordHeader) + "\n";
  for (const auto& r : records) {
    failed = failed || r.failed();
    if (decompose) {
      const double I = r.fisher_info;
      const double R = r.R.value_or(NAN), M = r.M.value_or(NAN);
      csv += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.delta, I,
                         R, M, r.Ibar.value_or(NAN), R / (r.delta * I), M / (r.delta * I));
      out.push_back({{"delta", r.delta},
                     {"I", I},
                     {"R", R},
                     {"M", M},
                     {"Ibar", r.Ibar.value_or(NAN)},
                     {"bias_term", R / (r.delta * I)},
                     {"martingale_term", M / (r.delta * I)}});
      continue;
    }
    csv += to_csv_row(r) + "\n";
    nlohmann::ordered_json e{{"replication_id", r.replication_id},
                             {"delta", r.delta},
                             {"theta_hat", r.theta_hat},
                             {"fisher_info", r.fisher_info},
                             {"blow_up", r.blow_up}};
    if (!r.failed()) {
      nlohmann::ordered_json ci = nlohmann::ordered_json::object();
      for (double level : cfg.study.levels) {
        const auto i = confidence_interval(r.theta_hat, r.fisher_info, 1.0 - level);
        ci[fmt::format("{}", level)] = {i.lo, i.hi};
      }
      e["ci"] = ci;
      e["normalized_error"] = r.normalized_error;
      if (r.R) e["diagnostics"] = {{"R", *r.R}, {"M", *r.M}, {"Ibar", *r.Ibar}};
    }
    out.push_back(e);
  }
  std::cout << (c.format == "json" ? out.dump(2) + "\n" : csv);
  return failed ? kRuntimeError : kOk;
}

int cmd_study(const Common& c, bool quiet) {
  const auto cfg = load(c);
  const fs::path dir = cfg.outputs.directory;
  StudyOptions opts;
  opts.progress_file = dir / "progress.csv";
  if (!quiet) {
    opts.progress = [](std::size_t done, std::size_t total) {
      fmt::print(stderr, "\r{}/{} replications", done, total);
      if (done == total) fmt::print(stderr, "\n");
    };
  }
  const auto result = run_study(cfg, opts);
  for (const auto& p : emit_results(result, cfg, dir)) {
    if (!quiet) fmt::print(stderr, "wrote {}\n", p.string());
  }
  if (c.format == "json") {
    std::cout << summary_json(result.summary, cfg);
  } else {
    std::cout << "delta,replications,failures,bias,rmse,variance_ratio,ks_p_value,coverage\n";
    for (const auto& d : result.summary.deltas) {
      std::cout << fmt::format("{},{},{},{:.6g},{:.6g},{:.6g},{:.6g},{:.4f}\n", d.delta,
                               d.replications, d.failures, d.bias, d.rmse, d.variance_ratio,
                               d.ks ? d.ks->p_value : NAN,
                               d.coverage.at(cfg.study.levels.front()));
    }
  }
  if (result.summary.budget_exceeded) {
    fmt::print(stderr, "error: {} of {} records failed (budget {})\n", result.summary.failures,
               result.records.size(), cfg.study.failure_budget);
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local-measurement estimation of diffusivity in stochastic Burgers equations"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t rep = 0;
  std::size_t modes = 4096;
  std::size_t every = 0;
  bool quiet = false;

  auto* init = app.add_subcommand("init", "print a configuration template");
  init->add_option("--out", common.out, "write config.yaml into this directory");

  auto* kcheck = app.add_subcommand("kernel-check", "kernel self-test report");
  add_common(kcheck, common);
  kcheck->add_option("--modes", modes, "modes for the Parseval check");

  auto* sim = app.add_subcommand("simulate", "dump one trajectory as CSV");
  add_common(sim, common);
  sim->add_option("--replication", rep, "replication id");
  sim->add_option("--every", every, "store every k-th step (default: about 1000 rows)");

  auto* est = app.add_subcommand("estimate", "estimate theta from one replication");
  add_common(est, common);
  est->add_option("--replication", rep, "replication id");

  auto* study = app.add_subcommand("study", "Monte Carlo study over all replications");
  add_common(study, common, true);
  study->add_flag("--quiet", quiet, "no progress output");

  auto* dec = app.add_subcommand("decompose", "error-decomposition terms for one replication");
  add_common(dec, common);
  dec->add_option("--replication", rep, "replication id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*init) return cmd_init(common);
    if (*kcheck) return cmd_kernel_check(common, modes);
    if (*sim) return cmd_simulate(common, rep, every);
    if (*est) return cmd_estimate(common, rep, false);
    if (*dec) return cmd_estimate(common, rep, true);
    if (*study) return cmd_study(common, quiet);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const SupportError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const OutputError& e) {
    fmt::print(stderr, "I/O error: {}\n", e.what());
    return kIoError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntimeError;
  }
  return kOk;
}
