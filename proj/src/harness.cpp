#include "burgers/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/core.h>
#include <fmt/ostream.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "burgers/normal.hpp"

namespace burgers {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Named functions

namespace {

const std::map<std::string, ScalarFunction>& function_table() {
  static const std::map<std::string, ScalarFunction> table{
      {"zero", [](double) { return 0.0; }},
      {"one", [](double) { return 1.0; }},
      {"identity", [](double x) { return x; }},
      {"neg_identity", [](double x) { return -x; }},
      {"sin", [](double x) { return std::sin(x); }},
      {"cos", [](double x) { return std::cos(x); }},
      {"tanh", [](double x) { return std::tanh(x); }},
      {"neg_tanh", [](double x) { return -std::tanh(x); }},
      {"gauss", [](double x) { return std::exp(-x * x); }},
      {"inv_one_plus_sq", [](double x) { return 1.0 / (1.0 + x * x); }},
      {"sin_pi", [](double x) { return std::sin(std::numbers::pi * x); }},
  };
  return table;
}

}  // namespace

ScalarFunction named_function(const std::string& name) {
  const auto& table = function_table();
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError(fmt::format("unknown function '{}'", name));
  return it->second;
}

std::vector<std::string> named_functions() {
  std::vector<std::string> out;
  for (const auto& [name, fn] : function_table()) out.push_back(name);
  return out;
}

NonlinearitySpec NonlinearityConfig::build() const {
  try {
    if (family == "none") return NonlinearitySpec::burgers(burgers_coeff);
    if (family == "nemytskii") {
      return NonlinearitySpec::nemytskii_power(burgers_coeff, c0, eta,
                                               g == "one" ? nullptr : named_function(g));
    }
    if (family == "nonlocal1") {
      return NonlinearitySpec::nonlocal1(burgers_coeff, named_function(f1), named_function(f2));
    }
    if (family == "nonlocal2") {
      return NonlinearitySpec::nonlocal2(burgers_coeff, named_function(g), named_function(h));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError(fmt::format("unknown nonlinearity family '{}'", family));
}

// ---------------------------------------------------------------------------
// Configuration

SolverConfig ExperimentConfig::solver() const {
  SolverConfig s;
  s.theta = model.theta;
  s.horizon = model.horizon;
  s.modes = model.modes;
  s.grid_points = model.grid_points;
  s.dt = model.dt;
  s.noise = model.noise;
  s.dealias = model.dealias;
  s.blowup_cap = model.blowup_cap;
  s.nonlinearity = model.nonlinearity.build();
  if (model.initial == "e1") {
    s.initial_condition = SpectralField::basis(model.modes, 1);
  } else if (model.initial == "coefficients") {
    auto c = model.initial_coefficients;
    if (c.size() > model.modes) throw ConfigError("more initial coefficients than modes");
    c.resize(model.modes, 0.0);
    s.initial_condition = SpectralField(std::move(c));
  } else if (model.initial != "zero") {
    throw ConfigError(fmt::format("unknown initial condition '{}'", model.initial));
  }
  return s;
}

KernelSpec ExperimentConfig::kernel() const {
  try {
    return kernel_by_name(observation.kernel, observation.x0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void ExperimentConfig::validate() const {
  const auto s = solver();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("model: {}", e.what()));
  }
  const auto report = validate_nonlinearity(s.nonlinearity);
  if (!report.ok) {
    throw ConfigError(fmt::format("model.nonlinearity: {}", report.violations.front()));
  }
  if (observation.deltas.empty()) throw ConfigError("observation.deltas is empty");
  const auto k = kernel();
  std::set<double> seen;
  for (double d : observation.deltas) {
    if (!k.fits(d)) {
      throw ConfigError(fmt::format("observation.deltas: {} outside (0, {}] for x0 = {}", d,
                                    k.max_delta(), observation.x0));
    }
    if (!seen.insert(d).second) throw ConfigError(fmt::format("duplicate delta {}", d));
  }
  try {
    observation_stride(model.dt, observation.dt_obs);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("observation.dt_obs: {}", e.what()));
  }
  const double obs_steps = model.horizon / observation.dt_obs;
  if (std::abs(obs_steps - std::round(obs_steps)) > 1e-9 * obs_steps || obs_steps < 1.0) {
    throw ConfigError("observation.dt_obs must divide the horizon");
  }
  if (study.replications < 1) throw ConfigError("study.replications must be >= 1");
  if (study.levels.empty()) throw ConfigError("study.levels is empty");
  for (double l : study.levels) {
    if (!(l > 0.0 && l < 1.0)) throw ConfigError(fmt::format("study.levels: {} not in (0,1)", l));
  }
  if (study.parallelism < 1) throw ConfigError("study.parallelism must be >= 1");
  if (!(study.failure_budget >= 0.0 && study.failure_budget <= 1.0)) {
    throw ConfigError("study.failure_budget must lie in [0, 1]");
  }
  for (const auto& f : outputs.formats) {
    if (f != "csv" && f != "json") throw ConfigError(fmt::format("unknown output format '{}'", f));
  }
}

namespace {

void check_keys(const YAML::Node& node, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw ConfigError(fmt::format("'{}' must be a mapping", section));
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(fmt::format("unknown key '{}.{}'", section, key));
    }
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& section) {
  if (!node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(fmt::format("bad value for '{}.{}'", section, key));
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("YAML parse error: {}", e.what()));
  }
  ExperimentConfig cfg;
  if (root.IsNull()) return cfg;
  check_keys(root, "<root>", {"model", "observation", "study", "outputs"});

  if (const auto m = root["model"]) {
    check_keys(m, "model",
               {"theta", "horizon", "modes", "grid_points", "dt", "initial",
                "initial_coefficients", "noise", "dealias", "blowup_cap", "nonlinearity"});
    auto& mc = cfg.model;
    read(m, "theta", mc.theta, "model");
    read(m, "horizon", mc.horizon, "model");
    read(m, "modes", mc.modes, "model");
    read(m, "grid_points", mc.grid_points, "model");
    read(m, "dt", mc.dt, "model");
    read(m, "initial", mc.initial, "model");
    read(m, "initial_coefficients", mc.initial_coefficients, "model");
    read(m, "noise", mc.noise, "model");
    read(m, "dealias", mc.dealias, "model");
    read(m, "blowup_cap", mc.blowup_cap, "model");
    if (const auto n = m["nonlinearity"]) {
      check_keys(n, "model.nonlinearity",
                 {"burgers_coeff", "family", "c0", "eta", "g", "f1", "f2", "h"});
      auto& nc = mc.nonlinearity;
      const std::string s = "model.nonlinearity";
      read(n, "burgers_coeff", nc.burgers_coeff, s);
      read(n, "family", nc.family, s);
      read(n, "c0", nc.c0, s);
      read(n, "eta", nc.eta, s);
      read(n, "g", nc.g, s);
      read(n, "f1", nc.f1, s);
      read(n, "f2", nc.f2, s);
      read(n, "h", nc.h, s);
    }
  }
  if (const auto o = root["observation"]) {
    check_keys(o, "observation", {"x0", "kernel", "deltas", "dt_obs"});
    read(o, "x0", cfg.observation.x0, "observation");
    read(o, "kernel", cfg.observation.kernel, "observation");
    read(o, "deltas", cfg.observation.deltas, "observation");
    read(o, "dt_obs", cfg.observation.dt_obs, "observation");
  }
  if (const auto s = root["study"]) {
    check_keys(s, "study",
               {"replications", "seed", "levels", "parallelism", "failure_budget", "diagnostics"});
    read(s, "replications", cfg.study.replications, "study");
    read(s, "seed", cfg.study.seed, "study");
    read(s, "levels", cfg.study.levels, "study");
    read(s, "parallelism", cfg.study.parallelism, "study");
    read(s, "failure_budget", cfg.study.failure_budget, "study");
    read(s, "diagnostics", cfg.study.diagnostics, "study");
  }
  if (const auto o = root["outputs"]) {
    check_keys(o, "outputs", {"directory", "formats"});
    read(o, "directory", cfg.outputs.directory, "outputs");
    read(o, "formats", cfg.outputs.formats, "outputs");
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

// Shortest round-trip text; fixed emitter precision prints 0.1 as 0.10000000000000001.
std::string num(double v) { return fmt::format("{}", v); }

std::vector<std::string> nums(const std::vector<double>& v) {
  std::vector<std::string> out;
  for (double x : v) out.push_back(num(x));
  return out;
}

void emit_config(YAML::Emitter& out, const ExperimentConfig& cfg, bool comments) {
  auto note = [&](const char* text) {
    if (comments) out << YAML::Comment(text);
  };
  const auto& m = cfg.model;
  const auto& n = m.nonlinearity;
  out << YAML::BeginMap;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "theta" << YAML::Value << num(m.theta);
  out << YAML::Key << "horizon" << YAML::Value << num(m.horizon);
  out << YAML::Key << "modes" << YAML::Value << m.modes;
  out << YAML::Key << "grid_points" << YAML::Value << m.grid_points;
  note("at least 3*modes/2 with dealias");
  out << YAML::Key << "dt" << YAML::Value << num(m.dt);
  out << YAML::Key << "initial" << YAML::Value << m.initial;
  note("zero | e1 | coefficients");
  out << YAML::Key << "initial_coefficients" << YAML::Value << YAML::Flow << nums(m.initial_coefficients);
  out << YAML::Key << "noise" << YAML::Value << m.noise;
  out << YAML::Key << "dealias" << YAML::Value << m.dealias;
  out << YAML::Key << "blowup_cap" << YAML::Value << num(m.blowup_cap);
  note("on the L2 norm");
  out << YAML::Key << "nonlinearity" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "burgers_coeff" << YAML::Value << num(n.burgers_coeff);
  out << YAML::Key << "family" << YAML::Value << n.family;
  note("none | nemytskii | nonlocal1 | nonlocal2");
  out << YAML::Key << "c0" << YAML::Value << num(n.c0);
  out << YAML::Key << "eta" << YAML::Value << num(n.eta);
  note("nemytskii: f(x) = -c0 x |x|^eta g(|x|^(1-eta))");
  out << YAML::Key << "g" << YAML::Value << n.g;
  out << YAML::Key << "f1" << YAML::Value << n.f1;
  out << YAML::Key << "f2" << YAML::Value << n.f2;
  out << YAML::Key << "h" << YAML::Value << n.h;
  out << YAML::EndMap;
  out << YAML::EndMap;

  out << YAML::Key << "observation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "x0" << YAML::Value << num(cfg.observation.x0);
  out << YAML::Key << "kernel" << YAML::Value << cfg.observation.kernel;
  out << YAML::Key << "deltas" << YAML::Value << YAML::Flow << nums(cfg.observation.deltas);
  out << YAML::Key << "dt_obs" << YAML::Value << num(cfg.observation.dt_obs);
  out << YAML::EndMap;

  out << YAML::Key << "study" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "replications" << YAML::Value << cfg.study.replications;
  out << YAML::Key << "seed" << YAML::Value << cfg.study.seed;
  out << YAML::Key << "levels" << YAML::Value << YAML::Flow << nums(cfg.study.levels);
  out << YAML::Key << "parallelism" << YAML::Value << cfg.study.parallelism;
  out << YAML::Key << "failure_budget" << YAML::Value << num(cfg.study.failure_budget);
  out << YAML::Key << "diagnostics" << YAML::Value << cfg.study.diagnostics;
  note("record R, M and Ibar (tracks the linear part)");
  out << YAML::EndMap;

  out << YAML::Key << "outputs" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "directory" << YAML::Value << cfg.outputs.directory;
  out << YAML::Key << "formats" << YAML::Value << YAML::Flow << cfg.outputs.formats;
  out << YAML::EndMap;
  out << YAML::EndMap;
}

}  // namespace

std::string to_yaml(const ExperimentConfig& cfg) {
  YAML::Emitter out;
  emit_config(out, cfg, false);
  return std::string(out.c_str()) + "\n";
}

std::string config_template() {
  YAML::Emitter out;
  emit_config(out, ExperimentConfig{}, true);
  std::string functions;
  for (const auto& f : named_functions()) functions += " " + f;
  return fmt::format("# burgerslab experiment configuration\n# named functions:{}\n{}\n",
                     functions, out.c_str());
}

std::string canonical_config(const ExperimentConfig& cfg) {
  const auto& m = cfg.model;
  const auto& n = m.nonlinearity;
  ordered_json j;
  j["model"] = {{"theta", m.theta},
                {"horizon", m.horizon},
                {"modes", m.modes},
                {"grid_points", m.grid_points},
                {"dt", m.dt},
                {"initial", m.initial},
                {"initial_coefficients", m.initial_coefficients},
                {"noise", m.noise},
                {"dealias", m.dealias},
                {"blowup_cap", m.blowup_cap},
                {"nonlinearity",
                 {{"burgers_coeff", n.burgers_coeff},
                  {"family", n.family},
                  {"c0", n.c0},
                  {"eta", n.eta},
                  {"g", n.g},
                  {"f1", n.f1},
                  {"f2", n.f2},
                  {"h", n.h}}}};
  j["observation"] = {{"x0", cfg.observation.x0},
                      {"kernel", cfg.observation.kernel},
                      {"deltas", cfg.observation.deltas},
                      {"dt_obs", cfg.observation.dt_obs}};
  j["study"] = {{"replications", cfg.study.replications},
                {"seed", cfg.study.seed},
                {"levels", cfg.study.levels},
                {"failure_budget", cfg.study.failure_budget},
                {"diagnostics", cfg.study.diagnostics}};
  return j.dump();
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(canonical_config(cfg)); }

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

double kolmogorov_sf(double x) {
  if (!(x > 0.0)) return 1.0;
  if (x < 1.0) {
    // P(K <= x) = sqrt(2 pi)/x sum_k exp(-(2k-1)^2 pi^2 / (8 x^2))
    const double c = -std::numbers::pi * std::numbers::pi / (8.0 * x * x);
    double cdf = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double term = std::exp(c * (2 * k - 1) * (2 * k - 1));
      cdf += term;
      if (term < 1e-18 * cdf) break;
    }
    return 1.0 - std::sqrt(2.0 * std::numbers::pi) / x * cdf;
  }
  double sf = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sf += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(sf, 0.0, 1.0);
}

KsResult ks_normality(std::vector<double> values) {
  if (values.size() < 20) throw std::invalid_argument("ks_normality: need at least 20 values");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("ks_normality: non-finite value");
  }
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = normal_cdf(values[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, kolmogorov_sf(std::sqrt(n) * d)};
}

// ---------------------------------------------------------------------------
// Replications

StudyContext::StudyContext(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  solver_ = cfg_.solver();
  kernel_ = cfg_.kernel();
  for (double d : cfg_.observation.deltas) {
    coeffs_.push_back(scale_kernel(kernel_, d, solver_.modes));
  }
  sigma_ = std::sqrt(asymptotic_variance(solver_.theta, kernel_, solver_.horizon));
  stride_ = observation_stride(solver_.dt, cfg_.observation.dt_obs);
}

std::vector<ReplicationRecord> run_replication(const StudyContext& ctx,
                                               std::uint64_t replication_id) {
  const auto& cfg = ctx.config();
  const auto& solver = ctx.solver();
  const auto plan = make_noise_plan(solver, cfg.study.seed, replication_id);
  std::vector<EstimatorAccumulator> accs;
  for (const auto& c : ctx.coefficients()) accs.emplace_back(c, cfg.observation.dt_obs);

  SimulationOptions opts;
  opts.with_linear_part = cfg.study.diagnostics;
  const std::size_t stride = ctx.stride();
  const auto outcome = simulate(solver, plan, opts, [&](const StepView& v) {
    if (v.step % stride != 0) return;
    for (auto& acc : accs) acc.add(v.state, v.drift, v.linear);
  });

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<ReplicationRecord> out;
  for (const auto& acc : accs) {
    ReplicationRecord r;
    r.replication_id = replication_id;
    r.delta = acc.delta();
    r.blow_up = outcome.blow_up;
    r.theta_hat = r.fisher_info = r.ci_lo = r.ci_hi = r.normalized_error = nan;
    if (!outcome.blow_up) {
      try {
        const auto s = acc.mle();
        r.theta_hat = s.theta_hat;
        r.fisher_info = acc.fisher_information();
        const auto ci =
            confidence_interval(r.theta_hat, r.fisher_info, 1.0 - cfg.study.levels.front());
        r.ci_lo = ci.lo;
        r.ci_hi = ci.hi;
        r.normalized_error = (r.theta_hat - solver.theta) / (r.delta * ctx.sigma());
        if (cfg.study.diagnostics) {
          const auto d = acc.decomposition(solver.theta);
          r.R = d.R;
          r.M = d.M;
          r.Ibar = d.Ibar;
        }
      } catch (const DegenerateObservationError&) {
        // recorded as a failure: theta_hat stays NaN
      }
    }
    out.push_back(r);
  }
  return out;
}

ReplicationRecord run_replication(const StudyContext& ctx, double delta,
                                  std::uint64_t replication_id) {
  const auto& deltas = ctx.config().observation.deltas;
  const auto it = std::find(deltas.begin(), deltas.end(), delta);
  if (it == deltas.end()) throw std::invalid_argument(fmt::format("delta {} not configured", delta));
  return run_replication(ctx, replication_id)[static_cast<std::size_t>(it - deltas.begin())];
}

// ---------------------------------------------------------------------------
// Summary

const DeltaSummary& McSummary::at(double delta) const {
  for (const auto& d : deltas) {
    if (d.delta == delta) return d;
  }
  throw std::out_of_range(fmt::format("no summary for delta {}", delta));
}

McSummary summarize(const ExperimentConfig& cfg, const std::vector<ReplicationRecord>& records) {
  const double theta = cfg.model.theta;
  const auto kernel = cfg.kernel();
  const double target = asymptotic_variance(theta, kernel, cfg.model.horizon);

  McSummary s;
  s.seed = cfg.study.seed;
  s.config_hash = config_hash(cfg);
  s.replications = cfg.study.replications;

  std::vector<double> deltas = cfg.observation.deltas;
  std::sort(deltas.begin(), deltas.end());
  for (double delta : deltas) {
    DeltaSummary d;
    d.delta = delta;
    d.target_variance = target;
    std::vector<const ReplicationRecord*> ok;
    for (const auto& r : records) {
      if (r.delta != delta) continue;
      ++d.replications;
      if (r.blow_up) ++d.blow_ups;
      if (r.failed()) {
        ++d.failures;
      } else {
        ok.push_back(&r);
      }
    }
    s.failures += d.failures;
    const double n = static_cast<double>(ok.size());
    if (!ok.empty()) {
      double sum = 0.0, sq = 0.0, fisher = 0.0;
      for (const auto* r : ok) {
        sum += r->theta_hat;
        sq += (r->theta_hat - theta) * (r->theta_hat - theta);
        fisher += delta * delta * r->fisher_info;
      }
      d.mean_theta_hat = sum / n;
      d.bias = d.mean_theta_hat - theta;
      d.rmse = std::sqrt(sq / n);
      d.mean_scaled_fisher = fisher / n;

      for (double level : cfg.study.levels) {
        std::size_t hits = 0;
        for (const auto* r : ok) {
          if (confidence_interval(r->theta_hat, r->fisher_info, 1.0 - level).contains(theta)) {
            ++hits;
          }
        }
        d.coverage[level] = static_cast<double>(hits) / n;
      }

      if (std::all_of(ok.begin(), ok.end(), [](const auto* r) { return r->R.has_value(); })) {
        double acc = 0.0;
        for (const auto* r : ok) acc += std::abs(*r->R / (delta * r->fisher_info));
        d.mean_abs_bias_term = acc / n;
      }
    }
    if (ok.size() >= 2) {
      double mean = 0.0;
      for (const auto* r : ok) mean += (r->theta_hat - theta) / delta;
      mean /= n;
      double var = 0.0;
      for (const auto* r : ok) {
        const double e = (r->theta_hat - theta) / delta - mean;
        var += e * e;
      }
      d.scaled_variance = var / (n - 1.0);
      d.variance_ratio = d.scaled_variance / target;
      d.variance_defined = true;
    }
    if (ok.size() >= 20) {
      std::vector<double> z;
      for (const auto* r : ok) z.push_back(r->normalized_error);
      d.ks = ks_normality(std::move(z));
    }
    s.deltas.push_back(std::move(d));
  }
  const double total = static_cast<double>(records.size());
  s.budget_exceeded =
      total > 0.0 && static_cast<double>(s.failures) > cfg.study.failure_budget * total;
  return s;
}

// ---------------------------------------------------------------------------
// Study driver

namespace {

constexpr const char* kProgressPrefix = "# config_hash=";

std::vector<ReplicationRecord> load_progress(const fs::path& path, const std::string& hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  // A last line without its newline was cut short by an interrupted run.
  text.erase(text.find_last_of('\n') == std::string::npos ? 0 : text.find_last_of('\n') + 1);
  std::istringstream lines(text);
  std::string line;
  if (!std::getline(lines, line) || line != kProgressPrefix + hash) return {};
  if (!std::getline(lines, line) || line != kRecordHeader) return {};
  std::vector<ReplicationRecord> out;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(parse_csv_row(line));
    } catch (const std::runtime_error&) {
      break;
    }
  }
  return out;
}

bool record_less(const ReplicationRecord& a, const ReplicationRecord& b) {
  if (a.delta != b.delta) return a.delta < b.delta;
  return a.replication_id < b.replication_id;
}

}  // namespace

StudyResult run_study(const ExperimentConfig& cfg, const StudyOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const StudyContext ctx(cfg);
  const std::string hash = config_hash(cfg);
  const std::size_t n_delta = cfg.observation.deltas.size();
  const std::size_t total = cfg.study.replications;

  std::vector<std::vector<ReplicationRecord>> slots(total);
  std::ofstream progress;
  if (options.progress_file) {
    std::map<std::uint64_t, std::vector<ReplicationRecord>> by_rep;
    for (auto& r : load_progress(*options.progress_file, hash)) {
      if (r.replication_id < total) by_rep[r.replication_id].push_back(r);
    }
    for (auto& [rep, recs] : by_rep) {
      std::set<double> ds;
      for (const auto& r : recs) ds.insert(r.delta);
      if (recs.size() == n_delta && ds.size() == n_delta) slots[rep] = std::move(recs);
    }
    if (options.progress_file->has_parent_path()) {
      std::error_code ec;
      fs::create_directories(options.progress_file->parent_path(), ec);
    }
    progress.open(*options.progress_file, std::ios::trunc);
    if (!progress) {
      throw OutputError(fmt::format("cannot write '{}'", options.progress_file->string()));
    }
    fmt::print(progress, "{}{}\n{}\n", kProgressPrefix, hash, kRecordHeader);
    for (const auto& recs : slots) {
      for (const auto& r : recs) fmt::print(progress, "{}\n", to_csv_row(r));
    }
    progress.flush();
  }

  std::vector<std::uint64_t> pending;
  for (std::uint64_t rep = 0; rep < total; ++rep) {
    if (slots[rep].empty()) pending.push_back(rep);
  }
  std::size_t done = total - pending.size();
  if (options.progress) options.progress(done, total);

  const std::size_t workers = std::max<std::size_t>(
      1, std::min(options.parallelism.value_or(cfg.study.parallelism), pending.size()));
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      {
        std::lock_guard lock(mu);
        if (error) return;
      }
      try {
        auto recs = run_replication(ctx, pending[i]);
        std::lock_guard lock(mu);
        if (progress.is_open()) {
          for (const auto& r : recs) fmt::print(progress, "{}\n", to_csv_row(r));
          progress.flush();
        }
        slots[pending[i]] = std::move(recs);
        ++done;
        if (options.progress) options.progress(done, total);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);

  StudyResult result;
  for (auto& recs : slots) {
    for (auto& r : recs) result.records.push_back(std::move(r));
  }
  std::sort(result.records.begin(), result.records.end(), record_less);
  result.summary = summarize(cfg, result.records);
  result.summary.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Output

namespace {

ordered_json number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(); }

ordered_json optional_number(const std::optional<double>& v) {
  return v ? number(*v) : ordered_json();
}

std::string delta_tag(double delta) { return fmt::format("{}", delta); }

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError(fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) throw OutputError(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace

std::string summary_json(const McSummary& summary, const ExperimentConfig& cfg,
                         bool include_wall_time) {
  ordered_json j;
  j["metadata"] = {{"seed", summary.seed},
                   {"config_hash", summary.config_hash},
                   {"canonical_config", canonical_config(cfg)},
                   {"replications", summary.replications},
                   {"failures", summary.failures},
                   {"failure_budget", cfg.study.failure_budget},
                   {"budget_exceeded", summary.budget_exceeded}};
  if (include_wall_time) j["metadata"]["wall_time_seconds"] = summary.wall_time_seconds;
  j["deltas"] = ordered_json::array();
  for (const auto& d : summary.deltas) {
    ordered_json e;
    e["delta"] = d.delta;
    e["replications"] = d.replications;
    e["failures"] = d.failures;
    e["blow_ups"] = d.blow_ups;
    e["mean_theta_hat"] = number(d.mean_theta_hat);
    e["bias"] = number(d.bias);
    e["rmse"] = number(d.rmse);
    e["scaled_variance"] = d.variance_defined ? number(d.scaled_variance) : ordered_json();
    e["target_variance"] = number(d.target_variance);
    e["variance_ratio"] = d.variance_defined ? number(d.variance_ratio) : ordered_json();
    e["variance_defined"] = d.variance_defined;
    e["ks_statistic"] = d.ks ? number(d.ks->statistic) : ordered_json();
    e["ks_p_value"] = d.ks ? number(d.ks->p_value) : ordered_json();
    ordered_json cov = ordered_json::object();
    for (const auto& [level, c] : d.coverage) cov[fmt::format("{}", level)] = c;
    e["coverage"] = cov;
    e["mean_scaled_fisher"] = number(d.mean_scaled_fisher);
    e["mean_abs_bias_term"] = optional_number(d.mean_abs_bias_term);
    j["deltas"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::vector<fs::path> emit_results(const StudyResult& result, const ExperimentConfig& cfg,
                                   const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw OutputError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  const auto& formats = cfg.outputs.formats;
  const bool csv = std::find(formats.begin(), formats.end(), "csv") != formats.end();
  const bool json = std::find(formats.begin(), formats.end(), "json") != formats.end();

  if (result.records.empty()) {
    fmt::print(stderr, "warning: no replication records; writing headers only\n");
  }
  std::vector<fs::path> written;
  if (csv) {
    std::ostringstream os;
    write_records_csv(os, result.records);
    written.push_back(dir / "records.csv");
    write_file(written.back(), os.str());
  }
  if (json) {
    ordered_json rows = ordered_json::array();
    for (const auto& r : result.records) {
      rows.push_back({{"replication_id", r.replication_id},
                      {"delta", r.delta},
                      {"theta_hat", number(r.theta_hat)},
                      {"fisher_info", number(r.fisher_info)},
                      {"ci_lo", number(r.ci_lo)},
                      {"ci_hi", number(r.ci_hi)},
                      {"normalized_error", number(r.normalized_error)},
                      {"blow_up", r.blow_up},
                      {"R", optional_number(r.R)},
                      {"M", optional_number(r.M)},
                      {"Ibar", optional_number(r.Ibar)}});
    }
    written.push_back(dir / "records.json");
    write_file(written.back(), rows.dump(1) + "\n");
  }
  written.push_back(dir / "summary.json");
  write_file(written.back(), summary_json(result.summary, cfg));

  const double sigma = std::sqrt(result.summary.deltas.empty()
                                     ? 0.0
                                     : result.summary.deltas.front().target_variance);
  std::string rate = "delta,rmse,bias,successes,asymptotic_rmse\n";
  for (const auto& d : result.summary.deltas) {
    rate += fmt::format("{:.17g},{:.17g},{:.17g},{},{:.17g}\n", d.delta, d.rmse, d.bias,
                        d.replications - d.failures, d.delta * sigma);
  }
  written.push_back(dir / "rate.csv");
  write_file(written.back(), rate);

  constexpr int kBins = 40;
  constexpr double kLo = -5.0, kHi = 5.0;
  const double width = (kHi - kLo) / kBins;
  for (const auto& d : result.summary.deltas) {
    std::vector<std::size_t> counts(kBins, 0);
    std::size_t n = 0, outside = 0;
    for (const auto& r : result.records) {
      if (r.delta != d.delta || r.failed()) continue;
      ++n;
      const double b = std::floor((r.normalized_error - kLo) / width);
      if (b < 0 || b >= kBins) {
        ++outside;
        continue;
      }
      ++counts[static_cast<std::size_t>(b)];
    }
    std::string hist = fmt::format("# delta={} successes={} outside_range={}\n", d.delta, n,
                                   outside);
    hist += "bin_lo,bin_hi,count,density,normal_density\n";
    for (int b = 0; b < kBins; ++b) {
      const double lo = kLo + b * width;
      const double density = n ? static_cast<double>(counts[b]) / (n * width) : 0.0;
      hist += fmt::format("{:.17g},{:.17g},{},{:.17g},{:.17g}\n", lo, lo + width, counts[b],
                          density, normal_pdf(lo + 0.5 * width));
    }
    written.push_back(dir / fmt::format("hist_delta_{}.csv", delta_tag(d.delta)));
    write_file(written.back(), hist);
  }
  return written;
}

}  // namespace burgers
