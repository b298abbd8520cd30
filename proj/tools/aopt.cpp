// Command-line runner: figure scenarios, bound reports, threshold sweeps and
// the property suite.

#include "aopt/experiments.hpp"
#include "aopt/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace aopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitSuiteFailed = 2;
constexpr int kExitBadConfig = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<double> eps_mult;
  std::string out;
  bool literal_signs = false;
};

ExperimentConfig load_config(const Options& o, std::optional<Experiment> forced) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    std::ifstream f(o.config);
    if (!f) throw ConfigError("cannot open config " + o.config);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (forced && !j.contains("experiment")) j["experiment"] = to_string(*forced);
    cfg = config_from_json(j, std::filesystem::path(o.config).parent_path());
  } else if (!forced) {
    throw ConfigError("run needs --config");
  }
  if (forced) {
    if (!o.config.empty() && cfg.experiment != *forced) {
      throw ConfigError(std::string("config describes ") + to_string(cfg.experiment) + ", expected " +
                        to_string(*forced));
    }
    cfg.experiment = *forced;
  }
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.eps_mult.empty()) cfg.eps_multipliers = o.eps_mult;
  if (o.literal_signs) cfg.literal_signs = true;
  cfg.validate();
  return cfg;
}

void print_summary(const ExperimentReport& rep) {
  std::printf("%s seed=%llu\n", to_string(rep.experiment), static_cast<unsigned long long>(rep.seed));
  if (rep.bounds) {
    const BoundsReport& b = *rep.bounds;
    std::printf("  tau=%.6g gamma=%.6g zeta=%.6g L=%.6g mu=%.6g eps*=%.6g", b.tau, b.cert.gamma, b.cert.zeta, b.L, b.mu,
                b.eps_star);
    if (b.eps_newton) std::printf(" eps_newton=%.6g", *b.eps_newton);
    std::printf("\n");
  }
  for (const RunRecord& r : rep.runs) {
    std::printf("  %-28s eps=%-12.6g %-18s t=%-12.6g residual=%.3g\n", r.label.c_str(), r.traj.eps,
                to_string(r.traj.outcome), r.traj.times.back(), r.traj.final_residual);
  }
  for (const ThresholdRow& t : rep.thresholds) {
    if (t.threshold) {
      std::printf("  seed %-4llu eps*=%-12.6g eps_crit=%-12.6g ratio=%.4g\n", static_cast<unsigned long long>(t.seed),
                  t.eps_star, t.threshold->eps_crit, t.ratio());
    } else {
      std::printf("  seed %-4llu eps*=%-12.6g %s\n", static_cast<unsigned long long>(t.seed), t.eps_star,
                  t.violation ? t.note.c_str() : "stable up to the ceiling");
    }
  }
  for (const CheckResult& c : rep.checks) {
    std::printf("  %-4s %-40s n=%-7ld worst=%.3g%s%s\n", c.passed ? "ok" : "FAIL", c.name.c_str(), c.count, c.worst,
                c.passed ? "" : "  witness: ", c.passed ? "" : c.witness.c_str());
  }
  for (const auto& [k, v] : rep.metrics) std::printf("  %s = %.6g\n", k.c_str(), v);
  for (const auto& n : rep.notes) std::printf("  note: %s\n", n.c_str());
}

int execute(const Options& o, std::optional<Experiment> forced) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(o, forced);
  } catch (const Error& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return kExitBadConfig;
  }
  std::vector<ExperimentReport> reports;
  try {
    reports = run_experiment(cfg);
  } catch (const DomainError& e) {
    std::fprintf(stderr, "inconsistent instance or settings: %s\n", e.what());
    return kExitBadConfig;
  }
  bool suite_ok = true;
  for (const auto& rep : reports) {
    print_summary(rep);
    suite_ok = suite_ok && rep.all_checks_passed();
  }
  if (!o.out.empty()) {
    for (const auto& dir : write_reports(o.out, cfg, reports)) std::printf("wrote %s\n", dir.string().c_str());
  }
  return suite_ok ? kExitOk : kExitSuiteFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop feedback optimization experiments"};
  app.require_subcommand(1);

  Options o;
  auto common = [&o](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "experiment configuration (JSON)");
    if (config_required) c->required();
    sub->add_option("--seed", o.seed, "override the seed list with a single seed");
    sub->add_option("--eps-mult", o.eps_mult, "gain multipliers of the bound");
    sub->add_option("--out", o.out, "output directory for CSV, summary.json and plot.py");
    sub->add_flag("--paper-literal-signs", o.literal_signs, "use the literal sign convention in the saddle-point law");
  };

  auto* run = app.add_subcommand("run", "run the experiment described by --config");
  common(run, true);
  auto* bounds = app.add_subcommand("bounds", "certificate constants and gain bounds");
  common(bounds, false);
  auto* threshold = app.add_subcommand("threshold", "empirical instability thresholds of the gradient law");
  common(threshold, false);
  auto* suite = app.add_subcommand("suite", "property suite");
  common(suite, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  try {
    if (run->parsed()) return execute(o, std::nullopt);
    if (bounds->parsed()) return execute(o, Experiment::bounds_report);
    if (threshold->parsed()) return execute(o, Experiment::threshold_sweep);
    return execute(o, Experiment::property_suite);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
}
