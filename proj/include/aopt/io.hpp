#pragma once

#include "aopt/experiments.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace aopt {

using json = nlohmann::json;

/// Malformed or inconsistent configuration or instance data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Matrices and vectors (row-major nested arrays)

inline json to_json(const Mat& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vec vec_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + ": expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// `cols` fixes the width of a matrix with no rows.
inline Mat mat_from_json(const json& j, const std::string& what, Eigen::Index cols = -1) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array of rows");
  if (j.empty()) return Mat(0, std::max<Eigen::Index>(cols, 0));
  const auto c = static_cast<Eigen::Index>(j.front().size());
  Mat M(static_cast<Eigen::Index>(j.size()), c);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vec row = vec_from_json(j[i], what);
    if (row.size() != c) throw ConfigError(what + ": ragged rows");
    M.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  if (cols >= 0 && c != cols) throw ConfigError(what + ": wrong number of columns");
  return M;
}

// ---------------------------------------------------------------------------
// Instances

inline json instance_to_json(const RandomInstance& inst) {
  json j;
  j["recipe"] = inst.recipe;
  j["seed"] = inst.seed;
  j["n"] = inst.plant.state_dim();
  j["p"] = inst.plant.input_dim();
  j["A"] = to_json(inst.plant.A());
  j["B"] = to_json(inst.plant.B());
  j["w"] = to_json(inst.plant.w());
  j["hessian_xx"] = to_json(inst.objective.hessian_xx);
  j["hessian_xu"] = to_json(inst.objective.hessian_xu);
  j["hessian_uu"] = to_json(inst.objective.hessian_uu);
  j["linear_x"] = to_json(inst.objective.linear_x);
  j["linear_u"] = to_json(inst.objective.linear_u);
  if (inst.constraint) {
    j["constraint"] = {{"A", to_json(inst.constraint->A)}, {"b", to_json(inst.constraint->b)}};
  }
  return j;
}

/// Either explicit data (as written by instance_to_json) or
/// {"random": {"n", "p", "seed", "constraints"}}.
inline RandomInstance instance_from_json(const json& j) {
  try {
    if (j.contains("random")) {
      const json& r = j.at("random");
      RandomInstanceOptions o;
      o.constraints = r.value("constraints", 0);
      return random_instance(r.at("n").get<Eigen::Index>(), r.at("p").get<Eigen::Index>(), r.value("seed", 0ULL), o);
    }
    RandomInstance inst{LtiPlant(mat_from_json(j.at("A"), "A"), mat_from_json(j.at("B"), "B"), vec_from_json(j.at("w"), "w")),
                        QuadraticObjective{}, std::nullopt, j.value("seed", 0ULL), j.value("recipe", std::string("explicit"))};
    const Eigen::Index n = inst.plant.state_dim(), p = inst.plant.input_dim();
    QuadraticObjective& o = inst.objective;
    o.hessian_xx = mat_from_json(j.at("hessian_xx"), "hessian_xx", n);
    o.hessian_xu = mat_from_json(j.at("hessian_xu"), "hessian_xu", p);
    o.hessian_uu = mat_from_json(j.at("hessian_uu"), "hessian_uu", p);
    o.linear_x = j.contains("linear_x") ? vec_from_json(j.at("linear_x"), "linear_x") : Vec::Zero(n);
    o.linear_u = j.contains("linear_u") ? vec_from_json(j.at("linear_u"), "linear_u") : Vec::Zero(p);
    o.validate();
    if (j.contains("constraint")) {
      const json& c = j.at("constraint");
      inst.constraint = OutputConstraint{mat_from_json(c.at("A"), "constraint.A", n), vec_from_json(c.at("b"), "constraint.b")};
    }
    return inst;
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("instance: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("instance: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Configuration

inline std::optional<Method> parse_method(const std::string& s) {
  for (Method m : {Method::rk4, Method::euler_projected, Method::exact_affine})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

/// Reads an experiment configuration. `base_dir` resolves relative instance
/// file references.
inline ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  try {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    const auto e = parse_experiment(j.at("experiment").get<std::string>());
    if (!e) throw ConfigError("config: unknown experiment '" + j.at("experiment").get<std::string>() + "'");
    cfg.experiment = *e;
    if (j.contains("instance")) {
      const json& in = j.at("instance");
      if (in.is_string()) {
        std::filesystem::path path = in.get<std::string>();
        if (path.is_relative()) path = base_dir / path;
        std::ifstream f(path);
        if (!f) throw ConfigError("config: cannot open instance file " + path.string());
        cfg.instance = instance_from_json(json::parse(f));
      } else {
        cfg.instance = instance_from_json(in);
      }
    }
    if (j.contains("example")) cfg.example = j.at("example").get<std::string>();
    cfg.n = j.value("n", cfg.n);
    cfg.p = j.value("p", cfg.p);
    cfg.r = j.value("r", cfg.r);
    if (cfg.experiment == Experiment::fig_saddle && !j.contains("p")) cfg.p = 10;
    if (j.contains("seeds")) {
      cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else if (j.contains("seed_count")) {
      const auto count = j.at("seed_count").get<std::uint64_t>();
      const auto first = j.value("seed", 0ULL);
      cfg.seeds.clear();
      for (std::uint64_t s = 0; s < count; ++s) cfg.seeds.push_back(first + s);
    } else if (j.contains("seed")) {
      cfg.seeds = {j.at("seed").get<std::uint64_t>()};
    }
    if (j.contains("eps_multipliers")) cfg.eps_multipliers = j.at("eps_multipliers").get<std::vector<double>>();
    cfg.margin = j.value("margin", cfg.margin);
    cfg.sigma = j.value("sigma", cfg.sigma);
    cfg.literal_signs = j.value("literal_signs", cfg.literal_signs);
    cfg.threshold_ceiling = j.value("threshold_ceiling", cfg.threshold_ceiling);
    cfg.property_samples = j.value("property_samples", cfg.property_samples);
    if (j.contains("sim")) {
      const json& s = j.at("sim");
      if (s.contains("dt")) cfg.sim.dt = s.at("dt").get<double>();
      if (s.contains("horizon")) cfg.sim.horizon = s.at("horizon").get<double>();
      if (s.contains("record_stride")) cfg.sim.record_stride = s.at("record_stride").get<int>();
      if (s.contains("method")) {
        cfg.sim.method = parse_method(s.at("method").get<std::string>());
        if (!cfg.sim.method) throw ConfigError("config: unknown method '" + s.at("method").get<std::string>() + "'");
      }
      if ((cfg.sim.dt && !(*cfg.sim.dt > 0.0)) || (cfg.sim.horizon && !(*cfg.sim.horizon > 0.0)) ||
          (cfg.sim.record_stride && *cfg.sim.record_stride < 1)) {
        throw ConfigError("config: sim overrides must be positive");
      }
    }
    cfg.validate();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = to_string(cfg.experiment);
  if (cfg.instance) j["instance"] = instance_to_json(*cfg.instance);
  if (cfg.example) j["example"] = *cfg.example;
  j["n"] = cfg.n;
  j["p"] = cfg.p;
  j["r"] = cfg.r;
  j["seeds"] = cfg.seeds;
  j["eps_multipliers"] = cfg.eps_multipliers;
  j["margin"] = cfg.margin;
  j["sigma"] = cfg.sigma;
  j["literal_signs"] = cfg.literal_signs;
  j["threshold_ceiling"] = cfg.threshold_ceiling;
  j["property_samples"] = cfg.property_samples;
  json s = json::object();
  if (cfg.sim.dt) s["dt"] = *cfg.sim.dt;
  if (cfg.sim.horizon) s["horizon"] = *cfg.sim.horizon;
  if (cfg.sim.method) s["method"] = to_string(*cfg.sim.method);
  if (cfg.sim.record_stride) s["record_stride"] = *cfg.sim.record_stride;
  j["sim"] = s;
  return j;
}

// ---------------------------------------------------------------------------
// Reports

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json bounds_to_json(const BoundsReport& br) {
  json j;
  j["P"] = to_json(br.P);
  j["tau"] = br.tau;
  j["lmi_residual"] = br.lmi_residual;
  j["alpha"] = br.cert.alpha;
  j["beta"] = br.cert.beta;
  j["gamma"] = br.cert.gamma;
  j["zeta"] = br.cert.zeta;
  j["L"] = br.L;
  if (br.L_sampled) j["L_sampled"] = *br.L_sampled;
  j["mu"] = br.mu;
  j["eps_star"] = finite_or_null(br.eps_star);
  if (br.eps_newton) j["eps_newton"] = finite_or_null(*br.eps_newton);
  j["lti_bound"] = finite_or_null(br.lti.primary);
  j["lti_bound_condition_form"] = finite_or_null(br.lti.condition_form);
  return j;
}

inline json sim_config_to_json(const SimConfig& c) {
  return {{"dt", c.dt},
          {"horizon", c.horizon},
          {"method", to_string(c.method)},
          {"divergence_threshold", c.divergence_threshold},
          {"convergence_tol", c.convergence_tol},
          {"record_stride", c.record_stride},
          {"stop_on_convergence", c.stop_on_convergence},
          {"tail_fraction", c.tail_fraction}};
}

/// CSV columns: time, x1..xn, u1..up, aux1..auxk, residual.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  const std::size_t n = tr.size() ? static_cast<std::size_t>(tr.x.front().size()) : 0;
  const std::size_t p = tr.size() ? static_cast<std::size_t>(tr.u.front().size()) : 0;
  const std::size_t a = tr.size() ? static_cast<std::size_t>(tr.aux.front().size()) : 0;
  os << "time";
  for (std::size_t i = 1; i <= n; ++i) os << ",x" << i;
  for (std::size_t i = 1; i <= p; ++i) os << ",u" << i;
  for (std::size_t i = 1; i <= a; ++i) os << ",aux" << i;
  os << ",residual\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << tr.times[k];
    for (Eigen::Index i = 0; i < tr.x[k].size(); ++i) os << ',' << tr.x[k](i);
    for (Eigen::Index i = 0; i < tr.u[k].size(); ++i) os << ',' << tr.u[k](i);
    for (Eigen::Index i = 0; i < tr.aux[k].size(); ++i) os << ',' << tr.aux[k](i);
    os << ',' << tr.residual[k] << '\n';
  }
}

inline json run_to_json(const RunRecord& r, const std::string& csv_name) {
  const Trajectory& t = r.traj;
  json j;
  j["label"] = r.label;
  j["csv"] = csv_name;
  j["family"] = t.family;
  j["reduced"] = t.reduced;
  j["eps"] = t.eps;
  j["multiplier"] = r.multiplier;
  j["outcome"] = to_string(t.outcome);
  j["final_residual"] = finite_or_null(t.final_residual);
  j["max_norm"] = finite_or_null(t.max_norm);
  j["tail_amplitude"] = t.tail_amplitude;
  j["nonfinite"] = t.nonfinite;
  j["samples"] = t.size();
  j["final_time"] = t.size() ? t.times.back() : 0.0;
  j["config"] = sim_config_to_json(r.config);
  j["initial_state"] = {{"x0", to_json(r.init.x0)}, {"u0", to_json(r.init.u0)}, {"aux0", to_json(r.init.aux0)}};
  return j;
}

inline json threshold_to_json(const ThresholdRow& row) {
  json j;
  j["seed"] = row.seed;
  j["eps_star"] = finite_or_null(row.eps_star);
  j["violation"] = row.violation;
  if (!row.note.empty()) j["note"] = row.note;
  if (row.threshold) {
    j["eps_crit"] = row.threshold->eps_crit;
    j["eps_lo"] = row.threshold->eps_lo;
    j["eps_hi"] = row.threshold->eps_hi;
    j["ratio"] = row.ratio();
    j["runs"] = row.threshold->runs;
  } else {
    j["eps_crit"] = nullptr;
  }
  return j;
}

inline json check_to_json(const CheckResult& c) {
  json j{{"name", c.name}, {"passed", c.passed}, {"count", c.count}, {"worst", c.worst}};
  if (!c.passed) j["witness"] = c.witness;
  return j;
}

/// Summary of one report; `csv_names[k]` names the CSV of `runs[k]`.
inline json report_to_json(const ExperimentReport& rep, const std::vector<std::string>& csv_names = {}) {
  json j;
  j["experiment"] = to_string(rep.experiment);
  j["seed"] = rep.seed;
  j["recipe"] = kRecipeVersion;
  if (rep.bounds) j["bounds"] = bounds_to_json(*rep.bounds);
  json runs = json::array();
  for (std::size_t k = 0; k < rep.runs.size(); ++k) {
    runs.push_back(run_to_json(rep.runs[k], k < csv_names.size() ? csv_names[k] : std::string()));
  }
  j["runs"] = runs;
  if (!rep.thresholds.empty()) {
    json t = json::array();
    for (const auto& row : rep.thresholds) t.push_back(threshold_to_json(row));
    j["thresholds"] = t;
  }
  if (!rep.checks.empty()) {
    json c = json::array();
    for (const auto& chk : rep.checks) c.push_back(check_to_json(chk));
    j["checks"] = c;
    j["passed"] = rep.all_checks_passed();
  }
  json m = json::object();
  for (const auto& [k, v] : rep.metrics) m[k] = finite_or_null(v);
  j["metrics"] = m;
  if (!rep.notes.empty()) j["notes"] = rep.notes;
  return j;
}

/// Python/matplotlib script plotting the residual of every closed-loop run
/// (solid) against its reduced counterpart (dashed).
inline std::string plot_script(const std::vector<std::pair<std::string, std::string>>& pairs, const std::string& title) {
  std::ostringstream s;
  s << "import csv\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n"
    << "def load(name):\n"
    << "    with open(name) as f:\n"
    << "        rows = list(csv.DictReader(f))\n"
    << "    return [float(r[\"time\"]) for r in rows], [float(r[\"residual\"]) for r in rows]\n\n"
    << "pairs = [\n";
  for (const auto& [closed, reduced] : pairs) s << "    (\"" << closed << "\", \"" << reduced << "\"),\n";
  s << "]\n"
    << "fig, ax = plt.subplots()\n"
    << "for i, (closed, reduced) in enumerate(pairs):\n"
    << "    color = \"C%d\" % i\n"
    << "    if closed:\n"
    << "        t, r = load(closed)\n"
    << "        ax.semilogy(t, r, \"-\", color=color, label=closed[:-4])\n"
    << "    if reduced:\n"
    << "        t, r = load(reduced)\n"
    << "        ax.semilogy(t, r, \"--\", color=color, label=reduced[:-4])\n"
    << "ax.set_xlabel(\"time\")\n"
    << "ax.set_ylabel(\"KKT residual\")\n"
    << "ax.set_title(\"" << title << "\")\n"
    << "ax.legend(fontsize=\"small\")\n"
    << "fig.savefig(\"" << title << ".png\", dpi=150)\n";
  return s.str();
}

/// Writes CSVs, summary.json and plot.py for each report into
/// out_dir/<experiment>[_seed<k>]. Returns the directories written.
inline std::vector<std::filesystem::path> write_reports(const std::filesystem::path& out_dir,
                                                        const ExperimentConfig& cfg,
                                                        const std::vector<ExperimentReport>& reports) {
  namespace fs = std::filesystem;
  std::vector<fs::path> dirs;
  for (const ExperimentReport& rep : reports) {
    std::string name = to_string(rep.experiment);
    if (reports.size() > 1) name += "_seed" + std::to_string(rep.seed);
    const fs::path dir = out_dir / name;
    fs::create_directories(dir);
    std::vector<std::string> csvs;
    for (const RunRecord& r : rep.runs) {
      const std::string file = r.label + ".csv";
      std::ofstream f(dir / file);
      if (!f) throw Error("cannot write " + (dir / file).string());
      write_trajectory_csv(f, r.traj);
      csvs.push_back(file);
    }
    json summary = report_to_json(rep, csvs);
    summary["config"] = config_to_json(cfg);
    std::ofstream(dir / "summary.json") << std::setw(2) << summary << '\n';
    if (!rep.runs.empty()) {
      std::vector<std::pair<std::string, std::string>> pairs;
      for (std::size_t k = 0; k < rep.runs.size(); ++k) {
        if (rep.runs[k].traj.reduced) continue;
        std::string reduced;
        for (std::size_t m = 0; m < rep.runs.size(); ++m) {
          if (rep.runs[m].traj.reduced && rep.runs[m].multiplier == rep.runs[k].multiplier) reduced = csvs[m];
        }
        pairs.emplace_back(csvs[k], reduced);
      }
      std::ofstream(dir / "plot.py") << plot_script(pairs, name);
    }
    dirs.push_back(dir);
  }
  return dirs;
}

}  // namespace aopt
