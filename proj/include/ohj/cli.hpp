#ifndef OHJ_CLI_HPP_
#define OHJ_CLI_HPP_

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ohj/suite.hpp"

namespace ohj::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitConfig = 2;
inline constexpr const char* kOutDirEnv = "OHJ_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "ohj_out";

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"solve",         "ergodic",       "dichotomy", "rate-study",
                                              "adjoint-audit", "key-stability", "mc-verify", "suite"};
  return names;
}

struct Options {
  std::string config_path;  // empty = all defaults
  std::string report_path;  // re-run from a report's config echo
  std::string out_dir;      // empty = env var, then kDefaultOutDir
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> problem;
  bool write_artifacts = true;
};

//! --out, then $OHJ_OUT_DIR, then the default.
inline std::filesystem::path resolve_out_dir(const Options& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return kDefaultOutDir;
}

inline Json error_json(const std::string& kind, const std::string& message, int code) {
  return {{"status", "error"}, {"error", {{"kind", kind}, {"message", message}}}, {"exit_code", code}};
}

namespace detail {

inline std::string config_value(const Json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  if (v.is_array()) {
    std::string out;
    for (const auto& x : v) out += (out.empty() ? "" : ", ") + config_value(x);
    return out;
  }
  throw ConfigError("config echo holds an unsupported value: " + v.dump());
}

}  // namespace detail

//! Configuration that re-runs the experiment recorded in a report.json.
//! Descriptive echo entries (rules, derived quantities) are skipped.
inline Config config_from_report(const std::string& sub, const Json& report) {
  if (!report.is_object() || !report.contains("config") || !report.contains("experiment")) {
    throw ConfigError("not an experiment report: missing 'experiment' or 'config'");
  }
  if (report["experiment"] != sub) {
    throw ConfigError("report is from '" + report["experiment"].get<std::string>() + "', not '" + sub + "'");
  }
  static const std::vector<std::string> derived{"delta_rule", "viscosity_rule", "refinement",      "dt_mc",
                                                "stop_band",  "dominance_slack", "tightness_slack", "dim"};
  Config cfg;
  for (const auto& [key, value] : report["config"].items()) {
    if (std::find(derived.begin(), derived.end(), key) != derived.end()) continue;
    if (key == "problem" && value.is_object()) {
      for (const auto& [pk, pv] : value.items()) cfg.set("problem", pk, detail::config_value(pv));
    } else if (key == "seed") {
      cfg.set("run", "seed", detail::config_value(value));
    } else if (key == "sample_nodes") {
      cfg.set(sub, "nodes", std::to_string(value.size()));
    } else {
      cfg.set(sub, key, detail::config_value(value));
    }
  }
  return cfg;
}

namespace detail {

inline const char* default_problem(const std::string& sub) {
  if (sub == "dichotomy") return "supercritical-1d";
  if (sub == "rate-study" || sub == "key-stability") return "subcritical-obstacle-1d";
  return "obstacle-cos-1d";
}

inline ProblemSpec problem_for(const Config& cfg, const std::string& sub, const Options& o) {
  if (o.problem) {
    try {
      return catalog_problem(*o.problem);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("--problem: ") + e.what());
    }
  }
  return ohj::detail::resolve_problem(cfg, sub, default_problem(sub));
}

inline Json verdict_summary(const ExperimentReport& rep) {
  Json checks = Json::array();
  for (const auto& c : rep.checks()) {
    checks.push_back({{"id", c.id}, {"verdict", to_string(c.verdict)}, {"measured", c.measured},
                      {"relation", c.relation}, {"threshold", c.threshold}});
  }
  return {{"experiment", rep.id()}, {"passed", rep.passed()}, {"fingerprint", rep.fingerprint()}, {"checks", checks}};
}

}  // namespace detail

//! Runs one subcommand and writes a JSON summary (or error JSON) to `out`.
//! Exit codes: 0 when every verdict is PASS or INFO, 1 on a FAIL verdict or
//! solver failure, 2 on a configuration error.
inline int run(const std::string& sub, const Options& o, std::ostream& out) {
  try {
    bool known = false;
    for (const auto& s : subcommands()) known = known || s == sub;
    if (!known) throw ConfigError("unknown subcommand '" + sub + "'");

    if (!o.config_path.empty() && !o.report_path.empty()) {
      throw ConfigError("--config and --from-report are mutually exclusive");
    }
    Config cfg = o.config_path.empty() ? Config() : Config::load(o.config_path);
    if (!o.report_path.empty()) {
      std::ifstream f(o.report_path);
      if (!f) throw ConfigError("cannot open report '" + o.report_path + "'");
      Json j;
      try {
        j = Json::parse(f);
      } catch (const Json::exception& e) {
        throw ConfigError("report '" + o.report_path + "' is not valid JSON: " + e.what());
      }
      cfg = config_from_report(sub, j);
    }
    for (const auto& s : cfg.sections()) {
      if (s != "run" && s != "problem" && s != sub) {
        throw ConfigError("section [" + s + "] does not apply to subcommand '" + sub + "'");
      }
    }
    RunContext ctx;
    ctx.jobs = int(cfg.get_int("run", "jobs", 1));
    ctx.seed = std::uint64_t(cfg.get_int("run", "seed", long(ctx.seed)));
    if (o.jobs) ctx.jobs = *o.jobs;
    if (o.seed) ctx.seed = *o.seed;
    if (ctx.jobs < 1) throw ConfigError("jobs must be at least 1");
    if (o.problem && sub == "suite") throw ConfigError("--problem does not apply to 'suite'");
    if (o.problem && sub == "ergodic") cfg.set("run", "problem", *o.problem);

    // Parse everything before any computation so that typos fail fast.
    std::optional<ProblemSpec> problem;
    std::optional<SolveParams> solve_p;
    std::optional<ErgodicParams> ergodic_p;
    std::optional<DichotomyParams> dichotomy_p;
    std::optional<RateStudyParams> rate_p;
    std::optional<AdjointAuditParams> adjoint_p;
    std::optional<KeyStabilityParams> key_p;
    std::optional<McVerifyParams> mc_p;
    if (sub == "ergodic") {
      ergodic_p = ErgodicParams::from_config(cfg);
      for (const auto& k : ergodic_p->problems) {
        try {
          catalog_problem(k);
        } catch (const InvalidArgument& e) {
          throw ConfigError(std::string("ergodic.problems: ") + e.what());
        }
      }
    } else if (sub != "suite") {
      problem = detail::problem_for(cfg, sub, o);
      if (sub == "solve") solve_p = SolveParams::from_config(cfg);
      if (sub == "dichotomy") dichotomy_p = DichotomyParams::from_config(cfg);
      if (sub == "rate-study") rate_p = RateStudyParams::from_config(cfg);
      if (sub == "adjoint-audit") adjoint_p = AdjointAuditParams::from_config(cfg);
      if (sub == "key-stability") key_p = KeyStabilityParams::from_config(cfg);
      if (sub == "mc-verify") mc_p = McVerifyParams::from_config(cfg);
    }
    if (const auto extra = cfg.unused({"run", "problem", sub}); !extra.empty()) {
      std::string list;
      for (const auto& k : extra) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError("unknown configuration keys: " + list);
    }

    const auto dir = resolve_out_dir(o) / sub;
    ctx.sink = o.write_artifacts ? ArtifactSink(dir) : ArtifactSink();

    if (sub == "suite") {
      const auto res = run_suite(ctx);
      Json j = suite_to_json(res);
      ctx.sink.write("suite.json", j.dump(2) + "\n");
      j["status"] = "ok";
      j["out_dir"] = o.write_artifacts ? dir.string() : "";
      const int code = res.passed() ? kExitOk : kExitFail;
      j["exit_code"] = code;
      out << j.dump(2) << "\n";
      return code;
    }

    ExperimentReport rep("pending");
    if (sub == "solve") rep = run_solve(*problem, *solve_p, ctx);
    if (sub == "ergodic") rep = run_ergodic(*ergodic_p, ctx);
    if (sub == "dichotomy") rep = run_dichotomy(*problem, *dichotomy_p, ctx);
    if (sub == "rate-study") rep = run_rate_study(*problem, *rate_p, ctx);
    if (sub == "adjoint-audit") rep = run_adjoint_audit(*problem, *adjoint_p, ctx);
    if (sub == "key-stability") rep = run_key_stability(*problem, *key_p, ctx);
    if (sub == "mc-verify") rep = run_mc_verify(*problem, *mc_p, ctx);

    ctx.sink.write_report(rep);
    Json j = detail::verdict_summary(rep);
    j["status"] = "ok";
    j["out_dir"] = o.write_artifacts ? dir.string() : "";
    const int code = rep.passed() ? kExitOk : kExitFail;
    j["exit_code"] = code;
    out << j.dump(2) << "\n";
    return code;
  } catch (const ConfigError& e) {
    out << error_json("config", e.what(), kExitConfig).dump(2) << "\n";
    return kExitConfig;
  } catch (const SolverError& e) {
    out << error_json("solver", e.what(), kExitFail).dump(2) << "\n";
    return kExitFail;
  } catch (const Error& e) {
    out << error_json("invalid-argument", e.what(), kExitConfig).dump(2) << "\n";
    return kExitConfig;
  }
}

}  // namespace ohj::cli

#endif  // OHJ_CLI_HPP_
