#ifndef OHJ_CONFIG_HPP_
#define OHJ_CONFIG_HPP_

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ohj/error.hpp"
#include "ohj/problem.hpp"
#include "ohj/report.hpp"

namespace ohj {

//! Plain-text key-value configuration with [sections]:
//!
//!   # comment
//!   [run]
//!   seed = 7
//!   [rate-study]
//!   epsilon = 0.4, 0.2, 0.1
//!
//! Keys before the first section header belong to section "run". Lookups
//! record which keys were read so that typos can be reported.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>") {
    Config c;
    std::istringstream in(text);
    std::string line, section = "run";
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
        c.values_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      auto& sec = c.values_[section];
      if (sec.count(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      sec[key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  bool has_section(const std::string& s) const { return values_.count(s) > 0; }
  bool has(const std::string& s, const std::string& key) const {
    auto it = values_.find(s);
    return it != values_.end() && it->second.count(key) > 0;
  }

  void set(const std::string& s, const std::string& key, const std::string& value) { values_[s][key] = value; }

  std::optional<std::string> raw(const std::string& s, const std::string& key) const {
    auto it = values_.find(s);
    if (it == values_.end()) return std::nullopt;
    auto kt = it->second.find(key);
    if (kt == it->second.end()) return std::nullopt;
    used_.insert(s + "." + key);
    return kt->second;
  }

  std::string get_string(const std::string& s, const std::string& key, const std::string& fallback) const {
    return raw(s, key).value_or(fallback);
  }
  double get_double(const std::string& s, const std::string& key, double fallback) const {
    auto v = raw(s, key);
    return v ? to_double(*v, s, key) : fallback;
  }
  long get_int(const std::string& s, const std::string& key, long fallback) const {
    auto v = raw(s, key);
    if (!v) return fallback;
    long out = 0;
    const auto* end = v->data() + v->size();
    auto [p, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError(s + "." + key + ": expected an integer, got '" + *v + "'");
    return out;
  }
  bool get_bool(const std::string& s, const std::string& key, bool fallback) const {
    auto v = raw(s, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(s + "." + key + ": expected a boolean, got '" + *v + "'");
  }
  std::vector<double> get_list(const std::string& s, const std::string& key, std::vector<double> fallback) const {
    auto v = raw(s, key);
    if (!v) return fallback;
    std::vector<double> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item), s, key));
    if (out.empty()) throw ConfigError(s + "." + key + ": empty list");
    return out;
  }
  std::vector<std::string> get_names(const std::string& s, const std::string& key,
                                     std::vector<std::string> fallback) const {
    auto v = raw(s, key);
    if (!v) return fallback;
    std::vector<std::string> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw ConfigError(s + "." + key + ": empty list");
    return out;
  }

  //! Keys in the given sections that no lookup has touched.
  std::vector<std::string> unused(const std::vector<std::string>& sections) const {
    std::vector<std::string> out;
    for (const auto& s : sections) {
      auto it = values_.find(s);
      if (it == values_.end()) continue;
      for (const auto& [k, v] : it->second) {
        if (!used_.count(s + "." + k)) out.push_back(s + "." + k);
      }
    }
    return out;
  }

  std::vector<std::string> sections() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  static double to_double(const std::string& v, const std::string& s, const std::string& key) {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError(s + "." + key + ": expected a number, got '" + v + "'");
    }
  }

  std::map<std::string, std::map<std::string, std::string>> values_;
  mutable std::set<std::string> used_;
};

//! Problem data from a [problem] section. With "catalog = key" the builtin
//! problem is loaded and individual fields may be overridden; otherwise every
//! coefficient must be listed. Polynomials use the TrigPoly text form, e.g.
//!   potential = -1; cos 1 0 0.2
inline ProblemSpec problem_from_config(const Config& cfg, const std::string& section = "problem") {
  ProblemSpec p;
  const auto key = cfg.raw(section, "catalog");
  if (key) {
    try {
      p = catalog_problem(*key);
    } catch (const InvalidArgument& e) {
      throw ConfigError(section + ".catalog: " + e.what());
    }
  } else {
    for (const char* required : {"dim", "potential", "obstacle", "initial", "diffusion"}) {
      if (!cfg.has(section, required)) {
        throw ConfigError(section + "." + required + " is required when no catalog problem is given");
      }
    }
    p.name = "custom";
  }
  auto poly = [&](const char* k, TrigPoly& target) {
    if (auto v = cfg.raw(section, k)) {
      try {
        target = TrigPoly::parse(*v);
      } catch (const std::exception& e) {
        throw ConfigError(section + "." + k + ": " + e.what());
      }
    }
  };
  p.name = cfg.get_string(section, "name", p.name);
  p.dim = int(cfg.get_int(section, "dim", p.dim));
  if (p.dim != 1 && p.dim != 2) throw ConfigError(section + ".dim must be 1 or 2");
  const std::string family = cfg.get_string(section, "family", p.hamiltonian.family);
  if (family != kQuadraticFamily) throw ConfigError(section + ".family: only '" + std::string(kQuadraticFamily) + "' is supported");
  poly("potential", p.hamiltonian.potential);
  poly("drift_x", p.hamiltonian.drift[0]);
  poly("drift_y", p.hamiltonian.drift[1]);
  poly("obstacle", p.obstacle);
  poly("initial", p.initial);
  if (auto form = cfg.raw(section, "diffusion")) {
    if (*form == "zero") {
      p.diffusion = DiffusionSpec::none();
    } else if (*form == "isotropic" || *form == "constant-isotropic") {
      p.diffusion = DiffusionSpec::isotropic(cfg.get_double(section, "a", 0.0));
    } else if (*form == "diagonal" || *form == "diagonal-variable") {
      TrigPoly a11, a22;
      poly("a11", a11);
      poly("a22", a22);
      p.diffusion = DiffusionSpec::diagonal(a11, a22);
    } else {
      throw ConfigError(section + ".diffusion must be zero, isotropic or diagonal");
    }
  }
  p.lipschitz_hint = cfg.get_double(section, "lipschitz_hint", p.lipschitz_hint);
  return p;
}

//! Every coefficient of the problem, so reports can be re-run without the
//! catalog.
inline Json problem_to_json(const ProblemSpec& p) {
  Json j;
  j["name"] = p.name;
  j["dim"] = p.dim;
  j["family"] = p.hamiltonian.family;
  j["potential"] = p.hamiltonian.potential.to_string();
  j["drift_x"] = p.hamiltonian.drift[0].to_string();
  j["drift_y"] = p.hamiltonian.drift[1].to_string();
  j["diffusion"] = to_string(p.diffusion.form);
  if (p.diffusion.form == DiffusionForm::constant_isotropic) {
    j["a"] = p.diffusion.coefficients[0].constant_term();
  } else if (p.diffusion.form == DiffusionForm::diagonal_variable) {
    j["a11"] = p.diffusion.coefficients[0].to_string();
    j["a22"] = p.diffusion.coefficients[1].to_string();
  }
  j["obstacle"] = p.obstacle.to_string();
  j["initial"] = p.initial.to_string();
  j["lipschitz_hint"] = p.lipschitz_hint;
  return j;
}

}  // namespace ohj

#endif  // OHJ_CONFIG_HPP_
