#ifndef OHJ_REPORT_HPP_
#define OHJ_REPORT_HPP_

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace ohj {

using Json = nlohmann::ordered_json;

//! 64-bit FNV-1a over raw bytes; used for artifact checksums and bitwise
//! reproducibility fingerprints.
class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 1099511628211ull;
    }
  }
  void value(double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    bytes(&bits, sizeof bits);
  }
  void values(std::span<const double> xs) {
    for (double x : xs) value(x);
  }
  void text(const std::string& s) { bytes(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }
  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = h_;
    for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xf];
    return out;
  }

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

enum class Verdict { pass, fail, info };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    case Verdict::info: return "INFO";
  }
  return "?";
}

struct Check {
  std::string id;
  Verdict verdict = Verdict::info;
  double measured = 0.0;
  double threshold = 0.0;
  std::string relation;  // "<=", ">=", "<", "==", "info"
  std::string note;
};

//! Compact text for a number in report notes.
inline std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

//! Self-contained record of one experiment: configuration echo, measured
//! scalars and series, and one verdict per check.
class ExperimentReport {
 public:
  ExperimentReport() = default;
  explicit ExperimentReport(std::string id) : id_(std::move(id)), start_(std::chrono::steady_clock::now()) {}

  const std::string& id() const { return id_; }
  Json& config() { return config_; }
  const Json& config() const { return config_; }

  void scalar(const std::string& name, double value) {
    for (auto& [k, v] : scalars_) {
      if (k == name) {
        v = value;
        return;
      }
    }
    scalars_.emplace_back(name, value);
  }
  double scalar(const std::string& name) const {
    for (const auto& [k, v] : scalars_) {
      if (k == name) return v;
    }
    return std::nan("");
  }
  const std::vector<std::pair<std::string, double>>& scalars() const { return scalars_; }

  void series(const std::string& name, std::vector<double> values) { series_.emplace_back(name, std::move(values)); }
  const std::vector<std::pair<std::string, std::vector<double>>>& series() const { return series_; }

  void flag(std::string f) { flags_.push_back(std::move(f)); }
  const std::vector<std::string>& flags() const { return flags_; }
  bool has_flag(const std::string& f) const {
    for (const auto& x : flags_) {
      if (x == f) return true;
    }
    return false;
  }

  void checksum(const std::string& artifact, const std::string& digest) { checksums_.emplace_back(artifact, digest); }

  Check& require_le(const std::string& id, double measured, double threshold, std::string note = {}) {
    return add({id, measured <= threshold ? Verdict::pass : Verdict::fail, measured, threshold, "<=", std::move(note)});
  }
  Check& require_lt(const std::string& id, double measured, double threshold, std::string note = {}) {
    return add({id, measured < threshold ? Verdict::pass : Verdict::fail, measured, threshold, "<", std::move(note)});
  }
  Check& require_ge(const std::string& id, double measured, double threshold, std::string note = {}) {
    return add({id, measured >= threshold ? Verdict::pass : Verdict::fail, measured, threshold, ">=", std::move(note)});
  }
  //! Boolean check, recorded as measured 1 (holds) or 0 against 1; the
  //! diagnostic value goes into the note.
  Check& require(const std::string& id, bool ok, double diagnostic, std::string note = {}) {
    note += (note.empty() ? "" : "; ") + std::string("diagnostic ") + fmt_num(diagnostic);
    return add({id, ok ? Verdict::pass : Verdict::fail, ok ? 1.0 : 0.0, 1.0, "==", std::move(note)});
  }
  Check& info(const std::string& id, double measured, std::string note = {}) {
    return add({id, Verdict::info, measured, 0.0, "info", std::move(note)});
  }

  Check& add_check(Check c) { return add(std::move(c)); }

  //! Copies another report's measurements and checks under "prefix/".
  void absorb(const ExperimentReport& other, const std::string& prefix) {
    for (const auto& [k, v] : other.scalars_) scalar(prefix + "/" + k, v);
    for (const auto& [k, v] : other.series_) series(prefix + "/" + k, v);
    for (Check c : other.checks_) {
      c.id = prefix + "/" + c.id;
      add(std::move(c));
    }
    for (const auto& f : other.flags_) flag(prefix + "/" + f);
    for (const auto& [k, v] : other.checksums_) checksum(prefix + "/" + k, v);
  }

  const std::vector<Check>& checks() const { return checks_; }
  const Check* find_check(const std::string& id) const {
    for (const auto& c : checks_) {
      if (c.id == id) return &c;
    }
    return nullptr;
  }

  bool passed() const {
    for (const auto& c : checks_) {
      if (c.verdict == Verdict::fail) return false;
    }
    return true;
  }

  void finish() {
    wall_clock_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  double wall_clock_seconds() const { return wall_clock_; }

  //! Hash of every measured number (bit patterns), excluding wall-clock time.
  std::string fingerprint() const {
    Fnv1a h;
    for (const auto& [k, v] : scalars_) {
      h.text(k);
      h.value(v);
    }
    for (const auto& [k, v] : series_) {
      h.text(k);
      h.values(v);
    }
    for (const auto& c : checks_) {
      h.text(c.id);
      h.value(c.measured);
    }
    return h.hex();
  }

  Json to_json() const {
    Json j;
    j["experiment"] = id_;
    j["config"] = config_;
    Json sc = Json::object();
    for (const auto& [k, v] : scalars_) sc[k] = number(v);
    j["scalars"] = sc;
    Json se = Json::object();
    for (const auto& [k, v] : series_) {
      Json arr = Json::array();
      for (double x : v) arr.push_back(number(x));
      se[k] = arr;
    }
    j["series"] = se;
    Json ch = Json::array();
    for (const auto& c : checks_) {
      ch.push_back({{"check", c.id},
                    {"verdict", to_string(c.verdict)},
                    {"measured", number(c.measured)},
                    {"relation", c.relation},
                    {"threshold", number(c.threshold)},
                    {"note", c.note}});
    }
    j["verdicts"] = ch;
    j["flags"] = flags_;
    Json cs = Json::object();
    for (const auto& [k, v] : checksums_) cs[k] = v;
    j["checksums"] = cs;
    j["fingerprint"] = fingerprint();
    j["wall_clock_seconds"] = wall_clock_;
    j["passed"] = passed();
    return j;
  }

 private:
  static Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

  Check& add(Check c) {
    checks_.push_back(std::move(c));
    return checks_.back();
  }

  std::string id_;
  Json config_ = Json::object();
  std::vector<std::pair<std::string, double>> scalars_;
  std::vector<std::pair<std::string, std::vector<double>>> series_;
  std::vector<Check> checks_;
  std::vector<std::string> flags_;
  std::vector<std::pair<std::string, std::string>> checksums_;
  std::chrono::steady_clock::time_point start_{};
  double wall_clock_ = 0.0;
};

//! Least-squares slope of log(y) against log(x); non-positive y are skipped.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::nan("");
  const double den = n * sxx - sx * sx;
  return den == 0.0 ? std::nan("") : (n * sxy - sx * sy) / den;
}

}  // namespace ohj

#endif  // OHJ_REPORT_HPP_
