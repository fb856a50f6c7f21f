#ifndef OHJ_EXPORT_HPP_
#define OHJ_EXPORT_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ohj/cauchy.hpp"
#include "ohj/error.hpp"
#include "ohj/report.hpp"

namespace ohj {

using CsvCell = std::variant<double, long long, std::string>;

//! CSV text with full-precision numbers. Column meanings are documented in
//! docs/csv_schema.md.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
    for (std::size_t i = 0; i < columns_.size(); ++i) text_ += (i ? "," : "") + columns_[i];
    text_ += '\n';
  }

  void row(const std::vector<CsvCell>& cells) {
    if (cells.size() != columns_.size()) throw InvalidArgument("CSV row width does not match the header");
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << ',';
      std::visit([&](const auto& v) { os << v; }, cells[i]);
    }
    text_ += os.str();
    text_ += '\n';
    ++rows_;
  }

  const std::string& text() const { return text_; }
  std::size_t rows() const { return rows_; }

 private:
  std::vector<std::string> columns_;
  std::string text_;
  std::size_t rows_ = 0;
};

inline std::string checksum_of(const std::string& content) {
  Fnv1a h;
  h.text(content);
  return h.hex();
}

//! Writes run artifacts into one directory and records their checksums in a
//! report. With an empty directory nothing touches the disk, but checksums
//! are still computed so fingerprints do not depend on the output mode.
class ArtifactSink {
 public:
  ArtifactSink() = default;
  explicit ArtifactSink(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(dir_, ec);
      if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }
  }

  bool enabled() const { return !dir_.empty(); }
  const std::filesystem::path& dir() const { return dir_; }

  ArtifactSink sub(const std::string& name) const { return enabled() ? ArtifactSink(dir_ / name) : ArtifactSink(); }

  std::string write(const std::string& name, const std::string& content, ExperimentReport* rep = nullptr) const {
    const std::string digest = checksum_of(content);
    if (enabled()) {
      std::ofstream f(dir_ / name, std::ios::binary);
      if (!f) throw ConfigError("cannot write '" + (dir_ / name).string() + "'");
      f << content;
    }
    if (rep) rep->checksum(name, digest);
    return digest;
  }

  std::string write_csv(const std::string& name, const CsvWriter& csv, ExperimentReport* rep = nullptr) const {
    return write(name, csv.text(), rep);
  }

  //! report.json; the report's own checksums are part of it.
  void write_report(const ExperimentReport& rep, const std::string& name = "report.json") const {
    if (enabled()) write(name, rep.to_json().dump(2) + "\n");
  }

 private:
  std::filesystem::path dir_;
};

//! One CSV per stored snapshot (columns x[,y],u) plus manifest.json listing
//! times and checksums.
inline Json export_trajectory(const FieldTrajectory& traj, const ArtifactSink& sink, ExperimentReport* rep = nullptr) {
  const TorusGrid& g = traj.grid;
  Json files = Json::array();
  for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
    CsvWriter csv(g.dim() == 1 ? std::vector<std::string>{"x", "u"} : std::vector<std::string>{"x", "y", "u"});
    const auto& v = traj.snapshots[s].values;
    for (std::size_t n = 0; n < g.size(); ++n) {
      const Vec2 x = g.coords(n);
      if (g.dim() == 1) {
        csv.row({x[0], v[n]});
      } else {
        csv.row({x[0], x[1], v[n]});
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "snapshot_%04zu.csv", s);
    const std::string digest = sink.write_csv(name, csv, rep);
    files.push_back({{"file", name}, {"time", traj.times[s]}, {"fnv1a64", digest}});
  }
  Json manifest = {{"dim", g.dim()},
                   {"N", g.points_per_axis()},
                   {"h", g.spacing()},
                   {"dt", traj.dt},
                   {"steps", traj.steps},
                   {"snapshots", files}};
  sink.write("manifest.json", manifest.dump(2) + "\n", rep);
  return manifest;
}

}  // namespace ohj

#endif  // OHJ_EXPORT_HPP_
