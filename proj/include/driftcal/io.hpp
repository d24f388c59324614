// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftcal/errors.hpp"
#include "driftcal/pipeline.hpp"
#include "driftcal/spectral.hpp"
#include "driftcal/synth.hpp"

namespace driftcal::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

/// Shortest-safe text for lossless round trips.
inline std::string format_exact(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Report formatting: 9 significant digits, "-inf"/"inf"/"nan" sentinels.
inline std::string format_report(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  const std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || errno == ERANGE) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Writes `contents` to a sibling temp file, then renames it over `path`.
inline void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Sweep files
// ---------------------------------------------------------------------------
//
//   # timestamp_s=0
//   # role=foreground
//   # bistatic_angle_deg=150        (optional)
//   # polarization=VV               (optional)
//   f_GHz,re,im
//   2,0.31622776601683794,0
//   ...

inline std::string format_sweep(const Sweep& s) {
  std::string out;
  const SweepMeta& m = s.meta();
  out += "# timestamp_s=" + format_exact(m.timestamp_s) + "\n";
  out += std::string("# role=") + to_string(m.role) + "\n";
  if (m.bistatic_angle_deg) out += "# bistatic_angle_deg=" + format_exact(*m.bistatic_angle_deg) + "\n";
  if (m.polarization) out += "# polarization=" + *m.polarization + "\n";
  out += "f_GHz,re,im\n";
  const auto f = s.grid().values();
  const auto z = s.samples();
  for (std::size_t k = 0; k < z.size(); ++k) {
    out += format_exact(f[k]);
    out += ',';
    out += format_exact(z[k].real());
    out += ',';
    out += format_exact(z[k].imag());
    out += '\n';
  }
  return out;
}

inline void write_sweep(const Sweep& s, const fs::path& path) { write_file_atomic(path, format_sweep(s)); }

/// Parses a sweep file. The grid is re-derived from the f_GHz column (or taken
/// from `declared`) and every row must sit within 1e-9 GHz of it.
inline Sweep parse_sweep(std::string_view text, const std::optional<FrequencyGrid>& declared = std::nullopt,
                         const std::string& origin = "sweep") {
  auto fail = [&](std::size_t line, const std::string& what) -> ValidationError {
    return ValidationError(origin + ":" + std::to_string(line) + ": " + what);
  };

  SweepMeta meta;
  std::vector<double> freqs;
  CVector samples;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string_view kv = line.substr(1);
      while (!kv.empty() && kv.front() == ' ') kv.remove_prefix(1);
      const std::size_t eq = kv.find('=');
      if (eq == std::string_view::npos) continue;
      const std::string_view key = kv.substr(0, eq);
      const std::string_view val = kv.substr(eq + 1);
      if (key == "timestamp_s") {
        const auto v = parse_double(val);
        if (!v) throw fail(line_no, "bad timestamp_s");
        meta.timestamp_s = *v;
      } else if (key == "role") {
        if (val == "foreground") meta.role = SweepRole::foreground;
        else if (val == "background") meta.role = SweepRole::background;
        else throw fail(line_no, "bad role '" + std::string(val) + "'");
      } else if (key == "bistatic_angle_deg") {
        const auto v = parse_double(val);
        if (!v) throw fail(line_no, "bad bistatic_angle_deg");
        meta.bistatic_angle_deg = *v;
      } else if (key == "polarization") {
        meta.polarization = std::string(val);
      }
      continue;
    }
    if (!header_seen) {
      const auto cols = split(line, ',');
      if (cols.size() != 3 || cols[0] != "f_GHz" || cols[1] != "re" || cols[2] != "im") {
        throw fail(line_no, "expected header 'f_GHz,re,im'");
      }
      header_seen = true;
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != 3) throw fail(line_no, "malformed row: expected 3 columns");
    const auto f = parse_double(cols[0]);
    const auto re = parse_double(cols[1]);
    const auto im = parse_double(cols[2]);
    if (!f || !re || !im) throw fail(line_no, "malformed row: non-numeric value");
    if (!std::isfinite(*f) || !std::isfinite(*re) || !std::isfinite(*im)) throw fail(line_no, "non-finite value");
    if (!freqs.empty() && !(*f > freqs.back())) throw fail(line_no, "grid violation: f_GHz not increasing");
    freqs.push_back(*f);
    samples.emplace_back(*re, *im);
  }
  if (!header_seen) throw ValidationError(origin + ": missing header 'f_GHz,re,im'");

  std::optional<FrequencyGrid> grid = declared;
  if (grid) {
    if (freqs.size() != grid->size()) {
      throw ValidationError(origin + ": row count mismatch: " + std::to_string(freqs.size()) + " rows for a " +
                            std::to_string(grid->size()) + "-point grid");
    }
  } else {
    if (freqs.size() < 2) throw ValidationError(origin + ": grid violation: need at least 2 rows");
    const double n = static_cast<double>(freqs.size());
    const double f_end = freqs.front() + (freqs.back() - freqs.front()) * n * n / ((n - 1.0) * (n + 1.0));
    try {
      grid = make_grid(freqs.front(), f_end, freqs.size());
    } catch (const DomainError& e) {
      throw ValidationError(origin + ": grid violation: " + e.what());
    }
  }
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    if (std::abs(freqs[k] - (*grid)[k]) > 1e-9) {
      throw ValidationError(origin + ": grid violation at row " + std::to_string(k) + ": f_GHz " +
                            format_exact(freqs[k]) + " vs grid " + format_exact((*grid)[k]));
    }
  }
  try {
    return Sweep(*grid, std::move(samples), meta);
  } catch (const DomainError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
}

inline Sweep read_sweep(const fs::path& path, const std::optional<FrequencyGrid>& declared = std::nullopt) {
  return parse_sweep(read_file(path), declared, path.string());
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  return j.at(key);
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError(where + ": expected a number");
  return j.get<double>();
}

inline double number_at(const json& j, const char* key, const std::string& where) {
  return number(require(j, key, where), where + "." + key);
}

inline FrequencyGrid grid_from_json(const json& j, const std::string& where) {
  const double fs = number_at(j, "f_start_ghz", where);
  const double fe = number_at(j, "f_end_ghz", where);
  const json& n = require(j, "n_points", where);
  if (!n.is_number_integer() || n.get<long long>() < 0) throw ValidationError(where + ".n_points: expected a count");
  try {
    return make_grid(fs, fe, static_cast<std::size_t>(n.get<long long>()));
  } catch (const DomainError& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

inline json grid_to_json(const FrequencyGrid& g) {
  return json{{"f_start_ghz", g.f_start()}, {"f_end_ghz", g.f_end()}, {"n_points", g.size()}};
}

inline PiecewiseLinear track_from_json(const json& j, const std::string& where, double fallback) {
  if (j.is_null()) return PiecewiseLinear(fallback);
  if (j.is_number()) return PiecewiseLinear(j.get<double>());
  if (!j.is_array()) throw ValidationError(where + ": expected a number or a list of [t_h, value] nodes");
  std::vector<TrackNode> nodes;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& node = j[i];
    const std::string w = where + "[" + std::to_string(i) + "]";
    if (!node.is_array() || node.size() != 2) throw ValidationError(w + ": expected [t_h, value]");
    nodes.push_back({number(node[0], w), number(node[1], w)});
  }
  try {
    return PiecewiseLinear(std::move(nodes));
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

inline json track_to_json(const PiecewiseLinear& p) {
  json arr = json::array();
  for (const TrackNode& n : p.nodes()) arr.push_back(json::array({n.t_h, n.value}));
  return arr;
}

}  // namespace detail

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(origin + ": invalid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------
//
// {
//   "grid": {"f_start_ghz": 2, "f_end_ghz": 18, "n_points": 1601},
//   "paths": [{"delay_ns": 20, "amplitude": 0.316, "phase_rad": 0}],
//   "trajectory": {"eps_deg_per_ghz": [[0, 0], [18, 0.55]], "a": 1, "b": 0,
//                  "ripple": {"amplitude_deg": 1, "period_ghz": 2, "t_start_h": 0, "t_end_h": 4}},
//   "noise_db": -120, "n_runs": 3, "seed": 7, "duration_h": 18,
//   "bistatic_angle_deg": 150, "polarization": "VV"
// }

inline ScenarioSpec scenario_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("scenario: expected a JSON object");
  ScenarioSpec s;
  if (j.contains("grid")) s.grid = detail::grid_from_json(j.at("grid"), "grid");
  const json& paths = detail::require(j, "paths", "scenario");
  if (!paths.is_array()) throw ValidationError("paths: expected a list");
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const std::string w = "paths[" + std::to_string(i) + "]";
    PathSpec p;
    p.delay_ns = detail::number_at(paths[i], "delay_ns", w);
    p.amplitude = detail::number_at(paths[i], "amplitude", w);
    if (paths[i].contains("phase_rad")) p.phase_rad = detail::number_at(paths[i], "phase_rad", w);
    s.paths.push_back(p);
  }
  if (j.contains("trajectory")) {
    const json& t = j.at("trajectory");
    if (!t.is_object()) throw ValidationError("trajectory: expected an object");
    s.trajectory.eps_deg_per_ghz =
        detail::track_from_json(t.value("eps_deg_per_ghz", json()), "trajectory.eps_deg_per_ghz", 0.0);
    s.trajectory.a = detail::track_from_json(t.value("a", json()), "trajectory.a", 1.0);
    s.trajectory.b = detail::track_from_json(t.value("b", json()), "trajectory.b", 0.0);
    if (t.contains("ripple") && !t.at("ripple").is_null()) {
      const json& r = t.at("ripple");
      Ripple rp;
      rp.amplitude_deg = detail::number_at(r, "amplitude_deg", "trajectory.ripple");
      rp.period_ghz = detail::number_at(r, "period_ghz", "trajectory.ripple");
      if (r.contains("t_start_h")) rp.t_start_h = detail::number_at(r, "t_start_h", "trajectory.ripple");
      if (r.contains("t_end_h")) rp.t_end_h = detail::number_at(r, "t_end_h", "trajectory.ripple");
      s.trajectory.ripple = rp;
    }
  }
  if (j.contains("noise_db") && !j.at("noise_db").is_null()) s.noise_db = detail::number(j.at("noise_db"), "noise_db");
  if (j.contains("n_runs")) {
    const json& n = j.at("n_runs");
    if (!n.is_number_integer() || n.get<long long>() < 1) throw ValidationError("n_runs: expected a count >= 1");
    s.n_runs = static_cast<std::size_t>(n.get<long long>());
  }
  if (j.contains("seed")) {
    const json& n = j.at("seed");
    if (!n.is_number_integer()) throw ValidationError("seed: expected an integer");
    s.seed = n.get<std::uint64_t>();
  }
  if (j.contains("duration_h")) s.duration_h = detail::number(j.at("duration_h"), "duration_h");
  if (j.contains("bistatic_angle_deg")) {
    s.bistatic_angle_deg = detail::number(j.at("bistatic_angle_deg"), "bistatic_angle_deg");
  }
  if (j.contains("polarization")) {
    if (!j.at("polarization").is_string()) throw ValidationError("polarization: expected a string");
    s.polarization = j.at("polarization").get<std::string>();
  }
  s.validate();
  return s;
}

inline ScenarioSpec read_scenario(const fs::path& path) {
  const std::string text = read_file(path);
  return scenario_from_json(parse_json(text, path.string()));
}

inline json scenario_to_json(const ScenarioSpec& s) {
  json j;
  j["grid"] = detail::grid_to_json(s.grid);
  j["paths"] = json::array();
  for (const PathSpec& p : s.paths) {
    j["paths"].push_back({{"delay_ns", p.delay_ns}, {"amplitude", p.amplitude}, {"phase_rad", p.phase_rad}});
  }
  json t;
  t["eps_deg_per_ghz"] = detail::track_to_json(s.trajectory.eps_deg_per_ghz);
  t["a"] = detail::track_to_json(s.trajectory.a);
  t["b"] = detail::track_to_json(s.trajectory.b);
  if (s.trajectory.ripple) {
    const Ripple& r = *s.trajectory.ripple;
    t["ripple"] = {{"amplitude_deg", r.amplitude_deg}, {"period_ghz", r.period_ghz}, {"t_start_h", r.t_start_h}};
    if (std::isfinite(r.t_end_h)) t["ripple"]["t_end_h"] = r.t_end_h;
  }
  j["trajectory"] = t;
  if (s.noise_db) j["noise_db"] = *s.noise_db;
  j["n_runs"] = s.n_runs;
  j["seed"] = s.seed;
  j["duration_h"] = s.duration_h;
  if (s.bistatic_angle_deg) j["bistatic_angle_deg"] = *s.bistatic_angle_deg;
  if (s.polarization) j["polarization"] = *s.polarization;
  return j;
}

// ---------------------------------------------------------------------------
// Dataset manifests
// ---------------------------------------------------------------------------
//
// {
//   "grid": {"f_start_ghz": 2, "f_end_ghz": 18, "n_points": 1601},
//   "pairs": [{"fg": "sweeps/fg_0000.csv", "bg": "sweeps/bg_0000.csv"}],
//   "bounds": {"eps_max_deg_per_ghz": 2, "a_dev_max": 0.05, "b_max_per_ghz": 0.01}
// }
// Relative paths resolve against the manifest's directory.

struct ManifestEntry {
  std::string fg_path;
  std::string bg_path;
};

struct DatasetManifest {
  FrequencyGrid grid = make_grid(2.0, 18.0, 1601);
  std::vector<ManifestEntry> pairs;
  std::optional<PlausibilityBounds> bounds;
  fs::path base_dir;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

inline DatasetManifest manifest_from_json(const json& j, fs::path base_dir) {
  if (!j.is_object()) throw ValidationError("manifest: expected a JSON object");
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  m.grid = detail::grid_from_json(detail::require(j, "grid", "manifest"), "grid");
  const json& pairs = detail::require(j, "pairs", "manifest");
  if (!pairs.is_array() || pairs.empty()) throw ValidationError("pairs: expected a non-empty list");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string w = "pairs[" + std::to_string(i) + "]";
    const json& fg = detail::require(pairs[i], "fg", w);
    const json& bg = detail::require(pairs[i], "bg", w);
    if (!fg.is_string() || !bg.is_string()) throw ValidationError(w + ": fg and bg must be path strings");
    m.pairs.push_back({fg.get<std::string>(), bg.get<std::string>()});
  }
  if (j.contains("bounds") && !j.at("bounds").is_null()) {
    const json& b = j.at("bounds");
    PlausibilityBounds pb;
    if (b.contains("eps_max_deg_per_ghz")) pb.eps_max_deg_per_ghz = detail::number_at(b, "eps_max_deg_per_ghz", "bounds");
    if (b.contains("a_dev_max")) pb.a_dev_max = detail::number_at(b, "a_dev_max", "bounds");
    if (b.contains("b_max_per_ghz")) pb.b_max_per_ghz = detail::number_at(b, "b_max_per_ghz", "bounds");
    try {
      pb.validate();
    } catch (const DomainError& e) {
      throw ValidationError(std::string("bounds: ") + e.what());
    }
    m.bounds = pb;
  }
  return m;
}

inline DatasetManifest read_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  return manifest_from_json(parse_json(text, path.string()), path.parent_path());
}

inline json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["grid"] = detail::grid_to_json(m.grid);
  j["pairs"] = json::array();
  for (const ManifestEntry& e : m.pairs) j["pairs"].push_back({{"fg", e.fg_path}, {"bg", e.bg_path}});
  if (m.bounds) {
    j["bounds"] = {{"eps_max_deg_per_ghz", m.bounds->eps_max_deg_per_ghz},
                   {"a_dev_max", m.bounds->a_dev_max},
                   {"b_max_per_ghz", m.bounds->b_max_per_ghz}};
  }
  return j;
}

/// Loads every pair of a manifest. Unreadable or invalid pairs come back as
/// their error message instead of a pair.
struct LoadedPair {
  std::optional<MeasurementPair> pair;
  std::string error;
};

inline std::vector<LoadedPair> load_pairs(const DatasetManifest& m) {
  std::vector<LoadedPair> out;
  out.reserve(m.pairs.size());
  for (const ManifestEntry& e : m.pairs) {
    LoadedPair lp;
    try {
      Sweep fg = read_sweep(m.resolve(e.fg_path), m.grid);
      Sweep bg = read_sweep(m.resolve(e.bg_path), m.grid);
      lp.pair = MeasurementPair{std::move(fg), std::move(bg)};
    } catch (const std::exception& ex) {
      lp.error = ex.what();
    }
    out.push_back(std::move(lp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

inline constexpr const char* kReportColumns[] = {
    "index",    "time_h",    "eps_deg_per_ghz", "a", "b", "converged", "plausible", "peak_residue_conventional_db",
    "peak_residue_corrected_db", "improvement_db", "status"};

struct ReportRow {
  std::size_t index = 0;
  double key = 0.0;
  double eps_deg_per_ghz = 0.0;
  double a = 1.0;
  double b = 0.0;
  bool converged = false;
  bool plausible = false;
  double peak_residue_conventional_db = 0.0;
  double peak_residue_corrected_db = 0.0;
  double improvement_db = 0.0;
  // "ok", "fallback" (implausible or non-converged fit), or "error: <message>".
  std::string status = "ok";
};

struct ReportTable {
  TrackKey key_kind = TrackKey::time_h;
  std::vector<ReportRow> rows;
};

inline ReportRow report_row(std::size_t index, double key, const SubtractionReport& r) {
  ReportRow row;
  row.index = index;
  row.key = key;
  const DriftParams p = r.fit ? r.fit->params : DriftParams::identity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.eps_deg_per_ghz = r.ok() ? p.eps_deg_per_ghz() : nan;
  row.a = r.ok() ? p.a : nan;
  row.b = r.ok() ? p.b : nan;
  row.converged = r.ok() && r.converged();
  row.plausible = r.ok() && r.plausible();
  row.peak_residue_conventional_db = r.conventional_peak_residue_db;
  row.peak_residue_corrected_db = r.peak_residue_db;
  row.improvement_db = r.improvement_db;
  if (!r.ok()) {
    std::string msg = *r.error;
    for (char& c : msg) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    row.status = "error: " + msg;
  } else {
    row.status = r.fallback ? "fallback" : "ok";
  }
  return row;
}

inline std::string format_report_table(const ReportTable& t) {
  std::string out;
  for (std::size_t c = 0; c < std::size(kReportColumns); ++c) {
    if (c) out += '\t';
    out += (c == 1 && t.key_kind == TrackKey::beta_deg) ? "beta_deg" : kReportColumns[c];
  }
  out += '\n';
  for (const ReportRow& r : t.rows) {
    out += std::to_string(r.index) + '\t' + format_report(r.key) + '\t' + format_report(r.eps_deg_per_ghz) + '\t' +
           format_report(r.a) + '\t' + format_report(r.b) + '\t' + (r.converged ? "1" : "0") + '\t' +
           (r.plausible ? "1" : "0") + '\t' + format_report(r.peak_residue_conventional_db) + '\t' +
           format_report(r.peak_residue_corrected_db) + '\t' + format_report(r.improvement_db) + '\t' + r.status +
           '\n';
  }
  return out;
}

inline ReportTable parse_report_table(std::string_view text) {
  ReportTable t;
  std::size_t pos = 0, line_no = 0;
  bool header = false;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != std::size(kReportColumns)) {
      throw ValidationError("report line " + std::to_string(line_no) + ": expected " +
                            std::to_string(std::size(kReportColumns)) + " columns");
    }
    if (!header) {
      if (cols[1] == "beta_deg") t.key_kind = TrackKey::beta_deg;
      else if (cols[1] != "time_h") throw ValidationError("report: bad key column '" + std::string(cols[1]) + "'");
      header = true;
      continue;
    }
    auto num = [&](std::size_t c) {
      const auto v = parse_double(cols[c]);
      if (!v) throw ValidationError("report line " + std::to_string(line_no) + ": bad number in column " + kReportColumns[c]);
      return *v;
    };
    ReportRow r;
    r.index = static_cast<std::size_t>(num(0));
    r.key = num(1);
    r.eps_deg_per_ghz = num(2);
    r.a = num(3);
    r.b = num(4);
    r.converged = cols[5] == "1";
    r.plausible = cols[6] == "1";
    r.peak_residue_conventional_db = num(7);
    r.peak_residue_corrected_db = num(8);
    r.improvement_db = num(9);
    r.status = std::string(cols[10]);
    t.rows.push_back(std::move(r));
  }
  if (!header) throw ValidationError("report: missing header");
  return t;
}

// ---------------------------------------------------------------------------
// Ground-truth tables
// ---------------------------------------------------------------------------

inline std::string format_truth_table(const std::vector<TruthRow>& rows) {
  std::string out = "index\ttime_h\teps_deg_per_ghz\ta\tb\tripple\n";
  for (const TruthRow& r : rows) {
    out += std::to_string(r.index) + '\t' + format_exact(r.t_h) + '\t' + format_exact(r.params.eps_deg_per_ghz()) +
           '\t' + format_exact(r.params.a) + '\t' + format_exact(r.params.b) + '\t' + (r.ripple ? "1" : "0") + '\n';
  }
  return out;
}

inline std::vector<TruthRow> parse_truth_table(std::string_view text) {
  std::vector<TruthRow> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    if (++line_no == 1 || line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 6) throw ValidationError("truth line " + std::to_string(line_no) + ": expected 6 columns");
    std::array<double, 5> v{};
    for (std::size_t c = 0; c < 5; ++c) {
      const auto d = parse_double(cols[c]);
      if (!d) throw ValidationError("truth line " + std::to_string(line_no) + ": bad number");
      v[c] = *d;
    }
    rows.push_back({static_cast<std::size_t>(v[0]), v[1], DriftParams::from_degrees(v[2], v[3], v[4]), cols[5] == "1"});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Plot tables
// ---------------------------------------------------------------------------

/// Phase of fg[k]/ref[k] in degrees, unwrapped along frequency.
inline std::vector<double> phase_deviation_deg(std::span<const cplx> fg, std::span<const cplx> ref) {
  std::vector<double> out(fg.size());
  double prev = 0.0, offset = 0.0;
  for (std::size_t k = 0; k < fg.size(); ++k) {
    const double raw = std::arg(fg[k] * std::conj(ref[k]));
    if (k > 0) {
      double d = raw + offset - prev;
      while (d > std::numbers::pi) {
        offset -= 2.0 * std::numbers::pi;
        d -= 2.0 * std::numbers::pi;
      }
      while (d < -std::numbers::pi) {
        offset += 2.0 * std::numbers::pi;
        d += 2.0 * std::numbers::pi;
      }
    }
    prev = raw + offset;
    out[k] = prev * kDegPerRad;
  }
  return out;
}

/// Tab-separated table with a leading axis column and one column per series.
inline std::string format_columns(const std::string& axis_name, std::span<const double> axis,
                                  const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
  std::string out = axis_name;
  for (const auto& n : names) out += '\t' + n;
  out += '\n';
  for (std::size_t i = 0; i < axis.size(); ++i) {
    out += format_report(axis[i]);
    for (const auto& c : cols) out += '\t' + format_report(c[i]);
    out += '\n';
  }
  return out;
}

}  // namespace driftcal::io
