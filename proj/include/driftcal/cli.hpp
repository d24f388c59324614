// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "driftcal/io.hpp"
#include "driftcal/pipeline.hpp"
#include "driftcal/synth.hpp"

namespace driftcal::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kIo = 3 };

inline constexpr const char* kPlotKinds[] = {"ir", "ir-subtracted", "phase-dev", "mag-dev", "params"};

namespace detail {

inline unsigned threads_from_env() {
  const char* v = std::getenv("DRIFTCAL_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (*end != '\0') return 0;
  return static_cast<unsigned>(n);
}

inline std::string run_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.csv", prefix, i);
  return buf;
}

inline std::optional<SubtractionMode> parse_mode(const std::string& s) {
  if (s == "conventional") return SubtractionMode::conventional;
  if (s == "phase-only") return SubtractionMode::phase_only;
  if (s == "full") return SubtractionMode::full;
  return std::nullopt;
}

// Maps library exceptions onto exit codes, writing the message to `err`.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace detail

inline int cmd_synth(const std::string& scenario_path, const std::string& out_dir, std::ostream& out,
                     std::ostream& err) {
  return detail::guarded(err, [&] {
    const ScenarioSpec spec = io::read_scenario(scenario_path);
    const SynthDataset ds = synth_dataset(spec);
    const io::fs::path dir(out_dir);

    io::DatasetManifest manifest;
    manifest.grid = spec.grid;
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
      const std::string fg_name = detail::run_name("fg", i);
      const std::string bg_name = detail::run_name("bg", i);
      io::write_sweep(ds.pairs[i].fg, dir / fg_name);
      io::write_sweep(ds.pairs[i].bg, dir / bg_name);
      manifest.pairs.push_back({fg_name, bg_name});
    }
    io::write_file_atomic(dir / "manifest.json", io::manifest_to_json(manifest).dump(2) + "\n");
    io::write_file_atomic(dir / "truth.tsv", io::format_truth_table(ds.truth));
    out << "wrote " << ds.pairs.size() << " pairs to " << dir.string() << '\n';
    return static_cast<int>(kOk);
  });
}

struct FitOptions {
  std::string manifest;
  std::string report;
  SubtractionMode mode = SubtractionMode::full;
  std::size_t window = kDefaultWindow;
  unsigned threads = 0;
};

/// Runs the batch over a manifest and returns the report table. Pairs that
/// cannot be loaded become error rows; `warnings` counts them.
inline io::ReportTable fit_manifest(const io::DatasetManifest& manifest, const FitOptions& opts,
                                    std::size_t& warnings) {
  const auto loaded = io::load_pairs(manifest);
  std::vector<MeasurementPair> good;
  std::vector<std::size_t> good_index;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (loaded[i].pair) {
      good.push_back(*loaded[i].pair);
      good_index.push_back(i);
    }
  }

  BatchOptions bo;
  bo.mode = opts.mode;
  bo.window = opts.window;
  bo.threads = opts.threads;
  bo.keep_impulse_responses = false;
  if (manifest.bounds) bo.bounds = *manifest.bounds;

  io::ReportTable table;
  table.rows.resize(loaded.size());
  std::vector<bool> filled(loaded.size(), false);
  warnings = 0;
  if (!good.empty()) {
    const BatchResult br = batch_process(good, bo);
    table.key_kind = br.key_kind;
    for (std::size_t j = 0; j < good.size(); ++j) {
      const std::size_t i = good_index[j];
      table.rows[i] = io::report_row(i, br.tracks[j].key, br.reports[j]);
      filled[i] = true;
      if (!br.reports[j].ok()) ++warnings;
    }
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (filled[i]) continue;
    table.rows[i] = io::report_row(i, std::numeric_limits<double>::quiet_NaN(), error_report(opts.mode, loaded[i].error));
    ++warnings;
  }
  return table;
}

inline int cmd_fit(const FitOptions& opts, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const io::DatasetManifest manifest = io::read_manifest(opts.manifest);
    std::size_t warnings = 0;
    const io::ReportTable table = fit_manifest(manifest, opts, warnings);
    io::write_file_atomic(opts.report, io::format_report_table(table));
    if (warnings) err << "warning: " << warnings << " pair(s) could not be processed\n";
    out << "wrote report for " << table.rows.size() << " pairs to " << opts.report << '\n';
    return static_cast<int>(kOk);
  });
}

struct PlotOptions {
  std::string manifest;
  std::string what;
  std::string out_dir;
  SubtractionMode mode = SubtractionMode::full;
  std::size_t window = kDefaultWindow;
  unsigned threads = 0;
};

inline int cmd_plot_data(const PlotOptions& opts, std::ostream& out, std::ostream& err) {
  bool known = false;
  for (const char* k : kPlotKinds) known = known || opts.what == k;
  if (!known) {
    err << "error: unknown --what '" << opts.what << "'; valid values:";
    for (const char* k : kPlotKinds) err << ' ' << k;
    err << '\n';
    return kUsage;
  }
  return detail::guarded(err, [&] {
    const io::DatasetManifest manifest = io::read_manifest(opts.manifest);
    const io::fs::path target = io::fs::path(opts.out_dir) / (opts.what + ".tsv");

    if (opts.what == "params") {
      FitOptions fo{opts.manifest, "", opts.mode, opts.window, opts.threads};
      std::size_t warnings = 0;
      const io::ReportTable table = fit_manifest(manifest, fo, warnings);
      std::string text = std::string("index\t") + (table.key_kind == TrackKey::beta_deg ? "beta_deg" : "time_h") +
                         "\teps_deg_per_ghz\ta\tb\tconverged\tplausible\n";
      for (const io::ReportRow& r : table.rows) {
        text += std::to_string(r.index) + '\t' + io::format_report(r.key) + '\t' + io::format_report(r.eps_deg_per_ghz) +
                '\t' + io::format_report(r.a) + '\t' + io::format_report(r.b) + '\t' + (r.converged ? "1" : "0") +
                '\t' + (r.plausible ? "1" : "0") + '\n';
      }
      io::write_file_atomic(target, text);
      if (warnings) err << "warning: " << warnings << " pair(s) could not be processed\n";
      out << "wrote " << target.string() << '\n';
      return static_cast<int>(kOk);
    }

    std::vector<MeasurementPair> pairs;
    for (auto& lp : io::load_pairs(manifest)) {
      if (!lp.pair) throw ValidationError(lp.error);
      pairs.push_back(std::move(*lp.pair));
    }
    const FrequencyGrid& grid = manifest.grid;
    const std::size_t n = grid.size();
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;
    for (std::size_t i = 0; i < pairs.size(); ++i) names.push_back("run_" + std::to_string(i));

    std::string text;
    if (opts.what == "ir" || opts.what == "ir-subtracted") {
      std::vector<double> delay(n);
      for (std::size_t k = 0; k < n; ++k) delay[k] = static_cast<double>(k) * grid.delay_step_ns();
      for (const MeasurementPair& p : pairs) {
        CVector spec(p.fg.samples().begin(), p.fg.samples().end());
        if (opts.what == "ir-subtracted") {
          for (std::size_t k = 0; k < n; ++k) spec[k] -= p.bg.samples()[k];
        }
        const CVector ir = idft(spec, n);
        std::vector<double> col(n);
        for (std::size_t k = 0; k < n; ++k) col[k] = magnitude_db(ir[k]);
        cols.push_back(std::move(col));
      }
      text = io::format_columns("delay_ns", delay, names, cols);
    } else {
      const auto ref = pairs.front().fg.samples();
      for (const MeasurementPair& p : pairs) {
        if (opts.what == "phase-dev") {
          cols.push_back(io::phase_deviation_deg(p.fg.samples(), ref));
        } else {
          std::vector<double> col(n);
          for (std::size_t k = 0; k < n; ++k) col[k] = magnitude_db(p.fg.samples()[k] / ref[k]);
          cols.push_back(std::move(col));
        }
      }
      text = io::format_columns("f_GHz", grid.values(), names, cols);
    }
    io::write_file_atomic(target, text);
    out << "wrote " << target.string() << '\n';
    return static_cast<int>(kOk);
  });
}

/// Entry point shared by the driftcal executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drift correction for coherent background subtraction of wideband sweeps", "driftcal"};
  app.require_subcommand(1);

  std::string scenario, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic foreground/background dataset");
  synth->add_option("--scenario", scenario, "Scenario JSON file")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  FitOptions fit_opts;
  fit_opts.threads = detail::threads_from_env();
  std::string fit_mode = "full";
  bool no_correct = false;
  auto* fit = app.add_subcommand("fit", "Fit drift corrections and write a residue report");
  fit->add_option("--manifest", fit_opts.manifest, "Dataset manifest JSON")->required();
  fit->add_option("--report", fit_opts.report, "Output report (TSV)")->required();
  fit->add_option("--window", fit_opts.window, "Half-width of the peak sample window")->capture_default_str();
  fit->add_option("--mode", fit_mode, "conventional | phase-only | full");
  fit->add_flag("--no-correct", no_correct, "Same as --mode conventional");

  PlotOptions plot_opts;
  plot_opts.threads = fit_opts.threads;
  std::string plot_mode = "full";
  auto* plot = app.add_subcommand("plot-data", "Emit plot-ready tables");
  plot->add_option("--manifest", plot_opts.manifest, "Dataset manifest JSON")->required();
  plot->add_option("--what", plot_opts.what, "ir | ir-subtracted | phase-dev | mag-dev | params")->required();
  plot->add_option("--out", plot_opts.out_dir, "Output directory")->required();
  plot->add_option("--window", plot_opts.window, "Half-width of the peak sample window (params)")->capture_default_str();
  plot->add_option("--mode", plot_mode, "Fit mode for params: conventional | phase-only | full");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  if (*synth) return cmd_synth(scenario, synth_out, out, err);
  if (*fit) {
    const auto mode = detail::parse_mode(fit_mode);
    if (!mode) {
      err << "error: unknown --mode '" << fit_mode << "'; valid values: conventional phase-only full\n";
      return kUsage;
    }
    fit_opts.mode = no_correct ? SubtractionMode::conventional : *mode;
    return cmd_fit(fit_opts, out, err);
  }
  const auto mode = detail::parse_mode(plot_mode);
  if (!mode) {
    err << "error: unknown --mode '" << plot_mode << "'; valid values: conventional phase-only full\n";
    return kUsage;
  }
  plot_opts.mode = *mode;
  return cmd_plot_data(plot_opts, out, err);
}

}  // namespace driftcal::cli
