#pragma once

// Benchmark grid over (noise level, dataset size, baseline) cells, winner
// tables and report files.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ramix/dataset.hpp"
#include "ramix/errors.hpp"
#include "ramix/model.hpp"
#include "ramix/parallel.hpp"
#include "ramix/rng.hpp"
#include "ramix/text_io.hpp"

namespace ramix {

struct CellKey {
  double noise_level = 0.0;
  std::size_t size = 0;
  bool baseline = false;

  /// Directory-safe identifier, e.g. "noise0.5_m100_baseline".
  std::string id() const {
    return "noise" + text::format_double(noise_level) + "_m" + std::to_string(size) +
           (baseline ? "_baseline" : "_plain");
  }

  friend bool operator==(const CellKey&, const CellKey&) = default;
};

/// Seed for one cell. Depends only on the cell's own coordinates, so adding
/// cells to a grid leaves existing cells untouched.
inline std::uint64_t cell_seed(std::uint64_t master, const CellKey& key) {
  return mix_seed({master, std::bit_cast<std::uint64_t>(key.noise_level), static_cast<std::uint64_t>(key.size),
                   key.baseline ? 1u : 0u});
}

struct GridConfig {
  std::vector<double> noise_levels{0.0, 0.1, 0.5, 1.0, 1.5, 2.0};
  std::vector<std::size_t> sizes{10, 100, 1000, 10000};
  std::vector<bool> baselines{false, true};
  std::vector<ModelKind> models{ModelKind::pls, ModelKind::simplenn, ModelKind::simplecnn};
  std::uint64_t master_seed = 2024;
  double train_fraction = 0.8;
  ModelOptions options;

  /// Cells in noise-major, then size, then baseline order.
  std::vector<CellKey> cells() const {
    std::vector<CellKey> out;
    for (double n : noise_levels)
      for (std::size_t m : sizes)
        for (bool b : baselines) out.push_back({n, m, b});
    return out;
  }

  void validate() const {
    if (noise_levels.empty() || sizes.empty() || baselines.empty() || models.empty())
      throw ValidationError("grid needs at least one noise level, size, baseline flag and model");
    for (double n : noise_levels) derive_noise_params(n);
    for (std::size_t m : sizes)
      if (m < 2) throw ValidationError("grid dataset sizes must be >= 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must be in (0, 1)");
    options.train.validate();
    if (options.pls_max_components < 1) throw ValidationError("pls max components must be >= 1");
  }
};

inline GridConfig default_grid() { return {}; }

/// Small grid for quick checks: sizes {10, 100}, two noise levels, PLS only.
inline GridConfig smoke_grid() {
  GridConfig g;
  g.noise_levels = {0.0, 1.0};
  g.sizes = {10, 100};
  g.models = {ModelKind::pls};
  return g;
}

inline void to_json(nlohmann::json& j, const GridConfig& g) {
  std::vector<std::string> models;
  for (auto m : g.models) models.emplace_back(model_name(m));
  const auto& t = g.options.train;
  j = {{"noise_levels", g.noise_levels},
       {"sizes", g.sizes},
       {"baselines", g.baselines},
       {"models", models},
       {"master_seed", g.master_seed},
       {"train_fraction", g.train_fraction},
       {"pls_max_components", g.options.pls_max_components},
       {"pls_validation_fraction", g.options.pls_validation_fraction},
       {"train",
        {{"max_epochs", t.max_epochs},
         {"validation_fraction", t.validation_fraction},
         {"patience", t.patience},
         {"batch_size", t.batch_size},
         {"learning_rate", t.learning_rate}}}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, GridConfig& g) {
  if (j.contains("noise_levels")) g.noise_levels = j.at("noise_levels").get<std::vector<double>>();
  if (j.contains("sizes")) g.sizes = j.at("sizes").get<std::vector<std::size_t>>();
  if (j.contains("baselines")) g.baselines = j.at("baselines").get<std::vector<bool>>();
  if (j.contains("models")) {
    g.models.clear();
    for (const auto& m : j.at("models")) g.models.push_back(parse_model_kind(m.get<std::string>()));
  }
  if (j.contains("master_seed")) g.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("train_fraction")) g.train_fraction = j.at("train_fraction").get<double>();
  if (j.contains("pls_max_components")) g.options.pls_max_components = j.at("pls_max_components").get<int>();
  if (j.contains("pls_validation_fraction"))
    g.options.pls_validation_fraction = j.at("pls_validation_fraction").get<double>();
  if (j.contains("train")) {
    const auto& t = j.at("train");
    auto& c = g.options.train;
    if (t.contains("max_epochs")) c.max_epochs = t.at("max_epochs").get<std::size_t>();
    if (t.contains("validation_fraction")) c.validation_fraction = t.at("validation_fraction").get<double>();
    if (t.contains("patience")) c.patience = t.at("patience").get<std::size_t>();
    if (t.contains("batch_size")) c.batch_size = t.at("batch_size").get<std::size_t>();
    if (t.contains("learning_rate")) c.learning_rate = t.at("learning_rate").get<double>();
  }
}

inline GridConfig load_grid(const std::filesystem::path& path) {
  try {
    GridConfig g = nlohmann::json::parse(text::read_file(path)).get<GridConfig>();
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// --- Running -----------------------------------------------------------------

struct ModelOutcome {
  ModelKind model = ModelKind::pls;
  std::optional<EvalReport> report;  // empty when the model failed
  std::string error;
  Eigen::MatrixXd actual, predicted;  // test rows, original units

  bool ok() const noexcept { return report.has_value(); }
};

struct CellResult {
  CellKey key;
  std::uint64_t seed = 0;
  std::size_t train_rows = 0, test_rows = 0;
  std::string error;  // dataset-level failure; models then all fail with it
  std::vector<ModelOutcome> outcomes;  // grid.models order
};

struct BenchmarkResults {
  GridConfig grid;
  std::vector<std::string> analytes;
  std::vector<CellResult> cells;  // grid.cells() order
};

using GridProgress = std::function<void(const CellResult&, const ModelOutcome&)>;

inline CellResult run_cell(const GridConfig& grid, const std::vector<SpectrumSkeleton>& skeletons,
                           const CellKey& key, const WavenumberGrid& wn = {}) {
  CellResult cell;
  cell.key = key;
  cell.seed = cell_seed(grid.master_seed, key);
  auto fail_all = [&](const std::string& why) {
    cell.error = why;
    cell.outcomes.clear();
    for (auto m : grid.models) cell.outcomes.push_back({m, std::nullopt, why, {}, {}});
  };
  try {
    const auto config = make_dataset_config(skeletons, key.size, key.noise_level, key.baseline, cell.seed, wn);
    const Dataset ds = generate_dataset(config, 1);
    const auto split = split_dataset(ds, grid.train_fraction, cell.seed);
    cell.train_rows = split.train.size();
    cell.test_rows = split.test.size();
    const Eigen::MatrixXd xtr = spectra_matrix(ds, split.train), ytr = targets_matrix(ds, split.train);
    const Eigen::MatrixXd xte = spectra_matrix(ds, split.test), yte = targets_matrix(ds, split.test);
    for (std::size_t i = 0; i < grid.models.size(); ++i) {
      ModelOutcome out;
      out.model = grid.models[i];
      try {
        auto model = train_model(out.model, xtr, ytr, grid.options, mix_seed({cell.seed, i + 1}));
        out.predicted = model.predict(xte);
        out.actual = yte;
        out.report = EvalReport{std::string(model_name(out.model)), key.id(), static_cast<std::size_t>(yte.rows()),
                                regression_metrics(yte, out.predicted)};
      } catch (const std::exception& e) {
        out.report.reset();
        out.error = e.what();
      }
      cell.outcomes.push_back(std::move(out));
    }
  } catch (const std::exception& e) {
    fail_all(e.what());
  }
  return cell;
}

/// Runs every cell of `grid`. Cells run concurrently on `workers` threads;
/// results are stored by cell index, so output does not depend on `workers`.
/// A failing model or cell is recorded, never thrown.
inline BenchmarkResults run_grid(const GridConfig& grid, const std::vector<SpectrumSkeleton>& skeletons,
                                 std::size_t workers = 1, const GridProgress& progress = {},
                                 const WavenumberGrid& wn = {}) {
  grid.validate();
  BenchmarkResults res;
  res.grid = grid;
  for (const auto& s : skeletons) res.analytes.push_back(s.compound);
  const auto keys = grid.cells();
  res.cells.resize(keys.size());
  std::mutex progress_mutex;
  parallel_for(keys.size(), workers, [&](std::size_t i) {
    res.cells[i] = run_cell(grid, skeletons, keys[i], wn);
    if (progress) {
      std::lock_guard lock(progress_mutex);
      for (const auto& o : res.cells[i].outcomes) progress(res.cells[i], o);
    }
  });
  return res;
}

// --- Winners -----------------------------------------------------------------

struct CellWinner {
  CellKey key;
  std::optional<ModelKind> winner;  // empty: every model failed
  double r2_avg = 0.0;
};

/// Highest averaged R² per cell; ties go to the model declared first in
/// ModelKind. Failed models are skipped.
inline std::vector<CellWinner> best_model_map(const BenchmarkResults& res) {
  std::vector<CellWinner> out;
  for (const auto& cell : res.cells) {
    CellWinner w{cell.key, std::nullopt, 0.0};
    for (const auto& o : cell.outcomes) {
      if (!o.ok()) continue;
      const double r2 = o.report->metrics.r2_avg;
      if (!w.winner || r2 > w.r2_avg || (r2 == w.r2_avg && o.model < *w.winner)) {
        w.winner = o.model;
        w.r2_avg = r2;
      }
    }
    out.push_back(w);
  }
  return out;
}

inline std::size_t unresolved_cells(const std::vector<CellWinner>& winners) {
  return static_cast<std::size_t>(
      std::count_if(winners.begin(), winners.end(), [](const CellWinner& w) { return !w.winner; }));
}

// --- Export ------------------------------------------------------------------

inline constexpr int kBenchmarkFormatVersion = 1;
inline constexpr const char* kNonPositiveMarker = "≤ 0";

/// Two-decimal display value, or the marker for R² at or below zero.
inline std::string display_r2(double r2) {
  if (!(r2 > 0.0)) return kNonPositiveMarker;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r2);
  return buf;
}

/// One line of results.csv.
struct ResultRow {
  std::string cell;
  double noise_level = 0.0;
  std::size_t size = 0;
  bool baseline = false;
  std::uint64_t seed = 0;
  std::string model;
  bool ok = false;
  double rmse_avg = 0.0, r2_avg = 0.0, explained_variance_avg = 0.0;
  std::vector<double> r2;  // per analyte; empty when failed
  std::string error;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

namespace detail {

inline std::string csv_safe(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, ';');
  return s;
}

}  // namespace detail

inline std::vector<ResultRow> result_rows(const BenchmarkResults& res) {
  std::vector<ResultRow> rows;
  for (const auto& cell : res.cells) {
    for (const auto& o : cell.outcomes) {
      ResultRow r;
      r.cell = cell.key.id();
      r.noise_level = cell.key.noise_level;
      r.size = cell.key.size;
      r.baseline = cell.key.baseline;
      r.seed = cell.seed;
      r.model = std::string(model_name(o.model));
      r.ok = o.ok();
      if (o.ok()) {
        const auto& m = o.report->metrics;
        r.rmse_avg = m.rmse_avg;
        r.r2_avg = m.r2_avg;
        r.explained_variance_avg = m.explained_variance_avg;
        r.r2 = m.r2;
      } else {
        r.error = detail::csv_safe(o.error);
      }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

inline std::string results_csv(const std::vector<ResultRow>& rows, const std::vector<std::string>& analytes) {
  std::string out = "cell,noise_level,size,baseline,seed,model,status,rmse_avg,r2_avg,explained_variance_avg";
  for (const auto& a : analytes) out += ",r2_" + a;
  out += ",error\n";
  for (const auto& r : rows) {
    out += r.cell + ',' + text::format_double(r.noise_level) + ',' + std::to_string(r.size) + ',' +
           (r.baseline ? "on" : "off") + ',' + std::to_string(r.seed) + ',' + r.model + ',' +
           (r.ok ? "ok" : "failed");
    for (double v : {r.rmse_avg, r.r2_avg, r.explained_variance_avg}) out += ',' + (r.ok ? text::format_double(v) : "");
    for (std::size_t a = 0; a < analytes.size(); ++a) out += ',' + (r.ok ? text::format_double(r.r2.at(a)) : "");
    out += ',' + r.error + '\n';
  }
  return out;
}

/// Parses results.csv back into rows.
inline std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  const std::string contents = text::read_file(path);
  const auto ls = text::lines(contents);
  if (ls.empty()) throw ParseError(path.string() + ": empty file");
  const auto header = text::split(ls[0]);
  constexpr std::size_t fixed = 10;
  if (header.size() < fixed + 1 || header[0] != "cell") throw ParseError(path.string() + ": not a results table");
  const std::size_t analytes = header.size() - fixed - 1;
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = text::split(ls[i]);
    if (f.size() != header.size())
      throw ParseError(path.string() + ": line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) +
                       " fields, expected " + std::to_string(header.size()));
    ResultRow r;
    r.cell = std::string(f[0]);
    r.noise_level = text::parse_double(f[1]);
    r.size = static_cast<std::size_t>(text::parse_u64(f[2]));
    r.baseline = f[3] == "on";
    r.seed = text::parse_u64(f[4]);
    r.model = std::string(f[5]);
    r.ok = f[6] == "ok";
    if (r.ok) {
      r.rmse_avg = text::parse_double(f[7]);
      r.r2_avg = text::parse_double(f[8]);
      r.explained_variance_avg = text::parse_double(f[9]);
      for (std::size_t a = 0; a < analytes; ++a) r.r2.push_back(text::parse_double(f[fixed + a]));
    }
    r.error = std::string(f.back());
    rows.push_back(std::move(r));
  }
  return rows;
}

inline nlohmann::json summary_json(const BenchmarkResults& res, const std::vector<CellWinner>& winners) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t i = 0; i < res.cells.size(); ++i) {
    const auto& c = res.cells[i];
    nlohmann::json models = nlohmann::json::array();
    for (const auto& o : c.outcomes) {
      if (o.ok()) {
        auto j = report_to_json(*o.report);
        j["status"] = "ok";
        models.push_back(std::move(j));
      } else {
        models.push_back({{"model", model_name(o.model)}, {"status", "failed"}, {"error", o.error}});
      }
    }
    const auto& w = winners.at(i);
    cells.push_back({{"cell", c.key.id()},
                     {"noise_level", c.key.noise_level},
                     {"size", c.key.size},
                     {"baseline", c.key.baseline},
                     {"seed", c.seed},
                     {"train_rows", c.train_rows},
                     {"test_rows", c.test_rows},
                     {"winner", w.winner ? nlohmann::json(model_name(*w.winner)) : nlohmann::json(nullptr)},
                     {"models", std::move(models)}});
  }
  return {{"format", "ramix-benchmark"},
          {"version", kBenchmarkFormatVersion},
          {"grid", res.grid},
          {"analytes", res.analytes},
          {"cell_count", res.cells.size()},
          {"unresolved", unresolved_cells(winners)},
          {"cells", std::move(cells)}};
}

/**
 * Writes into `dir`:
 *   results.csv    one row per (cell, model), full precision
 *   winners.csv    best model per cell with its averaged R²
 *   heatmap.csv    averaged R² per cell (rows) and model (columns), two decimals
 *   summary.json   everything above in one versioned document
 *   predictions/<cell>/<model>_<analyte>.csv   actual,predicted test points
 * R² at or below zero shows as "≤ 0" in winners.csv and heatmap.csv.
 */
inline void export_reports(const BenchmarkResults& res, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto winners = best_model_map(res);

  text::write_file(dir / "results.csv", results_csv(result_rows(res), res.analytes));

  std::string win = "cell,noise_level,size,baseline,winner,r2_avg\n";
  for (const auto& w : winners) {
    win += w.key.id() + ',' + text::format_double(w.key.noise_level) + ',' + std::to_string(w.key.size) + ',' +
           (w.key.baseline ? "on" : "off") + ',';
    win += w.winner ? std::string(model_name(*w.winner)) + ',' + display_r2(w.r2_avg) : std::string("unresolved,");
    win += '\n';
  }
  text::write_file(dir / "winners.csv", win);

  std::string heat = "cell,noise_level,size,baseline";
  for (auto m : res.grid.models) heat += ',' + std::string(model_name(m));
  heat += '\n';
  for (const auto& c : res.cells) {
    heat += c.key.id() + ',' + text::format_double(c.key.noise_level) + ',' + std::to_string(c.key.size) + ',' +
            (c.key.baseline ? "on" : "off");
    for (const auto& o : c.outcomes) heat += ',' + (o.ok() ? display_r2(o.report->metrics.r2_avg) : "failed");
    heat += '\n';
  }
  text::write_file(dir / "heatmap.csv", heat);

  text::write_file(dir / "summary.json", summary_json(res, winners).dump(2) + "\n");

  const fs::path pred_root = dir / "predictions";
  if (fs::exists(pred_root)) fs::remove_all(pred_root);
  for (const auto& c : res.cells) {
    for (const auto& o : c.outcomes) {
      if (!o.ok()) continue;
      const fs::path cell_dir = pred_root / c.key.id();
      fs::create_directories(cell_dir);
      for (Eigen::Index a = 0; a < o.actual.cols(); ++a) {
        std::string pts = "actual,predicted\n";
        for (Eigen::Index r = 0; r < o.actual.rows(); ++r) {
          text::append_double(pts, o.actual(r, a));
          pts += ',';
          text::append_double(pts, o.predicted(r, a));
          pts += '\n';
        }
        const std::string analyte =
            static_cast<std::size_t>(a) < res.analytes.size() ? res.analytes[static_cast<std::size_t>(a)]
                                                                : "analyte" + std::to_string(a);
        text::write_file(cell_dir / (std::string(model_name(o.model)) + "_" + analyte + ".csv"), pts);
      }
    }
  }
}

}  // namespace ramix
