#pragma once

// Mixture dataset synthesis, train/test splitting, target standardisation,
// and the on-disk dataset directory format.

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ramix/errors.hpp"
#include "ramix/noise.hpp"
#include "ramix/parallel.hpp"
#include "ramix/rng.hpp"
#include "ramix/spectral.hpp"
#include "ramix/text_io.hpp"

namespace ramix {

using Concentrations = std::array<double, kAnalytes>;

struct MixtureSample {
  Spectrum spectrum;
  Concentrations concentrations{};

  friend bool operator==(const MixtureSample&, const MixtureSample&) = default;
};

struct DatasetConfig {
  std::size_t size = 100;
  double noise_level = 0.0;
  bool baseline = false;
  std::uint64_t seed = 0;
  WavenumberGrid grid;
  std::vector<SpectrumSkeleton> skeletons;  // mixture order
  BaselineParams baseline_params;

  void validate() const {
    if (size < 1) throw ValidationError("dataset size must be >= 1");
    derive_noise_params(noise_level);
    grid.validate();
    if (skeletons.size() != kAnalytes)
      throw ValidationError("a mixture needs exactly " + std::to_string(kAnalytes) + " skeletons");
    for (const auto& s : skeletons) validate_skeleton(s);
    if (baseline) baseline_params.validate();
  }

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

/// Config with baseline defaults scaled to the skeletons' peak intensity.
inline DatasetConfig make_dataset_config(std::vector<SpectrumSkeleton> skeletons, std::size_t size,
                                         double noise_level, bool baseline, std::uint64_t seed,
                                         WavenumberGrid grid = {}) {
  DatasetConfig c;
  c.size = size;
  c.noise_level = noise_level;
  c.baseline = baseline;
  c.seed = seed;
  c.grid = grid;
  c.baseline_params = BaselineParams::scaled_defaults(reference_intensity(skeletons, grid), baseline);
  c.skeletons = std::move(skeletons);
  c.validate();
  return c;
}

struct Dataset {
  DatasetConfig config;
  std::vector<MixtureSample> samples;
  std::vector<Spectrum> baselines;  // one per sample when config.baseline, else empty

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t channels() const noexcept { return config.grid.channels; }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Concentrations sample_concentrations(RngStream& rng) {
  Concentrations c{};
  for (auto& v : c) v = rng.uniform();
  return c;
}

/// sum_i c_i * S_i, accumulated over i in mixture order starting from zero.
inline Spectrum mix_spectra(const std::vector<Spectrum>& pure, const Concentrations& c) {
  if (pure.size() != kAnalytes) throw DimensionError("mix_spectra needs one spectrum per analyte");
  const std::size_t n = pure.front().size();
  Spectrum out(n, 0.0);
  for (std::size_t i = 0; i < kAnalytes; ++i) {
    if (pure[i].size() != n) throw DimensionError("mix_spectra: spectra lengths differ");
    for (std::size_t j = 0; j < n; ++j) out[j] += c[i] * pure[i][j];
  }
  return out;
}

namespace detail {

inline MixtureSample finish_sample(const std::vector<SpectrumSkeleton>& skeletons, const DatasetConfig& config,
                                   const Concentrations* forced, RngStream& rng, Spectrum* baseline_out) {
  if (skeletons.size() != kAnalytes) throw ValidationError("synthesize_sample needs 5 skeletons");
  const NoiseParams noise = derive_noise_params(config.noise_level);
  std::vector<Spectrum> pure;
  pure.reserve(kAnalytes);
  for (const auto& s : skeletons) pure.push_back(render_spectrum(perturb_skeleton(s, noise, rng), config.grid));

  MixtureSample sample;
  sample.concentrations = forced ? *forced : sample_concentrations(rng);
  sample.spectrum = mix_spectra(pure, sample.concentrations);

  if (config.baseline) {
    Spectrum base = generate_baseline(config.grid, config.baseline_params, rng);
    for (std::size_t j = 0; j < base.size(); ++j) sample.spectrum[j] += base[j];
    sample.spectrum = add_channel_noise(std::move(sample.spectrum), config.baseline_params.channel_noise_sigma, rng);
    if (baseline_out) *baseline_out = std::move(base);
  }
  return sample;
}

}  // namespace detail

/**
 * One mixture spectrum. Draw order on `rng`: peak perturbations for each
 * skeleton in mixture order, the five concentrations, then (with a
 * baseline) the baseline sine and the channel noise.
 */
inline MixtureSample synthesize_sample(const std::vector<SpectrumSkeleton>& skeletons, const DatasetConfig& config,
                                       RngStream& rng, Spectrum* baseline_out = nullptr) {
  return detail::finish_sample(skeletons, config, nullptr, rng, baseline_out);
}

/// As above with fixed concentrations; no concentration draws are consumed.
inline MixtureSample synthesize_sample(const std::vector<SpectrumSkeleton>& skeletons, const DatasetConfig& config,
                                       const Concentrations& concentrations, RngStream& rng,
                                       Spectrum* baseline_out = nullptr) {
  return detail::finish_sample(skeletons, config, &concentrations, rng, baseline_out);
}

/// Sample i is drawn from RngStream(config.seed, i), so the result does not
/// depend on `workers`.
inline Dataset generate_dataset(const DatasetConfig& config, std::size_t workers = 1) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.samples.resize(config.size);
  if (config.baseline) ds.baselines.resize(config.size);
  parallel_for(config.size, workers, [&](std::size_t i) {
    RngStream rng(config.seed, i);
    ds.samples[i] = synthesize_sample(config.skeletons, config, rng, config.baseline ? &ds.baselines[i] : nullptr);
  });
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting and matrices
// ---------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Number of rows kept for training: ceil(fraction * m), limited so that at
/// least one row is held out.
inline std::size_t train_count(std::size_t m, double fraction) {
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m) - 1e-9));
  return std::clamp<std::size_t>(k, 1, m - 1);
}

inline DatasetSplit split_indices(std::size_t m, double train_fraction, std::uint64_t seed) {
  if (m < 2) throw ValidationError("splitting needs at least 2 samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must be in (0, 1)");
  RngStream rng(seed, 0x5B117ull);
  auto perm = rng.permutation(m);
  const std::size_t k = train_count(m, train_fraction);
  DatasetSplit s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end());
  return s;
}

inline DatasetSplit split_dataset(const Dataset& ds, double train_fraction = 0.8, std::uint64_t seed = 0) {
  return split_indices(ds.size(), train_fraction, seed);
}

inline Eigen::MatrixXd spectra_matrix(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.channels()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& s = ds.samples.at(rows[r]).spectrum.intensities;
    for (std::size_t j = 0; j < s.size(); ++j) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = s[j];
  }
  return x;
}

inline Eigen::MatrixXd targets_matrix(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kAnalytes));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < kAnalytes; ++j)
      y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = ds.samples.at(rows[r]).concentrations[j];
  return y;
}

inline std::vector<std::size_t> all_rows(const Dataset& ds) {
  std::vector<std::size_t> r(ds.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

// ---------------------------------------------------------------------------
// Target standardisation
// ---------------------------------------------------------------------------

/// Per-column (y - mean) / std with population std, fitted on training rows.
struct TargetScaler {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& y) const {
    check(y);
    return (y.rowwise() - mean).array().rowwise() / std.array();
  }

  Eigen::MatrixXd invert(const Eigen::MatrixXd& y) const {
    check(y);
    return (y.array().rowwise() * std.array()).matrix().rowwise() + mean;
  }

 private:
  void check(const Eigen::MatrixXd& y) const {
    if (y.cols() != mean.size()) throw DimensionError("target scaler column count mismatch");
  }
};

inline TargetScaler fit_target_scaler(const Eigen::MatrixXd& y) {
  if (y.rows() < 2) throw ValidationError("target scaler needs at least 2 rows");
  TargetScaler s;
  s.mean = y.colwise().mean();
  s.std = ((y.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(y.rows())).sqrt();
  for (Eigen::Index j = 0; j < s.std.size(); ++j)
    if (!(s.std[j] > 0.0)) throw ValidationError("target column " + std::to_string(j) + " has zero variance");
  return s;
}

// ---------------------------------------------------------------------------
// JSON encodings for config types
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const WavenumberGrid& g) {
  j = {{"start", g.start}, {"step", g.step}, {"channels", g.channels}};
}
inline void from_json(const nlohmann::json& j, WavenumberGrid& g) {
  g.start = j.at("start").get<double>();
  g.step = j.at("step").get<double>();
  g.channels = j.at("channels").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const SpectrumSkeleton& s) {
  nlohmann::json peaks = nlohmann::json::array();
  for (const auto& p : s.peaks) peaks.push_back({p.amplitude, p.position, p.width});
  j = {{"compound", s.compound}, {"peaks", peaks}};
}
inline void from_json(const nlohmann::json& j, SpectrumSkeleton& s) {
  s.compound = j.at("compound").get<std::string>();
  s.peaks.clear();
  for (const auto& p : j.at("peaks")) s.peaks.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
}

inline void to_json(nlohmann::json& j, const BaselineParams& b) {
  j = {{"enabled", b.enabled},
       {"amplitude_min", b.amplitude_min},
       {"amplitude_max", b.amplitude_max},
       {"period_min", b.period_min},
       {"period_max", b.period_max},
       {"sine_noise_sigma", b.sine_noise_sigma},
       {"degree", b.degree},
       {"iterations", b.iterations},
       {"channel_noise_sigma", b.channel_noise_sigma}};
}
inline void from_json(const nlohmann::json& j, BaselineParams& b) {
  b.enabled = j.at("enabled").get<bool>();
  b.amplitude_min = j.at("amplitude_min").get<double>();
  b.amplitude_max = j.at("amplitude_max").get<double>();
  b.period_min = j.at("period_min").get<double>();
  b.period_max = j.at("period_max").get<double>();
  b.sine_noise_sigma = j.at("sine_noise_sigma").get<double>();
  b.degree = j.at("degree").get<int>();
  b.iterations = j.at("iterations").get<int>();
  b.channel_noise_sigma = j.at("channel_noise_sigma").get<double>();
}

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"size", c.size},
       {"noise_level", c.noise_level},
       {"baseline", c.baseline},
       {"seed", c.seed},
       {"grid", c.grid},
       {"skeletons", c.skeletons},
       {"baseline_params", c.baseline_params}};
}
inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
  c.size = j.at("size").get<std::size_t>();
  c.noise_level = j.at("noise_level").get<double>();
  c.baseline = j.at("baseline").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.grid = j.at("grid").get<WavenumberGrid>();
  c.skeletons = j.at("skeletons").get<std::vector<SpectrumSkeleton>>();
  c.baseline_params = j.at("baseline_params").get<BaselineParams>();
}

// ---------------------------------------------------------------------------
// Dataset directory (format version 1)
//
//   meta.json           {"format": "ramix-dataset", "version": 1, "config": {...}}
//   spectra.csv         header: wavenumber of each channel; then one row per sample
//   concentrations.csv  header: compound names; then one row per sample
//   baselines.csv       same layout as spectra.csv; only for baseline datasets
//
// Numbers use shortest round-trip decimal form.
// ---------------------------------------------------------------------------

inline constexpr int kDatasetFormatVersion = 1;

namespace detail {

inline std::string matrix_csv(const std::vector<std::string>& header, std::size_t rows, std::size_t cols,
                              auto&& value) {
  std::string out;
  out.reserve(rows * cols * 20 + 64);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out += ',';
    out += header[j];
  }
  out += '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ',';
      text::append_double(out, value(r, c));
    }
    out += '\n';
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable parse_csv(const std::filesystem::path& path) {
  const std::string contents = text::read_file(path);
  auto ls = text::lines(contents);
  if (ls.empty()) throw ParseError(path.string() + ": empty file");
  CsvTable t;
  for (auto h : text::split(ls[0])) t.header.emplace_back(text::trim(h));
  t.rows.reserve(ls.size() - 1);
  for (std::size_t i = 1; i < ls.size(); ++i) {
    auto cells = text::split(ls[i]);
    if (cells.size() != t.header.size())
      throw DimensionError(path.string() + ": row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                           " columns, expected " + std::to_string(t.header.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto c : cells) row.push_back(text::parse_double(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::vector<std::string> wavenumber_header(const WavenumberGrid& g) {
  std::vector<std::string> h;
  h.reserve(g.channels);
  for (std::size_t i = 0; i < g.channels; ++i) h.push_back(text::format_double(g[i]));
  return h;
}

}  // namespace detail

inline std::vector<std::string> compound_names(const DatasetConfig& c) {
  std::vector<std::string> names;
  for (const auto& s : c.skeletons) names.push_back(s.compound);
  return names;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const nlohmann::json meta = {{"format", "ramix-dataset"},
                               {"version", kDatasetFormatVersion},
                               {"config", ds.config},
                               {"has_baselines", !ds.baselines.empty()}};
  text::write_file(dir / "meta.json", meta.dump(2) + "\n");

  const std::size_t m = ds.size();
  const std::size_t n = ds.channels();
  const auto wn = detail::wavenumber_header(ds.config.grid);
  text::write_file(dir / "spectra.csv", detail::matrix_csv(wn, m, n, [&](std::size_t r, std::size_t c) {
                     return ds.samples[r].spectrum[c];
                   }));
  text::write_file(dir / "concentrations.csv",
                   detail::matrix_csv(compound_names(ds.config), m, kAnalytes,
                                      [&](std::size_t r, std::size_t c) { return ds.samples[r].concentrations[c]; }));
  const auto stale = dir / "baselines.csv";
  if (!ds.baselines.empty()) {
    text::write_file(stale, detail::matrix_csv(wn, m, n, [&](std::size_t r, std::size_t c) {
                       return ds.baselines[r][c];
                     }));
  } else if (std::filesystem::exists(stale)) {
    std::filesystem::remove(stale);
  }
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text::read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((dir / "meta.json").string() + ": " + e.what());
  }
  Dataset ds;
  try {
    if (meta.at("format").get<std::string>() != "ramix-dataset") throw ParseError("not a ramix dataset");
    if (meta.at("version").get<int>() != kDatasetFormatVersion)
      throw ParseError("unsupported dataset format version " + meta.at("version").dump());
    ds.config = meta.at("config").get<DatasetConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((dir / "meta.json").string() + ": " + e.what());
  }
  const bool has_baselines = meta.value("has_baselines", false);

  const std::size_t m = ds.config.size;
  const std::size_t n = ds.config.grid.channels;
  auto spectra = detail::parse_csv(dir / "spectra.csv");
  auto conc = detail::parse_csv(dir / "concentrations.csv");
  if (spectra.header.size() != n)
    throw DimensionError("spectra.csv has " + std::to_string(spectra.header.size()) + " columns, grid has " +
                         std::to_string(n));
  if (conc.header.size() != kAnalytes) throw DimensionError("concentrations.csv must have 5 columns");
  if (spectra.rows.size() != m || conc.rows.size() != m)
    throw DimensionError("row count mismatch: meta says " + std::to_string(m) + ", spectra.csv has " +
                         std::to_string(spectra.rows.size()) + ", concentrations.csv has " +
                         std::to_string(conc.rows.size()));

  ds.samples.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    ds.samples[r].spectrum = Spectrum(std::move(spectra.rows[r]));
    std::copy(conc.rows[r].begin(), conc.rows[r].end(), ds.samples[r].concentrations.begin());
  }
  if (has_baselines) {
    auto base = detail::parse_csv(dir / "baselines.csv");
    if (base.header.size() != n || base.rows.size() != m)
      throw DimensionError("baselines.csv shape does not match spectra.csv");
    ds.baselines.reserve(m);
    for (auto& row : base.rows) ds.baselines.emplace_back(std::move(row));
  }
  return ds;
}

}  // namespace ramix
