#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "ramix/dataset.hpp"

using namespace ramix;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ramix_test_dataset" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

DatasetConfig config(std::size_t m, double level, bool baseline, std::uint64_t seed) {
  return make_dataset_config(default_library(), m, level, baseline, seed);
}

std::vector<Spectrum> pure_renders() {
  std::vector<Spectrum> out;
  for (const auto& s : default_library()) out.push_back(render_spectrum(s, WavenumberGrid{}));
  return out;
}

}  // namespace

TEST(Concentrations, ReproducibleAndInRange) {
  RngStream a(1, 1), b(1, 1);
  const auto ca = sample_concentrations(a);
  EXPECT_EQ(ca, sample_concentrations(b));
  for (double v : ca) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Concentrations, MeanNearHalf) {
  std::array<double, 5> sum{};
  for (std::uint64_t i = 0; i < 10000; ++i) {
    RngStream rng(99, i);
    const auto c = sample_concentrations(rng);
    for (std::size_t j = 0; j < 5; ++j) sum[j] += c[j];
  }
  for (double s : sum) {
    EXPECT_GE(s / 10000.0, 0.48);
    EXPECT_LE(s / 10000.0, 0.52);
  }
}

TEST(Synthesize, UnitEthanolIsEthanolRender) {
  const auto cfg = config(1, 0.0, false, 0);
  RngStream rng(0, 0);
  const auto s = synthesize_sample(cfg.skeletons, cfg, Concentrations{1, 0, 0, 0, 0}, rng);
  EXPECT_EQ(s.spectrum, render_spectrum(cfg.skeletons[0], cfg.grid));
}

TEST(Synthesize, HalfEthanolHalfGlucoseIsAverage) {
  const auto cfg = config(1, 0.0, false, 0);
  RngStream rng(0, 0);
  const auto s = synthesize_sample(cfg.skeletons, cfg, Concentrations{0.5, 0.5, 0, 0, 0}, rng);
  const auto e = render_spectrum(cfg.skeletons[0], cfg.grid);
  const auto g = render_spectrum(cfg.skeletons[1], cfg.grid);
  for (std::size_t i = 0; i < e.size(); ++i) ASSERT_NEAR(s.spectrum[i], (e[i] + g[i]) / 2.0, 1e-15);
}

TEST(Synthesize, NoiselessSpectrumIsExactWeightedSum) {
  const auto cfg = config(50, 0.0, false, 17);
  const auto ds = generate_dataset(cfg);
  const auto pure = pure_renders();
  for (const auto& smp : ds.samples) {
    for (std::size_t j = 0; j < pure[0].size(); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 5; ++i) acc += smp.concentrations[i] * pure[i][j];
      ASSERT_EQ(smp.spectrum[j], acc);
    }
  }
}

TEST(Synthesize, BaselineIsStoredAndAdded) {
  const auto cfg = config(3, 0.0, true, 5);
  const auto ds = generate_dataset(cfg);
  ASSERT_EQ(ds.baselines.size(), 3u);
  const auto pure = pure_renders();
  // Spectrum = mixture + baseline + channel noise; the noise is small relative to the baseline.
  for (std::size_t r = 0; r < 3; ++r) {
    double worst = 0.0;
    for (std::size_t j = 0; j < pure[0].size(); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 5; ++i) acc += ds.samples[r].concentrations[i] * pure[i][j];
      worst = std::max(worst, std::abs(ds.samples[r].spectrum[j] - acc - ds.baselines[r][j]));
    }
    EXPECT_LT(worst, 6.0 * cfg.baseline_params.channel_noise_sigma);
    EXPECT_GT(worst, 0.0);
  }
}

TEST(Generate, IndependentOfWorkerCount) {
  const auto cfg = config(10, 1.0, true, 3);
  EXPECT_EQ(generate_dataset(cfg, 1), generate_dataset(cfg, 8));
}

TEST(Generate, SampleUsesItsOwnStream) {
  const auto cfg = config(4, 0.5, false, 11);
  const auto ds = generate_dataset(cfg);
  RngStream rng(11, 2);
  EXPECT_EQ(ds.samples[2], synthesize_sample(cfg.skeletons, cfg, rng));
}

TEST(Generate, ConfigValidation) {
  EXPECT_THROW(config(0, 0.0, false, 0), ValidationError);
  EXPECT_THROW(config(10, -1.0, false, 0), ValidationError);
  auto lib = default_library();
  lib.pop_back();
  EXPECT_THROW(make_dataset_config(lib, 10, 0.0, false, 0), ValidationError);
}

TEST(Split, EightyTwenty) {
  const auto s = split_indices(10, 0.8, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, PartitionAndDeterminism) {
  const auto a = split_indices(137, 0.8, 5);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (auto i : a.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 137u);
  EXPECT_EQ(*all.rbegin(), 136u);
  const auto b = split_indices(137, 0.8, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, split_indices(137, 0.8, 6).train);
}

TEST(Split, CountsAndErrors) {
  EXPECT_EQ(train_count(100, 0.8), 80u);
  EXPECT_EQ(train_count(11, 0.8), 9u);  // ceil(8.8)
  EXPECT_EQ(train_count(2, 0.8), 1u);   // one row always held out
  EXPECT_THROW(split_indices(1, 0.8, 0), ValidationError);
}

TEST(Scaler, TwoPointColumnMapsToPlusMinusOne) {
  Eigen::MatrixXd y(2, 1);
  y << 0.0, 1.0;
  const auto s = fit_target_scaler(y);
  EXPECT_EQ(s.mean[0], 0.5);
  EXPECT_EQ(s.std[0], 0.5);
  const auto z = s.apply(y);
  EXPECT_EQ(z(0, 0), -1.0);
  EXPECT_EQ(z(1, 0), 1.0);
}

TEST(Scaler, RoundTripAndStandardisation) {
  RngStream rng(3, 3);
  Eigen::MatrixXd y(40, 5);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < 5; ++j) y(i, j) = 10.0 * rng.uniform() - static_cast<double>(j);
  const auto s = fit_target_scaler(y);
  const auto z = s.apply(y);
  EXPECT_LT((s.invert(z) - y).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index j = 0; j < 5; ++j) {
    EXPECT_NEAR(z.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(z.col(j).array().square().mean()), 1.0, 1e-12);
  }
  const auto s2 = fit_target_scaler(z);
  for (Eigen::Index j = 0; j < 5; ++j) {
    EXPECT_NEAR(s2.mean[j], 0.0, 1e-12);
    EXPECT_NEAR(s2.std[j], 1.0, 1e-12);
  }
}

TEST(Scaler, ConstantColumnRejected) {
  Eigen::MatrixXd y(3, 2);
  y << 1, 2, 1, 3, 1, 4;
  EXPECT_THROW(fit_target_scaler(y), ValidationError);
}

TEST(Scaler, IgnoresTestRows) {
  const auto ds = generate_dataset(config(20, 0.0, false, 1));
  const auto split = split_dataset(ds, 0.8, 2);
  const auto s = fit_target_scaler(targets_matrix(ds, split.train));
  auto changed = ds;
  for (auto i : split.test) changed.samples[i].concentrations = {9, 9, 9, 9, 9};
  const auto s2 = fit_target_scaler(targets_matrix(changed, split.train));
  EXPECT_EQ(s.mean, s2.mean);
  EXPECT_EQ(s.std, s2.std);
}

TEST(DatasetFiles, RoundTrip) {
  for (bool baseline : {false, true}) {
    const auto ds = generate_dataset(config(6, 0.7, baseline, 21));
    const auto dir = temp_dir(baseline ? "rt_base" : "rt_plain");
    write_dataset(ds, dir);
    EXPECT_EQ(std::filesystem::exists(dir / "baselines.csv"), baseline);
    const auto back = read_dataset(dir);
    EXPECT_EQ(back, ds);
    EXPECT_EQ(back.config.noise_level, 0.7);
  }
}

TEST(DatasetFiles, HeaderConventions) {
  const auto ds = generate_dataset(config(2, 0.0, false, 1));
  const auto dir = temp_dir("headers");
  write_dataset(ds, dir);
  const auto conc = text::read_file(dir / "concentrations.csv");
  EXPECT_EQ(conc.substr(0, conc.find('\n')), "ethanol,glucose,water,glycerol,lactic_acid");
  const auto spectra = text::read_file(dir / "spectra.csv");
  EXPECT_EQ(spectra.substr(0, 8), "200,201,");
}

TEST(DatasetFiles, TamperedRowCountIsDimensionError) {
  const auto ds = generate_dataset(config(4, 0.0, false, 1));
  const auto dir = temp_dir("tampered");
  write_dataset(ds, dir);
  auto conc = text::read_file(dir / "concentrations.csv");
  conc.erase(conc.rfind('\n', conc.size() - 2) + 1);
  text::write_file(dir / "concentrations.csv", conc);
  EXPECT_THROW(read_dataset(dir), DimensionError);
}

TEST(DatasetFiles, MissingFilesAndBadMeta) {
  EXPECT_THROW(read_dataset(temp_dir("nothing_here")), IoError);
  const auto ds = generate_dataset(config(2, 0.0, false, 1));
  const auto dir = temp_dir("badmeta");
  write_dataset(ds, dir);
  std::filesystem::remove(dir / "spectra.csv");
  EXPECT_THROW(read_dataset(dir), IoError);
  write_dataset(ds, dir);
  text::write_file(dir / "meta.json", "{not json");
  EXPECT_THROW(read_dataset(dir), ParseError);
}

TEST(DatasetFiles, ConfigJsonRoundTrip) {
  const auto cfg = config(12, 1.5, true, 77);
  const nlohmann::json j = cfg;
  EXPECT_EQ(j.get<DatasetConfig>(), cfg);
}
