#include <cstdio>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "ramix/ramix.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Run cli(const std::string& args) {
  const std::string cmd = std::string(RAMIX_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ramix_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string line_with(const std::string& text, const std::string& key) {
  const auto pos = text.find(key);
  if (pos == std::string::npos) return {};
  return text.substr(pos, text.find('\n', pos) - pos);
}

}  // namespace

TEST(Cli, GenerateIsReproducible) {
  const auto dir = scratch("gen");
  const auto a = cli("generate --size 12 --noise-level 0.5 --baseline on --seed 3 --out " + (dir / "a").string());
  const auto b = cli("generate --size 12 --noise-level 0.5 --baseline on --seed 3 --out " + (dir / "b").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_NE(a.out.find("samples: 12"), std::string::npos);
  EXPECT_NE(a.out.find("# effective config"), std::string::npos);
  EXPECT_EQ(line_with(a.out, "checksum:"), line_with(b.out, "checksum:"));
  EXPECT_FALSE(line_with(a.out, "checksum:").empty());
  const auto ds = ramix::read_dataset(dir / "a");
  EXPECT_EQ(ds.size(), 12u);
  EXPECT_EQ(ds.baselines.size(), 12u);
  EXPECT_EQ(ramix::text::read_file(dir / "a" / "spectra.csv"), ramix::text::read_file(dir / "b" / "spectra.csv"));
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(cli("generate --size 5").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("generate --size 5 --baseline maybe --out /tmp/x").code, 2);
  EXPECT_EQ(cli("generate --size 5 --noise-level -1 --out /tmp/x").code, 2);
  const auto dir = scratch("usage");
  ASSERT_EQ(cli("generate --size 10 --out " + (dir / "d").string()).code, 0);
  const auto r = cli("train --model forest --dataset " + (dir / "d").string() + " --out " + (dir / "m.json").string());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_EQ(cli("render --compound unobtainium --out " + (dir / "r.csv").string()).code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, TrainEvaluatePls) {
  const auto dir = scratch("pls");
  ASSERT_EQ(cli("generate --size 100 --seed 5 --out " + (dir / "d").string()).code, 0);
  const auto t =
      cli("train --model pls --seed 5 --dataset " + (dir / "d").string() + " --out " + (dir / "m.json").string());
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_NE(t.out.find("train_rows: 80"), std::string::npos);
  const auto e = cli("evaluate --model-file " + (dir / "m.json").string() + " --dataset " + (dir / "d").string() +
                     " --out " + (dir / "report.json").string());
  ASSERT_EQ(e.code, 0) << e.out;
  const auto report = nlohmann::json::parse(ramix::text::read_file(dir / "report.json"));
  EXPECT_EQ(report.at("test_rows").get<int>(), 20);
  EXPECT_GE(report.at("r2_avg").get<double>(), 0.999);
  EXPECT_NE(e.out.find("ethanol"), std::string::npos);
}

TEST(Cli, TrainNetworkWritesHistory) {
  const auto dir = scratch("nn");
  ASSERT_EQ(cli("generate --size 20 --out " + (dir / "d").string()).code, 0);
  const auto t = cli("train --model simplenn --max-epochs 2 --dataset " + (dir / "d").string() + " --out " +
                     (dir / "m.json").string());
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_NE(t.out.find("epochs: 2"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "m.json.history.csv"));
  EXPECT_EQ(cli("train --model simplenn --batch-size 0 --dataset " + (dir / "d").string() + " --out " +
                (dir / "m2.json").string())
                .code,
            2);
}

TEST(Cli, WidthMismatchIsRuntimeError) {
  const auto dir = scratch("width");
  ASSERT_EQ(cli("generate --size 10 --out " + (dir / "d").string()).code, 0);
  // A PLS model built for 100 channels.
  ramix::TrainedModel m;
  m.scaler.mean = Eigen::RowVectorXd::Zero(5);
  m.scaler.std = Eigen::RowVectorXd::Ones(5);
  ramix::PlsModel pls;
  pls.components = 1;
  pls.x_mean = Eigen::RowVectorXd::Zero(100);
  pls.y_mean = Eigen::RowVectorXd::Zero(5);
  pls.weights = pls.x_loadings = Eigen::MatrixXd::Zero(100, 1);
  pls.y_loadings = Eigen::MatrixXd::Zero(5, 1);
  pls.coefficients = Eigen::MatrixXd::Zero(100, 5);
  m.pls = pls;
  ramix::save_model(m, dir / "narrow.json");
  const auto r = cli("evaluate --rows all --model-file " + (dir / "narrow.json").string() + " --dataset " +
                     (dir / "d").string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("spectral channels"), std::string::npos) << r.out;
}

TEST(Cli, MissingDatasetIsRuntimeError) {
  const auto dir = scratch("missing");
  fs::create_directories(dir / "empty");
  const auto r = cli("train --model pls --dataset " + (dir / "empty").string() + " --out " + (dir / "m.json").string());
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST(Cli, RenderWritesSpectrum) {
  const auto dir = scratch("render");
  ASSERT_EQ(cli("render --compound water --out " + (dir / "w.csv").string()).code, 0);
  const std::string csv = ramix::text::read_file(dir / "w.csv");
  const auto ls = ramix::text::lines(csv);
  ASSERT_EQ(ls.size(), 1801u);
  EXPECT_EQ(ls[0], "wavenumber,intensity");
  EXPECT_EQ(ls[1].rfind("200,", 0), 0u) << ls[1];
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const auto dir = scratch("config");
  ramix::text::write_file(dir / "run.toml", "[generate]\nsize = 7\nnoise-level = 1.5\nseed = 11\n");
  const auto r = cli("--config " + (dir / "run.toml").string() + " generate --seed 12 --out " + (dir / "d").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("size = 7"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("seed = 12"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("samples: 7"), std::string::npos);
  EXPECT_NE(r.out.find("noise_level: 1.5"), std::string::npos);
}

TEST(Cli, BenchmarkSmoke) {
  const auto dir = scratch("bench");
  const auto r = cli("benchmark --grid smoke --workers 2 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("cells: 8"), std::string::npos);
  EXPECT_NE(r.out.find("wins pls: 8"), std::string::npos) << r.out;
  for (const char* f : {"results.csv", "winners.csv", "heatmap.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_TRUE(fs::exists(dir / "predictions" / "noise0_m100_plain" / "pls_ethanol.csv"));
  EXPECT_EQ(cli("benchmark --grid smoke --models svm --out " + dir.string()).code, 2);
}
