// ramix command-line tool.
//
// Exit status: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI/CLI.hpp>
#include <nlohmann/json.hpp>

#include "ramix/ramix.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// A flag value that parsed but does not make sense; reported as a usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_effective(const CLI::App* sub) {
  std::cout << "# effective config\n[" << sub->get_name() << "]\n";
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
    } else {
      value = opt->get_default_str();
    }
    std::cout << opt->get_lnames()[0] << " = " << (value.empty() ? "\"\"" : value) << "\n";
  }
  std::cout << std::flush;
}

std::vector<ramix::SpectrumSkeleton> load_skeletons(const std::string& dir) {
  return ramix::load_library(dir.empty() ? ramix::default_skeleton_dir() : fs::path(dir));
}

std::string dataset_checksum(const fs::path& dir) {
  std::uint64_t h = ramix::text::fnv1a("");
  for (const char* name : {"meta.json", "spectra.csv", "concentrations.csv", "baselines.csv"}) {
    if (!fs::exists(dir / name)) continue;
    h = ramix::text::fnv1a(name, h);
    h = ramix::text::fnv1a(ramix::text::read_file(dir / name), h);
  }
  return ramix::text::hex64(h);
}

void print_report(const ramix::EvalReport& r, const std::vector<std::string>& analytes) {
  const auto& m = r.metrics;
  std::printf("%-14s %12s %12s %12s\n", "analyte", "rmse", "r2", "explained_var");
  for (std::size_t a = 0; a < m.rmse.size(); ++a)
    std::printf("%-14s %12.6f %12.6f %12.6f\n", a < analytes.size() ? analytes[a].c_str() : "?", m.rmse[a], m.r2[a],
                m.explained_variance[a]);
  std::printf("%-14s %12.6f %12.6f %12.6f\n", "average", m.rmse_avg, m.r2_avg, m.explained_variance_avg);
}

std::size_t hardware_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic Raman mixture datasets and chemometric benchmarks"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with per-subcommand sections; flags override it");
  app.footer("Environment: RAMIX_SKELETON_DIR sets the default skeleton directory.");

  // generate
  auto* gen = app.add_subcommand("generate", "Synthesize a mixture dataset");
  std::string gen_skeletons, gen_out, gen_baseline = "off";
  double gen_noise = 0.0;
  std::size_t gen_size = 100, gen_workers = 1;
  std::uint64_t gen_seed = 0;
  gen->add_option("--skeletons", gen_skeletons, "Skeleton directory (default: bundled set)");
  gen->add_option("--noise-level", gen_noise, "Peak perturbation level")->check(CLI::NonNegativeNumber)->capture_default_str();
  gen->add_option("--size", gen_size, "Number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--baseline", gen_baseline, "Add sine-derived baseline and channel noise")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "Dataset seed")->capture_default_str();
  gen->add_option("--workers", gen_workers, "Generation threads")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train a model on the training split of a dataset");
  std::string tr_model, tr_dataset, tr_out, tr_history;
  std::uint64_t tr_seed = 0;
  double tr_fraction = 0.8;
  ramix::ModelOptions tr_opt;
  tr->add_option("--model", tr_model, "pls, simplenn, simplecnn or resnet")
      ->required()
      ->check(CLI::IsMember({"pls", "simplenn", "simplecnn", "resnet"}));
  tr->add_option("--dataset", tr_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", tr_out, "Model file to write")->required();
  tr->add_option("--history", tr_history, "Epoch history CSV (default: <out>.history.csv, networks only)");
  tr->add_option("--seed", tr_seed, "Split and training seed")->capture_default_str();
  tr->add_option("--train-fraction", tr_fraction, "Share of rows used for training")->capture_default_str();
  tr->add_option("--pls-max-components", tr_opt.pls_max_components, "Upper bound for PLS component selection")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tr->add_option("--max-epochs", tr_opt.train.max_epochs, "Epoch limit")->capture_default_str();
  tr->add_option("--patience", tr_opt.train.patience, "Early-stopping patience")->capture_default_str();
  tr->add_option("--batch-size", tr_opt.train.batch_size, "Mini-batch size")->capture_default_str();
  tr->add_option("--learning-rate", tr_opt.train.learning_rate, "Adam step size")->capture_default_str();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a trained model on a dataset");
  std::string ev_model, ev_dataset, ev_out, ev_rows = "test";
  ev->add_option("--model-file", ev_model, "Model file from `train`")->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", ev_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--rows", ev_rows, "test: rows held out by the model's split; all: every row")
      ->check(CLI::IsMember({"test", "all"}))
      ->capture_default_str();
  ev->add_option("--out", ev_out, "Report JSON (default: print only)");

  // benchmark
  auto* bm = app.add_subcommand("benchmark", "Run the noise x size x baseline grid");
  std::string bm_grid = "default", bm_out, bm_skeletons;
  std::size_t bm_workers = hardware_workers();
  std::vector<std::string> bm_models;
  std::uint64_t bm_seed = 0;
  auto* bm_seed_opt = bm->add_option("--seed", bm_seed, "Override the grid's master seed");
  bm->add_option("--grid", bm_grid, "Grid JSON file, or `default` / `smoke`")->capture_default_str();
  bm->add_option("--models", bm_models, "Override the grid's model list")
      ->check(CLI::IsMember({"pls", "simplenn", "simplecnn", "resnet"}));
  bm->add_option("--skeletons", bm_skeletons, "Skeleton directory (default: bundled set)");
  bm->add_option("--workers", bm_workers, "Cells run concurrently")->check(CLI::PositiveNumber)->capture_default_str();
  bm->add_option("--out", bm_out, "Report directory")->required();

  // render
  auto* rd = app.add_subcommand("render", "Write a pure-component spectrum as CSV");
  std::string rd_compound, rd_out, rd_skeletons;
  rd->add_option("--compound", rd_compound, "Compound name")->required();
  rd->add_option("--skeletons", rd_skeletons, "Skeleton directory (default: bundled set)");
  rd->add_option("--out", rd_out, "CSV file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      print_effective(gen);
      ramix::DatasetConfig cfg;
      try {
        cfg = ramix::make_dataset_config(load_skeletons(gen_skeletons), gen_size, gen_noise, gen_baseline == "on",
                                         gen_seed);
      } catch (const ramix::ValidationError& e) {
        throw UsageError(e.what());
      }
      const auto ds = ramix::generate_dataset(cfg, gen_workers);
      ramix::write_dataset(ds, gen_out);
      std::cout << "samples: " << ds.size() << "\nnoise_level: " << ramix::text::format_double(cfg.noise_level)
                << "\nbaseline: " << gen_baseline << "\nchecksum: " << dataset_checksum(gen_out) << "\n";
    } else if (tr->parsed()) {
      print_effective(tr);
      const auto kind = ramix::parse_model_kind(tr_model);
      try {
        tr_opt.train.validate();
        if (!(tr_fraction > 0.0 && tr_fraction < 1.0)) throw ramix::ValidationError("train fraction must be in (0, 1)");
      } catch (const ramix::ValidationError& e) {
        throw UsageError(e.what());
      }
      const auto ds = ramix::read_dataset(tr_dataset);
      const auto split = ramix::split_dataset(ds, tr_fraction, tr_seed);
      auto model = ramix::train_model(kind, ramix::spectra_matrix(ds, split.train),
                                      ramix::targets_matrix(ds, split.train), tr_opt, tr_seed);
      model.split_seed = tr_seed;
      model.train_fraction = tr_fraction;
      ramix::save_model(model, tr_out);
      std::cout << "model: " << tr_model << "\ntrain_rows: " << split.train.size() << "\n";
      if (model.pls) std::cout << "pls_components: " << model.pls->components << "\n";
      if (model.network) {
        const std::string hist = tr_history.empty() ? tr_out + ".history.csv" : tr_history;
        ramix::text::write_file(hist, ramix::nn::history_csv(model.history));
        std::cout << "epochs: " << model.history.size() << "\nhistory: " << hist << "\n";
      }
      std::cout << "wrote: " << tr_out << "\n";
    } else if (ev->parsed()) {
      print_effective(ev);
      const auto model = ramix::load_model(ev_model);
      const auto ds = ramix::read_dataset(ev_dataset);
      const auto rows =
          ev_rows == "all" ? ramix::all_rows(ds) : ramix::split_dataset(ds, model.train_fraction, model.split_seed).test;
      const auto report = ramix::evaluate_model(model, ramix::spectra_matrix(ds, rows), ramix::targets_matrix(ds, rows),
                                                fs::path(ev_dataset).filename().string());
      print_report(report, ramix::compound_names(ds.config));
      if (!ev_out.empty()) ramix::text::write_file(ev_out, ramix::report_to_json(report).dump(2) + "\n");
    } else if (bm->parsed()) {
      print_effective(bm);
      ramix::GridConfig grid;
      try {
        if (bm_grid == "default")
          grid = ramix::default_grid();
        else if (bm_grid == "smoke")
          grid = ramix::smoke_grid();
        else
          grid = ramix::load_grid(bm_grid);
        if (bm_seed_opt->count() > 0) grid.master_seed = bm_seed;
        if (!bm_models.empty()) {
          grid.models.clear();
          for (const auto& m : bm_models) grid.models.push_back(ramix::parse_model_kind(m));
        }
        grid.validate();
      } catch (const ramix::ValidationError& e) {
        throw UsageError(e.what());
      }
      std::cout << "# grid\n" << nlohmann::json(grid).dump() << "\ncells: " << grid.cells().size() << "\n"
                << std::flush;
      const auto skeletons = load_skeletons(bm_skeletons);
      const auto results = ramix::run_grid(grid, skeletons, bm_workers,
                                           [](const ramix::CellResult& c, const ramix::ModelOutcome& o) {
                                             std::cout << c.key.id() << " " << ramix::model_name(o.model) << " ";
                                             if (o.ok())
                                               std::cout << "r2_avg=" << o.report->metrics.r2_avg << "\n";
                                             else
                                               std::cout << "failed: " << o.error << "\n";
                                             std::cout << std::flush;
                                           });
      ramix::export_reports(results, bm_out);
      const auto winners = ramix::best_model_map(results);
      std::map<std::string, std::size_t> wins;
      for (const auto& w : winners)
        if (w.winner) ++wins[std::string(ramix::model_name(*w.winner))];
      for (const auto& [name, count] : wins) std::cout << "wins " << name << ": " << count << "\n";
      const std::size_t unresolved = ramix::unresolved_cells(winners);
      std::cout << "reports: " << bm_out << "\n";
      if (unresolved > 0) {
        std::cerr << "error: " << unresolved << " cell(s) unresolved (every model failed)\n";
        return kExitRuntime;
      }
    } else if (rd->parsed()) {
      print_effective(rd);
      const auto skeletons = load_skeletons(rd_skeletons);
      const ramix::SpectrumSkeleton* found = nullptr;
      for (const auto& s : skeletons)
        if (s.compound == rd_compound) found = &s;
      if (!found) throw UsageError("unknown compound '" + rd_compound + "'");
      const ramix::WavenumberGrid grid;
      const auto spectrum = ramix::render_spectrum(*found, grid);
      std::string csv = "wavenumber,intensity\n";
      for (std::size_t i = 0; i < grid.channels; ++i) {
        ramix::text::append_double(csv, grid[i]);
        csv += ',';
        ramix::text::append_double(csv, spectrum[i]);
        csv += '\n';
      }
      ramix::text::write_file(rd_out, csv);
      std::cout << "wrote: " << rd_out << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
