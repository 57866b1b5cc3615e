#pragma once

// A trained regressor of any kind, bundled with its target scaler, plus
// evaluation and model files.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ramix/dataset.hpp"
#include "ramix/errors.hpp"
#include "ramix/metrics.hpp"
#include "ramix/network.hpp"
#include "ramix/pls.hpp"
#include "ramix/text_io.hpp"

namespace ramix {

/// Declaration order doubles as the tie-break order when picking winners.
enum class ModelKind { pls, simplenn, simplecnn, resnet };

inline constexpr std::array<ModelKind, 4> kAllModels = {ModelKind::pls, ModelKind::simplenn, ModelKind::simplecnn,
                                                        ModelKind::resnet};

inline std::string_view model_name(ModelKind k) {
  switch (k) {
    case ModelKind::pls: return "pls";
    case ModelKind::simplenn: return "simplenn";
    case ModelKind::simplecnn: return "simplecnn";
    case ModelKind::resnet: return "resnet";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view name) {
  for (auto k : kAllModels)
    if (model_name(k) == name) return k;
  throw ValidationError("unknown model '" + std::string(name) + "' (expected pls, simplenn, simplecnn or resnet)");
}

inline nn::NetworkSpec network_spec_for(ModelKind k, std::size_t width) {
  switch (k) {
    case ModelKind::simplenn: return nn::simple_nn_spec(width);
    case ModelKind::simplecnn: return nn::simple_cnn_spec(width);
    case ModelKind::resnet: return nn::resnet_spec(width);
    case ModelKind::pls: break;
  }
  throw ValidationError("pls is not a network model");
}

struct ModelOptions {
  int pls_max_components = 10;
  double pls_validation_fraction = 0.25;
  nn::TrainConfig train;
};

struct TrainedModel {
  ModelKind kind = ModelKind::pls;
  TargetScaler scaler;
  std::optional<PlsModel> pls;
  std::optional<nn::Network> network;
  std::vector<nn::EpochRecord> history;
  // Split used to produce the training rows, so a dataset can be re-split for evaluation.
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;

  Eigen::Index input_width() const {
    return pls ? pls->inputs() : static_cast<Eigen::Index>(network->spec.input_width);
  }

  /// Predictions in original concentration units.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const {
    if (x.cols() != input_width())
      throw DimensionError("model expects " + std::to_string(input_width()) + " spectral channels, got " +
                           std::to_string(x.cols()));
    const Eigen::MatrixXd scaled = pls ? predict_pls(*pls, x) : nn::forward(*network, x);
    return scaler.invert(scaled);
  }
};

/// Fits the target scaler on `y`, then trains `kind` on standardised targets.
/// Spectra are used as given.
inline TrainedModel train_model(ModelKind kind, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                const ModelOptions& opt, std::uint64_t seed) {
  TrainedModel m;
  m.kind = kind;
  m.scaler = fit_target_scaler(y);
  const Eigen::MatrixXd ys = m.scaler.apply(y);
  if (kind == ModelKind::pls) {
    const int cap = static_cast<int>(std::min<Eigen::Index>({static_cast<Eigen::Index>(opt.pls_max_components),
                                                             x.rows() - 1, x.cols()}));
    if (cap < 1) throw ValidationError("PLS needs at least 2 training rows");
    const int k = select_components(x, ys, cap, opt.pls_validation_fraction, seed);
    m.pls = fit_pls(x, ys, k);
  } else {
    nn::TrainConfig cfg = opt.train;
    cfg.seed = seed;
    auto trained = nn::train(network_spec_for(kind, static_cast<std::size_t>(x.cols())), cfg, x, ys);
    m.network = std::move(trained.network);
    m.history = std::move(trained.history);
  }
  return m;
}

struct EvalReport {
  std::string model;
  std::string dataset;
  std::size_t test_rows = 0;
  RegressionMetrics metrics;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline EvalReport evaluate_model(const TrainedModel& model, const Eigen::MatrixXd& x_test,
                                 const Eigen::MatrixXd& y_test, std::string dataset_label = {}) {
  if (x_test.rows() == 0) throw ValidationError("evaluation needs a non-empty test set");
  if (x_test.rows() != y_test.rows()) throw DimensionError("test spectra and targets differ in row count");
  EvalReport r;
  r.model = std::string(model_name(model.kind));
  r.dataset = std::move(dataset_label);
  r.test_rows = static_cast<std::size_t>(x_test.rows());
  r.metrics = regression_metrics(y_test, model.predict(x_test));
  return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  const auto& m = r.metrics;
  return {{"model", r.model},
          {"dataset", r.dataset},
          {"test_rows", r.test_rows},
          {"rmse", m.rmse},
          {"r2", m.r2},
          {"explained_variance", m.explained_variance},
          {"rmse_avg", m.rmse_avg},
          {"r2_avg", m.r2_avg},
          {"explained_variance_avg", m.explained_variance_avg}};
}

// --- Model files -------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const TrainedModel& m) {
  nlohmann::json j = {{"format", "ramix-model"},
                      {"version", kModelFormatVersion},
                      {"kind", model_name(m.kind)},
                      {"scaler", {{"mean", detail::row_to_json(m.scaler.mean)}, {"std", detail::row_to_json(m.scaler.std)}}},
                      {"split", {{"seed", m.split_seed}, {"train_fraction", m.train_fraction}}}};
  if (m.pls) j["pls"] = pls_to_json(*m.pls);
  if (m.network) j["network"] = nn::network_to_json(*m.network);
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "ramix-model") throw ParseError("not a ramix model file");
    if (j.at("version").get<int>() != kModelFormatVersion) throw ParseError("unsupported model file version");
    TrainedModel m;
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.scaler.mean = detail::row_from_json(j.at("scaler").at("mean"));
    m.scaler.std = detail::row_from_json(j.at("scaler").at("std"));
    m.split_seed = j.at("split").at("seed").get<std::uint64_t>();
    m.train_fraction = j.at("split").at("train_fraction").get<double>();
    if (m.kind == ModelKind::pls)
      m.pls = pls_from_json(j.at("pls"));
    else
      m.network = nn::network_from_json(j.at("network"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  text::write_file(path, model_to_json(m).dump() + "\n");
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(nlohmann::json::parse(text::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace ramix
