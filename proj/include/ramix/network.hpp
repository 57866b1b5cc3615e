#pragma once

// Layer-list network specs, parameter initialisation, forward/backward
// passes, finite-difference gradient checking, and early-stopped Adam
// training for the neural regressors.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ramix/autograd.hpp"
#include "ramix/errors.hpp"
#include "ramix/rng.hpp"
#include "ramix/spectral.hpp"
#include "ramix/text_io.hpp"

namespace ramix::nn {

struct Dense {
  std::size_t in = 0, out = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};
struct Conv1d {
  std::size_t kernel = 1, in_channels = 1, out_channels = 1, stride = 1, padding = 0;
  friend bool operator==(const Conv1d&, const Conv1d&) = default;
};
struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};
struct MaxPool {
  std::size_t width = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
/// relu(x + conv(relu(conv(x)))) with two same-padded convolutions; odd kernel.
struct Residual {
  std::size_t channels = 1, kernel = 3;
  friend bool operator==(const Residual&, const Residual&) = default;
};

using Layer = std::variant<Dense, Conv1d, Relu, MaxPool, Flatten, Residual>;

struct NetworkSpec {
  std::string name;
  std::size_t input_width = 1800;
  std::size_t outputs = kAnalytes;
  std::vector<Layer> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Per-sample activation shape. The input is a 1-channel sequence; after
/// a Flatten or Dense it is a flat feature vector.
struct ActivationShape {
  std::size_t channels = 1;
  std::size_t length = 0;
  bool flat = false;

  std::size_t features() const noexcept { return channels * length; }
};

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

/// Shapes after each layer (index 0 is the input). Throws ValidationError
/// naming the first layer whose input does not fit.
inline std::vector<ActivationShape> infer_shapes(const NetworkSpec& spec) {
  std::vector<ActivationShape> shapes{{1, spec.input_width, false}};
  if (spec.input_width == 0) throw ValidationError(spec.name + ": input width must be > 0");
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const ActivationShape cur = shapes.back();
    auto fail = [&](const std::string& why) {
      throw ValidationError(spec.name + ": layer " + std::to_string(i) + ": " + why);
    };
    ActivationShape next = std::visit(
        overloaded{
            [&](const Dense& d) -> ActivationShape {
              if (!cur.flat && cur.channels != 1) fail("dense needs a flat input (add flatten)");
              if (d.in != cur.features())
                fail("dense expects " + std::to_string(d.in) + " inputs, gets " + std::to_string(cur.features()));
              if (d.out == 0) fail("dense with zero outputs");
              return {1, d.out, true};
            },
            [&](const Conv1d& c) -> ActivationShape {
              if (cur.flat) fail("conv1d needs a sequence input");
              if (c.in_channels != cur.channels)
                fail("conv1d expects " + std::to_string(c.in_channels) + " channels, gets " +
                     std::to_string(cur.channels));
              if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0) fail("conv1d with zero size");
              const auto len = ops::conv_output_length(cur.length, c.kernel, c.stride, c.padding);
              if (len == 0) fail("conv1d kernel longer than its input");
              return {c.out_channels, len, false};
            },
            [&](const Relu&) -> ActivationShape { return cur; },
            [&](const MaxPool& p) -> ActivationShape {
              if (cur.flat) fail("maxpool needs a sequence input");
              if (p.width == 0 || cur.length < p.width) fail("maxpool width exceeds input length");
              return {cur.channels, cur.length / p.width, false};
            },
            [&](const Flatten&) -> ActivationShape { return {1, cur.features(), true}; },
            [&](const Residual& r) -> ActivationShape {
              if (cur.flat) fail("residual block needs a sequence input");
              if (r.channels != cur.channels) fail("residual block channel mismatch");
              if (r.kernel % 2 == 0) fail("residual block kernel must be odd");
              return cur;
            },
        },
        spec.layers[i]);
    shapes.push_back(next);
  }
  const auto& last = shapes.back();
  if (!last.flat || last.features() != spec.outputs)
    throw ValidationError(spec.name + ": network must end in " + std::to_string(spec.outputs) + " flat outputs");
  return shapes;
}

/// Parameter tensor shapes in layer order (weights then biases).
inline std::vector<Shape> parameter_shapes(const NetworkSpec& spec) {
  infer_shapes(spec);
  std::vector<Shape> out;
  for (const auto& layer : spec.layers)
    std::visit(overloaded{
                   [&](const Dense& d) {
                     out.push_back({d.out, d.in});
                     out.push_back({d.out});
                   },
                   [&](const Conv1d& c) {
                     out.push_back({c.out_channels, c.in_channels, c.kernel});
                     out.push_back({c.out_channels});
                   },
                   [&](const Residual& r) {
                     for (int k = 0; k < 2; ++k) {
                       out.push_back({r.channels, r.channels, r.kernel});
                       out.push_back({r.channels});
                     }
                   },
                   [](const auto&) {},
               },
               layer);
  return out;
}

inline std::size_t parameter_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes(spec)) n += element_count(s);
  return n;
}

// --- Architectures --------------------------------------------------------

/// dense(width -> 64), relu, dense(64 -> 5)
inline NetworkSpec simple_nn_spec(std::size_t input_width = 1800) {
  return {"simplenn", input_width, kAnalytes, {Dense{input_width, 64}, Relu{}, Dense{64, kAnalytes}}};
}

/// conv1d(k16, 1 -> 8, stride 2), relu, maxpool(4), flatten, dense(-> 64), relu, dense(64 -> 5)
inline NetworkSpec simple_cnn_spec(std::size_t input_width = 1800) {
  const std::size_t conv_len = ops::conv_output_length(input_width, 16, 2, 0);
  const std::size_t flat = 8 * (conv_len / 4);
  return {"simplecnn",
          input_width,
          kAnalytes,
          {Conv1d{16, 1, 8, 2, 0}, Relu{}, MaxPool{4}, Flatten{}, Dense{flat, 64}, Relu{}, Dense{64, kAnalytes}}};
}

/// Reduced-depth 1-D residual network (experimental).
inline NetworkSpec resnet_spec(std::size_t input_width = 1800, std::size_t blocks = 8) {
  NetworkSpec s{"resnet", input_width, kAnalytes, {Conv1d{7, 1, 16, 2, 3}, Relu{}, MaxPool{2}}};
  for (std::size_t b = 0; b < blocks; ++b) s.layers.push_back(Residual{16, 3});
  const std::size_t len = ops::conv_output_length(input_width, 7, 2, 3) / 2 / 4;
  s.layers.push_back(MaxPool{4});
  s.layers.push_back(Flatten{});
  s.layers.push_back(Dense{16 * len, 64});
  s.layers.push_back(Relu{});
  s.layers.push_back(Dense{64, kAnalytes});
  return s;
}

// --- Network ---------------------------------------------------------------

struct Network {
  NetworkSpec spec;
  std::vector<Tensor> params;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  friend bool operator==(const Network&, const Network&) = default;
};

/// Glorot-uniform weights, zero biases.
inline Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network net{spec, {}};
  RngStream rng(seed, 0x1A17ull);
  for (auto& shape : parameter_shapes(spec)) {
    Tensor t(shape);
    if (shape.size() > 1) {
      const std::size_t receptive = shape.size() == 3 ? shape[2] : 1;
      const double fan_in = static_cast<double>(shape[1] * receptive);
      const double fan_out = static_cast<double>(shape[0] * receptive);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : t.values) v = rng.uniform(-limit, limit);
    }
    net.params.push_back(std::move(t));
  }
  return net;
}

inline Network zero_network(const NetworkSpec& spec) {
  Network net{spec, {}};
  for (auto& shape : parameter_shapes(spec)) net.params.emplace_back(shape);
  return net;
}

/// Records the network applied to `input` ([n, 1, width]) on the input's tape.
inline Var build_forward(const NetworkSpec& spec, const std::vector<Var>& params, Var input) {
  Var h = input;
  std::size_t p = 0;
  for (const auto& layer : spec.layers) {
    h = std::visit(overloaded{
                       [&](const Dense&) {
                         Var out = ops::dense(h, params.at(p), params.at(p + 1));
                         p += 2;
                         return out;
                       },
                       [&](const Conv1d& c) {
                         Var out = ops::conv1d(h, params.at(p), params.at(p + 1), c.stride, c.padding);
                         p += 2;
                         return out;
                       },
                       [&](const Relu&) { return ops::relu(h); },
                       [&](const MaxPool& m) { return ops::maxpool1d(h, m.width); },
                       [&](const Flatten&) { return ops::flatten(h); },
                       [&](const Residual& r) {
                         const std::size_t pad = r.kernel / 2;
                         Var a = ops::relu(ops::conv1d(h, params.at(p), params.at(p + 1), 1, pad));
                         Var b = ops::conv1d(a, params.at(p + 2), params.at(p + 3), 1, pad);
                         p += 4;
                         return ops::relu(ops::add(h, b));
                       },
                   },
                   layer);
  }
  return h;
}

namespace detail {

inline Tensor batch_tensor(const Eigen::MatrixXd& x, Eigen::Index row0, Eigen::Index rows) {
  Tensor t({static_cast<std::size_t>(rows), 1, static_cast<std::size_t>(x.cols())});
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      t.values[static_cast<std::size_t>(r * x.cols() + c)] = x(row0 + r, c);
  return t;
}

inline Tensor target_tensor(const Eigen::MatrixXd& y, Eigen::Index row0, Eigen::Index rows) {
  Tensor t({static_cast<std::size_t>(rows), static_cast<std::size_t>(y.cols())});
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < y.cols(); ++c) t.values[static_cast<std::size_t>(r * y.cols() + c)] = y(row0 + r, c);
  return t;
}

inline void check_input(const NetworkSpec& spec, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != spec.input_width)
    throw DimensionError(spec.name + " expects " + std::to_string(spec.input_width) + " input columns, got " +
                         std::to_string(x.cols()));
}

}  // namespace detail

/// Inference in chunks of `chunk` rows; returns n x outputs.
inline Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& x, Eigen::Index chunk = 256) {
  detail::check_input(net.spec, x);
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(net.spec.outputs));
  for (Eigen::Index r0 = 0; r0 < x.rows(); r0 += chunk) {
    const Eigen::Index rows = std::min(chunk, x.rows() - r0);
    Tape tape;
    std::vector<Var> params;
    for (const auto& p : net.params) params.push_back(tape.leaf(Tensor(p.shape, p.values), false));
    Var y = build_forward(net.spec, params, tape.leaf(detail::batch_tensor(x, r0, rows), false));
    const auto& v = y.values();
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(r0 + r, c) = v[static_cast<std::size_t>(r * out.cols() + c)];
  }
  return out;
}

inline double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& y) {
  if (pred.rows() != y.rows() || pred.cols() != y.cols()) throw DimensionError("mse_loss: shape mismatch");
  return (pred - y).squaredNorm() / static_cast<double>(pred.size());
}

/// dL/dpred of mean-squared error.
inline Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& y) {
  if (pred.rows() != y.rows() || pred.cols() != y.cols()) throw DimensionError("mse_gradient: shape mismatch");
  return 2.0 * (pred - y) / static_cast<double>(pred.size());
}

/**
 * A recorded forward pass. backward() propagates a gradient with respect to
 * the predictions back to every parameter; it needs a preceding forward()
 * and may be called once per forward().
 */
class Session {
 public:
  explicit Session(const Network& net) : net_(&net) {}

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) {
    detail::check_input(net_->spec, x);
    tape_ = std::make_unique<Tape>();
    params_.clear();
    for (const auto& p : net_->params) params_.push_back(tape_->leaf(Tensor(p.shape, p.values), true));
    output_ = build_forward(net_->spec, params_, tape_->leaf(detail::batch_tensor(x, 0, x.rows()), false));
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(net_->spec.outputs));
    const auto& v = output_.values();
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = v[static_cast<std::size_t>(r * out.cols() + c)];
    return out;
  }

  std::vector<Tensor> backward(const Eigen::MatrixXd& output_grad) {
    if (!tape_) throw Error("backward called without a recorded forward pass");
    const auto n = static_cast<Eigen::Index>(output_.shape()[0]);
    const auto k = static_cast<Eigen::Index>(net_->spec.outputs);
    if (output_grad.rows() != n || output_grad.cols() != k) throw DimensionError("backward: gradient shape mismatch");
    std::vector<double> seed(static_cast<std::size_t>(n * k));
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < k; ++c) seed[static_cast<std::size_t>(r * k + c)] = output_grad(r, c);
    tape_->backward(output_, seed);
    std::vector<Tensor> grads;
    for (const auto& p : params_) {
      Tensor g(p.shape());
      if (p.tensor().has_grad()) g.values = p.tensor().grad;
      grads.push_back(std::move(g));
    }
    tape_.reset();
    return grads;
  }

 private:
  const Network* net_;
  std::unique_ptr<Tape> tape_;
  std::vector<Var> params_;
  Var output_;
};

/// Mean-squared-error loss and its parameter gradients on one batch.
inline double loss_and_gradients(const Network& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                 std::vector<Tensor>& grads) {
  Session s(net);
  const Eigen::MatrixXd pred = s.forward(x);
  grads = s.backward(mse_gradient(pred, y));
  return mse_loss(pred, y);
}

struct GradientCheckOptions {
  double eps = 1e-4;
  double floor = 1e-7;          // denominator floor for the relative error
  std::size_t max_checked = 0;  // 0 checks every parameter; otherwise a seeded sample
  std::uint64_t seed = 0;
};

/**
 * Largest relative error between backpropagated gradients of the MSE loss
 * and central differences (L(θ+ε) - L(θ-ε)) / 2ε, taken parameter by
 * parameter. Relative error is |g - g_fd| / max(|g|, |g_fd|, floor).
 */
inline double gradient_check(const Network& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             GradientCheckOptions opt = {}) {
  std::vector<Tensor> grads;
  loss_and_gradients(net, x, y, grads);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < net.params.size(); ++t)
    for (std::size_t i = 0; i < net.params[t].size(); ++i) coords.emplace_back(t, i);
  if (opt.max_checked && opt.max_checked < coords.size()) {
    RngStream rng(opt.seed, 0x6C4Eull);
    auto perm = rng.permutation(coords.size());
    std::vector<std::pair<std::size_t, std::size_t>> picked;
    for (std::size_t i = 0; i < opt.max_checked; ++i) picked.push_back(coords[perm[i]]);
    coords = std::move(picked);
  }

  Network probe = net;
  double worst = 0.0;
  for (auto [t, i] : coords) {
    double& theta = probe.params[t].values[i];
    const double saved = theta;
    theta = saved + opt.eps;
    const double up = mse_loss(forward(probe, x), y);
    theta = saved - opt.eps;
    const double down = mse_loss(forward(probe, x), y);
    theta = saved;
    const double numeric = (up - down) / (2.0 * opt.eps);
    const double analytic = grads[t].values[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.floor});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

// --- Training --------------------------------------------------------------

struct TrainConfig {
  std::size_t max_epochs = 200;
  double validation_fraction = 0.25;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_epochs < 1) throw ValidationError("max epochs must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ValidationError("validation fraction must be in (0, 1)");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainedNetwork {
  Network network;  // parameters from the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

namespace detail {

struct Adam {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;

  explicit Adam(const Network& net) {
    for (const auto& p : net.params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }

  void update(Network& net, const std::vector<Tensor>& grads, const TrainConfig& c) {
    ++step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
    for (std::size_t t = 0; t < net.params.size(); ++t) {
      auto& p = net.params[t].values;
      const auto& g = grads[t].values;
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[t][i] = c.beta1 * m[t][i] + (1.0 - c.beta1) * g[i];
        v[t][i] = c.beta2 * v[t][i] + (1.0 - c.beta2) * g[i] * g[i];
        p[i] -= c.learning_rate * (m[t][i] / bc1) / (std::sqrt(v[t][i] / bc2) + c.epsilon);
      }
    }
  }
};

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows, std::size_t begin,
                                   std::size_t end) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace detail

/**
 * Mini-batch Adam on mean-squared error with early stopping.
 *
 * A seeded permutation of the rows holds out `validation_fraction` of them
 * for validation. Each epoch shuffles the remaining rows, runs one pass of
 * mini-batches, and records the mean batch loss plus the validation loss.
 * Training stops after `patience` consecutive epochs without a strict
 * validation improvement (patience 0 stops at the first such epoch) or at
 * `max_epochs`; the parameters of the best validation epoch are returned.
 */
inline TrainedNetwork train(const NetworkSpec& spec, const TrainConfig& cfg, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& y) {
  cfg.validate();
  infer_shapes(spec);
  detail::check_input(spec, x);
  if (x.rows() != y.rows()) throw DimensionError("train: X and Y row counts differ");
  if (static_cast<std::size_t>(y.cols()) != spec.outputs) throw DimensionError("train: target width mismatch");
  if (x.rows() < 4) throw ValidationError("train needs at least 4 rows");

  const auto n = static_cast<std::size_t>(x.rows());
  RngStream split_rng(cfg.seed, 0x7A11ull);
  const auto perm = split_rng.permutation(n);
  auto n_fit = static_cast<std::size_t>(std::ceil((1.0 - cfg.validation_fraction) * static_cast<double>(n) - 1e-9));
  n_fit = std::clamp<std::size_t>(n_fit, 1, n - 1);
  std::vector<std::size_t> fit_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_fit));
  const std::vector<std::size_t> val_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_fit), perm.end());
  const Eigen::MatrixXd xv = detail::gather_rows(x, val_rows, 0, val_rows.size());
  const Eigen::MatrixXd yv = detail::gather_rows(y, val_rows, 0, val_rows.size());

  TrainedNetwork result{init_network(spec, cfg.seed), {}, 0};
  Network net = result.network;
  detail::Adam adam(net);
  double best = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    RngStream shuffle(cfg.seed, 0x5100ull + epoch);
    const auto order = shuffle.permutation(n_fit);
    std::vector<std::size_t> rows(n_fit);
    for (std::size_t i = 0; i < n_fit; ++i) rows[i] = fit_rows[order[i]];

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<Tensor> grads;
    for (std::size_t b0 = 0; b0 < n_fit; b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(n_fit, b0 + cfg.batch_size);
      const double loss = loss_and_gradients(net, detail::gather_rows(x, rows, b0, b1),
                                             detail::gather_rows(y, rows, b0, b1), grads);
      if (!std::isfinite(loss))
        throw DivergenceError(spec.name + ": non-finite training loss at epoch " + std::to_string(epoch),
                              static_cast<int>(epoch));
      adam.update(net, grads, cfg);
      loss_sum += loss;
      ++batches;
    }
    const double val = mse_loss(forward(net, xv), yv);
    if (!std::isfinite(val))
      throw DivergenceError(spec.name + ": non-finite validation loss at epoch " + std::to_string(epoch),
                            static_cast<int>(epoch));
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), val});

    if (val < best) {
      best = val;
      result.best_epoch = epoch;
      result.network = net;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      break;
    }
  }
  return result;
}

// --- Serialisation -----------------------------------------------------------

inline constexpr int kNetworkFormatVersion = 1;

inline nlohmann::json layer_to_json(const Layer& layer) {
  return std::visit(overloaded{
                        [](const Dense& d) -> nlohmann::json { return {{"type", "dense"}, {"in", d.in}, {"out", d.out}}; },
                        [](const Conv1d& c) -> nlohmann::json {
                          return {{"type", "conv1d"},         {"kernel", c.kernel}, {"in_channels", c.in_channels},
                                  {"out_channels", c.out_channels}, {"stride", c.stride}, {"padding", c.padding}};
                        },
                        [](const Relu&) -> nlohmann::json { return {{"type", "relu"}}; },
                        [](const MaxPool& p) -> nlohmann::json { return {{"type", "maxpool"}, {"width", p.width}}; },
                        [](const Flatten&) -> nlohmann::json { return {{"type", "flatten"}}; },
                        [](const Residual& r) -> nlohmann::json {
                          return {{"type", "residual"}, {"channels", r.channels}, {"kernel", r.kernel}};
                        },
                    },
                    layer);
}

inline Layer layer_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "dense") return Dense{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>()};
  if (type == "conv1d")
    return Conv1d{j.at("kernel").get<std::size_t>(), j.at("in_channels").get<std::size_t>(),
                  j.at("out_channels").get<std::size_t>(), j.at("stride").get<std::size_t>(),
                  j.at("padding").get<std::size_t>()};
  if (type == "relu") return Relu{};
  if (type == "maxpool") return MaxPool{j.at("width").get<std::size_t>()};
  if (type == "flatten") return Flatten{};
  if (type == "residual") return Residual{j.at("channels").get<std::size_t>(), j.at("kernel").get<std::size_t>()};
  throw ParseError("unknown layer type '" + type + "'");
}

inline nlohmann::json spec_to_json(const NetworkSpec& s) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : s.layers) layers.push_back(layer_to_json(l));
  return {{"name", s.name}, {"input_width", s.input_width}, {"outputs", s.outputs}, {"layers", layers}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.name = j.at("name").get<std::string>();
  s.input_width = j.at("input_width").get<std::size_t>();
  s.outputs = j.at("outputs").get<std::size_t>();
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
  infer_shapes(s);
  return s;
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : net.params) params.push_back({{"shape", p.shape}, {"values", p.values}});
  return {{"format", "ramix-network"},
          {"version", kNetworkFormatVersion},
          {"spec", spec_to_json(net.spec)},
          {"params", params}};
}

inline Network network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "ramix-network") throw ParseError("not a network file");
    if (j.at("version").get<int>() != kNetworkFormatVersion) throw ParseError("unsupported network version");
    Network net;
    net.spec = spec_from_json(j.at("spec"));
    const auto shapes = parameter_shapes(net.spec);
    const auto& params = j.at("params");
    if (params.size() != shapes.size()) throw ParseError("parameter tensor count does not match the layer list");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      Tensor t(params[i].at("shape").get<Shape>(), params[i].at("values").get<std::vector<double>>());
      if (t.shape != shapes[i]) throw ParseError("parameter " + std::to_string(i) + " has the wrong shape");
      net.params.push_back(std::move(t));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("network: ") + e.what());
  }
}

/// epoch,train_loss,validation_loss
inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,validation_loss\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + ',';
    text::append_double(out, h.train_loss);
    out += ',';
    text::append_double(out, h.validation_loss);
    out += '\n';
  }
  return out;
}

}  // namespace ramix::nn
