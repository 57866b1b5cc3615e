#include <algorithm>
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ramix/network.hpp"

using namespace ramix;
using namespace ramix::nn;

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST(Specs, ComposeToFiveOutputs) {
  for (const auto& spec : {simple_nn_spec(), simple_cnn_spec(), resnet_spec()}) {
    const auto shapes = infer_shapes(spec);
    EXPECT_EQ(shapes.front().features(), 1800u) << spec.name;
    EXPECT_TRUE(shapes.back().flat) << spec.name;
    EXPECT_EQ(shapes.back().features(), 5u) << spec.name;
  }
}

TEST(Specs, DocumentedSizes) {
  EXPECT_EQ(parameter_count(simple_nn_spec()), 1800u * 64 + 64 + 64 * 5 + 5);
  // conv: (1800 - 16) / 2 + 1 = 893 positions, pooled by 4 to 223, times 8 channels.
  const auto cnn = infer_shapes(simple_cnn_spec());
  EXPECT_EQ(cnn[1].length, 893u);
  EXPECT_EQ(cnn[3].length, 223u);
  EXPECT_EQ(cnn[4].features(), 1784u);
  EXPECT_EQ(parameter_count(simple_cnn_spec()), 8u * 16 + 8 + 1784 * 64 + 64 + 64 * 5 + 5);
}

TEST(Specs, CnnSmallerThanResNet) {
  EXPECT_LT(parameter_count(simple_cnn_spec()), parameter_count(resnet_spec()));
}

TEST(Specs, BadCompositionRejected) {
  NetworkSpec s{"bad", 10, 5, {Dense{11, 5}}};
  EXPECT_THROW(infer_shapes(s), ValidationError);
  s.layers = {Dense{10, 4}};
  EXPECT_THROW(infer_shapes(s), ValidationError);
  s.layers = {Conv1d{3, 2, 4, 1, 0}, Flatten{}, Dense{32, 5}};
  EXPECT_THROW(infer_shapes(s), ValidationError);
}

TEST(Forward, ZeroNetworkGivesZero) {
  RngStream rng(1, 1);
  const auto x = normal_matrix(3, 1800, rng);
  for (const auto& spec : {simple_nn_spec(), simple_cnn_spec()})
    EXPECT_EQ(forward(zero_network(spec), x), Eigen::MatrixXd::Zero(3, 5)) << spec.name;
}

TEST(Forward, WidthMismatchRejected) {
  const auto net = init_network(simple_nn_spec(), 1);
  EXPECT_THROW(forward(net, Eigen::MatrixXd::Zero(2, 1799)), DimensionError);
}

TEST(Forward, ChunkingDoesNotChangeOutput) {
  RngStream rng(2, 2);
  const auto net = init_network(simple_cnn_spec(64), 3);
  const auto x = normal_matrix(10, 64, rng);
  // Matrix kernels may block differently per chunk size, so allow rounding.
  EXPECT_LT((forward(net, x, 3) - forward(net, x, 256)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Init, GlorotBoundsAndZeroBias) {
  const auto net = init_network(simple_nn_spec(), 5);
  const double limit = std::sqrt(6.0 / (1800.0 + 64.0));
  for (double v : net.params[0].values) ASSERT_LE(std::abs(v), limit);
  for (double v : net.params[1].values) ASSERT_EQ(v, 0.0);
  EXPECT_EQ(init_network(simple_nn_spec(), 5), net);
  EXPECT_NE(init_network(simple_nn_spec(), 6), net);
}

TEST(Session, BackwardNeedsForward) {
  const auto net = init_network(simple_nn_spec(8), 1);
  Session s(net);
  EXPECT_THROW(s.backward(Eigen::MatrixXd::Zero(1, 5)), Error);
}

TEST(Session, ZeroOutputGradientGivesZeroParameterGradients) {
  RngStream rng(3, 3);
  const auto net = init_network(simple_cnn_spec(64), 2);
  Session s(net);
  s.forward(normal_matrix(4, 64, rng));
  for (const auto& g : s.backward(Eigen::MatrixXd::Zero(4, 5)))
    for (double v : g.values) ASSERT_EQ(v, 0.0);
}

TEST(GradientCheck, LinearNetworkNearlyExact) {
  RngStream rng(4, 4);
  const NetworkSpec spec{"linear", 12, 5, {Dense{12, 7}, Dense{7, 5}}};
  const auto net = init_network(spec, 4);
  const auto x = normal_matrix(3, 12, rng);
  const auto y = normal_matrix(3, 5, rng);
  EXPECT_LT(gradient_check(net, x, y), 1e-6);
}

TEST(GradientCheck, SimpleNnReducedWidth) {
  RngStream rng(5, 5);
  const auto net = init_network(simple_nn_spec(64), 5);
  const auto x = normal_matrix(2, 64, rng);
  const auto y = normal_matrix(2, 5, rng);
  EXPECT_LT(gradient_check(net, x, y), 1e-3);
}

TEST(GradientCheck, SimpleNnFullWidthSampled) {
  RngStream rng(6, 6);
  const auto net = init_network(simple_nn_spec(), 6);
  GradientCheckOptions opt;
  opt.max_checked = 1500;
  opt.seed = 6;
  const auto x = normal_matrix(1, 1800, rng);
  const auto y = normal_matrix(1, 5, rng);
  EXPECT_LT(gradient_check(net, x, y, opt), 1e-3);
}

TEST(GradientCheck, SimpleCnnReducedWidth) {
  RngStream rng(7, 7);
  const auto net = init_network(simple_cnn_spec(64), 7);
  const auto x = normal_matrix(2, 64, rng);
  const auto y = normal_matrix(2, 5, rng);
  EXPECT_LT(gradient_check(net, x, y), 1e-3);
}

TEST(GradientCheck, ResidualNetworkReduced) {
  RngStream rng(8, 8);
  const auto net = init_network(resnet_spec(64, 2), 8);
  const auto x = normal_matrix(2, 64, rng);
  const auto y = normal_matrix(2, 5, rng);
  EXPECT_LT(gradient_check(net, x, y), 1e-3);
}

TEST(Train, LossFallsOnLinearToy) {
  RngStream rng(9, 9);
  const auto x = normal_matrix(5, 8, rng);
  const Eigen::MatrixXd y = x * normal_matrix(8, 5, rng);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 1;
  const auto r = train(simple_nn_spec(8), cfg, x, y);
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_LT(r.history[1].train_loss, r.history[0].train_loss);
  EXPECT_LT(r.history[2].train_loss, r.history[1].train_loss);
}

TEST(Train, PatienceZeroStopsAtFirstNonImprovement) {
  RngStream rng(10, 10);
  const auto x = normal_matrix(40, 16, rng);
  const auto y = normal_matrix(40, 5, rng);  // unlearnable: validation loss soon rises
  TrainConfig cfg;
  cfg.patience = 0;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const auto r = train(simple_nn_spec(16), cfg, x, y);
  ASSERT_GE(r.history.size(), 2u);
  ASSERT_LT(r.history.size(), cfg.max_epochs);
  for (std::size_t i = 1; i + 1 < r.history.size(); ++i)
    EXPECT_LT(r.history[i].validation_loss, r.history[i - 1].validation_loss);
  EXPECT_GE(r.history.back().validation_loss, r.history[r.history.size() - 2].validation_loss);
}

TEST(Train, DeterministicAndReturnsBestEpoch) {
  RngStream rng(11, 11);
  const auto x = normal_matrix(60, 32, rng);
  const Eigen::MatrixXd w = normal_matrix(32, 5, rng);
  const Eigen::MatrixXd y = (x * w).array().tanh().matrix() + 0.3 * normal_matrix(60, 5, rng);
  TrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.patience = 5;
  cfg.batch_size = 8;
  cfg.seed = 4;
  const auto a = train(simple_cnn_spec(32), cfg, x, y);
  const auto b = train(simple_cnn_spec(32), cfg, x, y);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.network, b.network);
  EXPECT_LE(a.history.size(), cfg.max_epochs);

  double best = std::numeric_limits<double>::infinity();
  for (const auto& h : a.history) best = std::min(best, h.validation_loss);
  EXPECT_EQ(a.history.at(a.best_epoch - 1).validation_loss, best);

  // Rebuild the validation rows and score the returned parameters on them.
  RngStream split(cfg.seed, 0x7A11);
  const auto perm = split.permutation(60);
  Eigen::MatrixXd xv(15, 32), yv(15, 5);
  for (Eigen::Index i = 0; i < 15; ++i) {
    xv.row(i) = x.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(45 + i)]));
    yv.row(i) = y.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(45 + i)]));
  }
  EXPECT_EQ(mse_loss(forward(a.network, xv), yv), best);
}

TEST(Train, DivergenceReportsEpoch) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(8, 4, 1e300);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(8, 5);
  TrainConfig cfg;
  try {
    train(simple_nn_spec(4), cfg, x, y);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 1);
  }
}

TEST(Train, InputChecks) {
  TrainConfig cfg;
  EXPECT_THROW(train(simple_nn_spec(4), cfg, Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Zero(3, 5)),
               ValidationError);
  cfg.validation_fraction = 1.0;
  EXPECT_THROW(train(simple_nn_spec(4), cfg, Eigen::MatrixXd::Zero(8, 4), Eigen::MatrixXd::Zero(8, 5)),
               ValidationError);
}

TEST(NetworkFile, JsonRoundTripIsExact) {
  for (const auto& spec : {simple_nn_spec(64), simple_cnn_spec(64), resnet_spec(64, 2)}) {
    const auto net = init_network(spec, 12);
    EXPECT_EQ(network_from_json(nlohmann::json::parse(network_to_json(net).dump())), net) << spec.name;
  }
}

TEST(NetworkFile, HistoryCsv) {
  const std::vector<EpochRecord> h{{1, 0.5, 0.25}, {2, 0.125, 0.2}};
  EXPECT_EQ(history_csv(h), "epoch,train_loss,validation_loss\n1,0.5,0.25\n2,0.125,0.2\n");
}
