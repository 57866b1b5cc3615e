#pragma once

// Minimal tape-based reverse-mode differentiation over dense tensors, with
// just the operations the regressors need: dense, conv1d, relu, max-pool,
// flatten, add and mean-squared error.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ramix/errors.hpp"

namespace ramix::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Row-major buffer with a shape and an optional gradient of the same size.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty when absent

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), values(element_count(shape), fill) {}
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != element_count(shape))
      throw DimensionError("tensor buffer of " + std::to_string(values.size()) + " values does not fit shape " +
                           shape_string(shape));
  }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad() { grad.assign(values.size(), 0.0); }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape == b.shape && a.values == b.values; }
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& tensor() const;
  const Shape& shape() const { return tensor().shape; }
  const std::vector<double>& values() const { return tensor().values; }
  const std::vector<double>& grad() const { return tensor().grad; }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/**
 * Records operations in execution order. backward() walks the records in
 * reverse, which is a valid topological order because every node only
 * refers to earlier nodes. Gradients accumulate into each node's tensor.
 */
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var leaf(Tensor t, bool requires_grad) {
    nodes_.push_back({std::move(t), requires_grad, {}});
    return {this, nodes_.size() - 1};
  }

  Tensor& at(std::size_t id) { return nodes_.at(id).tensor; }
  const Tensor& at(std::size_t id) const { return nodes_.at(id).tensor; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds an op output. `backward` is kept only if some input needs gradients.
  Var record(Tensor out, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool rg = false;
    for (auto v : inputs) rg = rg || requires_grad(v);
    nodes_.push_back({std::move(out), rg, rg ? std::move(backward) : BackwardFn{}});
    return {this, nodes_.size() - 1};
  }

  /// Gradient buffer of node `id`, allocated (zeroed) on first use.
  std::vector<double>& grad_of(std::size_t id) {
    auto& t = nodes_.at(id).tensor;
    if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
    return t.grad;
  }

  void backward(Var root, const std::vector<double>& seed) {
    if (root.tape() != this) throw Error("backward: variable belongs to another tape");
    auto& g = grad_of(root.id());
    if (seed.size() != g.size()) throw DimensionError("backward: seed gradient size mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.backward && node.tensor.has_grad()) node.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor tensor;
    bool requires_grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::tensor() const { return tape_->at(id_); }

namespace ops {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

inline Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

/// x[n, in] (any shape with n leading rows) * W[out, in]^T + b[out] -> [n, out]
inline Var dense(Var x, Var w, Var b) {
  Tape& tape = *x.tape();
  const std::size_t n = x.shape().at(0);
  const std::size_t in = n ? x.tensor().size() / n : 0;
  const auto& ws = w.shape();
  if (ws.size() != 2 || ws[1] != in || b.tensor().size() != ws[0])
    throw DimensionError("dense: input " + shape_string(x.shape()) + " incompatible with weight " + shape_string(ws));
  const std::size_t out = ws[0];

  Tensor y({n, out});
  {
    ConstMap xm(x.values().data(), ix(n), ix(in));
    ConstMap wm(w.values().data(), ix(out), ix(in));
    Eigen::Map<const Eigen::RowVectorXd> bm(b.values().data(), ix(out));
    MutMap ym(y.values.data(), ix(n), ix(out));
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += bm;
  }
  const auto xi = x.id(), wi = w.id(), bi = b.id();
  return tape.record(std::move(y), {x, w, b}, [=](Tape& t, std::size_t self) {
    ConstMap gy(t.at(self).grad.data(), ix(n), ix(out));
    if (t.requires_grad(xi)) {
      MutMap gx(t.grad_of(xi).data(), ix(n), ix(in));
      gx.noalias() += gy * ConstMap(t.at(wi).values.data(), ix(out), ix(in));
    }
    if (t.requires_grad(wi)) {
      MutMap gw(t.grad_of(wi).data(), ix(out), ix(in));
      gw.noalias() += gy.transpose() * ConstMap(t.at(xi).values.data(), ix(n), ix(in));
    }
    if (t.requires_grad(bi)) {
      Eigen::Map<Eigen::RowVectorXd> gb(t.grad_of(bi).data(), ix(out));
      gb += gy.colwise().sum();
    }
  });
}

inline Var relu(Var x) {
  Tape& tape = *x.tape();
  Tensor y(x.shape());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) y.values[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const auto xi = x.id();
  return tape.record(std::move(y), {x}, [=](Tape& t, std::size_t self) {
    const auto& gy = t.at(self).grad;
    const auto& xv = t.at(xi).values;
    auto& gx = t.grad_of(xi);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xv[i] > 0.0) gx[i] += gy[i];
  });
}

/// Elementwise sum of two same-shape tensors.
inline Var add(Var a, Var b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  Tape& tape = *a.tape();
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.values[i] = a.values()[i] + b.values()[i];
  const auto ai = a.id(), bi = b.id();
  return tape.record(std::move(y), {a, b}, [=](Tape& t, std::size_t self) {
    const auto& gy = t.at(self).grad;
    for (auto id : {ai, bi}) {
      if (!t.requires_grad(id)) continue;
      auto& g = t.grad_of(id);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
  });
}

/// Same values, new shape with equal element count.
inline Var reshape(Var x, Shape shape) {
  if (element_count(shape) != x.tensor().size())
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  Tape& tape = *x.tape();
  Tensor y(std::move(shape), x.values());
  const auto xi = x.id();
  return tape.record(std::move(y), {x}, [=](Tape& t, std::size_t self) {
    const auto& gy = t.at(self).grad;
    auto& gx = t.grad_of(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

/// [n, c, L] -> [n, c * L]
inline Var flatten(Var x) {
  const auto& s = x.shape();
  if (s.empty()) throw DimensionError("flatten: scalar input");
  return reshape(x, {s[0], x.tensor().size() / std::max<std::size_t>(s[0], 1)});
}

inline std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
  const std::size_t padded = length + 2 * padding;
  if (kernel == 0 || stride == 0 || padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

/**
 * 1-D cross-correlation. x[n, cin, L], w[cout, cin, K], b[cout] ->
 * y[n, cout, Lout] with Lout = (L + 2 pad - K) / stride + 1 and zero padding.
 * Each output is bias + sum over (ci, k) in row-major order of w * x; padded
 * taps are skipped.
 */
inline Var conv1d(Var x, Var w, Var b, std::size_t stride, std::size_t padding) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 3 || xs[1] != ws[1] || b.tensor().size() != ws[0])
    throw DimensionError("conv1d: input " + shape_string(xs) + " incompatible with weight " + shape_string(ws));
  const std::size_t n = xs[0], cin = xs[1], len = xs[2];
  const std::size_t cout = ws[0], kernel = ws[2];
  const std::size_t lout = conv_output_length(len, kernel, stride, padding);
  if (lout == 0) throw DimensionError("conv1d: kernel longer than padded input");

  // Valid tap range [k0, k1) for output position o.
  auto taps = [=](std::size_t o, std::size_t& k0, std::size_t& k1) {
    const auto base = static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(padding);
    k0 = base < 0 ? static_cast<std::size_t>(-base) : 0;
    const auto end = base + static_cast<std::ptrdiff_t>(kernel);
    k1 = end > static_cast<std::ptrdiff_t>(len) ? kernel - static_cast<std::size_t>(end - static_cast<std::ptrdiff_t>(len))
                                                : kernel;
    return base;
  };

  Tensor y({n, cout, lout});
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  const double* bv = b.values().data();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t co = 0; co < cout; ++co) {
      double* yrow = &y.values[(s * cout + co) * lout];
      for (std::size_t o = 0; o < lout; ++o) {
        std::size_t k0, k1;
        const auto base = taps(o, k0, k1);
        double acc = bv[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* wr = wv + (co * cin + ci) * kernel;
          const double* xr = xv + (s * cin + ci) * len;
          for (std::size_t k = k0; k < k1; ++k) acc += wr[k] * xr[base + static_cast<std::ptrdiff_t>(k)];
        }
        yrow[o] = acc;
      }
    }

  const auto xi = x.id(), wi = w.id(), bi = b.id();
  return x.tape()->record(std::move(y), {x, w, b}, [=](Tape& t, std::size_t self) {
    const double* gy = t.at(self).grad.data();
    const double* xv = t.at(xi).values.data();
    const double* wv = t.at(wi).values.data();
    double* gx = t.requires_grad(xi) ? t.grad_of(xi).data() : nullptr;
    double* gw = t.requires_grad(wi) ? t.grad_of(wi).data() : nullptr;
    double* gb = t.requires_grad(bi) ? t.grad_of(bi).data() : nullptr;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t co = 0; co < cout; ++co) {
        const double* gyrow = gy + (s * cout + co) * lout;
        for (std::size_t o = 0; o < lout; ++o) {
          const double g = gyrow[o];
          if (g == 0.0) continue;
          if (gb) gb[co] += g;
          std::size_t k0, k1;
          const auto base = taps(o, k0, k1);
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const std::size_t wo = (co * cin + ci) * kernel;
            const std::ptrdiff_t xo = static_cast<std::ptrdiff_t>((s * cin + ci) * len) + base;
            if (gw)
              for (std::size_t k = k0; k < k1; ++k) gw[wo + k] += g * xv[xo + static_cast<std::ptrdiff_t>(k)];
            if (gx)
              for (std::size_t k = k0; k < k1; ++k) gx[xo + static_cast<std::ptrdiff_t>(k)] += g * wv[wo + k];
          }
        }
      }
  });
}

/// Non-overlapping max over windows of `width` along the last axis of
/// x[n, c, L]; a trailing partial window is dropped. Ties go to the first index.
inline Var maxpool1d(Var x, std::size_t width) {
  const auto& xs = x.shape();
  if (xs.size() != 3 || width == 0 || xs[2] < width)
    throw DimensionError("maxpool1d: cannot pool " + shape_string(xs) + " with width " + std::to_string(width));
  const std::size_t rows = xs[0] * xs[1], len = xs[2], lout = len / width;
  Tensor y({xs[0], xs[1], lout});
  std::vector<std::size_t> arg(rows * lout);
  const double* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < lout; ++o) {
      const std::size_t start = r * len + o * width;
      std::size_t best = start;
      for (std::size_t k = start + 1; k < start + width; ++k)
        if (xv[k] > xv[best]) best = k;
      y.values[r * lout + o] = xv[best];
      arg[r * lout + o] = best;
    }
  const auto xi = x.id();
  return x.tape()->record(std::move(y), {x}, [=, arg = std::move(arg)](Tape& t, std::size_t self) {
    const auto& gy = t.at(self).grad;
    auto& gx = t.grad_of(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[arg[i]] += gy[i];
  });
}

/// mean((pred - target)^2) over every element, as a one-element tensor.
inline Var mse(Var pred, Var target) {
  if (pred.shape() != target.shape())
    throw DimensionError("mse: prediction " + shape_string(pred.shape()) + " vs target " +
                         shape_string(target.shape()));
  const auto& p = pred.values();
  const auto& y = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - y[i]) * (p[i] - y[i]);
  const double count = static_cast<double>(p.size());
  Tensor out({1}, acc / count);
  const auto pi = pred.id(), yi = target.id();
  return pred.tape()->record(std::move(out), {pred, target}, [=](Tape& t, std::size_t self) {
    const double g = t.at(self).grad[0];
    const auto& p = t.at(pi).values;
    const auto& y = t.at(yi).values;
    if (t.requires_grad(pi)) {
      auto& gp = t.grad_of(pi);
      for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * 2.0 * (p[i] - y[i]) / count;
    }
    if (t.requires_grad(yi)) {
      auto& gt = t.grad_of(yi);
      for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= g * 2.0 * (p[i] - y[i]) / count;
    }
  });
}

}  // namespace ops
}  // namespace ramix::nn
