// Copyright 2026 The codebook-forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Small fully connected networks with exact reverse-mode gradients, Adam
// with decoupled weight decay, Polyak target updates and the tanh-squashed
// Gaussian policy head used by the stochastic learner.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "cbforge/core.hpp"

namespace cbforge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Head {
  kLinear,    // identity
  kSquash,    // pi * tanh(z)
  kGaussian,  // first half of the rows is the mean, second half log-std (clamped)
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct NetGrad {
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;
  MatrixXd input;  // dL/dx
};

class DenseNet {
 public:
  // Activations cached by forward() for backward(). Columns are samples.
  struct Cache {
    std::vector<MatrixXd> inputs;  // input to each layer
    MatrixXd pre_head;             // last layer pre-activation
  };

  DenseNet() = default;

  // Hidden layers use U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the output layer
  // is additionally multiplied by `output_scale`.
  DenseNet(std::vector<std::size_t> sizes, Head head, Rng& rng, double output_scale = 1.0)
      : sizes_(std::move(sizes)), head_(head) {
    check_sizes();
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(sizes_[l]);
      const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
      double bound = 1.0 / std::sqrt(static_cast<double>(in));
      if (l + 2 == sizes_.size()) bound *= output_scale;
      MatrixXd w(out, in);
      VectorXd b(out);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = bound * unit(rng);
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = bound * unit(rng);
      weights_.push_back(std::move(w));
      biases_.push_back(std::move(b));
    }
  }

  // Zero-initialized network; tests and checkpoint loading fill it in.
  static DenseNet zeros(std::vector<std::size_t> sizes, Head head) {
    DenseNet net;
    net.sizes_ = std::move(sizes);
    net.head_ = head;
    net.check_sizes();
    for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(net.sizes_[l]);
      const auto out = static_cast<Eigen::Index>(net.sizes_[l + 1]);
      net.weights_.push_back(MatrixXd::Zero(out, in));
      net.biases_.push_back(VectorXd::Zero(out));
    }
    return net;
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Head head() const { return head_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t layers() const { return weights_.size(); }

  std::vector<MatrixXd>& weights() { return weights_; }
  const std::vector<MatrixXd>& weights() const { return weights_; }
  std::vector<VectorXd>& biases() { return biases_; }
  const std::vector<VectorXd>& biases() const { return biases_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
      n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
  }

  bool finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    return true;
  }

  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const {
    if (static_cast<std::size_t>(x.rows()) != input_size())
      throw DimensionError("network expects " + std::to_string(input_size()) + " inputs, got " +
                           std::to_string(x.rows()));
    if (cache) cache->inputs.clear();
    MatrixXd a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      MatrixXd z = weights_[l] * a;
      z.colwise() += biases_[l];
      if (cache) cache->inputs.push_back(std::move(a));
      if (l + 1 < weights_.size()) {
        a = z.cwiseMax(0.0);
      } else {
        if (cache) cache->pre_head = z;
        return apply_head(z);
      }
    }
    return a;  // unreachable: every net has at least one layer
  }

  VectorXd forward_one(const VectorXd& x) const { return forward(MatrixXd(x)).col(0); }

  // Reverse pass for loss gradient `upstream` = dL/dy. With
  // params = false only dL/dx is produced. `pre_extra`, if given, is an
  // additional loss gradient taken directly at the head pre-activation.
  NetGrad backward(const Cache& cache, const MatrixXd& upstream, bool params = true,
                   const MatrixXd* pre_extra = nullptr) const {
    if (upstream.rows() != cache.pre_head.rows() || upstream.cols() != cache.pre_head.cols())
      throw DimensionError("upstream gradient shape does not match the cached forward pass");
    NetGrad g;
    MatrixXd delta = head_backward(cache.pre_head, upstream);
    if (pre_extra) delta += *pre_extra;
    if (params) {
      g.weights.resize(weights_.size());
      g.biases.resize(weights_.size());
    }
    for (std::size_t l = weights_.size(); l-- > 0;) {
      if (params) {
        g.weights[l].noalias() = delta * cache.inputs[l].transpose();
        g.biases[l] = delta.rowwise().sum();
      }
      MatrixXd back = weights_[l].transpose() * delta;
      if (l > 0) back = back.cwiseProduct((cache.inputs[l].array() > 0.0).cast<double>().matrix());
      delta = std::move(back);
    }
    g.input = std::move(delta);
    return g;
  }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    if (a.sizes_ != b.sizes_ || a.head_ != b.head_) return false;
    for (std::size_t l = 0; l < a.weights_.size(); ++l)
      if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
    return true;
  }

 private:
  void check_sizes() const {
    if (sizes_.size() < 2) throw ConfigError("network needs at least an input and output size");
    for (auto s : sizes_)
      if (s == 0) throw ConfigError("layer sizes must be positive");
    if (head_ == Head::kGaussian && sizes_.back() % 2 != 0)
      throw ConfigError("gaussian head needs an even output size (mean and log-std rows)");
  }

  MatrixXd apply_head(const MatrixXd& z) const {
    switch (head_) {
      case Head::kLinear:
        return z;
      case Head::kSquash:
        return kPi * z.array().tanh().matrix();
      case Head::kGaussian: {
        MatrixXd y = z;
        const auto half = z.rows() / 2;
        y.bottomRows(half) = z.bottomRows(half).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
        return y;
      }
    }
    return z;
  }

  MatrixXd head_backward(const MatrixXd& z, const MatrixXd& up) const {
    switch (head_) {
      case Head::kLinear:
        return up;
      case Head::kSquash: {
        const Eigen::ArrayXXd t = z.array().tanh();
        return (up.array() * kPi * (1.0 - t.square())).matrix();
      }
      case Head::kGaussian: {
        MatrixXd d = up;
        const auto half = z.rows() / 2;
        const auto inside =
            (z.bottomRows(half).array() >= kLogStdMin && z.bottomRows(half).array() <= kLogStdMax)
                .cast<double>();
        d.bottomRows(half) = (up.bottomRows(half).array() * inside).matrix();
        return d;
      }
    }
    return up;
  }

  std::vector<std::size_t> sizes_;
  Head head_ = Head::kLinear;
  std::vector<MatrixXd> weights_;
  std::vector<VectorXd> biases_;
};

// Adam with bias correction. Weight decay is decoupled: weights shrink by
// lr * weight_decay before the moment-based step; biases are not decayed.
struct AdamState {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t step = 0;
  std::vector<MatrixXd> m_w, v_w;
  std::vector<VectorXd> m_b, v_b;

  AdamState() = default;
  AdamState(const DenseNet& net, double lr_, double weight_decay_)
      : lr(lr_), weight_decay(weight_decay_) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
      m_w.push_back(MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
      v_w.push_back(m_w.back());
      m_b.push_back(VectorXd::Zero(net.biases()[l].size()));
      v_b.push_back(m_b.back());
    }
  }
};

inline void adam_step(DenseNet& net, const NetGrad& g, AdamState& s) {
  if (g.weights.size() != net.layers() || s.m_w.size() != net.layers())
    throw DimensionError("optimizer state does not match the network");
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t l = 0; l < net.layers(); ++l) {
    auto& w = net.weights()[l];
    auto& b = net.biases()[l];
    if (s.weight_decay != 0.0) w *= (1.0 - s.lr * s.weight_decay);
    s.m_w[l] = s.beta1 * s.m_w[l] + (1.0 - s.beta1) * g.weights[l];
    s.v_w[l] = s.beta2 * s.v_w[l] + (1.0 - s.beta2) * g.weights[l].cwiseAbs2();
    w.array() -= s.lr * (s.m_w[l].array() / c1) / ((s.v_w[l].array() / c2).sqrt() + s.eps);
    s.m_b[l] = s.beta1 * s.m_b[l] + (1.0 - s.beta1) * g.biases[l];
    s.v_b[l] = s.beta2 * s.v_b[l] + (1.0 - s.beta2) * g.biases[l].cwiseAbs2();
    b.array() -= s.lr * (s.m_b[l].array() / c1) / ((s.v_b[l].array() / c2).sqrt() + s.eps);
  }
}

// Adam for a single scalar parameter (the entropy temperature).
struct ScalarAdam {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double m = 0.0;
  double v = 0.0;
  std::uint64_t step = 0;

  double update(double param, double grad) {
    ++step;
    const double t = static_cast<double>(step);
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    const double mh = m / (1.0 - std::pow(beta1, t));
    const double vh = v / (1.0 - std::pow(beta2, t));
    return param - lr * mh / (std::sqrt(vh) + eps);
  }
};

// target <- tau * online + (1 - tau) * target
inline void soft_update(DenseNet& target, const DenseNet& online, double tau) {
  if (target.sizes() != online.sizes()) throw DimensionError("target/online shape mismatch");
  if (tau == 0.0) return;
  for (std::size_t l = 0; l < target.layers(); ++l) {
    if (tau == 1.0) {
      target.weights()[l] = online.weights()[l];
      target.biases()[l] = online.biases()[l];
      continue;
    }
    // Written as a step toward online so that equal nets stay bit-identical.
    target.weights()[l] += tau * (online.weights()[l] - target.weights()[l]);
    target.biases()[l] += tau * (online.biases()[l] - target.biases()[l]);
  }
}

struct TargetPair {
  DenseNet online;
  DenseNet target;
  double tau = 0.005;

  TargetPair() = default;
  TargetPair(DenseNet net, double tau_) : online(net), target(std::move(net)), tau(tau_) {
    if (!(tau_ >= 0.0 && tau_ <= 1.0)) throw ConfigError("tau must be in [0, 1]");
  }

  void soft_update() { cbforge::soft_update(target, online, tau); }
};

namespace detail {

// log(1 - tanh(z)^2), stable for large |z|.
inline double log_sech2(double z) {
  const double x = -2.0 * z;
  const double softplus = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  return 2.0 * (std::log(2.0) - z - softplus);
}

inline double squash(double z) {
  const double a = kPi * std::tanh(z);
  // Keep actions strictly inside (-pi, pi) even where tanh rounds to +-1.
  static const double edge = std::nextafter(kPi, 0.0);
  return std::clamp(a, -edge, edge);
}

}  // namespace detail

// Reparameterized draws from a tanh-squashed Gaussian, one per column of a
// Gaussian-head output. The noise is kept for the backward pass.
struct GaussianDraw {
  MatrixXd noise;     // eps ~ N(0, I)
  MatrixXd pre;       // z = mean + exp(log_std) * eps
  MatrixXd action;    // pi * tanh(z)
  VectorXd log_prob;  // per column, including the tanh and pi scaling corrections
};

inline GaussianDraw gaussian_draw(const MatrixXd& head_out, Rng& rng) {
  const auto a = head_out.rows() / 2;
  const auto b = head_out.cols();
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianDraw d;
  d.noise.resize(a, b);
  for (Eigen::Index i = 0; i < d.noise.size(); ++i) d.noise.data()[i] = normal(rng);
  const MatrixXd log_std = head_out.bottomRows(a).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  d.pre = head_out.topRows(a) + (log_std.array().exp() * d.noise.array()).matrix();
  d.action.resize(a, b);
  d.log_prob.setZero(b);
  const double half_log_2pi = 0.5 * std::log(2.0 * kPi);
  const double log_pi = std::log(kPi);
  for (Eigen::Index c = 0; c < b; ++c) {
    double lp = 0.0;
    for (Eigen::Index r = 0; r < a; ++r) {
      const double z = d.pre(r, c);
      const double e = d.noise(r, c);
      d.action(r, c) = detail::squash(z);
      lp += -0.5 * e * e - half_log_2pi - log_std(r, c) - log_pi - detail::log_sech2(z);
    }
    d.log_prob[c] = lp;
  }
  return d;
}

// Single-sample convenience form.
inline std::pair<VectorXd, double> gaussian_sample(const VectorXd& mean, const VectorXd& log_std,
                                                   Rng& rng) {
  if (mean.size() != log_std.size()) throw DimensionError("mean/log-std length mismatch");
  MatrixXd head(2 * mean.size(), 1);
  head.topRows(mean.size()) = mean;
  head.bottomRows(mean.size()) = log_std;
  GaussianDraw d = gaussian_draw(head, rng);
  return {d.action.col(0), d.log_prob[0]};
}

// Checkpoint layout: "DNET", u16 version, u32 layer-size count, u32 sizes,
// then per layer the weights (row-major) followed by the biases, as f64.
inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const DenseNet& net) {
  os.write("DNET", 4);
  le::put_u16(os, kCheckpointVersion);
  le::put_u32(os, static_cast<std::uint32_t>(net.sizes().size()));
  for (auto s : net.sizes()) le::put_u32(os, static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const auto& w = net.weights()[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) le::put_f64(os, w(r, c));
    for (Eigen::Index i = 0; i < net.biases()[l].size(); ++i) le::put_f64(os, net.biases()[l][i]);
  }
}

inline DenseNet parse_checkpoint(std::vector<unsigned char> bytes, Head head) {
  le::Reader r(std::move(bytes));
  if (r.bytes(4, "magic") != "DNET") throw FormatError("bad magic, expected DNET", 0);
  const auto version_at = r.offset();
  if (r.u16("version") != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version", version_at);
  const auto count_at = r.offset();
  const auto count = r.u32("layer count");
  if (count < 2 || count > 64) throw FormatError("implausible layer count", count_at);
  std::vector<std::size_t> sizes;
  std::uint64_t params = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto at = r.offset();
    const auto s = r.u32("layer size");
    if (s == 0) throw FormatError("layer size must be positive", at);
    if (!sizes.empty()) params += static_cast<std::uint64_t>(s) * (sizes.back() + 1);
    sizes.push_back(s);
  }
  if (params > r.remaining() / 8) throw FormatError("parameter block exceeds file size", r.offset());
  DenseNet net = DenseNet::zeros(sizes, head);
  for (std::size_t l = 0; l < net.layers(); ++l) {
    auto& w = net.weights()[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = r.f64("weight");
    for (Eigen::Index i = 0; i < net.biases()[l].size(); ++i) net.biases()[l][i] = r.f64("bias");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after parameters", r.offset());
  return net;
}

inline void save_checkpoint(const DenseNet& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open file for writing: " + path);
  write_checkpoint(os, net);
}

inline DenseNet load_checkpoint(const std::string& path, Head head) {
  return parse_checkpoint(read_file_bytes(path), head);
}

}  // namespace cbforge
