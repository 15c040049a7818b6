// include/avtse/nn/layers.hpp

// Copyright 2026  The avtse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "avtse/nn/module.hpp"

namespace avtse::nn {

/// 1x1 convolution (position-wise linear map over channels).
template <typename Scalar>
class Pointwise : public Layer<Scalar> {
 public:
  Pointwise(const std::string& name, int in, int out, bool bias, std::mt19937_64& rng,
            double gain = 1.0)
      : weight_(name + ".weight", out, in), has_bias_(bias) {
    init_uniform(weight_.value, in, rng, gain);
    if (has_bias_) bias_ = Parameter<Scalar>(name + ".bias", out, 1);
  }

  int in_channels() const { return static_cast<int>(weight_.value.cols()); }
  int out_channels() const { return static_cast<int>(weight_.value.rows()); }
  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    input_ = x;
    Batch<Scalar> y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      if (x[b].rows() != in_channels())
        throw Error(weight_.name + ": expected " + std::to_string(in_channels()) +
                    " channels, got " + std::to_string(x[b].rows()));
      y[b].noalias() = weight_.value * x[b];
      if (has_bias_) y[b].colwise() += bias_.value.col(0);
    }
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      weight_.grad.noalias() += dy[b] * input_[b].transpose();
      if (has_bias_) bias_.grad.col(0) += dy[b].rowwise().sum();
      dx[b].noalias() = weight_.value.transpose() * dy[b];
    }
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

 private:
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  bool has_bias_;
  Batch<Scalar> input_;
};

/// Per-channel dilated convolution with symmetric zero padding that keeps
/// the sequence length.
template <typename Scalar>
class DepthwiseConv1d : public Layer<Scalar> {
 public:
  DepthwiseConv1d(const std::string& name, int channels, int kernel, int dilation, bool bias,
                  std::mt19937_64& rng)
      : weight_(name + ".weight", channels, kernel), kernel_(kernel), dilation_(dilation),
        has_bias_(bias) {
    if (kernel % 2 == 0) throw Error(name + ": kernel size must be odd");
    init_uniform(weight_.value, kernel, rng);
    if (has_bias_) bias_ = Parameter<Scalar>(name + ".bias", channels, 1);
  }

  int dilation() const { return dilation_; }
  Parameter<Scalar>& weight() { return weight_; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    input_ = x;
    Batch<Scalar> y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      if (x[b].rows() != weight_.value.rows()) throw Error(weight_.name + ": channel mismatch");
      const Eigen::Index channels = x[b].rows(), len = x[b].cols();
      y[b].setZero(channels, len);
      for (int j = 0; j < kernel_; ++j) {
        const Eigen::Index off = offset(j);
        const Eigen::Index t0 = std::max<Eigen::Index>(0, -off);
        const Eigen::Index t1 = std::min<Eigen::Index>(len, len - off);
        if (t1 <= t0) continue;
        for (Eigen::Index c = 0; c < channels; ++c)
          y[b].row(c).segment(t0, t1 - t0) += weight_.value(c, j) * x[b].row(c).segment(t0 + off, t1 - t0);
      }
      if (has_bias_) y[b].colwise() += bias_.value.col(0);
    }
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      const Eigen::Index channels = dy[b].rows(), len = dy[b].cols();
      dx[b].setZero(channels, len);
      for (int j = 0; j < kernel_; ++j) {
        const Eigen::Index off = offset(j);
        const Eigen::Index t0 = std::max<Eigen::Index>(0, -off);
        const Eigen::Index t1 = std::min<Eigen::Index>(len, len - off);
        if (t1 <= t0) continue;
        for (Eigen::Index c = 0; c < channels; ++c) {
          const auto g = dy[b].row(c).segment(t0, t1 - t0);
          weight_.grad(c, j) += g.dot(input_[b].row(c).segment(t0 + off, t1 - t0));
          dx[b].row(c).segment(t0 + off, t1 - t0) += weight_.value(c, j) * g;
        }
      }
      if (has_bias_) bias_.grad.col(0) += dy[b].rowwise().sum();
    }
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

 private:
  Eigen::Index offset(int tap) const {
    return static_cast<Eigen::Index>(tap - (kernel_ - 1) / 2) * dilation_;
  }

  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  int kernel_;
  int dilation_;
  bool has_bias_;
  Batch<Scalar> input_;
};

/// Parametric ReLU with one shared slope.
template <typename Scalar>
class PReLU : public Layer<Scalar> {
 public:
  explicit PReLU(const std::string& name) : alpha_(name + ".alpha", 1, 1) {
    alpha_.value(0, 0) = Scalar(0.25);
  }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    input_ = x;
    const Scalar a = alpha_.value(0, 0);
    Batch<Scalar> y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b)
      y[b] = x[b].unaryExpr([a](Scalar v) { return v > Scalar(0) ? v : a * v; });
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    const Scalar a = alpha_.value(0, 0);
    Batch<Scalar> dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      const auto neg = (input_[b].array() <= Scalar(0));
      dx[b] = neg.select(a * dy[b].array(), dy[b].array()).matrix();
      alpha_.grad(0, 0) += neg.select(dy[b].array() * input_[b].array(), Scalar(0)).sum();
    }
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override { out.push_back(&alpha_); }

 private:
  Parameter<Scalar> alpha_;
  Batch<Scalar> input_;
};

template <typename Scalar>
class ReLU : public Layer<Scalar> {
 public:
  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    output_.resize(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) output_[b] = x[b].cwiseMax(Scalar(0));
    return output_;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b)
      dx[b] = (output_[b].array() > Scalar(0)).select(dy[b].array(), Scalar(0)).matrix();
    return dx;
  }

 private:
  Batch<Scalar> output_;
};

template <typename Scalar>
class Sigmoid : public Layer<Scalar> {
 public:
  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    output_.resize(x.size());
    for (std::size_t b = 0; b < x.size(); ++b)
      output_[b] = (Scalar(1) / (Scalar(1) + (-x[b].array()).exp())).matrix();
    return output_;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b)
      dx[b] = (dy[b].array() * output_[b].array() * (Scalar(1) - output_[b].array())).matrix();
    return dx;
  }

 private:
  Batch<Scalar> output_;
};

/// Normalization over both channels and time of each sequence, followed by a
/// per-channel affine map.
template <typename Scalar>
class GlobalLayerNorm : public Layer<Scalar> {
 public:
  static constexpr double kEps = 1e-8;

  GlobalLayerNorm(const std::string& name, int channels)
      : gain_(name + ".gain", channels, 1), bias_(name + ".bias", channels, 1) {
    gain_.value.setOnes();
  }

  Parameter<Scalar>& gain() { return gain_; }
  Parameter<Scalar>& bias() { return bias_; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    normalized_.resize(x.size());
    inv_std_.resize(x.size());
    Batch<Scalar> y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      if (x[b].size() == 0) throw Error(gain_.name + ": empty sequence");
      if (x[b].rows() != gain_.value.rows()) throw Error(gain_.name + ": channel mismatch");
      const Eigen::MatrixXd xd = x[b].template cast<double>();
      const double mean = xd.mean();
      const double var = (xd.array() - mean).square().mean();
      const double inv_std = 1.0 / std::sqrt(var + kEps);
      inv_std_[b] = inv_std;
      normalized_[b] = ((xd.array() - mean) * inv_std).matrix().template cast<Scalar>();
      y[b] = (normalized_[b].array().colwise() * gain_.value.col(0).array()).matrix();
      y[b].colwise() += bias_.value.col(0);
    }
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      const auto& xhat = normalized_[b];
      gain_.grad.col(0) += (dy[b].array() * xhat.array()).rowwise().sum().matrix();
      bias_.grad.col(0) += dy[b].rowwise().sum();
      const Eigen::ArrayXXd g =
          (dy[b].array().colwise() * gain_.value.col(0).array()).template cast<double>();
      const Eigen::ArrayXXd xh = xhat.array().template cast<double>();
      const double mean_g = g.mean();
      const double mean_gx = (g * xh).mean();
      dx[b] = ((g - mean_g - xh * mean_gx) * inv_std_[b]).matrix().template cast<Scalar>();
    }
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override {
    out.push_back(&gain_);
    out.push_back(&bias_);
  }

 private:
  Parameter<Scalar> gain_;
  Parameter<Scalar> bias_;
  Batch<Scalar> normalized_;
  std::vector<double> inv_std_;
};

/// Per-channel batch normalization over all sequences and time steps of the
/// batch. Eval mode applies the running statistics as a fixed affine map.
template <typename Scalar>
class BatchNorm1d : public Layer<Scalar> {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm1d(const std::string& name, int channels)
      : gamma_(name + ".gamma", channels, 1),
        beta_(name + ".beta", channels, 1),
        running_mean_(name + ".running_mean", channels, 1, false),
        running_var_(name + ".running_var", channels, 1, false) {
    gamma_.value.setOnes();
    running_var_.value.setOnes();
  }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    const Eigen::Index channels = gamma_.value.rows();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(channels);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(channels);
    for (const auto& xb : x)
      if (xb.rows() != channels) throw Error(gamma_.name + ": channel mismatch");

    if (this->training_) {
      count_ = 0;
      for (const auto& xb : x) {
        mean += xb.template cast<double>().rowwise().sum();
        count_ += xb.cols();
      }
      if (count_ == 0) throw Error(gamma_.name + ": empty batch");
      mean /= static_cast<double>(count_);
      for (const auto& xb : x)
        var += (xb.template cast<double>().colwise() - mean).array().square().rowwise().sum().matrix();
      var /= static_cast<double>(count_);
      const double unbias = count_ > 1 ? static_cast<double>(count_) / (count_ - 1) : 1.0;
      running_mean_.value.col(0) =
          ((1.0 - kMomentum) * running_mean_.value.col(0).template cast<double>() + kMomentum * mean)
              .template cast<Scalar>();
      running_var_.value.col(0) = ((1.0 - kMomentum) * running_var_.value.col(0).template cast<double>() +
                                   kMomentum * unbias * var)
                                      .template cast<Scalar>();
    } else {
      mean = running_mean_.value.col(0).template cast<double>();
      var = running_var_.value.col(0).template cast<double>();
    }
    inv_std_ = (var.array() + kEps).rsqrt().matrix().template cast<Scalar>();
    const Vector<Scalar> mean_s = mean.template cast<Scalar>();

    normalized_.resize(x.size());
    Batch<Scalar> y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      normalized_[b] = ((x[b].colwise() - mean_s).array().colwise() * inv_std_.array()).matrix();
      y[b] = (normalized_[b].array().colwise() * gamma_.value.col(0).array()).matrix();
      y[b].colwise() += beta_.value.col(0);
    }
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    const Eigen::Index channels = gamma_.value.rows();
    Vector<Scalar> sum_g = Vector<Scalar>::Zero(channels);
    Vector<Scalar> sum_gx = Vector<Scalar>::Zero(channels);
    for (std::size_t b = 0; b < dy.size(); ++b) {
      sum_g += dy[b].rowwise().sum();
      sum_gx += (dy[b].array() * normalized_[b].array()).rowwise().sum().matrix();
    }
    gamma_.grad.col(0) += sum_gx;
    beta_.grad.col(0) += sum_g;

    Batch<Scalar> dx(dy.size());
    const Vector<Scalar> scale = (gamma_.value.col(0).array() * inv_std_.array()).matrix();
    if (!this->training_) {
      for (std::size_t b = 0; b < dy.size(); ++b)
        dx[b] = (dy[b].array().colwise() * scale.array()).matrix();
      return dx;
    }
    const Scalar n = static_cast<Scalar>(count_);
    const Vector<Scalar> mean_g = sum_g / n;
    const Vector<Scalar> mean_gx = sum_gx / n;
    for (std::size_t b = 0; b < dy.size(); ++b) {
      Matrix<Scalar> centered = dy[b].colwise() - mean_g;
      centered -= (normalized_[b].array().colwise() * mean_gx.array()).matrix();
      dx[b] = (centered.array().colwise() * scale.array()).matrix();
    }
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  Parameter<Scalar> gamma_;
  Parameter<Scalar> beta_;
  Parameter<Scalar> running_mean_;
  Parameter<Scalar> running_var_;
  Batch<Scalar> normalized_;
  Vector<Scalar> inv_std_;
  Eigen::Index count_ = 0;
};

enum class NormKind { batch, global_layer };

template <typename Scalar>
std::unique_ptr<Layer<Scalar>> make_norm(NormKind kind, const std::string& name, int channels) {
  if (kind == NormKind::batch) return std::make_unique<BatchNorm1d<Scalar>>(name, channels);
  return std::make_unique<GlobalLayerNorm<Scalar>>(name, channels);
}

/// Strided 1-D convolution of a single-channel signal (1 x L) into
/// `filters` channels, no padding, no bias.
template <typename Scalar>
class StridedConv1d : public Layer<Scalar> {
 public:
  StridedConv1d(const std::string& name, int filters, int kernel, int stride, std::mt19937_64& rng)
      : weight_(name + ".weight", filters, kernel), kernel_(kernel), stride_(stride) {
    init_uniform(weight_.value, kernel, rng);
  }

  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  Parameter<Scalar>& weight() { return weight_; }

  Eigen::Index output_length(Eigen::Index samples) const {
    return (samples - kernel_) / stride_ + 1;
  }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    frames_.resize(x.size());
    lengths_.resize(x.size());
    Batch<Scalar> y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      if (x[b].rows() != 1) throw Error(weight_.name + ": expected a single-channel signal");
      if (x[b].cols() < kernel_) throw Error(weight_.name + ": input shorter than the kernel");
      lengths_[b] = x[b].cols();
      const Eigen::Index frames = output_length(x[b].cols());
      frames_[b].resize(kernel_, frames);
      for (Eigen::Index t = 0; t < frames; ++t)
        frames_[b].col(t) = x[b].row(0).segment(t * stride_, kernel_).transpose();
      y[b].noalias() = weight_.value * frames_[b];
    }
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      weight_.grad.noalias() += dy[b] * frames_[b].transpose();
      const Matrix<Scalar> dframes = weight_.value.transpose() * dy[b];
      dx[b].setZero(1, lengths_[b]);
      for (Eigen::Index t = 0; t < dframes.cols(); ++t)
        dx[b].row(0).segment(t * stride_, kernel_) += dframes.col(t).transpose();
    }
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override { out.push_back(&weight_); }

 private:
  Parameter<Scalar> weight_;
  int kernel_;
  int stride_;
  Batch<Scalar> frames_;
  std::vector<Eigen::Index> lengths_;
};

/// Transposed strided convolution from `channels` back to a single-channel
/// signal of length (T - 1) * stride + kernel, no bias.
template <typename Scalar>
class TransposedConv1d : public Layer<Scalar> {
 public:
  TransposedConv1d(const std::string& name, int channels, int kernel, int stride,
                   std::mt19937_64& rng)
      : weight_(name + ".weight", channels, kernel), kernel_(kernel), stride_(stride) {
    init_uniform(weight_.value, channels, rng);
  }

  Parameter<Scalar>& weight() { return weight_; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    input_ = x;
    Batch<Scalar> y(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      if (x[b].rows() != weight_.value.rows()) throw Error(weight_.name + ": channel mismatch");
      if (x[b].cols() < 1) throw Error(weight_.name + ": empty input");
      const Matrix<Scalar> frames = weight_.value.transpose() * x[b];  // K x T
      const Eigen::Index len = (x[b].cols() - 1) * stride_ + kernel_;
      y[b].setZero(1, len);
      for (Eigen::Index t = 0; t < frames.cols(); ++t)
        y[b].row(0).segment(t * stride_, kernel_) += frames.col(t).transpose();
    }
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      const Eigen::Index frames = input_[b].cols();
      Matrix<Scalar> dframes(kernel_, frames);
      for (Eigen::Index t = 0; t < frames; ++t)
        dframes.col(t) = dy[b].row(0).segment(t * stride_, kernel_).transpose();
      weight_.grad.noalias() += input_[b] * dframes.transpose();
      dx[b].noalias() = weight_.value * dframes;
    }
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override { out.push_back(&weight_); }

 private:
  Parameter<Scalar> weight_;
  int kernel_;
  int stride_;
  Batch<Scalar> input_;
};

}  // namespace avtse::nn
