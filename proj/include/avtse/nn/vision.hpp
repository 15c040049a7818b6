// include/avtse/nn/vision.hpp

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

#include <limits>

#include "avtse/nn/layers.hpp"

// Image layers. A feature map is stored as channels x (height * width),
// row-major within the spatial plane; every layer is built for a fixed input
// resolution so maps of one batch share their shape.

namespace avtse::nn {

struct Shape2d {
  int channels = 0;
  int height = 0;
  int width = 0;
};

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename Scalar>
class Conv2d : public Layer<Scalar> {
 public:
  Conv2d(const std::string& name, Shape2d in, int out_channels, int kernel, int stride, int pad,
         bool bias, std::mt19937_64& rng, bool input_grad = true)
      : in_(in),
        out_{out_channels, conv_out_size(in.height, kernel, stride, pad),
             conv_out_size(in.width, kernel, stride, pad)},
        kernel_(kernel), stride_(stride), pad_(pad), has_bias_(bias), input_grad_(input_grad),
        weight_(name + ".weight", out_channels, in.channels * kernel * kernel) {
    init_uniform(weight_.value, in.channels * kernel * kernel, rng, std::sqrt(2.0));
    if (has_bias_) bias_ = Parameter<Scalar>(name + ".bias", out_channels, 1);
  }

  Shape2d output_shape() const { return out_; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    input_ = x;
    Batch<Scalar> y(x.size());
    Matrix<Scalar> cols;
    for (std::size_t b = 0; b < x.size(); ++b) {
      if (x[b].rows() != in_.channels || x[b].cols() != in_.height * in_.width)
        throw Error(weight_.name + ": input shape mismatch");
      im2col(x[b], cols);
      y[b].noalias() = weight_.value * cols;
      if (has_bias_) y[b].colwise() += bias_.value.col(0);
    }
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    Matrix<Scalar> cols;
    for (std::size_t b = 0; b < dy.size(); ++b) {
      im2col(input_[b], cols);
      weight_.grad.noalias() += dy[b] * cols.transpose();
      if (has_bias_) bias_.grad.col(0) += dy[b].rowwise().sum();
      if (input_grad_) {
        const Matrix<Scalar> dcols = weight_.value.transpose() * dy[b];
        col2im(dcols, dx[b]);
      }
    }
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

 private:
  void im2col(const Matrix<Scalar>& x, Matrix<Scalar>& cols) const {
    cols.setZero(static_cast<Eigen::Index>(in_.channels) * kernel_ * kernel_,
                 static_cast<Eigen::Index>(out_.height) * out_.width);
    for (int c = 0; c < in_.channels; ++c) {
      const Scalar* plane = x.data() + static_cast<std::size_t>(c) * in_.height * in_.width;
      for (int ki = 0; ki < kernel_; ++ki) {
        for (int kj = 0; kj < kernel_; ++kj) {
          Scalar* row = cols.data() + ((static_cast<std::size_t>(c) * kernel_ + ki) * kernel_ + kj) * cols.cols();
          for (int oy = 0; oy < out_.height; ++oy) {
            const int iy = oy * stride_ - pad_ + ki;
            if (iy < 0 || iy >= in_.height) continue;
            for (int ox = 0; ox < out_.width; ++ox) {
              const int ix = ox * stride_ - pad_ + kj;
              if (ix >= 0 && ix < in_.width) row[oy * out_.width + ox] = plane[iy * in_.width + ix];
            }
          }
        }
      }
    }
  }

  void col2im(const Matrix<Scalar>& cols, Matrix<Scalar>& x) const {
    x.setZero(in_.channels, static_cast<Eigen::Index>(in_.height) * in_.width);
    for (int c = 0; c < in_.channels; ++c) {
      Scalar* plane = x.data() + static_cast<std::size_t>(c) * in_.height * in_.width;
      for (int ki = 0; ki < kernel_; ++ki) {
        for (int kj = 0; kj < kernel_; ++kj) {
          const Scalar* row =
              cols.data() + ((static_cast<std::size_t>(c) * kernel_ + ki) * kernel_ + kj) * cols.cols();
          for (int oy = 0; oy < out_.height; ++oy) {
            const int iy = oy * stride_ - pad_ + ki;
            if (iy < 0 || iy >= in_.height) continue;
            for (int ox = 0; ox < out_.width; ++ox) {
              const int ix = ox * stride_ - pad_ + kj;
              if (ix >= 0 && ix < in_.width) plane[iy * in_.width + ix] += row[oy * out_.width + ox];
            }
          }
        }
      }
    }
  }

  Shape2d in_;
  Shape2d out_;
  int kernel_, stride_, pad_;
  bool has_bias_;
  bool input_grad_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  Batch<Scalar> input_;
};

template <typename Scalar>
class MaxPool2d : public Layer<Scalar> {
 public:
  MaxPool2d(Shape2d in, int kernel, int stride, int pad)
      : in_(in),
        out_{in.channels, conv_out_size(in.height, kernel, stride, pad),
             conv_out_size(in.width, kernel, stride, pad)},
        kernel_(kernel), stride_(stride), pad_(pad) {}

  Shape2d output_shape() const { return out_; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    argmax_.resize(x.size());
    Batch<Scalar> y(x.size());
    const int plane_out = out_.height * out_.width;
    for (std::size_t b = 0; b < x.size(); ++b) {
      y[b].resize(in_.channels, plane_out);
      argmax_[b].resize(static_cast<std::size_t>(in_.channels) * plane_out);
      for (int c = 0; c < in_.channels; ++c) {
        for (int oy = 0; oy < out_.height; ++oy) {
          for (int ox = 0; ox < out_.width; ++ox) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            int best_idx = -1;
            for (int ki = 0; ki < kernel_; ++ki) {
              const int iy = oy * stride_ - pad_ + ki;
              if (iy < 0 || iy >= in_.height) continue;
              for (int kj = 0; kj < kernel_; ++kj) {
                const int ix = ox * stride_ - pad_ + kj;
                if (ix < 0 || ix >= in_.width) continue;
                const Scalar v = x[b](c, iy * in_.width + ix);
                if (v > best) {
                  best = v;
                  best_idx = iy * in_.width + ix;
                }
              }
            }
            y[b](c, oy * out_.width + ox) = best;
            argmax_[b][static_cast<std::size_t>(c) * plane_out + oy * out_.width + ox] = best_idx;
          }
        }
      }
    }
    return y;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx(dy.size());
    const int plane_out = out_.height * out_.width;
    for (std::size_t b = 0; b < dy.size(); ++b) {
      dx[b].setZero(in_.channels, static_cast<Eigen::Index>(in_.height) * in_.width);
      for (int c = 0; c < in_.channels; ++c)
        for (int o = 0; o < plane_out; ++o)
          dx[b](c, argmax_[b][static_cast<std::size_t>(c) * plane_out + o]) += dy[b](c, o);
    }
    return dx;
  }

 private:
  Shape2d in_, out_;
  int kernel_, stride_, pad_;
  std::vector<std::vector<int>> argmax_;
};

/// Two 3x3 convolutions with batch norm and a (projected when needed)
/// shortcut.
template <typename Scalar>
class BasicBlock : public Layer<Scalar> {
 public:
  BasicBlock(const std::string& name, Shape2d in, int out_channels, int stride,
             std::mt19937_64& rng) {
    auto& conv1 = main_.template emplace<Conv2d<Scalar>>(name + ".conv1", in, out_channels, 3, stride, 1, false, rng);
    out_ = conv1.output_shape();
    main_.template emplace<BatchNorm1d<Scalar>>(name + ".bn1", out_channels);
    main_.template emplace<ReLU<Scalar>>();
    main_.template emplace<Conv2d<Scalar>>(name + ".conv2", out_, out_channels, 3, 1, 1, false, rng);
    main_.template emplace<BatchNorm1d<Scalar>>(name + ".bn2", out_channels);
    if (stride != 1 || in.channels != out_channels) {
      shortcut_ = std::make_unique<Sequential<Scalar>>();
      shortcut_->template emplace<Conv2d<Scalar>>(name + ".down", in, out_channels, 1, stride, 0, false, rng);
      shortcut_->template emplace<BatchNorm1d<Scalar>>(name + ".down_bn", out_channels);
    }
  }

  Shape2d output_shape() const { return out_; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    Batch<Scalar> y = main_.forward(x);
    const Batch<Scalar> s = shortcut_ ? shortcut_->forward(x) : x;
    for (std::size_t b = 0; b < y.size(); ++b) y[b] += s[b];
    return relu_.forward(y);
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    const Batch<Scalar> g = relu_.backward(dy);
    Batch<Scalar> dx = main_.backward(g);
    const Batch<Scalar> ds = shortcut_ ? shortcut_->backward(g) : g;
    for (std::size_t b = 0; b < dx.size(); ++b) dx[b] += ds[b];
    return dx;
  }

  void collect(ParameterList<Scalar>& out) override {
    main_.collect(out);
    if (shortcut_) shortcut_->collect(out);
  }

  void set_training(bool on) override {
    Layer<Scalar>::set_training(on);
    main_.set_training(on);
    if (shortcut_) shortcut_->set_training(on);
  }

 private:
  Shape2d out_;
  Sequential<Scalar> main_;
  std::unique_ptr<Sequential<Scalar>> shortcut_;
  ReLU<Scalar> relu_;
};

}  // namespace avtse::nn
