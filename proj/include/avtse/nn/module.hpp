// include/avtse/nn/module.hpp

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

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "avtse/core.hpp"

namespace avtse::nn {

/// A batch of channel sequences (channels x time); lengths may differ.
template <typename Scalar>
using Batch = std::vector<Matrix<Scalar>>;

/// Named tensor with an accumulated gradient. Running statistics are stored
/// as non-trainable parameters so that checkpoints carry them.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, bool train = true)
      : name(std::move(n)),
        value(Matrix<Scalar>::Zero(rows, cols)),
        grad(Matrix<Scalar>::Zero(rows, cols)),
        trainable(train) {}
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>*>;

/// Sequence-to-sequence layer with an explicit backward pass.
///
/// forward() caches whatever backward() needs; backward() must follow the
/// forward() call whose output it differentiates. Parameter gradients
/// accumulate until zero_grad().
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Batch<Scalar> forward(const Batch<Scalar>& x) = 0;
  virtual Batch<Scalar> backward(const Batch<Scalar>& dy) = 0;
  virtual void collect(ParameterList<Scalar>& /*out*/) {}
  virtual void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

 protected:
  bool training_ = true;
};

template <typename Scalar>
ParameterList<Scalar> parameters_of(Layer<Scalar>& layer) {
  ParameterList<Scalar> out;
  layer.collect(out);
  return out;
}

template <typename Scalar>
void zero_grad(const ParameterList<Scalar>& params) {
  for (auto* p : params) p->grad.setZero();
}

/// Uniform initializer with variance gain^2 / fan_in.
template <typename Scalar>
void init_uniform(Matrix<Scalar>& w, int fan_in, std::mt19937_64& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(3.0 / std::max(1, fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
Batch<Scalar> add(const Batch<Scalar>& a, const Batch<Scalar>& b) {
  Batch<Scalar> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

/// Chains owned layers.
template <typename Scalar>
class Sequential : public Layer<Scalar> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  void push(std::unique_ptr<Layer<Scalar>> layer) { layers_.push_back(std::move(layer)); }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    Batch<Scalar> h = x;
    for (auto& l : layers_) h = l->forward(h);
    return h;
  }

  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void collect(ParameterList<Scalar>& out) override {
    for (auto& l : layers_) l->collect(out);
  }

  void set_training(bool on) override {
    Layer<Scalar>::set_training(on);
    for (auto& l : layers_) l->set_training(on);
  }

  std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

}  // namespace avtse::nn
