// include/avtse/nn/optim.hpp

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
#include <vector>

#include "avtse/nn/module.hpp"

namespace avtse::nn {

/// Global L2 norm of the trainable gradients.
template <typename Scalar>
double grad_norm(const ParameterList<Scalar>& params) {
  double sq = 0.0;
  for (auto* p : params)
    if (p->trainable) sq += p->grad.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

/// Rescales gradients so that their global norm is at most max_norm.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(const ParameterList<Scalar>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const Scalar scale = static_cast<Scalar>(max_norm / (norm + 1e-6));
    for (auto* p : params)
      if (p->trainable) p->grad *= scale;
  }
  return norm;
}

template <typename Scalar>
class Adam {
 public:
  Adam(ParameterList<Scalar> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const Scalar step_size = static_cast<Scalar>(lr_ * std::sqrt(c2) / c1);
    const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    const Scalar eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      if (!p->trainable) continue;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * p->grad;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * p->grad.cwiseAbs2();
      p->value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

  void zero_grad() { nn::zero_grad(params_); }

 private:
  ParameterList<Scalar> params_;
  std::vector<Matrix<Scalar>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Mean softmax cross-entropy over the columns of logits (classes x N).
/// Writes d(loss)/d(logits) into grad when non-null.
template <typename Scalar>
double softmax_cross_entropy(const Matrix<Scalar>& logits, const std::vector<int>& labels,
                             Matrix<Scalar>* grad) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols())
    throw Error("cross-entropy: label count does not match columns");
  const Eigen::MatrixXd z = logits.template cast<double>();
  Eigen::MatrixXd prob(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index n = 0; n < z.cols(); ++n) {
    const int y = labels[n];
    if (y < 0 || y >= z.rows()) throw Error("cross-entropy: label out of range");
    const double mx = z.col(n).maxCoeff();
    const Eigen::VectorXd e = (z.col(n).array() - mx).exp();
    const double s = e.sum();
    prob.col(n) = e / s;
    loss += -(z(y, n) - mx - std::log(s));
  }
  const double count = static_cast<double>(std::max<Eigen::Index>(1, z.cols()));
  if (grad) {
    for (Eigen::Index n = 0; n < z.cols(); ++n) prob(labels[n], n) -= 1.0;
    *grad = (prob / count).cast<Scalar>();
  }
  return loss / count;
}

}  // namespace avtse::nn
