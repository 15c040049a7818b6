// tests/test_nn.cpp

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

#include <gtest/gtest.h>

#include "avtse/nn/optim.hpp"
#include "avtse/nn/vision.hpp"
#include "support/gradcheck.hpp"

using namespace avtse;
using namespace avtse::nn;
using avtse::testing::BatchD;
using avtse::testing::check_layer;
using avtse::testing::random_matrix;

namespace {

BatchD random_batch(int channels, std::initializer_list<int> lengths, std::mt19937_64& rng) {
  BatchD b;
  for (int len : lengths) b.push_back(random_matrix(channels, len, rng));
  return b;
}

void expect_grads(const avtse::testing::GradReport& r, double tol = 1e-6) {
  EXPECT_LT(r.input_rel, tol);
  EXPECT_LT(r.param_rel, tol);
}

}  // namespace

TEST(Gradients, Pointwise) {
  std::mt19937_64 rng(1);
  Pointwise<double> layer("pw", 5, 3, true, rng);
  layer.bias().value = random_matrix(3, 1, rng);
  expect_grads(check_layer(layer, random_batch(5, {7, 4}, rng), rng));
}

TEST(Gradients, DepthwiseDilated) {
  std::mt19937_64 rng(2);
  DepthwiseConv1d<double> layer("dw", 4, 3, 4, true, rng);
  expect_grads(check_layer(layer, random_batch(4, {20, 9}, rng), rng));
  EXPECT_THROW(DepthwiseConv1d<double>("even", 4, 4, 1, false, rng), Error);
}

TEST(Gradients, PReLUAndSigmoid) {
  std::mt19937_64 rng(3);
  PReLU<double> prelu("act");
  expect_grads(check_layer(prelu, random_batch(3, {11}, rng), rng));
  Sigmoid<double> sig;
  expect_grads(check_layer(sig, random_batch(3, {11}, rng), rng));
}

TEST(Gradients, GlobalLayerNorm) {
  std::mt19937_64 rng(4);
  GlobalLayerNorm<double> layer("gln", 4);
  layer.gain().value = random_matrix(4, 1, rng);
  layer.bias().value = random_matrix(4, 1, rng);
  expect_grads(check_layer(layer, random_batch(4, {13, 6}, rng), rng));
}

TEST(Gradients, BatchNormTrainAndEval) {
  std::mt19937_64 rng(5);
  BatchNorm1d<double> layer("bn", 3);
  expect_grads(check_layer(layer, random_batch(3, {8, 5}, rng), rng));
  layer.set_training(false);
  expect_grads(check_layer(layer, random_batch(3, {8, 5}, rng), rng));
}

TEST(Gradients, EncoderDecoderConvolutions) {
  std::mt19937_64 rng(6);
  StridedConv1d<double> enc("enc", 6, 8, 4, rng);
  expect_grads(check_layer(enc, random_batch(1, {40, 29}, rng), rng));
  TransposedConv1d<double> dec("dec", 6, 8, 4, rng);
  expect_grads(check_layer(dec, random_batch(6, {9, 5}, rng), rng));
}

TEST(Gradients, ImageLayers) {
  std::mt19937_64 rng(7);
  Conv2d<double> conv("c", {2, 7, 6}, 3, 3, 2, 1, true, rng);
  expect_grads(check_layer(conv, random_batch(2, {42, 42}, rng), rng));
  MaxPool2d<double> pool({2, 6, 6}, 3, 2, 1);
  expect_grads(check_layer(pool, random_batch(2, {36}, rng), rng));
  BasicBlock<double> block("blk", {2, 6, 6}, 4, 2, rng);
  expect_grads(check_layer(block, random_batch(2, {36, 36, 36}, rng), rng), 1e-5);
}

TEST(Shapes, ConvolutionArithmetic) {
  std::mt19937_64 rng(8);
  StridedConv1d<double> enc("enc", 4, 40, 20, rng);
  EXPECT_EQ(enc.output_length(32000), 1599);
  const BatchD y = enc.forward(random_batch(1, {32000}, rng));
  EXPECT_EQ(y[0].rows(), 4);
  EXPECT_EQ(y[0].cols(), 1599);
  TransposedConv1d<double> dec("dec", 4, 40, 20, rng);
  EXPECT_EQ(dec.forward(y)[0].cols(), 32000);
  EXPECT_THROW(enc.forward(random_batch(1, {30}, rng)), Error);
  EXPECT_THROW(enc.forward(random_batch(2, {100}, rng)), Error);

  Conv2d<double> conv("c", {1, 112, 112}, 8, 7, 2, 3, false, rng);
  EXPECT_EQ(conv.output_shape().height, 56);
  MaxPool2d<double> pool(conv.output_shape(), 3, 2, 1);
  EXPECT_EQ(pool.output_shape().width, 28);
}

TEST(GlobalLayerNorm, NormalizesOverTimeAndChannels) {
  std::mt19937_64 rng(9);
  GlobalLayerNorm<double> layer("gln", 16);
  BatchD x = random_batch(16, {300}, rng);
  x[0].array() = x[0].array() * 7.0 + 3.0;
  const BatchD y = layer.forward(x);
  EXPECT_LT(std::abs(y[0].mean()), 1e-6);
  EXPECT_LT(std::abs((y[0].array() - y[0].mean()).square().mean() - 1.0), 1e-5);

  BatchD scaled = x;
  scaled[0] *= 250.0;
  EXPECT_LT((layer.forward(scaled)[0] - y[0]).cwiseAbs().maxCoeff(), 1e-9);

  const BatchD flat{Matrix<double>::Constant(16, 10, 4.0)};
  const BatchD out = layer.forward(flat);
  EXPECT_TRUE(out[0].allFinite());
  EXPECT_LT(out[0].cwiseAbs().maxCoeff(), 1e-9);
}

TEST(BatchNorm, EvalIsAffineInRunningStats) {
  std::mt19937_64 rng(10);
  BatchNorm1d<double> layer("bn", 3);
  for (int i = 0; i < 20; ++i) {
    BatchD x = random_batch(3, {50}, rng);
    x[0].array() = x[0].array() * 2.0 + 1.0;
    layer.forward(x);
  }
  const auto params = parameters_of(layer);
  const auto& mean = params[2]->value;
  const auto& var = params[3]->value;
  EXPECT_FALSE(params[2]->trainable);
  EXPECT_NEAR(mean.mean(), 1.0, 0.3);
  EXPECT_NEAR(var.mean(), 4.0, 1.0);

  layer.set_training(false);
  const BatchD x = random_batch(3, {5}, rng);
  const BatchD y = layer.forward(x);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 5; ++t)
      EXPECT_NEAR(y[0](c, t), (x[0](c, t) - mean(c, 0)) / std::sqrt(var(c, 0) + 1e-5), 1e-12);
}

TEST(Optim, CrossEntropyGradient) {
  std::mt19937_64 rng(11);
  Matrix<double> logits = random_matrix(4, 6, rng);
  const std::vector<int> labels{0, 3, 2, 1, 1, 0};
  Matrix<double> grad;
  const double loss = softmax_cross_entropy(logits, labels, &grad);
  EXPECT_GT(loss, 0.0);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double keep = logits.data()[i];
    logits.data()[i] = keep + h;
    const double up = softmax_cross_entropy<double>(logits, labels, nullptr);
    logits.data()[i] = keep - h;
    const double down = softmax_cross_entropy<double>(logits, labels, nullptr);
    logits.data()[i] = keep;
    EXPECT_NEAR(grad.data()[i], (up - down) / (2 * h), 1e-7);
  }
  EXPECT_THROW(softmax_cross_entropy<double>(logits, {0, 1}, nullptr), Error);
  EXPECT_THROW(softmax_cross_entropy<double>(logits, {0, 1, 2, 3, 4, 0}, nullptr), Error);
}

TEST(Optim, AdamFitsLinearMap) {
  std::mt19937_64 rng(12);
  Pointwise<double> layer("fit", 3, 2, true, rng);
  const Matrix<double> w = random_matrix(2, 3, rng);
  const BatchD x = random_batch(3, {64}, rng);
  const Matrix<double> target = w * x[0];
  Adam<double> opt(parameters_of(layer), 0.05);
  double loss = 0.0;
  for (int i = 0; i < 600; ++i) {
    opt.zero_grad();
    const Matrix<double> diff = layer.forward(x)[0] - target;
    loss = diff.squaredNorm() / diff.size();
    layer.backward({2.0 * diff / static_cast<double>(diff.size())});
    opt.step();
  }
  EXPECT_LT(loss, 1e-6);
  EXPECT_EQ(opt.steps(), 600);
}

TEST(Optim, ClipGradNorm) {
  std::mt19937_64 rng(13);
  Pointwise<double> layer("clip", 3, 3, false, rng);
  auto params = parameters_of(layer);
  params[0]->grad.setConstant(2.0);
  EXPECT_NEAR(clip_grad_norm(params, 1.0), 6.0, 1e-12);
  EXPECT_NEAR(grad_norm(params), 1.0, 1e-6);
  EXPECT_NEAR(clip_grad_norm(params, 5.0), grad_norm(params), 1e-12);
}
