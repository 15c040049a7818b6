// include/avtse/lipnet.hpp

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

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "avtse/mixsim.hpp"
#include "avtse/nn/vision.hpp"

namespace avtse {

using nn::Batch;
using nn::ParameterList;

inline constexpr int kLipCrop = 70;
inline constexpr int kLipSize = 112;
inline constexpr int kMinLipFrames = 5;

/// Standardized 112 x 112 lip frames.
struct FrameSequence {
  std::vector<Matrix<float>> frames;

  int size() const { return static_cast<int>(frames.size()); }
};

/// Global pixel statistics used for standardization.
struct FrameStats {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Center 70 x 70 crop of one frame, bilinearly resampled to 112 x 112
/// (half-pixel centers), before standardization.
Matrix<float> crop_and_resize(const VideoFrames& raw, int t);

/// Crop, resample and standardize every frame.
FrameSequence preprocess_frames(const VideoFrames& raw, const FrameStats& stats);

/// Mean and standard deviation of cropped-and-resampled pixels.
FrameStats compute_frame_stats(std::span<const VideoFrames> videos);

enum class InventoryKind { word, ci_phone, cd_phone };

struct TargetInventory {
  InventoryKind kind = InventoryKind::ci_phone;
  int num_classes = 44;

  static TargetInventory ci_phone() { return {InventoryKind::ci_phone, 44}; }
  static TargetInventory cd_phone() { return {InventoryKind::cd_phone, 3048}; }
  static TargetInventory word(int vocabulary) { return {InventoryKind::word, vocabulary}; }

  bool frame_level() const { return kind != InventoryKind::word; }
  void validate() const;
};

std::string to_string(InventoryKind kind);
InventoryKind parse_inventory(const std::string& name);

struct LipNetConfig {
  int base_width = 64;       // channels of the first residual stage; 8x at the last
  int embedding_dim = 256;
  int temporal_kernel = 5;   // front-end 3-D kernel is temporal_kernel x 7 x 7

  void validate() const;
};

/// Spatiotemporal front-end (3-D conv, stride 1x2x2, temporal padding that
/// keeps T) followed by an 18-layer residual network applied per frame,
/// global average pooling and a linear map to the embedding width.
///
/// Embeddings are returned as embedding_dim x T per utterance.
template <typename Scalar>
class LipNet {
 public:
  LipNet(const LipNetConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    cfg.validate();
    nn::Shape2d shape{cfg.temporal_kernel, kLipSize, kLipSize};
    auto& conv = trunk_.template emplace<nn::Conv2d<Scalar>>("lipnet.frontend.conv", shape, cfg.base_width,
                                                             7, 2, 3, false, rng_, false);
    shape = conv.output_shape();
    trunk_.template emplace<nn::BatchNorm1d<Scalar>>("lipnet.frontend.bn", cfg.base_width);
    trunk_.template emplace<nn::ReLU<Scalar>>();
    auto& pool = trunk_.template emplace<nn::MaxPool2d<Scalar>>(shape, 3, 2, 1);
    shape = pool.output_shape();
    int width = cfg.base_width;
    for (int stage = 0; stage < 4; ++stage) {
      for (int b = 0; b < 2; ++b) {
        const int stride = (stage > 0 && b == 0) ? 2 : 1;
        auto& block = trunk_.template emplace<nn::BasicBlock<Scalar>>(
            "lipnet.layer" + std::to_string(stage + 1) + "." + std::to_string(b), shape, width, stride, rng_);
        shape = block.output_shape();
      }
      if (stage < 3) width *= 2;
    }
    final_shape_ = shape;
    proj_ = std::make_unique<nn::Pointwise<Scalar>>("lipnet.proj", shape.channels, cfg.embedding_dim,
                                                    true, rng_);
  }

  const LipNetConfig& config() const { return cfg_; }
  int embedding_dim() const { return cfg_.embedding_dim; }

  Batch<Scalar> forward(std::span<const FrameSequence* const> utterances) {
    lengths_.clear();
    Batch<Scalar> stacked;
    const int half = cfg_.temporal_kernel / 2;
    const Eigen::Index plane = static_cast<Eigen::Index>(kLipSize) * kLipSize;
    for (const FrameSequence* u : utterances) {
      if (u->size() < kMinLipFrames)
        throw Error("lipnet: need at least " + std::to_string(kMinLipFrames) + " frames");
      lengths_.push_back(u->size());
      for (int t = 0; t < u->size(); ++t) {
        Matrix<Scalar> in = Matrix<Scalar>::Zero(cfg_.temporal_kernel, plane);
        for (int k = 0; k < cfg_.temporal_kernel; ++k) {
          const int src = t + k - half;
          if (src < 0 || src >= u->size()) continue;
          const auto& f = u->frames[src];
          if (f.rows() != kLipSize || f.cols() != kLipSize) throw Error("lipnet: frames must be 112x112");
          in.row(k) = Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>>(f.data(), plane)
                          .template cast<Scalar>();
        }
        stacked.push_back(std::move(in));
      }
    }
    const Batch<Scalar> maps = trunk_.forward(stacked);
    Batch<Scalar> pooled(utterances.size());
    std::size_t frame = 0;
    for (std::size_t u = 0; u < utterances.size(); ++u) {
      pooled[u].resize(final_shape_.channels, lengths_[u]);
      for (int t = 0; t < lengths_[u]; ++t, ++frame) pooled[u].col(t) = maps[frame].rowwise().mean();
    }
    return proj_->forward(pooled);
  }

  void backward(const Batch<Scalar>& d_embeddings) {
    const Batch<Scalar> dpooled = proj_->backward(d_embeddings);
    const Eigen::Index plane = static_cast<Eigen::Index>(final_shape_.height) * final_shape_.width;
    Batch<Scalar> dmaps;
    for (std::size_t u = 0; u < dpooled.size(); ++u)
      for (Eigen::Index t = 0; t < dpooled[u].cols(); ++t)
        dmaps.push_back((dpooled[u].col(t) / static_cast<Scalar>(plane)).replicate(1, plane));
    trunk_.backward(dmaps);
  }

  /// Frozen inference: T x embedding_dim.
  Matrix<Scalar> extract(const FrameSequence& v) {
    set_training(false);
    const FrameSequence* one[] = {&v};
    return forward(one)[0].transpose();
  }

  ParameterList<Scalar> parameters() {
    ParameterList<Scalar> out;
    trunk_.collect(out);
    proj_->collect(out);
    return out;
  }

  void set_training(bool on) {
    trunk_.set_training(on);
    proj_->set_training(on);
  }

 private:
  LipNetConfig cfg_;
  std::mt19937_64 rng_;
  nn::Sequential<Scalar> trunk_;
  nn::Shape2d final_shape_;
  std::unique_ptr<nn::Pointwise<Scalar>> proj_;
  std::vector<int> lengths_;
};

/// Frames with per-frame labels (phone inventories, one per video frame) or
/// a single utterance label (word inventory).
struct LabeledFrames {
  FrameSequence frames;
  std::vector<int> labels;
};

struct ExtractorTrainOptions {
  int epochs = 5;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct ExtractorTraining {
  std::unique_ptr<LipNet<float>> extractor;  // frozen (eval mode), heads discarded
  int head_width = 0;
  std::vector<double> epoch_losses;
};

/// Pre-trains the extractor with a classification head: frame-level
/// cross-entropy for phone inventories, utterance-level cross-entropy over
/// time-pooled embeddings for the word inventory.
ExtractorTraining train_extractor(std::span<const LabeledFrames> corpus,
                                  const TargetInventory& inventory, const LipNetConfig& cfg,
                                  const ExtractorTrainOptions& opts);

/// Per-frame two-class mouth-shape corpus: class 0 draws a wide flat
/// ellipse, class 1 a tall round one, with random size, offset and texture.
std::vector<LabeledFrames> synth_viseme_corpus(int n_utterances, int frames_per_utterance,
                                               std::uint64_t seed);

}  // namespace avtse
