// src/lipnet.cpp

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

#include "avtse/lipnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "avtse/nn/optim.hpp"

namespace avtse {

Matrix<float> crop_and_resize(const VideoFrames& raw, int t) {
  if (raw.height < kLipCrop || raw.width < kLipCrop)
    throw Error("lip frames must be at least 70x70, got " + std::to_string(raw.height) + "x" +
                std::to_string(raw.width));
  if (t < 0 || t >= raw.frames) throw Error("frame index out of range");
  const int r0 = (raw.height - kLipCrop) / 2;
  const int c0 = (raw.width - kLipCrop) / 2;
  const double scale = static_cast<double>(kLipCrop) / kLipSize;

  // Source coordinate and weight per output index; identical for rows and columns.
  std::vector<int> lo(kLipSize), hi(kLipSize);
  std::vector<double> frac(kLipSize);
  for (int i = 0; i < kLipSize; ++i) {
    const double s = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(kLipCrop - 1));
    lo[i] = static_cast<int>(std::floor(s));
    hi[i] = std::min(lo[i] + 1, kLipCrop - 1);
    frac[i] = s - lo[i];
  }
  Matrix<float> out(kLipSize, kLipSize);
  for (int y = 0; y < kLipSize; ++y) {
    for (int x = 0; x < kLipSize; ++x) {
      const double a = raw.at(t, r0 + lo[y], c0 + lo[x]);
      const double b = raw.at(t, r0 + lo[y], c0 + hi[x]);
      const double c = raw.at(t, r0 + hi[y], c0 + lo[x]);
      const double d = raw.at(t, r0 + hi[y], c0 + hi[x]);
      const double top = a + (b - a) * frac[x];
      const double bottom = c + (d - c) * frac[x];
      out(y, x) = static_cast<float>(top + (bottom - top) * frac[y]);
    }
  }
  return out;
}

FrameSequence preprocess_frames(const VideoFrames& raw, const FrameStats& stats) {
  if (!(stats.stddev > 0.0)) throw Error("frame stats: standard deviation must be positive");
  FrameSequence seq;
  seq.frames.reserve(raw.frames);
  const float mean = static_cast<float>(stats.mean);
  const float inv = static_cast<float>(1.0 / stats.stddev);
  for (int t = 0; t < raw.frames; ++t)
    seq.frames.push_back(((crop_and_resize(raw, t).array() - mean) * inv).matrix());
  return seq;
}

FrameStats compute_frame_stats(std::span<const VideoFrames> videos) {
  double sum = 0.0, sq = 0.0, count = 0.0;
  for (const auto& v : videos) {
    for (int t = 0; t < v.frames; ++t) {
      const Eigen::ArrayXXd f = crop_and_resize(v, t).cast<double>().array();
      sum += f.sum();
      sq += f.square().sum();
      count += static_cast<double>(f.size());
    }
  }
  if (count == 0.0) throw Error("frame stats: no frames");
  FrameStats s;
  s.mean = sum / count;
  s.stddev = std::sqrt(std::max(sq / count - s.mean * s.mean, 0.0));
  if (s.stddev < 1e-6) s.stddev = 1.0;
  return s;
}

void TargetInventory::validate() const {
  if (num_classes < 2) throw Error("target inventory needs at least two classes");
}

std::string to_string(InventoryKind kind) {
  switch (kind) {
    case InventoryKind::word: return "word";
    case InventoryKind::ci_phone: return "ci_phone";
    case InventoryKind::cd_phone: return "cd_phone";
  }
  return "unknown";
}

InventoryKind parse_inventory(const std::string& name) {
  if (name == "word") return InventoryKind::word;
  if (name == "ci_phone") return InventoryKind::ci_phone;
  if (name == "cd_phone") return InventoryKind::cd_phone;
  throw Error("unknown target inventory: " + name);
}

void LipNetConfig::validate() const {
  if (base_width < 1) throw Error("lipnet: base_width must be positive");
  if (embedding_dim < 1) throw Error("lipnet: embedding_dim must be positive");
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0)
    throw Error("lipnet: temporal_kernel must be odd and positive");
}

ExtractorTraining train_extractor(std::span<const LabeledFrames> corpus,
                                  const TargetInventory& inventory, const LipNetConfig& cfg,
                                  const ExtractorTrainOptions& opts) {
  inventory.validate();
  if (corpus.empty()) throw Error("train_extractor: empty corpus");
  if (opts.epochs < 1 || opts.batch_size < 1) throw Error("train_extractor: bad options");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus[i];
    const std::size_t want = inventory.frame_level() ? static_cast<std::size_t>(u.frames.size()) : 1;
    if (u.labels.size() != want)
      throw Error("train_extractor: utterance " + std::to_string(i) + " has " +
                  std::to_string(u.labels.size()) + " labels, expected " + std::to_string(want));
  }

  std::mt19937_64 rng(opts.seed);
  ExtractorTraining result;
  result.extractor = std::make_unique<LipNet<float>>(cfg, opts.seed);
  result.head_width = inventory.num_classes;
  auto& net = *result.extractor;
  nn::Pointwise<float> head("head", cfg.embedding_dim, inventory.num_classes, true, rng);

  auto params = net.parameters();
  head.collect(params);
  nn::Adam<float> adam(params, opts.lr);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  net.set_training(true);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<const FrameSequence*> batch;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& u = corpus[order[i]];
        batch.push_back(&u.frames);
        labels.insert(labels.end(), u.labels.begin(), u.labels.end());
      }
      adam.zero_grad();
      const nn::Batch<float> emb = net.forward(batch);

      Matrix<float> feats;
      if (inventory.frame_level()) {
        Eigen::Index cols = 0;
        for (const auto& e : emb) cols += e.cols();
        feats.resize(cfg.embedding_dim, cols);
        Eigen::Index at = 0;
        for (const auto& e : emb) {
          feats.middleCols(at, e.cols()) = e;
          at += e.cols();
        }
      } else {
        feats.resize(cfg.embedding_dim, static_cast<Eigen::Index>(emb.size()));
        for (std::size_t b = 0; b < emb.size(); ++b) feats.col(b) = emb[b].rowwise().mean();
      }
      const nn::Batch<float> logits = head.forward({feats});
      Matrix<float> dlogits;
      const double loss = nn::softmax_cross_entropy(logits[0], labels, &dlogits);
      if (!std::isfinite(loss)) throw Error("train_extractor: non-finite loss in epoch " + std::to_string(epoch));
      const Matrix<float> dfeats = head.backward({dlogits})[0];

      nn::Batch<float> demb(emb.size());
      Eigen::Index at = 0;
      for (std::size_t b = 0; b < emb.size(); ++b) {
        if (inventory.frame_level()) {
          demb[b] = dfeats.middleCols(at, emb[b].cols());
          at += emb[b].cols();
        } else {
          demb[b] = (dfeats.col(b) / static_cast<float>(emb[b].cols())).replicate(1, emb[b].cols());
        }
      }
      net.backward(demb);
      nn::clip_grad_norm(params, 5.0);
      adam.step();
      total += loss;
      ++batches;
    }
    const double mean_loss = total / batches;
    result.epoch_losses.push_back(mean_loss);
    if (opts.on_epoch) opts.on_epoch(epoch, mean_loss);
  }
  net.set_training(false);
  return result;
}

std::vector<LabeledFrames> synth_viseme_corpus(int n_utterances, int frames_per_utterance,
                                               std::uint64_t seed) {
  if (n_utterances < 1 || frames_per_utterance < kMinLipFrames)
    throw Error("synth_viseme_corpus: bad sizes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> noise(-6, 6);
  std::vector<VideoFrames> videos(n_utterances);
  std::vector<LabeledFrames> out(n_utterances);
  for (int u = 0; u < n_utterances; ++u) {
    VideoFrames& v = videos[u];
    v.frames = frames_per_utterance;
    v.height = v.width = kLipSize;
    v.pixels.assign(static_cast<std::size_t>(v.frames) * kLipSize * kLipSize, 0);
    const double cy0 = kLipSize / 2.0 + (unit(rng) - 0.5) * 8.0;
    const double cx0 = kLipSize / 2.0 + (unit(rng) - 0.5) * 8.0;
    for (int t = 0; t < v.frames; ++t) {
      const int label = unit(rng) < 0.5 ? 0 : 1;
      out[u].labels.push_back(label);
      const double hw = label == 0 ? 16.0 + 6.0 * unit(rng) : 7.0 + 4.0 * unit(rng);
      const double hh = label == 0 ? 3.0 + 3.0 * unit(rng) : 10.0 + 5.0 * unit(rng);
      const double cy = cy0 + (unit(rng) - 0.5) * 2.0;
      const double cx = cx0 + (unit(rng) - 0.5) * 2.0;
      for (int r = 0; r < kLipSize; ++r) {
        for (int c = 0; c < kLipSize; ++c) {
          const double dy = (r - cy) / hh, dx = (c - cx) / hw;
          const int base = dy * dy + dx * dx <= 1.0 ? 50 : 170;
          v.at(t, r, c) = static_cast<std::uint8_t>(std::clamp(base + noise(rng), 0, 255));
        }
      }
    }
  }
  const FrameStats stats = compute_frame_stats(videos);
  for (int u = 0; u < n_utterances; ++u) out[u].frames = preprocess_frames(videos[u], stats);
  return out;
}

}  // namespace avtse
