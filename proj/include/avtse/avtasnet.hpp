// include/avtse/avtasnet.hpp

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
#include <string>
#include <utility>

#include "avtse/nn/layers.hpp"

namespace avtse {

using nn::Batch;
using nn::NormKind;
using nn::ParameterList;

struct EncoderConfig {
  int kernel = 40;            // K, samples
  int stride = 20;            // S, samples
  int basis_channels = 256;

  void validate() const;
  Eigen::Index frames(Eigen::Index samples) const { return (samples - kernel) / stride + 1; }
  Eigen::Index samples(Eigen::Index frames) const { return (frames - 1) * stride + kernel; }
};

enum class MaskActivation { relu, sigmoid };

struct SeparatorConfig {
  static constexpr int kTotalBlocks = 4;

  int sub_blocks = 8;       // D; sub-block d uses dilation 2^d
  int audio_blocks = 1;     // N_a
  int fused_blocks = 3;     // N_f
  NormKind norm = NormKind::global_layer;
  int bottleneck = 256;
  int hidden = 512;
  int conv_kernel = 3;
  int video_blocks = 5;
  int video_channels = 512;
  int embedding_dim = 256;
  bool video_residual = true;

  void validate() const;
};

std::string to_string(NormKind norm);
NormKind parse_norm(const std::string& name);

/// Nearest-neighbour upsampling of a C x T_v sequence to exactly `length`
/// frames: each frame is repeated round(length / T_v) times, then the result
/// is trimmed or padded with copies of the last frame.
int upsample_factor(Eigen::Index length, Eigen::Index video_len);

template <typename Scalar>
Matrix<Scalar> upsample_repeat(const Matrix<Scalar>& v, Eigen::Index length) {
  if (v.cols() == 0 || length == 0) throw Error("upsample: empty input");
  const int factor = upsample_factor(length, v.cols());
  Matrix<Scalar> out(v.rows(), length);
  for (Eigen::Index t = 0; t < length; ++t)
    out.col(t) = v.col(std::min<Eigen::Index>(t / factor, v.cols() - 1));
  return out;
}

/// Adjoint of upsample_repeat.
template <typename Scalar>
Matrix<Scalar> upsample_repeat_backward(const Matrix<Scalar>& grad, Eigen::Index video_len) {
  const int factor = upsample_factor(grad.cols(), video_len);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(grad.rows(), video_len);
  for (Eigen::Index t = 0; t < grad.cols(); ++t)
    out.col(std::min<Eigen::Index>(t / factor, video_len - 1)) += grad.col(t);
  return out;
}

/// One dilated sub-block:
/// 1x1 -> PReLU -> norm -> depthwise (dilated) -> PReLU -> norm -> 1x1, plus
/// the residual input.
template <typename Scalar>
class ConvBlock : public nn::Layer<Scalar> {
 public:
  ConvBlock(const std::string& name, const SeparatorConfig& cfg, int dilation,
            std::mt19937_64& rng) {
    body_.template emplace<nn::Pointwise<Scalar>>(name + ".conv_in", cfg.bottleneck, cfg.hidden, true, rng);
    body_.template emplace<nn::PReLU<Scalar>>(name + ".prelu1");
    body_.push(nn::make_norm<Scalar>(cfg.norm, name + ".norm1", cfg.hidden));
    body_.template emplace<nn::DepthwiseConv1d<Scalar>>(name + ".dconv", cfg.hidden, cfg.conv_kernel,
                                                        dilation, true, rng);
    body_.template emplace<nn::PReLU<Scalar>>(name + ".prelu2");
    body_.push(nn::make_norm<Scalar>(cfg.norm, name + ".norm2", cfg.hidden));
    out_ = &body_.template emplace<nn::Pointwise<Scalar>>(name + ".conv_out", cfg.hidden,
                                                          cfg.bottleneck, true, rng);
  }

  nn::Pointwise<Scalar>& output_conv() { return *out_; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override { return nn::add(x, body_.forward(x)); }
  Batch<Scalar> backward(const Batch<Scalar>& dy) override { return nn::add(dy, body_.backward(dy)); }
  void collect(ParameterList<Scalar>& out) override { body_.collect(out); }
  void set_training(bool on) override {
    nn::Layer<Scalar>::set_training(on);
    body_.set_training(on);
  }

 private:
  nn::Sequential<Scalar> body_;
  nn::Pointwise<Scalar>* out_ = nullptr;
};

/// `repeats` stacked Conv_s units, each made of D sub-blocks with dilations
/// 1, 2, ..., 2^(D-1).
template <typename Scalar>
class ConvStack : public nn::Layer<Scalar> {
 public:
  ConvStack(const std::string& name, const SeparatorConfig& cfg, int repeats, std::mt19937_64& rng)
      : bottleneck_(cfg.bottleneck) {
    for (int r = 0; r < repeats; ++r)
      for (int d = 0; d < cfg.sub_blocks; ++d)
        blocks_.push_back(&stack_.template emplace<ConvBlock<Scalar>>(
            name + "." + std::to_string(r) + "." + std::to_string(d), cfg, 1 << d, rng));
  }

  std::size_t num_sub_blocks() const { return blocks_.size(); }
  ConvBlock<Scalar>& block(std::size_t i) { return *blocks_[i]; }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    for (const auto& xb : x)
      if (xb.rows() != bottleneck_) throw Error("conv stack: input channels must equal the bottleneck");
    return stack_.forward(x);
  }
  Batch<Scalar> backward(const Batch<Scalar>& dy) override { return stack_.backward(dy); }
  void collect(ParameterList<Scalar>& out) override { stack_.collect(out); }
  void set_training(bool on) override {
    nn::Layer<Scalar>::set_training(on);
    stack_.set_training(on);
  }

 private:
  int bottleneck_;
  nn::Sequential<Scalar> stack_;
  std::vector<ConvBlock<Scalar>*> blocks_;
};

/// ReLU -> batch norm -> depthwise-separable conv (kernel 3, stride 1), with
/// a residual connection when input and output widths agree.
template <typename Scalar>
class VideoBlock : public nn::Layer<Scalar> {
 public:
  VideoBlock(const std::string& name, int in, int out, bool residual, std::mt19937_64& rng)
      : residual_(residual && in == out) {
    body_.template emplace<nn::ReLU<Scalar>>();
    body_.template emplace<nn::BatchNorm1d<Scalar>>(name + ".bn", in);
    body_.template emplace<nn::DepthwiseConv1d<Scalar>>(name + ".dconv", in, 3, 1, false, rng);
    body_.template emplace<nn::Pointwise<Scalar>>(name + ".pconv", in, out, true, rng);
  }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    Batch<Scalar> y = body_.forward(x);
    return residual_ ? nn::add(x, y) : y;
  }
  Batch<Scalar> backward(const Batch<Scalar>& dy) override {
    Batch<Scalar> dx = body_.backward(dy);
    return residual_ ? nn::add(dx, dy) : dx;
  }
  void collect(ParameterList<Scalar>& out) override { body_.collect(out); }
  void set_training(bool on) override {
    nn::Layer<Scalar>::set_training(on);
    body_.set_training(on);
  }

 private:
  bool residual_;
  nn::Sequential<Scalar> body_;
};

/// Temporal encoder over lip embeddings (embedding_dim x T_v) producing
/// bottleneck x T_v features.
template <typename Scalar>
class VideoEncoder : public nn::Layer<Scalar> {
 public:
  VideoEncoder(const std::string& name, const SeparatorConfig& cfg, std::mt19937_64& rng)
      : embedding_dim_(cfg.embedding_dim) {
    int width = cfg.embedding_dim;
    for (int i = 0; i < cfg.video_blocks; ++i) {
      stack_.template emplace<VideoBlock<Scalar>>(name + ".block" + std::to_string(i), width,
                                                  cfg.video_channels, cfg.video_residual, rng);
      width = cfg.video_channels;
    }
    stack_.template emplace<nn::Pointwise<Scalar>>(name + ".proj", width, cfg.bottleneck, true, rng);
  }

  Batch<Scalar> forward(const Batch<Scalar>& x) override {
    for (const auto& xb : x)
      if (xb.rows() != embedding_dim_)
        throw Error("video encoder: expected " + std::to_string(embedding_dim_) +
                    "-dim embeddings, got " + std::to_string(xb.rows()));
    return stack_.forward(x);
  }
  Batch<Scalar> backward(const Batch<Scalar>& dy) override { return stack_.backward(dy); }
  void collect(ParameterList<Scalar>& out) override { stack_.collect(out); }
  void set_training(bool on) override {
    nn::Layer<Scalar>::set_training(on);
    stack_.set_training(on);
  }

 private:
  int embedding_dim_;
  nn::Sequential<Scalar> stack_;
};

/// Concatenates audio features with time-synchronized video features over
/// channels and projects back to the audio width.
template <typename Scalar>
class Fusion {
 public:
  Fusion(const std::string& name, int audio_channels, int video_channels, std::mt19937_64& rng)
      : audio_channels_(audio_channels),
        video_channels_(video_channels),
        proj_(name + ".proj", audio_channels + video_channels, audio_channels, true, rng) {}

  nn::Pointwise<Scalar>& projection() { return proj_; }

  Batch<Scalar> forward(const Batch<Scalar>& audio, const Batch<Scalar>& video) {
    if (audio.size() != video.size()) throw Error("fuse: batch size mismatch");
    video_lens_.resize(video.size());
    Batch<Scalar> stacked(audio.size());
    for (std::size_t b = 0; b < audio.size(); ++b) {
      if (audio[b].cols() == 0 || video[b].cols() == 0) throw Error("fuse: empty input");
      if (audio[b].rows() != audio_channels_ || video[b].rows() != video_channels_)
        throw Error("fuse: channel mismatch");
      video_lens_[b] = video[b].cols();
      stacked[b].resize(audio_channels_ + video_channels_, audio[b].cols());
      stacked[b].topRows(audio_channels_) = audio[b];
      stacked[b].bottomRows(video_channels_) = upsample_repeat(video[b], audio[b].cols());
    }
    return proj_.forward(stacked);
  }

  std::pair<Batch<Scalar>, Batch<Scalar>> backward(const Batch<Scalar>& dy) {
    const Batch<Scalar> dstacked = proj_.backward(dy);
    Batch<Scalar> da(dy.size()), dv(dy.size());
    for (std::size_t b = 0; b < dy.size(); ++b) {
      da[b] = dstacked[b].topRows(audio_channels_);
      dv[b] = upsample_repeat_backward<Scalar>(dstacked[b].bottomRows(video_channels_), video_lens_[b]);
    }
    return {std::move(da), std::move(dv)};
  }

  void collect(ParameterList<Scalar>& out) { proj_.collect(out); }

 private:
  int audio_channels_;
  int video_channels_;
  nn::Pointwise<Scalar> proj_;
  std::vector<Eigen::Index> video_lens_;
};

/// Mask estimator conditioned on video: norm -> 1x1 into the bottleneck ->
/// N_a Conv_s units -> fusion -> N_f Conv_s units -> 1x1 -> mask activation.
/// Shared by the time-domain model and the spectrogram baseline.
template <typename Scalar>
class Separator {
 public:
  Separator(const std::string& name, int in_dim, int out_dim, MaskActivation activation,
            const SeparatorConfig& cfg, std::mt19937_64& rng)
      : fusion_(name + ".fusion", cfg.bottleneck, cfg.bottleneck, rng) {
    cfg.validate();
    front_.push(nn::make_norm<Scalar>(cfg.norm, name + ".norm_in", in_dim));
    front_.template emplace<nn::Pointwise<Scalar>>(name + ".proj_in", in_dim, cfg.bottleneck, true, rng);
    audio_ = std::make_unique<ConvStack<Scalar>>(name + ".audio", cfg, cfg.audio_blocks, rng);
    fused_ = std::make_unique<ConvStack<Scalar>>(name + ".fused", cfg, cfg.fused_blocks, rng);
    head_.template emplace<nn::Pointwise<Scalar>>(name + ".mask_conv", cfg.bottleneck, out_dim, true, rng);
    if (activation == MaskActivation::relu)
      head_.template emplace<nn::ReLU<Scalar>>();
    else
      head_.template emplace<nn::Sigmoid<Scalar>>();
  }

  ConvStack<Scalar>& audio_stack() { return *audio_; }
  ConvStack<Scalar>& fused_stack() { return *fused_; }
  Fusion<Scalar>& fusion() { return fusion_; }

  Batch<Scalar> forward(const Batch<Scalar>& features, const Batch<Scalar>& video) {
    const Batch<Scalar> audio = audio_->forward(front_.forward(features));
    return head_.forward(fused_->forward(fusion_.forward(audio, video)));
  }

  /// Returns (d features, d video).
  std::pair<Batch<Scalar>, Batch<Scalar>> backward(const Batch<Scalar>& dmask) {
    auto [da, dv] = fusion_.backward(fused_->backward(head_.backward(dmask)));
    Batch<Scalar> dfeat = front_.backward(audio_->backward(da));
    return {std::move(dfeat), std::move(dv)};
  }

  void collect(ParameterList<Scalar>& out) {
    front_.collect(out);
    audio_->collect(out);
    fusion_.collect(out);
    fused_->collect(out);
    head_.collect(out);
  }

  void set_training(bool on) {
    front_.set_training(on);
    audio_->set_training(on);
    fused_->set_training(on);
    head_.set_training(on);
  }

 private:
  nn::Sequential<Scalar> front_;
  std::unique_ptr<ConvStack<Scalar>> audio_;
  Fusion<Scalar> fusion_;
  std::unique_ptr<ConvStack<Scalar>> fused_;
  nn::Sequential<Scalar> head_;
};

/// Time-domain audio-visual target speaker extractor.
///
/// Waveforms enter as 1 x L rows, lip embeddings as embedding_dim x T_v.
/// The estimate is Decoder(ReLU(Encoder(x)) * mask).
template <typename Scalar>
class AvTasNet {
 public:
  AvTasNet(const EncoderConfig& enc, const SeparatorConfig& sep, std::uint64_t seed)
      : enc_cfg_(enc), sep_cfg_(sep), rng_(seed), encoder_("encoder", enc.basis_channels, enc.kernel, enc.stride, rng_),
        video_("video", sep, rng_),
        separator_("separator", enc.basis_channels, enc.basis_channels, MaskActivation::relu, sep, rng_),
        decoder_("decoder", enc.basis_channels, enc.kernel, enc.stride, rng_) {
    enc.validate();
  }

  const EncoderConfig& encoder_config() const { return enc_cfg_; }
  const SeparatorConfig& separator_config() const { return sep_cfg_; }
  nn::StridedConv1d<Scalar>& encoder() { return encoder_; }
  nn::TransposedConv1d<Scalar>& decoder() { return decoder_; }
  VideoEncoder<Scalar>& video_encoder() { return video_; }
  Separator<Scalar>& separator() { return separator_; }

  /// ReLU(conv1d(x, K, S)).
  Batch<Scalar> encode(const Batch<Scalar>& x) { return relu_.forward(encoder_.forward(x)); }
  Batch<Scalar> decode(const Batch<Scalar>& masked) { return decoder_.forward(masked); }

  Batch<Scalar> forward(const Batch<Scalar>& mixtures, const Batch<Scalar>& embeddings) {
    if (mixtures.size() != embeddings.size()) throw Error("avtasnet: batch size mismatch");
    encoded_ = encode(mixtures);
    masks_ = separator_.forward(encoded_, video_.forward(embeddings));
    Batch<Scalar> masked(encoded_.size());
    for (std::size_t b = 0; b < encoded_.size(); ++b)
      masked[b] = encoded_[b].cwiseProduct(masks_[b]);
    return decoder_.forward(masked);
  }

  const Batch<Scalar>& last_masks() const { return masks_; }
  const Batch<Scalar>& last_encoded() const { return encoded_; }

  void backward(const Batch<Scalar>& d_estimates) {
    const Batch<Scalar> dmasked = decoder_.backward(d_estimates);
    Batch<Scalar> dmask(dmasked.size()), dw(dmasked.size());
    for (std::size_t b = 0; b < dmasked.size(); ++b) {
      dmask[b] = dmasked[b].cwiseProduct(encoded_[b]);
      dw[b] = dmasked[b].cwiseProduct(masks_[b]);
    }
    auto [dw_sep, dv] = separator_.backward(dmask);
    video_.backward(dv);
    for (std::size_t b = 0; b < dw.size(); ++b) dw[b] += dw_sep[b];
    encoder_.backward(relu_.backward(dw));
  }

  ParameterList<Scalar> parameters() {
    ParameterList<Scalar> out;
    encoder_.collect(out);
    video_.collect(out);
    separator_.collect(out);
    decoder_.collect(out);
    return out;
  }

  void set_training(bool on) {
    video_.set_training(on);
    separator_.set_training(on);
  }

 private:
  EncoderConfig enc_cfg_;
  SeparatorConfig sep_cfg_;
  std::mt19937_64 rng_;
  nn::StridedConv1d<Scalar> encoder_;
  nn::ReLU<Scalar> relu_;
  VideoEncoder<Scalar> video_;
  Separator<Scalar> separator_;
  nn::TransposedConv1d<Scalar> decoder_;
  Batch<Scalar> encoded_;
  Batch<Scalar> masks_;
};

}  // namespace avtse
