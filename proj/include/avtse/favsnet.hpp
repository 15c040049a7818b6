// include/avtse/favsnet.hpp

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

#include "avtse/avtasnet.hpp"
#include "avtse/oracle_masks.hpp"

namespace avtse {

/// Spectrogram analysis for the frequency-domain baseline: 40 ms Hann
/// window, 10 ms hop at 16 kHz.
struct FavsConfig {
  int window = 640;
  int hop = 160;
  SeparatorConfig separator;

  int input_dim() const { return window / 2 + 1; }
  void validate() const;
};

/// Frequency-domain audio-visual baseline: the shared separator trunk driven
/// by linear magnitude spectra, emitting sigmoid TF masks.
///
/// Magnitudes enter as bins x frames; masks leave in the same layout.
template <typename Scalar>
class FavsNet {
 public:
  FavsNet(const FavsConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed), video_("video", cfg.separator, rng_),
        separator_("separator", cfg.input_dim(), cfg.input_dim(), MaskActivation::sigmoid,
                   cfg.separator, rng_) {
    cfg.validate();
  }

  const FavsConfig& config() const { return cfg_; }
  Separator<Scalar>& separator() { return separator_; }
  VideoEncoder<Scalar>& video_encoder() { return video_; }

  Batch<Scalar> forward(const Batch<Scalar>& magnitudes, const Batch<Scalar>& embeddings) {
    if (magnitudes.size() != embeddings.size()) throw Error("favsnet: batch size mismatch");
    for (const auto& m : magnitudes)
      if (m.rows() != cfg_.input_dim())
        throw Error("favsnet: expected " + std::to_string(cfg_.input_dim()) + " bins, got " +
                    std::to_string(m.rows()));
    return separator_.forward(magnitudes, video_.forward(embeddings));
  }

  void backward(const Batch<Scalar>& dmask) {
    auto [dfeat, dv] = separator_.backward(dmask);
    video_.backward(dv);
  }

  ParameterList<Scalar> parameters() {
    ParameterList<Scalar> out;
    video_.collect(out);
    separator_.collect(out);
    return out;
  }

  void set_training(bool on) {
    video_.set_training(on);
    separator_.set_training(on);
  }

 private:
  FavsConfig cfg_;
  std::mt19937_64 rng_;
  VideoEncoder<Scalar> video_;
  Separator<Scalar> separator_;
};

/// Magnitude spectrogram in the network layout (bins x frames).
template <typename Scalar>
Matrix<Scalar> magnitude_features(const Spectrogram& spec) {
  return spec.magnitude().transpose().matrix().template cast<Scalar>();
}

}  // namespace avtse
