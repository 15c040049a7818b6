// src/pipeline.cpp

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

#include "avtse/pipeline.hpp"

#include <cmath>

namespace avtse {

void check_alignment(Eigen::Index samples, Eigen::Index frames) {
  const double audio = static_cast<double>(samples) / kSampleRate;
  const double video = static_cast<double>(frames) / kVideoFps;
  if (std::abs(audio - video) > kMaxAvSkewSeconds + 1e-9)
    throw Error("audio (" + std::to_string(audio) + " s) and video (" + std::to_string(video) +
                " s) are not aligned");
}

Matrix<float> lip_embeddings(LipNet<float>& extractor, const FrameSequence& frames) {
  return extractor.extract(frames).transpose();
}

Eigen::VectorXd extract_target(AvTasNet<float>& model, const Eigen::VectorXd& mixture,
                               const Matrix<float>& embeddings) {
  model.set_training(false);
  const Batch<float> x{mixture.transpose().cast<float>()};
  const Batch<float> v{embeddings};
  const Batch<float> y = model.forward(x, v);
  return y[0].row(0).transpose().cast<double>();
}

Eigen::VectorXd forward(const Eigen::VectorXd& mixture, const FrameSequence& frames,
                        LipNet<float>& extractor, AvTasNet<float>& model) {
  check_alignment(mixture.size(), frames.size());
  return extract_target(model, mixture, lip_embeddings(extractor, frames));
}

TFMask favs_mask(FavsNet<float>& model, const Spectrogram& mix_spec, const Matrix<float>& embeddings) {
  model.set_training(false);
  const Batch<float> mags{magnitude_features<float>(mix_spec)};
  const Batch<float> v{embeddings};
  return model.forward(mags, v)[0].transpose().cast<double>().array();
}

Eigen::VectorXd favs_separate(FavsNet<float>& model, const Eigen::VectorXd& mixture,
                              const Matrix<float>& embeddings, PhaseSource phase,
                              const Eigen::VectorXd* oracle_target) {
  if ((phase == PhaseSource::oracle) != (oracle_target != nullptr))
    throw Error("favs_separate: an oracle target is required exactly for oracle phase");
  const FavsConfig& cfg = model.config();
  const Spectrogram mix_spec = stft(mixture, cfg.window, cfg.hop);
  const TFMask mask = favs_mask(model, mix_spec, embeddings);
  if (phase == PhaseSource::oracle) {
    const Spectrogram target_spec = stft(*oracle_target, cfg.window, cfg.hop);
    return apply_mask(mix_spec, mask, phase, &target_spec).samples;
  }
  return apply_mask(mix_spec, mask, phase).samples;
}

}  // namespace avtse
