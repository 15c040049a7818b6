// include/avtse/pipeline.hpp

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
#include "avtse/favsnet.hpp"
#include "avtse/lipnet.hpp"

namespace avtse {

/// Audio and video durations may differ by at most one video frame.
inline constexpr double kMaxAvSkewSeconds = 0.04;

/// Throws unless `samples` audio samples and `frames` video frames cover the
/// same time span.
void check_alignment(Eigen::Index samples, Eigen::Index frames);

/// Frozen lip embeddings of a preprocessed sequence, embedding_dim x T.
Matrix<float> lip_embeddings(LipNet<float>& extractor, const FrameSequence& frames);

/// Estimated target speech for one mixture given its lip embeddings
/// (embedding_dim x T). The estimate has the decoder output length, which
/// equals the mixture length when (L - K) is a multiple of S.
Eigen::VectorXd extract_target(AvTasNet<float>& model, const Eigen::VectorXd& mixture,
                               const Matrix<float>& embeddings);

/// End-to-end extraction from raw mixture samples and lip frames.
Eigen::VectorXd forward(const Eigen::VectorXd& mixture, const FrameSequence& frames,
                        LipNet<float>& extractor, AvTasNet<float>& model);

/// TF mask (frames x bins) predicted by the spectrogram baseline.
TFMask favs_mask(FavsNet<float>& model, const Spectrogram& mix_spec, const Matrix<float>& embeddings);

/// Spectrogram-baseline extraction. `oracle_target` must be given exactly
/// when phase == PhaseSource::oracle.
Eigen::VectorXd favs_separate(FavsNet<float>& model, const Eigen::VectorXd& mixture,
                              const Matrix<float>& embeddings, PhaseSource phase,
                              const Eigen::VectorXd* oracle_target = nullptr);

}  // namespace avtse
