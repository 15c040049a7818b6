// include/avtse/oracle_masks.hpp

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

#include <vector>

#include <Eigen/Core>

#include "avtse/signal.hpp"

namespace avtse {

/// Real-valued time-frequency mask, frames x bins.
using TFMask = Eigen::ArrayXXd;

enum class PhaseSource { mix, oracle };

/// Ideal ratio masks from source magnitudes: |s_i| / (sum_j |s_j| + eps).
std::vector<TFMask> oracle_irm(const std::vector<Eigen::ArrayXXd>& source_mags);

/// Phase-sensitive mask clipped to [0, 1]:
/// |s_t| / (|s_m| + eps) * max(cos(angle s_m - angle s_t), 0).
TFMask oracle_psm(const Spectrogram& target_spec, const Spectrogram& mixture_spec);

/// The phase-discounted target magnitude |s_t| * max(cos(angle s_m - angle s_t), 0).
Eigen::ArrayXXd phase_sensitive_target(const Spectrogram& target_spec,
                                       const Spectrogram& mixture_spec);

/// Masked mixture magnitude resynthesized with either the mixture phase or
/// the phase of `oracle_phase`.
Waveform apply_mask(const Spectrogram& mixture_spec, const TFMask& mask, PhaseSource phase,
                    const Spectrogram* oracle_phase = nullptr);

/// Phase-sensitive spectrum approximation loss, mean over frames and bins,
/// with its gradient with respect to the mask.
struct PsaLoss {
  double value = 0.0;
  Eigen::ArrayXXd gradient;
};

PsaLoss psa_loss(const TFMask& mask_est, const Spectrogram& mixture_spec,
                 const Spectrogram& target_spec, bool with_gradient = true);

/// Same loss with the phase-discounted target precomputed.
PsaLoss psa_loss(const TFMask& mask_est, const Eigen::ArrayXXd& mixture_mag,
                 const Eigen::ArrayXXd& psa_target, bool with_gradient = true);

}  // namespace avtse
