// src/oracle_masks.cpp

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

#include "avtse/oracle_masks.hpp"

namespace avtse {

namespace {

void check_same_shape(const Spectrogram& a, const Spectrogram& b, const char* what) {
  if (a.frames.rows() != b.frames.rows() || a.frames.cols() != b.frames.cols())
    throw Error(std::string(what) + ": spectrogram shape mismatch");
}

}  // namespace

std::vector<TFMask> oracle_irm(const std::vector<Eigen::ArrayXXd>& source_mags) {
  if (source_mags.size() < 2) throw Error("oracle_irm: need at least two sources");
  Eigen::ArrayXXd total = Eigen::ArrayXXd::Zero(source_mags[0].rows(), source_mags[0].cols());
  for (const auto& m : source_mags) {
    if (m.rows() != total.rows() || m.cols() != total.cols())
      throw Error("oracle_irm: source shape mismatch");
    if ((m < 0.0).any()) throw Error("oracle_irm: negative magnitude");
    total += m;
  }
  std::vector<TFMask> masks;
  masks.reserve(source_mags.size());
  for (const auto& m : source_mags) masks.push_back(m / (total + kLossEpsilon));
  return masks;
}

Eigen::ArrayXXd phase_sensitive_target(const Spectrogram& target_spec,
                                       const Spectrogram& mixture_spec) {
  check_same_shape(target_spec, mixture_spec, "phase_sensitive_target");
  const auto& t = target_spec.frames;
  const auto& m = mixture_spec.frames;
  Eigen::ArrayXXd out(t.rows(), t.cols());
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      const double mt = std::abs(t(i, j)) * std::abs(m(i, j));
      // |t| cos(dphi) = Re(m conj(t)) / |m|
      const double cos_term = mt > 0.0 ? std::real(m(i, j) * std::conj(t(i, j))) / mt : 0.0;
      out(i, j) = std::abs(t(i, j)) * std::max(cos_term, 0.0);
    }
  }
  return out;
}

TFMask oracle_psm(const Spectrogram& target_spec, const Spectrogram& mixture_spec) {
  check_same_shape(target_spec, mixture_spec, "oracle_psm");
  const Eigen::ArrayXXd target = phase_sensitive_target(target_spec, mixture_spec);
  return (target / (mixture_spec.magnitude() + kLossEpsilon)).min(1.0).max(0.0);
}

Waveform apply_mask(const Spectrogram& mixture_spec, const TFMask& mask, PhaseSource phase,
                    const Spectrogram* oracle_phase) {
  if (mask.rows() != mixture_spec.frames.rows() || mask.cols() != mixture_spec.frames.cols())
    throw Error("apply_mask: mask shape mismatch");
  Spectrogram masked = mixture_spec;
  masked.frames = (mixture_spec.frames.array() * mask.cast<std::complex<double>>()).matrix();
  Waveform out;
  if (phase == PhaseSource::oracle) {
    if (oracle_phase == nullptr) throw Error("apply_mask: oracle phase requested but not given");
    check_same_shape(*oracle_phase, mixture_spec, "apply_mask");
    out.samples = istft(masked, oracle_phase);
  } else {
    out.samples = istft(masked, &mixture_spec);
  }
  return out;
}

PsaLoss psa_loss(const TFMask& mask_est, const Eigen::ArrayXXd& mixture_mag,
                 const Eigen::ArrayXXd& psa_target, bool with_gradient) {
  if (mask_est.rows() != mixture_mag.rows() || mask_est.cols() != mixture_mag.cols() ||
      psa_target.rows() != mixture_mag.rows() || psa_target.cols() != mixture_mag.cols())
    throw Error("psa_loss: shape mismatch");
  const Eigen::ArrayXXd diff = psa_target - mixture_mag * mask_est;
  const double n = static_cast<double>(diff.size());
  PsaLoss out;
  out.value = diff.square().sum() / n;
  if (with_gradient) out.gradient = (-2.0 / n) * mixture_mag * diff;
  return out;
}

PsaLoss psa_loss(const TFMask& mask_est, const Spectrogram& mixture_spec,
                 const Spectrogram& target_spec, bool with_gradient) {
  check_same_shape(target_spec, mixture_spec, "psa_loss");
  return psa_loss(mask_est, mixture_spec.magnitude(),
                  phase_sensitive_target(target_spec, mixture_spec), with_gradient);
}

}  // namespace avtse
