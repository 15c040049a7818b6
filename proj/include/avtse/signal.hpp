// include/avtse/signal.hpp

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

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "avtse/core.hpp"

namespace avtse {

inline constexpr double kSiSnrClampDb = 30.0;
inline constexpr double kLossEpsilon = 1e-8;

namespace detail {

template <typename Derived>
Eigen::VectorXd zero_mean(const Eigen::MatrixBase<Derived>& x) {
  Eigen::VectorXd v = x.template cast<double>();
  v.array() -= v.mean();
  return v;
}

template <typename DE, typename DT>
void check_pair(const Eigen::MatrixBase<DE>& estimate, const Eigen::MatrixBase<DT>& target) {
  if (estimate.size() != target.size())
    throw Error("si_snr: length mismatch (" + std::to_string(estimate.size()) + " vs " +
                std::to_string(target.size()) + ")");
  if (target.size() < 2) throw Error("si_snr: need at least two samples");
}

}  // namespace detail

/// Scale-invariant SNR in dB, clamped to [-30, 30] for reporting.
///
/// Both signals are zero-meaned, the target is rescaled by the optimal
/// projection factor alpha = <e, t> / <t, t>, and the ratio of projection
/// energy to residual energy is returned. A target with no variance has no
/// defined alpha and is rejected.
template <typename DE, typename DT>
double si_snr(const Eigen::MatrixBase<DE>& estimate, const Eigen::MatrixBase<DT>& target) {
  detail::check_pair(estimate, target);
  const Eigen::VectorXd e = detail::zero_mean(estimate);
  const Eigen::VectorXd t = detail::zero_mean(target);
  const double tt = t.squaredNorm();
  const double raw = target.template cast<double>().squaredNorm();
  if (tt <= std::numeric_limits<double>::epsilon() * raw || tt == 0.0)
    throw Error("si_snr: target has zero variance");
  const double alpha = e.dot(t) / tt;
  const double signal = (alpha * t).norm();
  const double noise = (e - alpha * t).norm();
  if (noise == 0.0) return kSiSnrClampDb;
  if (signal == 0.0) return -kSiSnrClampDb;
  return std::clamp(20.0 * std::log10(signal / noise), -kSiSnrClampDb, kSiSnrClampDb);
}

/// Unclamped, epsilon-guarded Si-SNR of one pair and its gradient with
/// respect to the estimate. Used for training.
struct SiSnrTerm {
  double value = 0.0;         // dB
  Eigen::VectorXd gradient;   // d value / d estimate
};

template <typename DE, typename DT>
SiSnrTerm si_snr_term(const Eigen::MatrixBase<DE>& estimate, const Eigen::MatrixBase<DT>& target,
                      bool with_gradient = true) {
  detail::check_pair(estimate, target);
  const Eigen::VectorXd e = detail::zero_mean(estimate);
  const Eigen::VectorXd t = detail::zero_mean(target);
  const double tt = t.squaredNorm();
  if (tt == 0.0) throw Error("si_snr: target has zero variance");

  const double denom = tt + kLossEpsilon;
  const double alpha = e.dot(t) / denom;
  const Eigen::VectorXd residual = e - alpha * t;
  const double t_norm = std::sqrt(tt);
  const double proj = std::abs(alpha) * t_norm;
  const double res = residual.norm();
  const double ratio = proj / (res + kLossEpsilon) + kLossEpsilon;

  SiSnrTerm out;
  out.value = 20.0 * std::log10(ratio);
  if (!with_gradient) return out;

  const double d_ratio = 20.0 / (std::log(10.0) * ratio);
  const double d_proj = 1.0 / (res + kLossEpsilon);
  const double d_res = -proj / ((res + kLossEpsilon) * (res + kLossEpsilon));
  const double sign = alpha > 0.0 ? 1.0 : (alpha < 0.0 ? -1.0 : 0.0);

  // d proj / d e = sign(alpha) |t| t / denom
  Eigen::VectorXd grad = (d_proj * sign * t_norm / denom) * t;
  if (res > 0.0) {
    // d res / d e = (r - t <t, r> / denom) / |r|
    grad += (d_res / res) * (residual - (t.dot(residual) / denom) * t);
  }
  grad *= d_ratio;
  // Zero-mean projection is symmetric: pull the gradient back through it.
  grad.array() -= grad.mean();
  out.gradient = std::move(grad);
  return out;
}

/// Batch loss -mean(si_snr) without the reporting clamp, plus per-item
/// gradients.
struct LossResult {
  double value = 0.0;
  std::vector<Eigen::VectorXd> gradients;
};

LossResult si_snr_loss(std::span<const Eigen::VectorXd> estimates,
                       std::span<const Eigen::VectorXd> targets, bool with_gradient = true);

/// Utterance-level permutation-invariant Si-SNR loss.
struct PitResult {
  double value = 0.0;
  std::vector<int> permutation;  // permutation[i] = estimate assigned to target i
  std::vector<Eigen::VectorXd> gradients;  // indexed by estimate
};

PitResult pit_si_snr_loss(std::span<const Eigen::VectorXd> estimates,
                          std::span<const Eigen::VectorXd> targets, bool with_gradient = false);

/// One-sided short-time spectrum, frames x bins.
struct Spectrogram {
  Eigen::MatrixXcd frames;
  int window_len = 0;
  int hop = 0;
  std::string window = "hann";

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index num_bins() const { return frames.cols(); }
  Eigen::ArrayXXd magnitude() const { return frames.array().abs(); }
  Eigen::ArrayXXd phase() const { return frames.array().arg(); }
};

/// Periodic Hann window.
Eigen::VectorXd hann_window(int length);

Spectrogram stft(const Eigen::VectorXd& samples, int window_len, int hop);
inline Spectrogram stft(const Waveform& w, int window_len, int hop) {
  return stft(w.samples, window_len, hop);
}

/// Weighted overlap-add inverse. When phase_source is given, the magnitude
/// of `spec` is combined with the phase of `phase_source`.
Eigen::VectorXd istft(const Spectrogram& spec, const Spectrogram* phase_source = nullptr);

/// Samples whose synthesis normalization is well conditioned:
/// [window_len, length - window_len).
inline std::pair<Eigen::Index, Eigen::Index> interior_range(Eigen::Index length, int window_len) {
  return {window_len, std::max<Eigen::Index>(window_len, length - window_len)};
}

// 16-bit PCM mono WAV.
Waveform read_wav(const std::string& path);
/// Writes 16-bit PCM. Returns the gain applied; signals peaking at or above
/// full scale are scaled down to 0.99 peak.
double write_wav(const std::string& path, const Waveform& w);

}  // namespace avtse
