// tests/test_oracle_masks.cpp

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

#include <complex>
#include <random>

#include "avtse/oracle_masks.hpp"

using namespace avtse;

namespace {

Eigen::VectorXd randn(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Spectrogram spec_of(const Eigen::MatrixXcd& frames) {
  Spectrogram s;
  s.frames = frames;
  s.window_len = 2 * (static_cast<int>(frames.cols()) - 1);
  s.hop = s.window_len / 4;
  return s;
}

// Per-bin PSM straight from the polar form, angles via std::arg.
double psm_bin(std::complex<double> t, std::complex<double> m) {
  const double c = std::cos(std::arg(m) - std::arg(t));
  const double v = std::abs(t) / (std::abs(m) + 1e-8) * std::max(c, 0.0);
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace

TEST(Irm, IdenticalSourcesGiveHalf) {
  const Eigen::ArrayXXd a = Eigen::ArrayXXd::Random(5, 7).abs() + 0.1;
  const auto masks = oracle_irm({a, a});
  EXPECT_NEAR((masks[0] - 0.5).abs().maxCoeff(), 0.0, 1e-7);
  EXPECT_NEAR((masks[1] - 0.5).abs().maxCoeff(), 0.0, 1e-7);
}

TEST(Irm, SilentInterferer) {
  const Eigen::ArrayXXd a = Eigen::ArrayXXd::Random(4, 6).abs() + 0.1;
  const auto masks = oracle_irm({a, Eigen::ArrayXXd::Zero(4, 6)});
  EXPECT_NEAR((masks[0] - 1.0).abs().maxCoeff(), 0.0, 1e-6);
  EXPECT_EQ(masks[1].abs().maxCoeff(), 0.0);
}

TEST(Irm, MasksSumToAtMostOne) {
  std::mt19937_64 rng(1);
  std::vector<Eigen::ArrayXXd> mags;
  for (int i = 0; i < 3; ++i) mags.push_back(Eigen::ArrayXXd::Random(8, 9).abs());
  const auto masks = oracle_irm(mags);
  const Eigen::ArrayXXd sum = masks[0] + masks[1] + masks[2];
  EXPECT_LE(sum.maxCoeff(), 1.0);
  const Eigen::ArrayXXd total = mags[0] + mags[1] + mags[2];
  EXPECT_LT((sum - total / (total + 1e-8)).abs().maxCoeff(), 1e-12);
}

TEST(Irm, Errors) {
  EXPECT_THROW(oracle_irm({Eigen::ArrayXXd::Ones(2, 2)}), Error);
  EXPECT_THROW(oracle_irm({Eigen::ArrayXXd::Ones(2, 2), Eigen::ArrayXXd::Ones(2, 3)}), Error);
  EXPECT_THROW(oracle_irm({Eigen::ArrayXXd::Ones(2, 2), -Eigen::ArrayXXd::Ones(2, 2)}), Error);
}

TEST(Psm, MatchesPolarFormula) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d;
  Eigen::MatrixXcd t(6, 9), m(6, 9);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    t.data()[i] = {d(rng), d(rng)};
    m.data()[i] = {d(rng), d(rng)};
  }
  const TFMask psm = oracle_psm(spec_of(t), spec_of(m));
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) EXPECT_NEAR(psm(i, j), psm_bin(t(i, j), m(i, j)), 1e-12);
  EXPECT_GE(psm.minCoeff(), 0.0);
  EXPECT_LE(psm.maxCoeff(), 1.0);
}

TEST(Psm, TargetEqualsMixture) {
  std::mt19937_64 rng(3);
  const Spectrogram s = stft(randn(4000, rng), 512, 128);
  EXPECT_LT((oracle_psm(s, s) - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(Psm, AntiPhaseBinIsZero) {
  Eigen::MatrixXcd t = Eigen::MatrixXcd::Constant(2, 5, {1.0, 1.0});
  Eigen::MatrixXcd m = t;
  m(1, 2) = -t(1, 2);
  const TFMask psm = oracle_psm(spec_of(t), spec_of(m));
  EXPECT_EQ(psm(1, 2), 0.0);
  EXPECT_NEAR(psm(0, 0), 1.0, 1e-7);
}

TEST(ApplyMask, IdentityAndZero) {
  std::mt19937_64 rng(4);
  const Eigen::VectorXd x = randn(6000, rng);
  const Spectrogram s = stft(x, 640, 160);
  const Waveform one = apply_mask(s, TFMask::Ones(s.num_frames(), s.num_bins()), PhaseSource::mix);
  EXPECT_LT((one.samples - istft(s)).cwiseAbs().maxCoeff(), 1e-12);
  const Waveform zero = apply_mask(s, TFMask::Zero(s.num_frames(), s.num_bins()), PhaseSource::mix);
  EXPECT_EQ(zero.samples.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyMask, OraclePhaseRequired) {
  std::mt19937_64 rng(5);
  const Spectrogram s = stft(randn(3000, rng), 640, 160);
  const TFMask m = TFMask::Ones(s.num_frames(), s.num_bins());
  EXPECT_THROW(apply_mask(s, m, PhaseSource::oracle), Error);
  EXPECT_THROW(apply_mask(s, TFMask::Ones(2, 2), PhaseSource::mix), Error);
}

TEST(ApplyMask, OraclePhaseBeatsMixPhase) {
  std::mt19937_64 rng(6);
  const Eigen::VectorXd t = randn(8000, rng), n = randn(8000, rng);
  const Eigen::VectorXd m = t + n;
  const Spectrogram ms = stft(m, 640, 160), ts = stft(t, 640, 160);
  const TFMask psm = oracle_psm(ts, ms);
  const Eigen::VectorXd mix_phase = apply_mask(ms, psm, PhaseSource::mix).samples;
  const Eigen::VectorXd oracle_phase = apply_mask(ms, psm, PhaseSource::oracle, &ts).samples;
  const Eigen::Index len = mix_phase.size();
  EXPECT_GT(si_snr(oracle_phase, t.head(len)), si_snr(mix_phase, t.head(len)));
  EXPECT_GT(si_snr(mix_phase, t.head(len)), si_snr(m.head(len), t.head(len)));
}

TEST(PsaLoss, ZeroAtOracleForInPhaseSignals) {
  std::mt19937_64 rng(7);
  const Eigen::VectorXd t = randn(4000, rng);
  const Spectrogram ts = stft(t, 512, 128), ms = stft((2.0 * t).eval(), 512, 128);
  EXPECT_LT(psa_loss(oracle_psm(ts, ms), ms, ts).value, 1e-12);
}

TEST(PsaLoss, ZeroMaskOnTargetEqualsMixture) {
  std::mt19937_64 rng(8);
  const Spectrogram s = stft(randn(3000, rng), 512, 128);
  const PsaLoss l = psa_loss(TFMask::Zero(s.num_frames(), s.num_bins()), s, s);
  EXPECT_NEAR(l.value, s.magnitude().square().mean(), 1e-9 * l.value);
}

TEST(PsaLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const Spectrogram ms = stft(randn(1024, rng), 128, 32), ts = stft(randn(1024, rng), 128, 32);
  const TFMask mask = (TFMask::Random(ms.num_frames(), ms.num_bins()) + 1.0) / 2.0;
  const PsaLoss l = psa_loss(mask, ms, ts);
  Eigen::ArrayXXd fd(mask.rows(), mask.cols());
  TFMask p = mask;
  const double h = 1e-4;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    p.data()[i] = mask.data()[i] + h;
    const double up = psa_loss(p, ms, ts, false).value;
    p.data()[i] = mask.data()[i] - h;
    const double down = psa_loss(p, ms, ts, false).value;
    p.data()[i] = mask.data()[i];
    fd.data()[i] = (up - down) / (2 * h);
  }
  EXPECT_LT((l.gradient - fd).matrix().norm() / fd.matrix().norm(), 1e-4);
  EXPECT_GE(l.value, 0.0);
}

TEST(PsaLoss, ShapeMismatch) {
  std::mt19937_64 rng(10);
  const Spectrogram a = stft(randn(1024, rng), 128, 32), b = stft(randn(2048, rng), 128, 32);
  EXPECT_THROW(psa_loss(TFMask::Ones(a.num_frames(), a.num_bins()), a, b), Error);
}
