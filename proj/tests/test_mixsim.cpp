// tests/test_mixsim.cpp

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

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "avtse/mixsim.hpp"
#include "avtse/signal.hpp"

using namespace avtse;
namespace fs = std::filesystem;

namespace {

Eigen::VectorXd randn(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double power(const Eigen::VectorXd& x) { return x.squaredNorm() / static_cast<double>(x.size()); }

std::vector<SourceRecord> fake_corpus(int n, double duration = 3.0) {
  std::vector<SourceRecord> c;
  for (int i = 0; i < n; ++i)
    c.push_back({"u" + std::to_string(i), "audio/u" + std::to_string(i) + ".wav",
                 "video/u" + std::to_string(i) + ".avf", duration + 0.1 * i});
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("avtse_mixsim_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Mix, EqualPowerZeroSnr) {
  std::mt19937_64 rng(1);
  Eigen::VectorXd a = randn(1000, rng), b = randn(1000, rng);
  b *= std::sqrt(power(a) / power(b));
  const std::vector<Eigen::VectorXd> s{a, b};
  const std::vector<double> snr{0.0, 0.0};
  const MixResult m = mix(s, snr);
  EXPECT_LT((m.scaled_sources[1] - b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.mixture - (a + b)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mix, PowerRatiosAndLinearity) {
  std::mt19937_64 rng(2);
  const std::vector<Eigen::VectorXd> s{randn(5000, rng, 0.3), randn(5200, rng, 2.0), randn(4900, rng, 0.01)};
  const std::vector<double> snr{0.0, 3.0, -3.0};
  const MixResult m = mix(s, snr);
  ASSERT_EQ(m.mixture.size(), 4900);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double want = std::pow(10.0, (snr[i] - snr[j]) / 10.0);
      const double got = power(m.scaled_sources[i]) / power(m.scaled_sources[j]);
      EXPECT_NEAR(got / want, 1.0, 1e-6);
    }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4900);
  for (const auto& x : m.scaled_sources) sum += x;
  EXPECT_LE((m.mixture - sum).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(m.scaled_sources[0], s[0].head(4900));
}

TEST(Mix, Errors) {
  std::mt19937_64 rng(3);
  const std::vector<Eigen::VectorXd> s{randn(100, rng), Eigen::VectorXd::Zero(100)};
  EXPECT_THROW(mix(s, std::vector<double>{0.0, 0.0}), Error);
  const std::vector<Eigen::VectorXd> ok{randn(100, rng), randn(100, rng)};
  EXPECT_THROW(mix(ok, std::vector<double>{0.0, 25.0}), Error);
  EXPECT_THROW(mix(ok, std::vector<double>{1.0, 0.0}), Error);
  EXPECT_THROW(mix(ok, std::vector<double>{0.0}), Error);
  EXPECT_THROW(mix(std::span(ok).first(1), std::vector<double>{0.0}), Error);
}

TEST(Manifest, DeterministicAndWellFormed) {
  const auto corpus = fake_corpus(12);
  const Manifest a = build_manifest(corpus, 3, 50, {-5, 5}, 11);
  const Manifest b = build_manifest(corpus, 3, 50, {-5, 5}, 11);
  const Manifest c = build_manifest(corpus, 3, 50, {-5, 5}, 12);
  EXPECT_EQ(to_jsonl(a), to_jsonl(b));
  EXPECT_NE(to_jsonl(a), to_jsonl(c));
  ASSERT_EQ(a.records.size(), 50u);
  for (const auto& r : a.records) {
    EXPECT_EQ(r.num_speakers(), 3);
    EXPECT_EQ(std::set<std::string>(r.source_ids.begin(), r.source_ids.end()).size(), 3u);
    EXPECT_EQ(r.snrs_db[0], 0.0);
    for (double v : r.snrs_db) EXPECT_LE(std::abs(v), 5.0);
    EXPECT_EQ(r.target_index, 0);
    EXPECT_GE(r.truncated_len, 48000);
  }
}

TEST(Manifest, SmallestCorpusGivesTheUniquePair) {
  const auto corpus = fake_corpus(2);
  const Manifest m = build_manifest(corpus, 2, 1, {-5, 5}, 3);
  const std::set<std::string> ids(m.records[0].source_ids.begin(), m.records[0].source_ids.end());
  EXPECT_EQ(ids, (std::set<std::string>{"u0", "u1"}));
  EXPECT_EQ(m.records[0].truncated_len, 48000);
  EXPECT_THROW(build_manifest(corpus, 3, 1, {-5, 5}, 3), Error);
  EXPECT_THROW(build_manifest(corpus, 2, 0, {-5, 5}, 3), Error);
}

TEST(Manifest, SnrDrawIsUniform) {
  const auto corpus = fake_corpus(10);
  const Manifest m = build_manifest(corpus, 2, 10000, {-5, 5}, 5);
  std::vector<int> bins(10, 0);
  for (const auto& r : m.records) bins[std::min(9, static_cast<int>((r.snrs_db[1] + 5.0)))]++;
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - 1000.0) * (b - 1000.0) / 1000.0;
  EXPECT_LT(chi2, 21.666);  // chi-square, 9 dof, p = 0.01
}

TEST(Manifest, JsonlRoundTripAndKeys) {
  const fs::path dir = scratch("manifest");
  const Manifest m = build_manifest(fake_corpus(6), 2, 5, {-5, 5}, 1, Split::train);
  write_manifest(dir / "m.jsonl", m);
  std::ifstream is(dir / "m.jsonl");
  std::string first;
  std::getline(is, first);
  EXPECT_EQ(first.rfind("{\"mixture_id\":\"train_2spk_000000\",\"source_ids\":", 0), 0u);
  const Manifest r = read_manifest(dir / "m.jsonl", Split::train);
  EXPECT_EQ(to_jsonl(r), to_jsonl(m));
  EXPECT_EQ(r.num_speakers, 2);
  EXPECT_THROW(read_manifest(dir / "missing.jsonl"), MissingArtifactError);
}

TEST(SynthCorpus, RatesAndDeterminism) {
  const auto a = synth_av_corpus(2, 2.0, 9);
  const auto b = synth_av_corpus(2, 2.0, 9);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].audio.size(), 32000);
    EXPECT_EQ(a[i].video.frames, 50);
    EXPECT_EQ(a[i].video.height, 112);
    EXPECT_EQ(a[i].video.width, 112);
    EXPECT_EQ(a[i].audio, b[i].audio);
    EXPECT_EQ(a[i].video.pixels, b[i].video.pixels);
    EXPECT_EQ(a[i].frame_labels.size(), 50u);
  }
  EXPECT_NE(a[0].audio, a[1].audio);
}

TEST(SynthCorpus, ApertureTracksAudioEnvelope) {
  const auto corpus = synth_av_corpus(6, 3.0, 21);
  for (const auto& u : corpus) {
    const int frames = u.video.frames;
    Eigen::VectorXd rms(frames), height(frames);
    for (int f = 0; f < frames; ++f) {
      rms[f] = std::sqrt(u.audio.segment(f * kSamplesPerFrame, kSamplesPerFrame).squaredNorm() / kSamplesPerFrame);
      // Measure the ellipse height from pixels: dark rows in the centre column.
      int dark = 0;
      for (int r = 0; r < u.video.height; ++r) dark += u.video.at(f, r, u.video.width / 2) < 100;
      height[f] = dark;
    }
    const Eigen::VectorXd a = rms.array() - rms.mean(), b = height.array() - height.mean();
    EXPECT_GT(a.dot(b) / (a.norm() * b.norm()), 0.9);
  }
}

TEST(SynthCorpus, FilesRoundTrip) {
  const fs::path dir = scratch("corpus");
  const auto corpus = synth_av_corpus(4, 2.0, 3);
  write_corpus(dir, corpus);
  const auto index = read_corpus_index(dir / "corpus.jsonl");
  ASSERT_EQ(index.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(index[i].utterance_id, corpus[i].record.utterance_id);
    EXPECT_NEAR(index[i].duration, 2.0, 1e-12);
    const VideoFrames v = read_avf(dir / index[i].video_path);
    EXPECT_EQ(v.pixels, corpus[i].video.pixels);
    const Waveform w = read_wav((dir / index[i].audio_path).string());
    EXPECT_LT((w.samples - corpus[i].audio).cwiseAbs().maxCoeff(), 1.0 / 32768.0 + 1e-12);
  }
  EXPECT_TRUE(fs::exists(dir / "labels.jsonl"));

  std::ofstream bad(dir / "bad.avf", std::ios::binary);
  bad << "NOPE1234";
  bad.close();
  EXPECT_THROW(read_avf(dir / "bad.avf"), IoError);
  EXPECT_THROW(read_avf(dir / "none.avf"), MissingArtifactError);
}

TEST(SynthCorpus, RenderedMixturesMatchInMemoryMix) {
  const fs::path dir = scratch("render");
  const auto corpus = synth_av_corpus(5, 2.0, 4);
  write_corpus(dir, corpus);
  const auto index = read_corpus_index(dir / "corpus.jsonl");
  const Manifest m = build_manifest(index, 2, 3, {-5, 5}, 8);
  render_mixtures(m, dir / "corpus.jsonl", dir);
  for (const auto& r : m.records) {
    std::vector<Eigen::VectorXd> src;
    for (const auto& id : r.source_ids)
      src.push_back(read_wav((dir / "audio" / (id + ".wav")).string()).samples);
    const MixResult want = mix(src, r.snrs_db);
    const Waveform got = read_wav((dir / r.mixture_path).string());
    ASSERT_EQ(got.size(), r.truncated_len);
    EXPECT_GT(si_snr(got.samples, want.mixture), 25.0);
  }
}

TEST(VideoFrames, Slice) {
  VideoFrames v;
  v.frames = 4;
  v.height = 2;
  v.width = 3;
  for (int i = 0; i < 24; ++i) v.pixels.push_back(static_cast<std::uint8_t>(i));
  const VideoFrames s = v.slice(1, 2);
  EXPECT_EQ(s.frames, 2);
  EXPECT_EQ(s.at(0, 0, 0), 6);
  EXPECT_EQ(s.at(1, 1, 2), 17);
  EXPECT_THROW(v.slice(3, 2), Error);
}
