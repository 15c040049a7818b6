// include/avtse/mixsim.hpp

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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "avtse/core.hpp"

namespace avtse {

inline constexpr double kMinUtteranceSeconds = 2.0;

struct SourceRecord {
  std::string utterance_id;
  std::string audio_path;  // relative to the corpus directory
  std::string video_path;
  double duration = 0.0;   // seconds
};

struct MixtureRecord {
  std::string mixture_id;
  std::vector<std::string> source_ids;
  std::vector<double> snrs_db;
  int target_index = 0;
  std::string mixture_path;  // relative to the manifest directory
  std::int64_t truncated_len = 0;  // samples

  int num_speakers() const { return static_cast<int>(source_ids.size()); }
};

enum class Split { train, validation, test };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct Manifest {
  std::vector<MixtureRecord> records;
  Split split = Split::test;
  int num_speakers = 2;
};

struct MixResult {
  Eigen::VectorXd mixture;
  std::vector<Eigen::VectorXd> scaled_sources;
};

/// Truncates all sources to the shortest one, scales source i so that its
/// power relative to source 0 is snrs_db[i], and sums them.
MixResult mix(std::span<const Eigen::VectorXd> sources, std::span<const double> snrs_db);

struct SnrRange {
  double lo = -5.0;
  double hi = 5.0;
};

/// Samples `count` N-speaker mixtures from `corpus`. Deterministic in `seed`.
Manifest build_manifest(std::span<const SourceRecord> corpus, int n_speakers, int count,
                        SnrRange snr_range, std::uint64_t seed, Split split = Split::test);

/// Grayscale video, T x H x W row-major uint8.
struct VideoFrames {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int t, int r, int c) const {
    return pixels[(static_cast<std::size_t>(t) * height + r) * width + c];
  }
  std::uint8_t& at(int t, int r, int c) {
    return pixels[(static_cast<std::size_t>(t) * height + r) * width + c];
  }
  /// Frames [begin, begin + count).
  VideoFrames slice(int begin, int count) const;
};

/// One generated utterance: audio, synchronized lip video and a per-frame
/// open/closed mouth label usable as a two-unit phone target.
struct SyntheticUtterance {
  SourceRecord record;
  Eigen::VectorXd audio;
  VideoFrames video;
  std::vector<int> frame_labels;
  std::vector<double> aperture;  // ellipse half-height per frame, pixels
};

/// Harmonic-tone "speakers" with syllabic amplitude envelopes; the mouth
/// ellipse height in each video frame follows the envelope.
std::vector<SyntheticUtterance> synth_av_corpus(int n_utterances, double duration,
                                                std::uint64_t seed);

// File formats.
std::string to_jsonl(const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path, Split split = Split::test);

void write_corpus_index(const std::filesystem::path& path, std::span<const SourceRecord> corpus);
std::vector<SourceRecord> read_corpus_index(const std::filesystem::path& path);

/// "AVF1" container: magic, uint32 LE T, H, W, then T*H*W bytes.
void write_avf(const std::filesystem::path& path, const VideoFrames& video);
VideoFrames read_avf(const std::filesystem::path& path);

/// Writes audio, video, labels.jsonl and corpus.jsonl under `dir`.
void write_corpus(const std::filesystem::path& dir, std::span<const SyntheticUtterance> corpus);

/// Renders each record's mixture wav at manifest_dir / record.mixture_path.
void render_mixtures(const Manifest& manifest, const std::filesystem::path& corpus_index,
                     const std::filesystem::path& manifest_dir);

}  // namespace avtse
