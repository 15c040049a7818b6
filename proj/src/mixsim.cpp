// src/mixsim.cpp

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

#include "avtse/mixsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "avtse/signal.hpp"

namespace avtse {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "test";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "valid" || name == "dev") return Split::validation;
  if (name == "test") return Split::test;
  throw Error("unknown split: " + name);
}

MixResult mix(std::span<const Eigen::VectorXd> sources, std::span<const double> snrs_db) {
  if (sources.size() < 2) throw Error("mix: need at least two sources");
  if (snrs_db.size() != sources.size()) throw Error("mix: one SNR per source required");
  if (snrs_db[0] != 0.0) throw Error("mix: reference source SNR must be 0 dB");
  for (double snr : snrs_db)
    if (!(snr >= -20.0 && snr <= 20.0)) throw Error("mix: SNR outside [-20, 20] dB");

  Eigen::Index len = sources[0].size();
  for (const auto& s : sources) len = std::min(len, s.size());
  if (len < 1) throw Error("mix: empty source");

  std::vector<double> power(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    power[i] = sources[i].head(len).squaredNorm() / static_cast<double>(len);
    if (power[i] == 0.0) throw Error("mix: source " + std::to_string(i) + " is all zeros");
  }

  MixResult out;
  out.mixture = Eigen::VectorXd::Zero(len);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const double gain = i == 0 ? 1.0 : std::sqrt(power[0] * std::pow(10.0, snrs_db[i] / 10.0) / power[i]);
    out.scaled_sources.push_back(gain * sources[i].head(len));
    out.mixture += out.scaled_sources.back();
  }
  return out;
}

Manifest build_manifest(std::span<const SourceRecord> corpus, int n_speakers, int count,
                        SnrRange snr_range, std::uint64_t seed, Split split) {
  if (n_speakers < 2) throw Error("build_manifest: need at least two speakers");
  if (static_cast<int>(corpus.size()) < n_speakers)
    throw Error("build_manifest: corpus smaller than the number of speakers");
  if (count < 1) throw Error("build_manifest: count must be positive");
  if (snr_range.lo > snr_range.hi || snr_range.lo < -20.0 || snr_range.hi > 20.0)
    throw Error("build_manifest: invalid SNR range");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> snr_dist(snr_range.lo, snr_range.hi);
  std::vector<int> index(corpus.size());

  Manifest manifest;
  manifest.split = split;
  manifest.num_speakers = n_speakers;
  manifest.records.reserve(count);
  const std::string prefix = to_string(split) + "_" + std::to_string(n_speakers) + "spk";
  for (int r = 0; r < count; ++r) {
    std::iota(index.begin(), index.end(), 0);
    for (int k = 0; k < n_speakers; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(index.size()) - 1);
      std::swap(index[k], index[pick(rng)]);
    }
    MixtureRecord rec;
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%06d", prefix.c_str(), r);
    rec.mixture_id = id;
    rec.truncated_len = std::numeric_limits<std::int64_t>::max();
    for (int k = 0; k < n_speakers; ++k) {
      const SourceRecord& src = corpus[index[k]];
      rec.source_ids.push_back(src.utterance_id);
      rec.snrs_db.push_back(k == 0 ? 0.0 : snr_dist(rng));
      rec.truncated_len =
          std::min(rec.truncated_len, static_cast<std::int64_t>(std::llround(src.duration * kSampleRate)));
    }
    rec.target_index = 0;
    rec.mixture_path = "mix/" + prefix + "/" + rec.mixture_id + ".wav";
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

VideoFrames VideoFrames::slice(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > frames) throw Error("video slice out of range");
  VideoFrames out;
  out.frames = count;
  out.height = height;
  out.width = width;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  out.pixels.assign(pixels.begin() + begin * plane, pixels.begin() + (begin + count) * plane);
  return out;
}

namespace {

constexpr int kFrameSize = 112;

Eigen::VectorXd syllable_envelope(Eigen::Index len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> seg_len(0.12, 0.35);
  std::uniform_real_distribution<double> level(0.5, 1.0);
  std::bernoulli_distribution voiced(0.65);
  Eigen::VectorXd steps(len);
  Eigen::Index pos = 0;
  bool first = true;
  while (pos < len) {
    const auto n = static_cast<Eigen::Index>(seg_len(rng) * kSampleRate);
    // The first syllable is always voiced so no utterance starts silent.
    const double v = (first || voiced(rng)) ? level(rng) : 0.0;
    first = false;
    const Eigen::Index end = std::min(len, pos + n);
    steps.segment(pos, end - pos).setConstant(v);
    pos = end;
  }
  // Forward-backward one-pole smoothing, 15 ms time constant.
  const double a = std::exp(-1.0 / (0.015 * kSampleRate));
  Eigen::VectorXd env = steps;
  for (Eigen::Index i = 1; i < len; ++i) env[i] = a * env[i - 1] + (1.0 - a) * steps[i];
  for (Eigen::Index i = len - 2; i >= 0; --i) env[i] = a * env[i + 1] + (1.0 - a) * env[i];
  return env;
}

}  // namespace

std::vector<SyntheticUtterance> synth_av_corpus(int n_utterances, double duration,
                                                std::uint64_t seed) {
  if (n_utterances < 1) throw Error("synth_av_corpus: need at least one utterance");
  if (duration < kMinUtteranceSeconds) throw Error("synth_av_corpus: duration below 2 s");

  const auto len = static_cast<Eigen::Index>(std::llround(duration * kSampleRate));
  const int num_frames = static_cast<int>(std::lround(duration * kVideoFps));

  std::vector<SyntheticUtterance> corpus;
  corpus.reserve(n_utterances);
  for (int u = 0; u < n_utterances; ++u) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(u)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SyntheticUtterance utt;
    char id[32];
    std::snprintf(id, sizeof(id), "utt%05d", u);
    utt.record.utterance_id = id;
    utt.record.audio_path = std::string("audio/") + id + ".wav";
    utt.record.video_path = std::string("video/") + id + ".avf";
    utt.record.duration = static_cast<double>(len) / kSampleRate;

    // Speaker timbre: pitch, spectral tilt, vibrato.
    const double f0 = 100.0 + 220.0 * unit(rng);
    const double tilt = 0.5 + unit(rng);
    const double vib_rate = 3.0 + 3.0 * unit(rng);
    const int harmonics = std::max(1, static_cast<int>(4000.0 / f0));
    std::vector<double> amp(harmonics), phase(harmonics);
    double amp_sum = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      amp[h] = std::pow(h + 1.0, -tilt);
      phase[h] = 2.0 * std::numbers::pi * unit(rng);
      amp_sum += amp[h];
    }

    const Eigen::VectorXd env = syllable_envelope(len, rng);
    utt.audio.resize(len);
    double base_phase = 0.0;
    for (Eigen::Index i = 0; i < len; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      const double f = f0 * (1.0 + 0.02 * std::sin(2.0 * std::numbers::pi * vib_rate * t));
      base_phase += 2.0 * std::numbers::pi * f / kSampleRate;
      double carrier = 0.0;
      for (int h = 0; h < harmonics; ++h) carrier += amp[h] * std::sin((h + 1) * base_phase + phase[h]);
      utt.audio[i] = 0.5 * env[i] * carrier / amp_sum;
    }

    utt.video.frames = num_frames;
    utt.video.height = kFrameSize;
    utt.video.width = kFrameSize;
    utt.video.pixels.assign(static_cast<std::size_t>(num_frames) * kFrameSize * kFrameSize, 0);
    std::uniform_int_distribution<int> texture(-4, 4);
    const double center = (kFrameSize - 1) / 2.0;
    const double half_width = 20.0;
    for (int k = 0; k < num_frames; ++k) {
      const Eigen::Index begin = std::min<Eigen::Index>(static_cast<Eigen::Index>(k) * kSamplesPerFrame, len - 1);
      const Eigen::Index end = std::min<Eigen::Index>(begin + kSamplesPerFrame, len);
      const double open = env.segment(begin, end - begin).mean();
      const double half_height = 1.0 + 14.0 * open;
      utt.aperture.push_back(half_height);
      utt.frame_labels.push_back(open > 0.3 ? 1 : 0);
      for (int r = 0; r < kFrameSize; ++r) {
        for (int c = 0; c < kFrameSize; ++c) {
          const double dy = (r - center) / half_height;
          const double dx = (c - center) / half_width;
          const int base = dx * dx + dy * dy <= 1.0 ? 40 : 160;
          utt.video.at(k, r, c) = static_cast<std::uint8_t>(base + texture(rng));
        }
      }
    }
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

std::string to_jsonl(const Manifest& manifest) {
  std::ostringstream os;
  for (const auto& r : manifest.records) {
    ojson j;
    j["mixture_id"] = r.mixture_id;
    j["source_ids"] = r.source_ids;
    j["snrs_db"] = r.snrs_db;
    j["target_index"] = r.target_index;
    j["mixture_path"] = r.mixture_path;
    j["truncated_len"] = r.truncated_len;
    os << j.dump() << '\n';
  }
  return os.str();
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  os << to_jsonl(manifest);
  if (!os) throw IoError("failed writing manifest: " + path.string());
}

Manifest read_manifest(const fs::path& path, Split split) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("cannot open manifest: " + path.string());
  Manifest manifest;
  manifest.split = split;
  manifest.num_speakers = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MixtureRecord r;
      r.mixture_id = j.at("mixture_id").get<std::string>();
      r.source_ids = j.at("source_ids").get<std::vector<std::string>>();
      r.snrs_db = j.at("snrs_db").get<std::vector<double>>();
      r.target_index = j.at("target_index").get<int>();
      r.mixture_path = j.at("mixture_path").get<std::string>();
      r.truncated_len = j.at("truncated_len").get<std::int64_t>();
      if (r.source_ids.size() != r.snrs_db.size() || r.source_ids.size() < 2)
        throw Error("source_ids and snrs_db disagree");
      if (r.target_index < 0 || r.target_index >= r.num_speakers())
        throw Error("target_index out of range");
      if (manifest.num_speakers == 0) manifest.num_speakers = r.num_speakers();
      manifest.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return manifest;
}

void write_corpus_index(const fs::path& path, std::span<const SourceRecord> corpus) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write corpus index: " + path.string());
  for (const auto& s : corpus) {
    ojson j;
    j["utterance_id"] = s.utterance_id;
    j["audio_path"] = s.audio_path;
    j["video_path"] = s.video_path;
    j["duration"] = s.duration;
    os << j.dump() << '\n';
  }
}

std::vector<SourceRecord> read_corpus_index(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("cannot open corpus index: " + path.string());
  std::vector<SourceRecord> corpus;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SourceRecord s;
      s.utterance_id = j.at("utterance_id").get<std::string>();
      s.audio_path = j.at("audio_path").get<std::string>();
      s.video_path = j.at("video_path").get<std::string>();
      s.duration = j.at("duration").get<double>();
      corpus.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }
  return corpus;
}

void write_avf(const fs::path& path, const VideoFrames& video) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write video: " + path.string());
  os.write("AVF1", 4);
  for (int v : {video.frames, video.height, video.width}) {
    const auto u = static_cast<std::uint32_t>(v);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                static_cast<unsigned char>(u >> 16),
                                static_cast<unsigned char>(u >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  os.write(reinterpret_cast<const char*>(video.pixels.data()),
           static_cast<std::streamsize>(video.pixels.size()));
  if (!os) throw IoError("failed writing video: " + path.string());
}

VideoFrames read_avf(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("cannot open video: " + path.string());
  unsigned char header[16];
  is.read(reinterpret_cast<char*>(header), 16);
  if (!is || std::memcmp(header, "AVF1", 4) != 0) throw IoError("bad AVF1 header: " + path.string());
  auto u32 = [&](int off) {
    return header[off] | (header[off + 1] << 8) | (header[off + 2] << 16) |
           (static_cast<std::uint32_t>(header[off + 3]) << 24);
  };
  VideoFrames v;
  v.frames = static_cast<int>(u32(4));
  v.height = static_cast<int>(u32(8));
  v.width = static_cast<int>(u32(12));
  v.pixels.resize(static_cast<std::size_t>(v.frames) * v.height * v.width);
  is.read(reinterpret_cast<char*>(v.pixels.data()), static_cast<std::streamsize>(v.pixels.size()));
  if (!is) throw IoError("truncated video: " + path.string());
  return v;
}

void write_corpus(const fs::path& dir, std::span<const SyntheticUtterance> corpus) {
  fs::create_directories(dir / "audio");
  fs::create_directories(dir / "video");
  std::vector<SourceRecord> index;
  std::ofstream labels(dir / "labels.jsonl", std::ios::binary);
  if (!labels) throw IoError("cannot write labels in " + dir.string());
  for (const auto& u : corpus) {
    Waveform w;
    w.samples = u.audio;
    write_wav((dir / u.record.audio_path).string(), w);
    write_avf(dir / u.record.video_path, u.video);
    ojson j;
    j["utterance_id"] = u.record.utterance_id;
    j["labels"] = u.frame_labels;
    labels << j.dump() << '\n';
    index.push_back(u.record);
  }
  write_corpus_index(dir / "corpus.jsonl", index);
}

void render_mixtures(const Manifest& manifest, const fs::path& corpus_index,
                     const fs::path& manifest_dir) {
  const auto corpus = read_corpus_index(corpus_index);
  const fs::path corpus_dir = corpus_index.parent_path();
  std::map<std::string, const SourceRecord*> by_id;
  for (const auto& s : corpus) by_id[s.utterance_id] = &s;

  for (const auto& rec : manifest.records) {
    std::vector<Eigen::VectorXd> sources;
    for (const auto& id : rec.source_ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw MissingArtifactError("utterance not in corpus: " + id);
      sources.push_back(read_wav((corpus_dir / it->second->audio_path).string()).samples);
    }
    MixResult m = mix(sources, rec.snrs_db);
    const fs::path out = manifest_dir / rec.mixture_path;
    fs::create_directories(out.parent_path());
    Waveform w;
    w.samples = std::move(m.mixture);
    write_wav(out.string(), w);
  }
}

}  // namespace avtse
