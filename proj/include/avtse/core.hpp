// include/avtse/core.hpp

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

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace avtse {

inline constexpr int kSampleRate = 16000;
inline constexpr int kVideoFps = 25;
inline constexpr int kSamplesPerFrame = kSampleRate / kVideoFps;  // 640

/// Row-major dense matrix; channel sequences are stored channels x time.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Mono audio at a fixed sample rate.
struct Waveform {
  Eigen::VectorXd samples;
  int rate = kSampleRate;

  Eigen::Index size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / rate; }
};

/// Bad arguments or shapes handed to a library routine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system or configuration problems (CLI exit code 2).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A required upstream artifact (checkpoint, manifest, media file) is missing
/// (CLI exit code 3).
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

/// 64-bit FNV-1a; used for architecture digests in checkpoints and reports.
inline std::uint64_t fnv1a(const std::string& bytes,
                           std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(std::uint64_t value);

}  // namespace avtse
