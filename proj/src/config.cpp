// src/config.cpp

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

#include <cmath>

#include "avtse/avtasnet.hpp"
#include "avtse/favsnet.hpp"

namespace avtse {

void EncoderConfig::validate() const {
  if (kernel < 2) throw Error("encoder: kernel must be at least 2");
  if (stride < 1 || stride > kernel) throw Error("encoder: stride must lie in [1, kernel]");
  if (basis_channels < 1) throw Error("encoder: basis_channels must be positive");
}

void SeparatorConfig::validate() const {
  if (audio_blocks < 0 || fused_blocks < 0 || audio_blocks + fused_blocks != kTotalBlocks)
    throw Error("separator: audio_blocks + fused_blocks must equal " + std::to_string(kTotalBlocks) +
                " (got " + std::to_string(audio_blocks) + " + " + std::to_string(fused_blocks) + ")");
  if (sub_blocks < 1 || sub_blocks > 16) throw Error("separator: sub_blocks must lie in [1, 16]");
  if (bottleneck < 1 || hidden < 1) throw Error("separator: channel widths must be positive");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw Error("separator: conv_kernel must be odd");
  if (video_blocks < 0) throw Error("separator: video_blocks must be non-negative");
  if (video_channels < 1 || embedding_dim < 1) throw Error("separator: video widths must be positive");
}

void FavsConfig::validate() const {
  if (window < 2 || window % 2 != 0) throw Error("favs: window must be even");
  if (hop < 1 || hop > window) throw Error("favs: hop must lie in [1, window]");
  separator.validate();
}

std::string to_string(NormKind norm) {
  return norm == NormKind::batch ? "BN" : "gLN";
}

NormKind parse_norm(const std::string& name) {
  if (name == "BN" || name == "bn" || name == "batch") return NormKind::batch;
  if (name == "gLN" || name == "gln" || name == "global_layer") return NormKind::global_layer;
  throw Error("unknown normalization: " + name);
}

int upsample_factor(Eigen::Index length, Eigen::Index video_len) {
  if (video_len < 1) throw Error("upsample: empty video sequence");
  const long f = std::lround(static_cast<double>(length) / static_cast<double>(video_len));
  return static_cast<int>(std::max(1L, f));
}

}  // namespace avtse
