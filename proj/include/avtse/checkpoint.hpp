// include/avtse/checkpoint.hpp

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

#include <filesystem>
#include <string>

#include <json.hpp>

#include "avtse/avtasnet.hpp"
#include "avtse/favsnet.hpp"
#include "avtse/lipnet.hpp"

namespace avtse {

void to_json(nlohmann::ordered_json& j, const EncoderConfig& c);
void from_json(const nlohmann::ordered_json& j, EncoderConfig& c);
void to_json(nlohmann::ordered_json& j, const SeparatorConfig& c);
void from_json(const nlohmann::ordered_json& j, SeparatorConfig& c);
void to_json(nlohmann::ordered_json& j, const FavsConfig& c);
void from_json(const nlohmann::ordered_json& j, FavsConfig& c);
void to_json(nlohmann::ordered_json& j, const LipNetConfig& c);
void from_json(const nlohmann::ordered_json& j, LipNetConfig& c);
void to_json(nlohmann::ordered_json& j, const FrameStats& s);
void from_json(const nlohmann::ordered_json& j, FrameStats& s);

/// Checkpoint file: 8-byte little-endian header length, a JSON header
/// {format, kind, config, arch_hash, tensors[{name, shape}]}, then every
/// tensor as little-endian float32 in header order.
struct CheckpointHeader {
  std::string kind;  // "avtasnet", "favs" or "lipnet"
  nlohmann::ordered_json config;
  std::string arch_hash;
  std::vector<std::pair<std::string, std::pair<long, long>>> tensors;
};

std::string architecture_hash(const nlohmann::ordered_json& config,
                              const std::vector<std::pair<std::string, std::pair<long, long>>>& tensors);

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

void save_tensors(const std::filesystem::path& path, const std::string& kind,
                  const nlohmann::ordered_json& config, const ParameterList<float>& params);

/// Fills `params` from the file; names, shapes and the architecture hash must
/// match.
void load_tensors(const std::filesystem::path& path, const std::string& kind,
                  const ParameterList<float>& params);

void save_avtasnet(const std::filesystem::path& path, AvTasNet<float>& model);
std::unique_ptr<AvTasNet<float>> load_avtasnet(const std::filesystem::path& path);

void save_favs(const std::filesystem::path& path, FavsNet<float>& model);
std::unique_ptr<FavsNet<float>> load_favs(const std::filesystem::path& path);

/// Lip extractor together with the frame statistics used to standardize its
/// input.
struct LipExtractor {
  std::unique_ptr<LipNet<float>> net;
  FrameStats stats;
};

void save_lipnet(const std::filesystem::path& path, LipNet<float>& net, const FrameStats& stats);
LipExtractor load_lipnet(const std::filesystem::path& path);

}  // namespace avtse
