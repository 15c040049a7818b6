// src/checkpoint.cpp

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

#include "avtse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace avtse {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kFormat = "avtse-checkpoint-1";

template <typename T>
T get_or(const ojson& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint: truncated header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

using TensorList = std::vector<std::pair<std::string, std::pair<long, long>>>;

TensorList describe(const ParameterList<float>& params) {
  TensorList out;
  for (auto* p : params) out.push_back({p->name, {static_cast<long>(p->value.rows()), static_cast<long>(p->value.cols())}});
  return out;
}

std::ifstream open_checkpoint(const fs::path& path, CheckpointHeader& header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("cannot open checkpoint: " + path.string());
  const std::uint64_t len = read_u64(is);
  if (len > (1u << 26)) throw IoError("checkpoint: implausible header length in " + path.string());
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("checkpoint: truncated header");
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw IoError("checkpoint: bad header in " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat) throw IoError("checkpoint: unknown format in " + path.string());
  header.kind = j.at("kind").get<std::string>();
  header.config = j.at("config");
  header.arch_hash = j.at("arch_hash").get<std::string>();
  header.tensors.clear();
  for (const auto& t : j.at("tensors"))
    header.tensors.push_back({t.at("name").get<std::string>(), {t.at("shape")[0].get<long>(), t.at("shape")[1].get<long>()}});
  return is;
}

}  // namespace

void to_json(ojson& j, const EncoderConfig& c) {
  j = ojson{{"kernel", c.kernel}, {"stride", c.stride}, {"basis_channels", c.basis_channels}};
}

void from_json(const ojson& j, EncoderConfig& c) {
  const EncoderConfig d;
  c.kernel = get_or(j, "kernel", d.kernel);
  c.stride = get_or(j, "stride", d.stride);
  c.basis_channels = get_or(j, "basis_channels", d.basis_channels);
}

void to_json(ojson& j, const SeparatorConfig& c) {
  j = ojson{{"sub_blocks", c.sub_blocks},         {"audio_blocks", c.audio_blocks},
            {"fused_blocks", c.fused_blocks},     {"norm", to_string(c.norm)},
            {"bottleneck", c.bottleneck},         {"hidden", c.hidden},
            {"conv_kernel", c.conv_kernel},       {"video_blocks", c.video_blocks},
            {"video_channels", c.video_channels}, {"embedding_dim", c.embedding_dim},
            {"video_residual", c.video_residual}};
}

void from_json(const ojson& j, SeparatorConfig& c) {
  const SeparatorConfig d;
  c.sub_blocks = get_or(j, "sub_blocks", d.sub_blocks);
  c.audio_blocks = get_or(j, "audio_blocks", d.audio_blocks);
  c.fused_blocks = get_or(j, "fused_blocks", d.fused_blocks);
  c.norm = parse_norm(get_or<std::string>(j, "norm", to_string(d.norm)));
  c.bottleneck = get_or(j, "bottleneck", d.bottleneck);
  c.hidden = get_or(j, "hidden", d.hidden);
  c.conv_kernel = get_or(j, "conv_kernel", d.conv_kernel);
  c.video_blocks = get_or(j, "video_blocks", d.video_blocks);
  c.video_channels = get_or(j, "video_channels", d.video_channels);
  c.embedding_dim = get_or(j, "embedding_dim", d.embedding_dim);
  c.video_residual = get_or(j, "video_residual", d.video_residual);
}

void to_json(ojson& j, const FavsConfig& c) {
  j = ojson{{"window", c.window}, {"hop", c.hop}, {"separator", c.separator}};
}

void from_json(const ojson& j, FavsConfig& c) {
  const FavsConfig d;
  c.window = get_or(j, "window", d.window);
  c.hop = get_or(j, "hop", d.hop);
  if (j.contains("separator")) c.separator = j.at("separator").get<SeparatorConfig>();
}

void to_json(ojson& j, const LipNetConfig& c) {
  j = ojson{{"base_width", c.base_width}, {"embedding_dim", c.embedding_dim},
            {"temporal_kernel", c.temporal_kernel}};
}

void from_json(const ojson& j, LipNetConfig& c) {
  const LipNetConfig d;
  c.base_width = get_or(j, "base_width", d.base_width);
  c.embedding_dim = get_or(j, "embedding_dim", d.embedding_dim);
  c.temporal_kernel = get_or(j, "temporal_kernel", d.temporal_kernel);
}

void to_json(ojson& j, const FrameStats& s) { j = ojson{{"mean", s.mean}, {"std", s.stddev}}; }

void from_json(const ojson& j, FrameStats& s) {
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("std").get<double>();
}

std::string architecture_hash(const ojson& config, const TensorList& tensors) {
  std::string text = config.dump();
  for (const auto& [name, shape] : tensors)
    text += "|" + name + ":" + std::to_string(shape.first) + "x" + std::to_string(shape.second);
  return hex_digest(fnv1a(text));
}

CheckpointHeader read_checkpoint_header(const fs::path& path) {
  CheckpointHeader h;
  open_checkpoint(path, h);
  return h;
}

void save_tensors(const fs::path& path, const std::string& kind, const ojson& config,
                  const ParameterList<float>& params) {
  const TensorList tensors = describe(params);
  ojson header{{"format", kFormat}, {"kind", kind}, {"config", config},
               {"arch_hash", architecture_hash(config, tensors)}, {"tensors", ojson::array()}};
  for (const auto& [name, shape] : tensors)
    header["tensors"].push_back(ojson{{"name", name}, {"shape", {shape.first, shape.second}}});
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  for (auto* p : params)
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

void load_tensors(const fs::path& path, const std::string& kind, const ParameterList<float>& params) {
  CheckpointHeader h;
  std::ifstream is = open_checkpoint(path, h);
  if (h.kind != kind) throw IoError("checkpoint " + path.string() + " holds a " + h.kind + " model, expected " + kind);
  const TensorList expected = describe(params);
  if (h.tensors != expected || architecture_hash(h.config, expected) != h.arch_hash)
    throw IoError("checkpoint " + path.string() + ": architecture mismatch");
  for (auto* p : params)
    if (!is.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(float))))
      throw IoError("checkpoint " + path.string() + ": truncated tensor data at " + p->name);
}

void save_avtasnet(const fs::path& path, AvTasNet<float>& model) {
  const ojson cfg{{"encoder", model.encoder_config()}, {"separator", model.separator_config()}};
  save_tensors(path, "avtasnet", cfg, model.parameters());
}

std::unique_ptr<AvTasNet<float>> load_avtasnet(const fs::path& path) {
  const CheckpointHeader h = read_checkpoint_header(path);
  if (h.kind != "avtasnet") throw IoError("checkpoint " + path.string() + " is not an avtasnet model");
  auto model = std::make_unique<AvTasNet<float>>(h.config.at("encoder").get<EncoderConfig>(),
                                                 h.config.at("separator").get<SeparatorConfig>(), 0);
  load_tensors(path, "avtasnet", model->parameters());
  model->set_training(false);
  return model;
}

void save_favs(const fs::path& path, FavsNet<float>& model) {
  save_tensors(path, "favs", ojson(model.config()), model.parameters());
}

std::unique_ptr<FavsNet<float>> load_favs(const fs::path& path) {
  const CheckpointHeader h = read_checkpoint_header(path);
  if (h.kind != "favs") throw IoError("checkpoint " + path.string() + " is not a favs model");
  auto model = std::make_unique<FavsNet<float>>(h.config.get<FavsConfig>(), 0);
  load_tensors(path, "favs", model->parameters());
  model->set_training(false);
  return model;
}

void save_lipnet(const fs::path& path, LipNet<float>& net, const FrameStats& stats) {
  const ojson cfg{{"lipnet", net.config()}, {"frame_stats", stats}};
  save_tensors(path, "lipnet", cfg, net.parameters());
}

LipExtractor load_lipnet(const fs::path& path) {
  const CheckpointHeader h = read_checkpoint_header(path);
  if (h.kind != "lipnet") throw IoError("checkpoint " + path.string() + " is not a lip extractor");
  LipExtractor out;
  out.net = std::make_unique<LipNet<float>>(h.config.at("lipnet").get<LipNetConfig>(), 0);
  out.stats = h.config.at("frame_stats").get<FrameStats>();
  load_tensors(path, "lipnet", out.net->parameters());
  out.net->set_training(false);
  return out;
}

}  // namespace avtse
