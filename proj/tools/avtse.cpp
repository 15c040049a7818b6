// tools/avtse.cpp

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

// avtse: simulate data, train the lip extractor and the separators, evaluate
// and extract target speech.
//
// Exit codes: 0 success, 1 internal error, 2 I/O or configuration error,
// 3 missing upstream artifact.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "avtse/train_eval.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace avtse;

namespace {

class ConfigError : public IoError {
 public:
  using IoError::IoError;
};

fs::path data_root() {
  const char* env = std::getenv("AVTSE_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path("data");
}

ojson yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      ojson arr = ojson::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      ojson obj = ojson::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar: {
      const std::string s = node.Scalar();
      if (node.Tag() == "!") return s;  // quoted
      if (s == "true" || s == "false") return s == "true";
      char* end = nullptr;
      const long long i = std::strtoll(s.c_str(), &end, 10);
      if (!s.empty() && *end == '\0') return i;
      const double d = std::strtod(s.c_str(), &end);
      if (!s.empty() && *end == '\0') return d;
      return s;
    }
  }
  return nullptr;
}

void require_keys(const ojson& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a mapping");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

/// Declarative run configuration for `train`.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string model = "avtasnet";
  std::string lipnet;
  std::vector<std::string> manifests;
  std::string validation;
  std::string corpus_index;
  std::string output;
  std::string history;
  EncoderConfig encoder;
  SeparatorConfig separator;
  FavsConfig favs;
  TrainConfig train;
};

RunConfig load_run_config(const fs::path& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  if (!fs::exists(path)) throw MissingArtifactError("config not found: " + path.string());
  ojson j;
  try {
    j = yaml_to_json(YAML::LoadFile(path.string()));
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  if (j.is_null()) return rc;
  require_keys(j, {"seed", "model", "lipnet", "manifests", "validation", "corpus_index", "output", "history",
                   "encoder", "separator", "favs", "train"},
               path.string());
  try {
    rc.seed = j.value("seed", rc.seed);
    rc.model = j.value("model", rc.model);
    rc.lipnet = j.value("lipnet", rc.lipnet);
    if (j.contains("manifests")) rc.manifests = j.at("manifests").get<std::vector<std::string>>();
    rc.validation = j.value("validation", rc.validation);
    rc.corpus_index = j.value("corpus_index", rc.corpus_index);
    rc.output = j.value("output", rc.output);
    rc.history = j.value("history", rc.history);
    if (j.contains("encoder")) {
      require_keys(j["encoder"], {"kernel", "stride", "basis_channels"}, "encoder");
      rc.encoder = j["encoder"].get<EncoderConfig>();
    }
    if (j.contains("separator")) {
      require_keys(j["separator"],
                   {"sub_blocks", "audio_blocks", "fused_blocks", "norm", "bottleneck", "hidden", "conv_kernel",
                    "video_blocks", "video_channels", "embedding_dim", "video_residual"},
                   "separator");
      rc.separator = j["separator"].get<SeparatorConfig>();
    }
    if (j.contains("favs")) {
      require_keys(j["favs"], {"window", "hop"}, "favs");
      rc.favs = j["favs"].get<FavsConfig>();
    }
    if (j.contains("train")) {
      require_keys(j["train"],
                   {"lr", "max_epochs", "lr_halve_patience", "early_stop_patience", "chunk_seconds", "batch_size",
                    "seed", "grad_clip"},
                   "train");
      rc.train = j["train"].get<TrainConfig>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return rc;
}

fs::path default_corpus_index(const fs::path& manifest) { return manifest.parent_path() / "corpus.jsonl"; }

Dataset open_dataset(const fs::path& manifest, const std::string& corpus_index, LipExtractor* extractor) {
  const Manifest m = read_manifest(manifest);
  const fs::path index = corpus_index.empty() ? default_corpus_index(manifest) : fs::path(corpus_index);
  return load_dataset(m, manifest.parent_path(), index, extractor);
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string out;
  std::string corpus;
  int utterances = 40;
  double duration = 3.0;
  int spk = 2;
  int count = 100;
  std::vector<double> snr{-5.0, 5.0};
  std::string split = "test";
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a) {
  const fs::path out = a.out.empty() ? data_root() : fs::path(a.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());

  fs::path index;
  if (!a.corpus.empty()) {
    index = fs::path(a.corpus) / "corpus.jsonl";
    if (!fs::exists(index)) throw MissingArtifactError("corpus index not found: " + index.string());
  } else {
    index = out / "corpus.jsonl";
    if (!fs::exists(index)) {
      const auto corpus = synth_av_corpus(a.utterances, a.duration, a.seed);
      write_corpus(out, corpus);
      std::cout << "corpus: " << corpus.size() << " utterances in " << out.string() << "\n";
    } else {
      std::cout << "corpus: reusing " << index.string() << "\n";
    }
  }
  if (a.snr.size() != 2) throw ConfigError("--snr takes two values: lo hi");
  const auto corpus = read_corpus_index(index);
  const Split split = parse_split(a.split);
  const Manifest m = build_manifest(corpus, a.spk, a.count, SnrRange{a.snr[0], a.snr[1]}, a.seed, split);
  const fs::path manifest_path = out / (a.split + "_" + std::to_string(a.spk) + "spk.jsonl");
  write_manifest(manifest_path, m);
  render_mixtures(m, index, out);
  std::cout << "manifest: " << manifest_path.string() << " (" << m.records.size() << " records, " << a.spk
            << " speakers)\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct LipnetArgs {
  std::string corpus_index;
  std::string targets = "ci_phone";
  int vocabulary = 500;
  int epochs = 5;
  int batch = 4;
  double lr = 1e-3;
  int base_width = 64;
  int embedding_dim = 256;
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_train_lipnet(const LipnetArgs& a) {
  const fs::path index = a.corpus_index.empty() ? data_root() / "corpus.jsonl" : fs::path(a.corpus_index);
  const fs::path dir = index.parent_path();
  const auto corpus = read_corpus_index(index);
  std::map<std::string, std::vector<int>> labels;
  {
    std::ifstream is(dir / "labels.jsonl");
    if (!is) throw MissingArtifactError("frame labels not found: " + (dir / "labels.jsonl").string());
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = ojson::parse(line);
      labels[j.at("utterance_id").get<std::string>()] = j.at("labels").get<std::vector<int>>();
    }
  }
  TargetInventory inventory;
  const InventoryKind kind = parse_inventory(a.targets);
  if (kind == InventoryKind::ci_phone) inventory = TargetInventory::ci_phone();
  else if (kind == InventoryKind::cd_phone) inventory = TargetInventory::cd_phone();
  else inventory = TargetInventory::word(a.vocabulary);

  std::vector<VideoFrames> videos;
  for (const auto& s : corpus) videos.push_back(read_avf(dir / s.video_path));
  const FrameStats stats = compute_frame_stats(videos);
  std::vector<LabeledFrames> data;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto it = labels.find(corpus[i].utterance_id);
    if (it == labels.end()) throw MissingArtifactError("no labels for " + corpus[i].utterance_id);
    LabeledFrames lf;
    lf.frames = preprocess_frames(videos[i], stats);
    if (inventory.frame_level()) {
      lf.labels = it->second;
    } else {
      // Utterance label: dominant mouth state.
      int open = 0;
      for (int l : it->second) open += l;
      lf.labels = {2 * open >= static_cast<int>(it->second.size()) ? 1 : 0};
    }
    data.push_back(std::move(lf));
  }

  LipNetConfig cfg;
  cfg.base_width = a.base_width;
  cfg.embedding_dim = a.embedding_dim;
  ExtractorTrainOptions opts;
  opts.epochs = a.epochs;
  opts.batch_size = a.batch;
  opts.lr = a.lr;
  opts.seed = a.seed;
  opts.on_epoch = [](int epoch, double loss) { std::cout << "epoch " << epoch + 1 << " loss " << loss << "\n"; };
  ExtractorTraining result = train_extractor(data, inventory, cfg, opts);

  const fs::path out = a.out.empty() ? data_root() / "lipnet.ckpt" : fs::path(a.out);
  save_lipnet(out, *result.extractor, stats);
  std::ofstream hist(out.string() + ".history.csv");
  hist << "epoch,train_loss\n";
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) hist << e + 1 << "," << result.epoch_losses[e] << "\n";
  std::cout << "targets " << to_string(inventory.kind) << " (head width " << result.head_width << ")\n"
            << "wrote " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_train(RunConfig rc) {
  if (rc.manifests.empty()) throw ConfigError("train: no training manifests given");
  if (rc.validation.empty()) throw ConfigError("train: no validation manifest given");
  if (rc.lipnet.empty()) throw ConfigError("train: no lip extractor checkpoint given");
  rc.train.validate();
  rc.train.seed = rc.seed;
  LipExtractor extractor = load_lipnet(rc.lipnet);
  if (extractor.net->embedding_dim() != rc.separator.embedding_dim)
    throw ConfigError("lip extractor embedding width does not match separator.embedding_dim");

  std::vector<Dataset> sets;
  for (const auto& m : rc.manifests) {
    sets.push_back(open_dataset(m, rc.corpus_index, &extractor));
    if (!sets.back().errors.empty()) throw MissingArtifactError(sets.back().errors.front());
  }
  const Dataset val = open_dataset(rc.validation, rc.corpus_index, &extractor);
  if (!val.errors.empty()) throw MissingArtifactError(val.errors.front());

  std::unique_ptr<Task> task;
  if (rc.model == "avtasnet") {
    task = std::make_unique<AvTasNetTask>(std::make_unique<AvTasNet<float>>(rc.encoder, rc.separator, rc.seed));
  } else if (rc.model == "favs") {
    rc.favs.separator = rc.separator;
    task = std::make_unique<FavsTask>(std::make_unique<FavsNet<float>>(rc.favs, rc.seed));
  } else {
    throw ConfigError("unknown model: " + rc.model);
  }

  std::vector<const Dataset*> ptrs;
  for (const auto& s : sets) ptrs.push_back(&s);
  if (ptrs.size() > 1) {
    std::cout << "multi-speaker training over";
    for (const auto& s : sets) std::cout << " " << s.num_speakers << "spk(" << s.examples.size() << ")";
    std::cout << "\n";
  }
  const fs::path out = rc.output.empty() ? data_root() / (rc.model + ".ckpt") : fs::path(rc.output);
  TrainHooks hooks;
  hooks.checkpoint = out;
  hooks.on_epoch = [](const EpochRecord& r) {
    std::printf("epoch %3d  train %.4f  val %.4f  lr %.3g\n", r.epoch, r.train_loss, r.val_loss, r.lr);
    std::fflush(stdout);
  };
  const TrainResult result = train(*task, ptrs, val, rc.train, hooks);
  task->save(out);
  const fs::path hist = rc.history.empty() ? fs::path(out.string() + ".history.csv") : fs::path(rc.history);
  write_history_csv(hist, result.history);
  std::cout << "best epoch " << result.best_epoch << " (val " << result.best_val_loss << ")"
            << (result.early_stopped ? ", stopped early" : "") << "\nwrote " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string lipnet;
  std::vector<std::string> manifests;
  std::string corpus_index;
  std::string out;
  std::string phase = "mix";
  std::string mask = "psm";
};

PhaseSource parse_phase(const std::string& s) {
  if (s == "mix") return PhaseSource::mix;
  if (s == "oracle") return PhaseSource::oracle;
  throw ConfigError("unknown phase source: " + s);
}

std::string report_stem(const EvalArgs& a, const std::string& manifest, const std::string& tag) {
  const fs::path base = a.out.empty() ? fs::path(manifest).parent_path() / "reports" : fs::path(a.out);
  return (base / (fs::path(manifest).stem().string() + "." + tag)).string();
}

int cmd_evaluate(const EvalArgs& a) {
  std::unique_ptr<Task> task = load_task(a.checkpoint);
  if (auto* favs = dynamic_cast<FavsTask*>(task.get())) favs->set_phase(parse_phase(a.phase));
  LipExtractor extractor = load_lipnet(a.lipnet);
  for (const auto& m : a.manifests) {
    const Dataset data = open_dataset(m, a.corpus_index, &extractor);
    const EvalReport report = evaluate(*task, data);
    const std::string stem = report_stem(a, m, task->kind());
    report.write(stem);
    std::cout << report.to_table() << "wrote " << stem << ".json\n";
  }
  return 0;
}

int cmd_oracle(const EvalArgs& a) {
  OracleMask kind;
  if (a.mask == "psm") kind = OracleMask::psm;
  else if (a.mask == "irm") kind = OracleMask::irm;
  else throw ConfigError("unknown mask: " + a.mask);
  for (const auto& m : a.manifests) {
    const Dataset data = open_dataset(m, a.corpus_index, nullptr);
    const EvalReport report = evaluate(oracle_separator(kind, parse_phase(a.phase)), data,
                                       hex_digest(fnv1a("oracle:" + a.mask + ":" + a.phase)));
    const std::string stem = report_stem(a, m, "oracle_" + a.mask + "_" + a.phase);
    report.write(stem);
    std::cout << report.to_table() << "wrote " << stem << ".json\n";
  }
  return 0;
}

int cmd_extract(const EvalArgs& a) {
  std::unique_ptr<Task> task = load_task(a.checkpoint);
  if (auto* favs = dynamic_cast<FavsTask*>(task.get())) favs->set_phase(parse_phase(a.phase));
  LipExtractor extractor = load_lipnet(a.lipnet);
  for (const auto& m : a.manifests) {
    const Dataset data = open_dataset(m, a.corpus_index, &extractor);
    for (const auto& e : data.errors) std::cerr << "skipped " << e << "\n";
    const fs::path dir = a.out.empty() ? fs::path(m).parent_path() / "extracted" : fs::path(a.out);
    fs::create_directories(dir);
    for (const auto& ex : data.examples) {
      Waveform w;
      w.samples = Eigen::VectorXd::Zero(ex.mixture.size());
      const Eigen::VectorXd est = task->separate(ex);
      const Eigen::Index n = std::min(est.size(), w.samples.size());
      w.samples.head(n) = est.head(n);
      write_wav((dir / (ex.id + ".target.wav")).string(), w);
    }
    std::cout << "extracted " << data.examples.size() << " records to " << dir.string() << "\n";
    if (!data.errors.empty()) return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual target speaker extraction"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic AV corpus and a mixture manifest");
  simulate->add_option("--out", sim.out, "Output directory (default $AVTSE_DATA_DIR or ./data)");
  simulate->add_option("--corpus", sim.corpus, "Existing corpus directory holding corpus.jsonl");
  simulate->add_option("--utterances", sim.utterances, "Synthetic corpus size")->check(CLI::PositiveNumber);
  simulate->add_option("--duration", sim.duration, "Utterance duration, seconds")->check(CLI::PositiveNumber);
  simulate->add_option("--spk", sim.spk, "Speakers per mixture")->check(CLI::Range(2, 8));
  simulate->add_option("--count", sim.count, "Number of mixtures")->check(CLI::PositiveNumber);
  simulate->add_option("--snr", sim.snr, "SNR range lo hi, dB")->expected(2);
  simulate->add_option("--split", sim.split, "train, validation or test");

  LipnetArgs lip;
  auto* train_lip = app.add_subcommand("train-lipnet", "Pre-train the lip embedding extractor");
  train_lip->add_option("--corpus-index", lip.corpus_index, "corpus.jsonl of the AV corpus");
  train_lip->add_option("--targets", lip.targets, "word, ci_phone or cd_phone");
  train_lip->add_option("--vocabulary", lip.vocabulary, "Word inventory size");
  train_lip->add_option("--epochs", lip.epochs);
  train_lip->add_option("--batch", lip.batch);
  train_lip->add_option("--lr", lip.lr);
  train_lip->add_option("--base-width", lip.base_width);
  train_lip->add_option("--embedding-dim", lip.embedding_dim);
  train_lip->add_option("--out", lip.out, "Checkpoint path");

  std::string config_path;
  RunConfig flags;
  auto* train_cmd = app.add_subcommand("train", "Train a separator");
  train_cmd->add_option("--config", config_path, "YAML run configuration");
  auto* o_model = train_cmd->add_option("--model", flags.model, "avtasnet or favs");
  auto* o_lip = train_cmd->add_option("--lipnet", flags.lipnet, "Frozen lip extractor checkpoint");
  auto* o_man = train_cmd->add_option("--manifests", flags.manifests, "Training manifests (blended)");
  auto* o_val = train_cmd->add_option("--validation", flags.validation, "Validation manifest");
  auto* o_idx = train_cmd->add_option("--corpus-index", flags.corpus_index);
  auto* o_out = train_cmd->add_option("--out", flags.output, "Checkpoint path");
  auto* o_hist = train_cmd->add_option("--history", flags.history, "History CSV path");
  auto* o_epochs = train_cmd->add_option("--epochs", flags.train.max_epochs);
  auto* o_lr = train_cmd->add_option("--lr", flags.train.lr);
  auto* o_batch = train_cmd->add_option("--batch", flags.train.batch_size);
  auto* o_chunk = train_cmd->add_option("--chunk", flags.train.chunk_seconds, "Chunk length, seconds");
  std::string norm_flag;
  auto* o_norm = train_cmd->add_option("--norm", norm_flag, "BN or gLN");
  auto* o_na = train_cmd->add_option("--audio-blocks", flags.separator.audio_blocks);
  auto* o_nf = train_cmd->add_option("--fused-blocks", flags.separator.fused_blocks);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on manifests");
  auto* extract_cmd = app.add_subcommand("extract", "Write <mixture_id>.target.wav per record");
  auto* oracle_cmd = app.add_subcommand("oracle", "Oracle-mask upper bounds");
  for (auto* c : {eval_cmd, extract_cmd}) {
    c->add_option("--checkpoint", ev.checkpoint)->required();
    c->add_option("--lipnet", ev.lipnet)->required();
  }
  for (auto* c : {eval_cmd, extract_cmd, oracle_cmd}) {
    c->add_option("--manifest", ev.manifests, "Manifest(s)")->required();
    c->add_option("--corpus-index", ev.corpus_index);
    c->add_option("--out", ev.out, "Report stem directory or extraction directory");
    c->add_option("--phase", ev.phase, "mix or oracle");
  }
  oracle_cmd->add_option("--mask", ev.mask, "psm or irm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) {
      sim.seed = seed;
      return cmd_simulate(sim);
    }
    if (*train_lip) {
      lip.seed = seed;
      return cmd_train_lipnet(lip);
    }
    if (*train_cmd) {
      RunConfig rc = load_run_config(config_path);
      if (app.get_option("--seed")->count()) rc.seed = seed;
      if (o_model->count()) rc.model = flags.model;
      if (o_lip->count()) rc.lipnet = flags.lipnet;
      if (o_man->count()) rc.manifests = flags.manifests;
      if (o_val->count()) rc.validation = flags.validation;
      if (o_idx->count()) rc.corpus_index = flags.corpus_index;
      if (o_out->count()) rc.output = flags.output;
      if (o_hist->count()) rc.history = flags.history;
      if (o_epochs->count()) rc.train.max_epochs = flags.train.max_epochs;
      if (o_lr->count()) rc.train.lr = flags.train.lr;
      if (o_batch->count()) rc.train.batch_size = flags.train.batch_size;
      if (o_chunk->count()) rc.train.chunk_seconds = flags.train.chunk_seconds;
      if (o_norm->count()) rc.separator.norm = parse_norm(norm_flag);
      if (o_na->count()) rc.separator.audio_blocks = flags.separator.audio_blocks;
      if (o_nf->count()) rc.separator.fused_blocks = flags.separator.fused_blocks;
      try {
        rc.encoder.validate();
        rc.separator.validate();
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      return cmd_train(rc);
    }
    if (*eval_cmd) return cmd_evaluate(ev);
    if (*extract_cmd) return cmd_extract(ev);
    if (*oracle_cmd) return cmd_oracle(ev);
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
