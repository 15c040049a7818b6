// tests/test_train_eval.cpp

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
#include <limits>
#include <set>

#include "avtse/train_eval.hpp"

using namespace avtse;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("avtse_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Eigen::VectorXd noise(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Dataset synthetic_set(int n, int frames, int emb_dim, std::uint64_t seed, int speakers = 2) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.num_speakers = speakers;
  for (int i = 0; i < n; ++i) {
    const Eigen::Index len = static_cast<Eigen::Index>(frames) * kSamplesPerFrame;
    std::vector<Eigen::VectorXd> src;
    for (int s = 0; s < speakers; ++s) src.push_back(noise(len, rng));
    std::vector<double> snr(speakers, 0.0);
    for (int s = 1; s < speakers; ++s) snr[s] = -2.0 + s;
    const MixResult m = mix(src, snr);
    Example ex;
    ex.id = "ex" + std::to_string(seed) + "_" + std::to_string(i);
    ex.mixture = m.mixture;
    ex.target = m.scaled_sources[0];
    ex.embeddings = Matrix<float>::Random(emb_dim, frames);
    d.examples.push_back(std::move(ex));
  }
  return d;
}

SeparatorConfig tiny_separator() {
  SeparatorConfig s;
  s.sub_blocks = 2;
  s.bottleneck = 8;
  s.hidden = 8;
  s.video_blocks = 1;
  s.video_channels = 8;
  s.embedding_dim = 4;
  return s;
}

std::unique_ptr<AvTasNetTask> tiny_task(std::uint64_t seed) {
  EncoderConfig e;
  e.kernel = 16;
  e.stride = 8;
  e.basis_channels = 8;
  return std::make_unique<AvTasNetTask>(std::make_unique<AvTasNet<float>>(e, tiny_separator(), seed));
}

// Returns a scripted validation loss per epoch; training batches are free.
class ScriptedTask : public Task {
 public:
  explicit ScriptedTask(std::vector<double> trace) : trace_(std::move(trace)), param_("w", 1, 1) {}
  std::string kind() const override { return "scripted"; }
  double loss(const std::vector<const Chunk*>& batch, bool backward) override {
    if (backward) {
      for (const Chunk* c : batch) seen_.insert(c->source->id);
      return nan_on_train_ ? std::numeric_limits<double>::quiet_NaN() : 1.0;
    }
    return trace_.at(epoch_);
  }
  Eigen::VectorXd separate(const Example& ex) override { return ex.mixture; }
  ParameterList<float> parameters() override { return {&param_}; }
  void set_training(bool on) override {
    if (on) training_started_ = true;
    if (!on && training_started_) {
      // The first switch to eval after a training phase marks a new validation pass.
      if (validated_) ++epoch_;
      validated_ = true;
      training_started_ = false;
    }
  }
  void save(const fs::path&) override {}
  nlohmann::ordered_json config() const override { return {{"trace", trace_.size()}}; }

  bool nan_on_train_ = false;
  std::set<std::string> seen_;

 private:
  std::vector<double> trace_;
  nn::Parameter<float> param_;
  std::size_t epoch_ = 0;
  bool training_started_ = false;
  bool validated_ = false;
};

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.chunk_seconds = 0.08;
  c.batch_size = 2;
  c.lr = 1.0;
  return c;
}

}  // namespace

TEST(Scheduler, HalvesAfterThreeStagnantEpochs) {
  PlateauScheduler s(1.0, 3, 6);
  EXPECT_TRUE(s.observe(5).improved);
  EXPECT_FALSE(s.observe(5).halved);
  EXPECT_FALSE(s.observe(5).halved);
  const auto third = s.observe(5);
  EXPECT_TRUE(third.halved);
  EXPECT_EQ(third.lr, 0.5);
  EXPECT_FALSE(third.stop);
  EXPECT_FALSE(s.observe(6).halved);
  EXPECT_FALSE(s.observe(5).stop);
  const auto sixth = s.observe(5);
  EXPECT_TRUE(sixth.halved);
  EXPECT_TRUE(sixth.stop);
  EXPECT_EQ(sixth.lr, 0.25);
}

TEST(Scheduler, ImprovementResetsBothCounters) {
  PlateauScheduler s(1.0, 3, 6);
  s.observe(5);
  s.observe(5);
  s.observe(5);
  EXPECT_TRUE(s.observe(4).improved);
  s.observe(4);
  s.observe(4);
  const auto h = s.observe(4);
  EXPECT_TRUE(h.halved);
  EXPECT_FALSE(h.stop);
  EXPECT_EQ(s.best(), 4.0);
}

TEST(Scheduler, LrSequenceOnlyHalves) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlateauScheduler s(0.01, 3, 1000);
  double prev = s.lr();
  for (int i = 0; i < 500; ++i) {
    const auto step = s.observe(u(rng));
    EXPECT_TRUE(step.lr == prev || step.lr == prev / 2);
    EXPECT_EQ(step.halved, step.lr != prev);
    prev = step.lr;
  }
}

TEST(Train, ScriptedTraceDrivesScheduleAndStop) {
  const Dataset train_set = synthetic_set(4, 2, 4, 1), val = synthetic_set(1, 2, 4, 2);
  ScriptedTask task({5, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4});
  const Dataset* sets[] = {&train_set};
  const TrainResult r = train(task, sets, val, quick_config(12));
  ASSERT_EQ(r.history.size(), 8u);
  const std::vector<double> lrs{1, 1, 1, 1, 1, 0.5, 0.5, 0.5};
  for (std::size_t i = 0; i < lrs.size(); ++i) {
    EXPECT_EQ(r.history[i].lr, lrs[i]) << "epoch " << i + 1;
    EXPECT_EQ(r.history[i].val_loss, i == 0 ? 5.0 : 4.0);
  }
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.best_epoch, 2);
  EXPECT_EQ(r.best_val_loss, 4.0);
  EXPECT_EQ(r.steps, 8 * 2);
}

TEST(Train, BlendedOrderVisitsEveryExampleOnce) {
  const Dataset a = synthetic_set(10, 1, 4, 3), b = synthetic_set(30, 1, 4, 4, 3);
  const Dataset* sets[] = {&a, &b};
  std::mt19937_64 rng(5);
  const auto order = blended_order(sets, rng);
  ASSERT_EQ(order.size(), 40u);
  EXPECT_EQ(std::set(order.begin(), order.end()).size(), 40u);
  int from_a = 0;
  for (const auto& [s, i] : order) from_a += s == 0;
  EXPECT_EQ(from_a, 10);

  ScriptedTask task({3, 2, 1});
  const TrainResult r = train(task, sets, a, quick_config(1));
  EXPECT_EQ(task.seen_.size(), 40u);
  EXPECT_EQ(r.steps, 20);
}

TEST(Train, NonFiniteLossAbortsWithBatchIds) {
  const Dataset train_set = synthetic_set(3, 2, 4, 6), val = synthetic_set(1, 2, 4, 7);
  ScriptedTask task({1, 1});
  task.nan_on_train_ = true;
  const Dataset* sets[] = {&train_set};
  try {
    train(task, sets, val, quick_config(2));
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_NE(std::string(e.what()).find("ex6_"), std::string::npos);
  }
}

TEST(Train, RealModelImprovesAndCheckpointsBestWeights) {
  const Dataset train_set = synthetic_set(4, 3, 4, 8), val = synthetic_set(2, 3, 4, 9);
  auto task = tiny_task(10);
  const fs::path dir = scratch("real");
  TrainConfig cfg = quick_config(4);
  cfg.lr = 3e-3;
  cfg.chunk_seconds = 0.12;
  std::vector<EpochRecord> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
  hooks.checkpoint = dir / "best.ckpt";
  const Dataset* sets[] = {&train_set};
  const double before = validation_loss(*task, val, cfg.chunk_samples());
  const TrainResult r = train(*task, sets, val, cfg, hooks);
  ASSERT_EQ(seen.size(), r.history.size());
  EXPECT_LT(r.best_val_loss, before);
  EXPECT_NEAR(validation_loss(*task, val, cfg.chunk_samples()), r.best_val_loss, 1e-9);

  auto restored = load_task(hooks.checkpoint);
  EXPECT_EQ(restored->kind(), "avtasnet");
  const Eigen::VectorXd a = task->separate(val.examples[0]);
  const Eigen::VectorXd b = restored->separate(val.examples[0]);
  EXPECT_EQ(a, b);

  write_history_csv(dir / "history.csv", r.history);
  std::ifstream is(dir / "history.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "epoch,train_loss,val_loss,lr");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(r.history.size()));
}

TEST(Checkpoint, ArchitectureMismatchIsRejected) {
  const fs::path dir = scratch("ckpt");
  auto task = tiny_task(11);
  task->save(dir / "a.ckpt");
  const CheckpointHeader h = read_checkpoint_header(dir / "a.ckpt");
  EXPECT_EQ(h.kind, "avtasnet");
  EXPECT_EQ(h.config["separator"]["norm"], "gLN");

  SeparatorConfig other = tiny_separator();
  other.hidden = 12;
  AvTasNet<float> wrong(EncoderConfig{16, 8, 8}, other, 1);
  EXPECT_THROW(load_tensors(dir / "a.ckpt", "avtasnet", wrong.parameters()), Error);
  EXPECT_THROW(load_tensors(dir / "a.ckpt", "favs", task->parameters()), Error);
  EXPECT_THROW(load_avtasnet(dir / "missing.ckpt"), MissingArtifactError);

  // Flip one digit of the stored architecture hash.
  std::ifstream is(dir / "a.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), {});
  const auto at = bytes.find(h.arch_hash);
  ASSERT_NE(at, std::string::npos);
  bytes[at] = bytes[at] == '0' ? '1' : '0';
  std::ofstream(dir / "b.ckpt", std::ios::binary) << bytes;
  EXPECT_THROW(load_avtasnet(dir / "b.ckpt"), Error);
  std::ofstream(dir / "c.ckpt", std::ios::binary) << "garbage";
  EXPECT_THROW(load_avtasnet(dir / "c.ckpt"), IoError);
}

TEST(Checkpoint, FavsAndLipnetRoundTrip) {
  const fs::path dir = scratch("ckpt2");
  FavsConfig fc;
  fc.window = 64;
  fc.hop = 16;
  fc.separator = tiny_separator();
  fc.separator.norm = NormKind::batch;
  FavsNet<float> favs(fc, 3);
  save_favs(dir / "f.ckpt", favs);
  auto loaded = load_favs(dir / "f.ckpt");
  EXPECT_EQ(loaded->config().window, 64);
  EXPECT_EQ(loaded->config().separator.norm, NormKind::batch);
  const auto pa = favs.parameters(), pb = loaded->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);

  LipNetConfig lc;
  lc.base_width = 4;
  lc.embedding_dim = 6;
  LipNet<float> lip(lc, 4);
  save_lipnet(dir / "l.ckpt", lip, {12.5, 3.0});
  const LipExtractor ex = load_lipnet(dir / "l.ckpt");
  EXPECT_EQ(ex.stats.mean, 12.5);
  EXPECT_EQ(ex.stats.stddev, 3.0);
  EXPECT_EQ(ex.net->embedding_dim(), 6);
  EXPECT_THROW(load_task(dir / "l.ckpt"), IoError);
}

TEST(Chunks, FrameAlignedSlices) {
  Dataset d = synthetic_set(1, 10, 4, 12);
  const Example& ex = d.examples[0];
  const Chunk c = make_chunk(ex, 3 * 640, 4 * 640);
  EXPECT_EQ(c.mixture, ex.mixture.segment(1920, 2560));
  EXPECT_EQ(c.embeddings, ex.embeddings.middleCols(3, 4));
  const Chunk tail = make_chunk(ex, 8 * 640, 4 * 640);
  EXPECT_EQ(tail.length, 2 * 640);
  EXPECT_EQ(tail.embeddings.cols(), 2);
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    const Chunk r = random_chunk(ex, 3 * 640, rng);
    EXPECT_EQ(r.offset % 640, 0);
    EXPECT_EQ(r.length, 3 * 640);
    EXPECT_EQ(r.embeddings.cols(), 3);
  }
  Example bare = ex;
  bare.embeddings.resize(0, 0);
  EXPECT_EQ(make_chunk(bare, 0, 640).embeddings.size(), 0);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.chunk_samples(), 32000);
  c.chunk_seconds = 0.05;
  EXPECT_EQ(c.chunk_samples() % 640, 0);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  nlohmann::ordered_json j = TrainConfig{};
  EXPECT_EQ(j["lr_halve_patience"], 3);
  EXPECT_EQ(j["early_stop_patience"], 6);
  EXPECT_EQ(j.get<TrainConfig>().max_epochs, 80);
}

TEST(Evaluate, IdentityHasZeroImprovement) {
  const Dataset d = synthetic_set(5, 3, 4, 14);
  const EvalReport r = evaluate([](const Example& ex) { return ex.mixture; }, d, "id");
  ASSERT_EQ(r.per_utterance.size(), 5u);
  for (const auto& row : r.per_utterance) EXPECT_EQ(row.improvement, 0.0);
  EXPECT_EQ(r.mean_si_snr_improvement, 0.0);
  EXPECT_FALSE(r.incomplete);
}

TEST(Evaluate, MeansRecomputeFromRowsAndAreDeterministic) {
  const Dataset d = synthetic_set(6, 3, 4, 15);
  auto task = tiny_task(16);
  const EvalReport a = evaluate(*task, d);
  const EvalReport b = evaluate(*task, d);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  double s = 0, m = 0;
  for (const auto& row : a.per_utterance) {
    s += row.si_snr;
    m += row.mixture_si_snr;
    EXPECT_NEAR(row.improvement, row.si_snr - row.mixture_si_snr, 1e-12);
  }
  EXPECT_NEAR(a.mean_si_snr, s / 6, 1e-9);
  EXPECT_NEAR(a.mean_mixture_si_snr, m / 6, 1e-9);
  EXPECT_EQ(a.config_digest.size(), 16u);

  const fs::path dir = scratch("report");
  a.write(dir / "eval");
  EXPECT_TRUE(fs::exists(dir / "eval.json"));
  std::ifstream txt(dir / "eval.txt");
  std::string first;
  std::getline(txt, first);
  EXPECT_EQ(first.rfind("mixture_id", 0), 0u);
}

TEST(Evaluate, ErrorsMarkTheReportIncomplete) {
  Dataset d = synthetic_set(2, 3, 4, 17);
  d.errors.push_back("mix_x: missing source");
  const EvalReport r = evaluate([](const Example& ex) { return ex.mixture; }, d, "id");
  EXPECT_TRUE(r.incomplete);
  EXPECT_EQ(r.to_json()["errors"].size(), 1u);
  EXPECT_NE(r.to_table().find("INCOMPLETE"), std::string::npos);
}

TEST(Evaluate, OracleMasksBeatTheMixture) {
  const Dataset d = synthetic_set(4, 25, 4, 18);
  const double psm = evaluate(oracle_separator(OracleMask::psm), d, "psm").mean_si_snr;
  const double irm = evaluate(oracle_separator(OracleMask::irm), d, "irm").mean_si_snr;
  const double psm_oracle = evaluate(oracle_separator(OracleMask::psm, PhaseSource::oracle), d, "o").mean_si_snr;
  const double mixture = evaluate([](const Example& ex) { return ex.mixture; }, d, "m").mean_si_snr;
  EXPECT_GT(psm, irm);
  EXPECT_GT(irm, mixture);
  EXPECT_GT(psm_oracle, psm);
}

TEST(Evaluate, CrossConditionGrid) {
  const Dataset two = synthetic_set(2, 3, 4, 19), three = synthetic_set(2, 3, 4, 20, 3);
  auto a = tiny_task(21);
  ScriptedTask identity({0});
  const std::pair<std::string, Task*> models[] = {{"net", a.get()}, {"identity", &identity}};
  const std::pair<std::string, const Dataset*> tests[] = {{"2spk", &two}, {"3spk", &three}};
  const ConditionGrid g = cross_condition_eval(models, tests);
  ASSERT_EQ(g.mean_si_snr.size(), 2u);
  ASSERT_EQ(g.mean_si_snr[0].size(), 2u);
  EXPECT_NEAR(g.mean_si_snr[1][1], evaluate([](const Example& ex) { return ex.mixture; }, three, "").mean_si_snr,
              1e-12);
  EXPECT_NE(g.to_table().find("3spk"), std::string::npos);
}

TEST(LoadDataset, FromRenderedCorpus) {
  const fs::path dir = scratch("load");
  write_corpus(dir, synth_av_corpus(4, 2.0, 22));
  const auto index = read_corpus_index(dir / "corpus.jsonl");
  const Manifest m = build_manifest(index, 2, 3, {-5, 5}, 23);
  render_mixtures(m, dir / "corpus.jsonl", dir);
  write_manifest(dir / "test_2spk.jsonl", m);

  const Dataset plain = load_dataset(m, dir, dir / "corpus.jsonl", nullptr);
  ASSERT_EQ(plain.examples.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& ex = plain.examples[i];
    EXPECT_EQ(ex.embeddings.size(), 0);
    // The residual is the interferer at the manifest SNR.
    const Eigen::VectorXd rest = ex.mixture - ex.target;
    const double snr = 10 * std::log10(rest.squaredNorm() / ex.target.squaredNorm());
    EXPECT_NEAR(snr, m.records[i].snrs_db[1], 0.05);
  }

  LipNetConfig lc;
  lc.base_width = 4;
  lc.embedding_dim = 6;
  LipExtractor extractor{std::make_unique<LipNet<float>>(lc, 1), {100.0, 50.0}};
  const Dataset with_video = load_dataset(m, dir, dir / "corpus.jsonl", &extractor);
  ASSERT_EQ(with_video.examples.size(), 3u);
  EXPECT_EQ(with_video.examples[0].embeddings.rows(), 6);
  EXPECT_EQ(with_video.examples[0].embeddings.cols(), 50);

  fs::remove(dir / "audio" / (m.records[1].source_ids[0] + ".wav"));
  const Dataset broken = load_dataset(m, dir, dir / "corpus.jsonl", nullptr);
  EXPECT_LT(broken.examples.size(), 3u);
  EXPECT_FALSE(broken.errors.empty());
}

TEST(Alignment, SkewLimit) {
  EXPECT_NO_THROW(check_alignment(32000, 50));
  EXPECT_NO_THROW(check_alignment(32000 + 640, 50));
  EXPECT_THROW(check_alignment(32000 + 1300, 50), Error);
}
