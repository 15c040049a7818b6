// src/train_eval.cpp

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

#include "avtse/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "avtse/nn/optim.hpp"

namespace avtse {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error("train: lr must be positive");
  if (max_epochs < 1) throw Error("train: max_epochs must be positive");
  if (lr_halve_patience < 1 || early_stop_patience < 1) throw Error("train: patience values must be positive");
  if (early_stop_patience < lr_halve_patience)
    throw Error("train: early_stop_patience must not be smaller than lr_halve_patience");
  if (batch_size < 1) throw Error("train: batch_size must be positive");
  if (chunk_samples() < kSamplesPerFrame) throw Error("train: chunk must cover at least one video frame");
  if (grad_clip < 0.0) throw Error("train: grad_clip must be non-negative");
}

Eigen::Index TrainConfig::chunk_samples() const {
  return static_cast<Eigen::Index>(std::llround(chunk_seconds * kVideoFps)) * kSamplesPerFrame;
}

void to_json(ojson& j, const TrainConfig& c) {
  j = ojson{{"lr", c.lr},
            {"max_epochs", c.max_epochs},
            {"lr_halve_patience", c.lr_halve_patience},
            {"early_stop_patience", c.early_stop_patience},
            {"chunk_seconds", c.chunk_seconds},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"grad_clip", c.grad_clip}};
}

void from_json(const ojson& j, TrainConfig& c) {
  const TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.lr_halve_patience = j.value("lr_halve_patience", d.lr_halve_patience);
  c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
  c.chunk_seconds = j.value("chunk_seconds", d.chunk_seconds);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
}

PlateauScheduler::PlateauScheduler(double lr, int halve_patience, int stop_patience)
    : lr_(lr), halve_patience_(halve_patience), stop_patience_(stop_patience),
      best_(std::numeric_limits<double>::infinity()) {}

PlateauScheduler::Step PlateauScheduler::observe(double val_loss) {
  Step s;
  if (val_loss < best_) {
    best_ = val_loss;
    since_improvement_ = 0;
    since_halving_ = 0;
    s.improved = true;
  } else {
    ++since_improvement_;
    ++since_halving_;
    if (since_halving_ >= halve_patience_) {
      lr_ *= 0.5;
      since_halving_ = 0;
      s.halved = true;
    }
    s.stop = since_improvement_ >= stop_patience_;
  }
  s.lr = lr_;
  return s;
}

// ---------------------------------------------------------------------------
// Data

Dataset load_dataset(const Manifest& manifest, const fs::path& manifest_dir, const fs::path& corpus_index,
                     LipExtractor* extractor) {
  const auto corpus = read_corpus_index(corpus_index);
  const fs::path corpus_dir = corpus_index.parent_path();
  std::map<std::string, const SourceRecord*> by_id;
  for (const auto& s : corpus) by_id[s.utterance_id] = &s;
  auto lookup = [&](const std::string& id) -> const SourceRecord& {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw MissingArtifactError("utterance not in corpus: " + id);
    return *it->second;
  };

  Dataset data;
  data.num_speakers = manifest.num_speakers;
  std::map<std::pair<std::string, int>, Matrix<float>> embedding_cache;
  for (const auto& rec : manifest.records) {
    try {
      if (rec.target_index < 0 || rec.target_index >= rec.num_speakers())
        throw Error("target_index out of range");
      Example ex;
      ex.id = rec.mixture_id;
      ex.mixture = read_wav((manifest_dir / rec.mixture_path).string()).samples;

      std::vector<Eigen::VectorXd> sources;
      for (const auto& id : rec.source_ids)
        sources.push_back(read_wav((corpus_dir / lookup(id).audio_path).string()).samples);
      const MixResult m = mix(sources, rec.snrs_db);
      const Eigen::Index n = std::min(ex.mixture.size(), m.mixture.size());
      ex.mixture.conservativeResize(n);
      const double rr = m.mixture.head(n).squaredNorm();
      const double gain = rr > 0.0 ? ex.mixture.dot(m.mixture.head(n)) / rr : 1.0;
      ex.target = gain * m.scaled_sources[rec.target_index].head(n);

      const SourceRecord& tgt = lookup(rec.source_ids[rec.target_index]);
      if (extractor == nullptr) {
        data.examples.push_back(std::move(ex));
        continue;
      }
      const int frames_wanted = static_cast<int>(std::lround(static_cast<double>(n) / kSamplesPerFrame));
      auto key = std::make_pair(tgt.utterance_id, frames_wanted);
      auto it = embedding_cache.find(key);
      if (it == embedding_cache.end()) {
        const VideoFrames video = read_avf(corpus_dir / tgt.video_path);
        const int frames = std::min(video.frames, frames_wanted);
        check_alignment(n, frames);
        const FrameSequence seq = preprocess_frames(video.slice(0, frames), extractor->stats);
        it = embedding_cache.emplace(key, lip_embeddings(*extractor->net, seq)).first;
      }
      ex.embeddings = it->second;
      data.examples.push_back(std::move(ex));
    } catch (const MissingArtifactError& e) {
      data.errors.push_back(rec.mixture_id + ": " + e.what());
    }
  }
  return data;
}

Chunk make_chunk(const Example& ex, Eigen::Index offset, Eigen::Index length) {
  const Eigen::Index total = std::min(ex.mixture.size(), ex.target.size());
  offset = std::clamp<Eigen::Index>(offset, 0, std::max<Eigen::Index>(0, total - 1));
  length = std::min(length, total - offset);
  Chunk c;
  c.source = &ex;
  c.offset = offset;
  c.length = length;
  c.mixture = ex.mixture.segment(offset, length);
  c.target = ex.target.segment(offset, length);
  const Eigen::Index tv = ex.embeddings.cols();
  if (tv == 0) return c;
  const Eigen::Index f0 = std::min<Eigen::Index>(offset / kSamplesPerFrame, tv - 1);
  const Eigen::Index nf = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::lround(static_cast<double>(length) / kSamplesPerFrame)), 1, tv - f0);
  c.embeddings = ex.embeddings.middleCols(f0, nf);
  return c;
}

Chunk random_chunk(const Example& ex, Eigen::Index length, std::mt19937_64& rng) {
  const Eigen::Index total = std::min(ex.mixture.size(), ex.target.size());
  if (total <= length) return make_chunk(ex, 0, total);
  const Eigen::Index slots = (total - length) / kSamplesPerFrame;
  std::uniform_int_distribution<Eigen::Index> pick(0, slots);
  return make_chunk(ex, pick(rng) * kSamplesPerFrame, length);
}

// ---------------------------------------------------------------------------
// Tasks

AvTasNetTask::AvTasNetTask(std::unique_ptr<AvTasNet<float>> model) : model_(std::move(model)) {}

double AvTasNetTask::loss(const std::vector<const Chunk*>& batch, bool backward) {
  Batch<float> x, v;
  for (const Chunk* c : batch) {
    x.push_back(c->mixture.transpose().cast<float>());
    v.push_back(c->embeddings);
  }
  const Batch<float> y = model_->forward(x, v);
  std::vector<Eigen::VectorXd> est, ref;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Eigen::Index n = std::min<Eigen::Index>(y[b].cols(), batch[b]->target.size());
    est.push_back(y[b].row(0).head(n).transpose().cast<double>());
    ref.push_back(batch[b]->target.head(n));
  }
  const LossResult l = si_snr_loss(est, ref, backward);
  if (backward && std::isfinite(l.value)) {
    Batch<float> dy(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      dy[b] = Matrix<float>::Zero(1, y[b].cols());
      dy[b].row(0).head(l.gradients[b].size()) = l.gradients[b].transpose().cast<float>();
    }
    model_->backward(dy);
  }
  return l.value;
}

Eigen::VectorXd AvTasNetTask::separate(const Example& ex) {
  return extract_target(*model_, ex.mixture, ex.embeddings);
}

ojson AvTasNetTask::config() const {
  return ojson{{"encoder", model_->encoder_config()}, {"separator", model_->separator_config()}};
}

FavsTask::FavsTask(std::unique_ptr<FavsNet<float>> model, PhaseSource phase)
    : model_(std::move(model)), phase_(phase) {}

double FavsTask::loss(const std::vector<const Chunk*>& batch, bool backward) {
  const FavsConfig& cfg = model_->config();
  Batch<float> mags, v;
  std::vector<Eigen::ArrayXXd> mix_mag, target;
  for (const Chunk* c : batch) {
    const Spectrogram ms = stft(c->mixture, cfg.window, cfg.hop);
    const Spectrogram ts = stft(c->target, cfg.window, cfg.hop);
    mix_mag.push_back(ms.magnitude());
    target.push_back(phase_sensitive_target(ts, ms));
    mags.push_back(magnitude_features<float>(ms));
    v.push_back(c->embeddings);
  }
  const Batch<float> masks = model_->forward(mags, v);
  double total = 0.0;
  Batch<float> dmask(batch.size());
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TFMask mask = masks[b].transpose().cast<double>().array();
    const PsaLoss l = psa_loss(mask, mix_mag[b], target[b], backward);
    total += scale * l.value;
    if (backward) dmask[b] = (scale * l.gradient).matrix().transpose().cast<float>();
  }
  if (backward && std::isfinite(total)) model_->backward(dmask);
  return total;
}

Eigen::VectorXd FavsTask::separate(const Example& ex) {
  if (phase_ == PhaseSource::oracle) return favs_separate(*model_, ex.mixture, ex.embeddings, phase_, &ex.target);
  return favs_separate(*model_, ex.mixture, ex.embeddings, phase_);
}

ojson FavsTask::config() const { return ojson(model_->config()); }

std::unique_ptr<Task> load_task(const fs::path& checkpoint) {
  const CheckpointHeader h = read_checkpoint_header(checkpoint);
  if (h.kind == "avtasnet") return std::make_unique<AvTasNetTask>(load_avtasnet(checkpoint));
  if (h.kind == "favs") return std::make_unique<FavsTask>(load_favs(checkpoint));
  throw IoError("checkpoint " + checkpoint.string() + " holds a " + h.kind + " model, not a separator");
}

// ---------------------------------------------------------------------------
// Training

std::vector<std::pair<int, int>> blended_order(std::span<const Dataset* const> sets, std::mt19937_64& rng) {
  std::vector<std::pair<int, int>> order;
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (std::size_t i = 0; i < sets[s]->examples.size(); ++i)
      order.emplace_back(static_cast<int>(s), static_cast<int>(i));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double validation_loss(Task& task, const Dataset& validation, Eigen::Index chunk_len) {
  if (validation.examples.empty()) throw Error("validation set is empty");
  task.set_training(false);
  double total = 0.0;
  for (const auto& ex : validation.examples) {
    const Chunk c = make_chunk(ex, 0, chunk_len);
    total += task.loss({&c}, false);
  }
  return total / static_cast<double>(validation.examples.size());
}

TrainResult train(Task& task, std::span<const Dataset* const> train_sets, const Dataset& validation,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train_sets.empty()) throw Error("train: no training manifests");
  std::size_t total = 0;
  for (const Dataset* d : train_sets) total += d->examples.size();
  if (total == 0) throw Error("train: training sets are empty");

  std::mt19937_64 rng(cfg.seed);
  const auto params = task.parameters();
  nn::Adam<float> adam(params, cfg.lr);
  PlateauScheduler sched(cfg.lr, cfg.lr_halve_patience, cfg.early_stop_patience);
  const Eigen::Index chunk_len = cfg.chunk_samples();

  std::vector<Matrix<float>> best(params.size());
  auto snapshot = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
  };
  snapshot();

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = blended_order(train_sets, rng);
    task.set_training(true);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Chunk> chunks;
      for (std::size_t i = start; i < end; ++i)
        chunks.push_back(random_chunk(train_sets[order[i].first]->examples[order[i].second], chunk_len, rng));
      std::vector<const Chunk*> ptrs;
      for (const auto& c : chunks) ptrs.push_back(&c);

      adam.zero_grad();
      const double loss = task.loss(ptrs, true);
      if (!std::isfinite(loss)) {
        std::string ids;
        for (const auto& c : chunks) ids += (ids.empty() ? "" : ", ") + c.source->id;
        throw TrainingAborted("non-finite training loss in epoch " + std::to_string(epoch) +
                              "; last batch: " + ids);
      }
      nn::clip_grad_norm(params, cfg.grad_clip);
      adam.step();
      sum += loss;
      ++batches;
      ++result.steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / batches;
    rec.val_loss = validation_loss(task, validation, chunk_len);
    rec.lr = adam.lr();
    result.history.push_back(rec);

    const PlateauScheduler::Step step = sched.observe(rec.val_loss);
    if (step.improved) {
      result.best_epoch = epoch;
      result.best_val_loss = rec.val_loss;
      snapshot();
      if (!hooks.checkpoint.empty()) task.save(hooks.checkpoint);
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
    adam.set_lr(step.lr);
    if (step.stop) {
      result.early_stopped = true;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  task.set_training(false);
  return result;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "epoch,train_loss,val_loss,lr\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.6g\n", r.epoch, r.train_loss, r.val_loss, r.lr);
    os << line;
  }
}

// ---------------------------------------------------------------------------
// Evaluation

ojson EvalReport::to_json() const {
  ojson rows = ojson::array();
  for (const auto& r : per_utterance)
    rows.push_back(ojson{{"mixture_id", r.mixture_id},
                         {"si_snr_db", r.si_snr},
                         {"mixture_si_snr_db", r.mixture_si_snr},
                         {"improvement_db", r.improvement}});
  return ojson{{"config_digest", config_digest},
               {"count", per_utterance.size()},
               {"mean_si_snr", mean_si_snr},
               {"mean_mixture_si_snr", mean_mixture_si_snr},
               {"mean_si_snr_improvement", mean_si_snr_improvement},
               {"incomplete", incomplete},
               {"errors", errors},
               {"per_utterance", rows}};
}

std::string EvalReport::to_table() const {
  std::size_t width = 10;
  for (const auto& r : per_utterance) width = std::max(width, r.mixture_id.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %9s  %9s\n", static_cast<int>(width), "mixture_id", "si_snr",
                "mixture", "improve");
  os << buf;
  for (const auto& r : per_utterance) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.3f  %9.3f  %9.3f\n", static_cast<int>(width),
                  r.mixture_id.c_str(), r.si_snr, r.mixture_si_snr, r.improvement);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-*s  %9.3f  %9.3f  %9.3f\n", static_cast<int>(width), "MEAN", mean_si_snr,
                mean_mixture_si_snr, mean_si_snr_improvement);
  os << buf;
  os << "config " << config_digest << (incomplete ? "  INCOMPLETE" : "") << "\n";
  for (const auto& e : errors) os << "error: " << e << "\n";
  return os.str();
}

void EvalReport::write(const fs::path& stem) const {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::ofstream js(fs::path(stem.string() + ".json"));
  std::ofstream txt(fs::path(stem.string() + ".txt"));
  if (!js || !txt) throw IoError("cannot write report " + stem.string());
  js << to_json().dump(2) << "\n";
  txt << to_table();
}

EvalReport evaluate(const SeparateFn& separate, const Dataset& data, const std::string& config_digest) {
  EvalReport report;
  report.config_digest = config_digest;
  report.errors = data.errors;
  for (const auto& ex : data.examples) {
    const Eigen::VectorXd est = separate(ex);
    const Eigen::Index n = std::min({est.size(), ex.target.size(), ex.mixture.size()});
    EvalRow row;
    row.mixture_id = ex.id;
    row.si_snr = si_snr(est.head(n), ex.target.head(n));
    row.mixture_si_snr = si_snr(ex.mixture.head(n), ex.target.head(n));
    row.improvement = row.si_snr - row.mixture_si_snr;
    report.per_utterance.push_back(row);
  }
  if (!report.per_utterance.empty()) {
    const double count = static_cast<double>(report.per_utterance.size());
    for (const auto& r : report.per_utterance) {
      report.mean_si_snr += r.si_snr;
      report.mean_mixture_si_snr += r.mixture_si_snr;
      report.mean_si_snr_improvement += r.improvement;
    }
    report.mean_si_snr /= count;
    report.mean_mixture_si_snr /= count;
    report.mean_si_snr_improvement /= count;
  }
  report.incomplete = !report.errors.empty();
  return report;
}

EvalReport evaluate(Task& task, const Dataset& data) {
  task.set_training(false);
  const std::string digest = hex_digest(fnv1a(task.kind() + task.config().dump()));
  return evaluate([&](const Example& ex) { return task.separate(ex); }, data, digest);
}

SeparateFn oracle_separator(OracleMask kind, PhaseSource phase) {
  return [kind, phase](const Example& ex) -> Eigen::VectorXd {
    const FavsConfig stft_cfg;
    const Eigen::Index n = std::min(ex.mixture.size(), ex.target.size());
    const Spectrogram ms = stft(ex.mixture.head(n).eval(), stft_cfg.window, stft_cfg.hop);
    const Spectrogram ts = stft(ex.target.head(n).eval(), stft_cfg.window, stft_cfg.hop);
    TFMask mask;
    if (kind == OracleMask::psm) {
      mask = oracle_psm(ts, ms);
    } else {
      const Spectrogram rest = stft((ex.mixture.head(n) - ex.target.head(n)).eval(), stft_cfg.window, stft_cfg.hop);
      mask = oracle_irm({ts.magnitude(), rest.magnitude()})[0];
    }
    return apply_mask(ms, mask, phase, phase == PhaseSource::oracle ? &ts : nullptr).samples;
  };
}

std::string ConditionGrid::to_table() const {
  std::size_t width = 8;
  for (const auto& t : trainings) width = std::max(width, t.size());
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), "train\\test");
  os << buf;
  for (const auto& t : tests) {
    std::snprintf(buf, sizeof buf, "  %10s", t.c_str());
    os << buf;
  }
  os << "\n";
  for (std::size_t i = 0; i < trainings.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), trainings[i].c_str());
    os << buf;
    for (double v : mean_si_snr[i]) {
      std::snprintf(buf, sizeof buf, "  %10.3f", v);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

ConditionGrid cross_condition_eval(std::span<std::pair<std::string, Task*> const> models,
                                   std::span<std::pair<std::string, const Dataset*> const> tests) {
  ConditionGrid grid;
  for (const auto& [name, _] : tests) grid.tests.push_back(name);
  for (const auto& [name, task] : models) {
    grid.trainings.push_back(name);
    std::vector<double> row;
    for (const auto& [_, data] : tests) row.push_back(evaluate(*task, *data).mean_si_snr);
    grid.mean_si_snr.push_back(std::move(row));
  }
  return grid;
}

}  // namespace avtse
