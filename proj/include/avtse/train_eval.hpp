// include/avtse/train_eval.hpp

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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "avtse/checkpoint.hpp"
#include "avtse/pipeline.hpp"

namespace avtse {

struct TrainConfig {
  double lr = 1e-3;
  int max_epochs = 80;
  int lr_halve_patience = 3;
  int early_stop_patience = 6;
  double chunk_seconds = 2.0;
  int batch_size = 4;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;

  void validate() const;
  /// Chunk length in samples, a whole number of video frames.
  Eigen::Index chunk_samples() const;
};

void to_json(nlohmann::ordered_json& j, const TrainConfig& c);
void from_json(const nlohmann::ordered_json& j, TrainConfig& c);

/// Learning-rate halving and early stopping on a validation loss trace.
///
/// An epoch improves when its loss is strictly below the best so far. The
/// rate halves once `halve_patience` epochs have passed without improvement
/// since the last improvement or halving; training stops once
/// `stop_patience` epochs have passed without improvement.
class PlateauScheduler {
 public:
  struct Step {
    double lr = 0.0;     // rate for the next epoch
    bool improved = false;
    bool halved = false;
    bool stop = false;
  };

  PlateauScheduler(double lr, int halve_patience, int stop_patience);

  Step observe(double val_loss);
  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  double lr_;
  int halve_patience_, stop_patience_;
  double best_;
  int since_improvement_ = 0;
  int since_halving_ = 0;
};

/// One mixture ready for the networks: the mixture, the matching scaled
/// target and the target speaker's lip embeddings (embedding_dim x T_v).
struct Example {
  std::string id;
  Eigen::VectorXd mixture;
  Eigen::VectorXd target;
  Matrix<float> embeddings;
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<std::string> errors;  // records that could not be loaded
  int num_speakers = 2;
};

/// Loads every record of a manifest. The mixture is read from
/// `manifest_dir / mixture_path`; the target is rebuilt by re-mixing the
/// corpus sources at the record SNRs and matched to the stored mixture
/// gain. The target speaker's video is truncated to the mixture length and
/// embedded by the frozen extractor (skipped when `extractor` is null).
/// Records with missing files are listed in `errors` instead of aborting.
Dataset load_dataset(const Manifest& manifest, const std::filesystem::path& manifest_dir,
                     const std::filesystem::path& corpus_index, LipExtractor* extractor);

/// Chunk of an example used for one optimization step.
struct Chunk {
  const Example* source = nullptr;
  Eigen::Index offset = 0;  // samples; a multiple of the samples per video frame
  Eigen::Index length = 0;
  Eigen::VectorXd mixture;
  Eigen::VectorXd target;
  Matrix<float> embeddings;
};

/// Cuts [offset, offset + length) clamped to the example; embeddings are
/// sliced at the matching video frames.
Chunk make_chunk(const Example& ex, Eigen::Index offset, Eigen::Index length);

/// Random chunk (frame-aligned offset) when the example is longer than
/// `length`, otherwise the whole example.
Chunk random_chunk(const Example& ex, Eigen::Index length, std::mt19937_64& rng);

/// A network together with its training loss.
class Task {
 public:
  virtual ~Task() = default;
  virtual std::string kind() const = 0;
  /// Mean loss of the batch; accumulates parameter gradients when `backward`.
  virtual double loss(const std::vector<const Chunk*>& batch, bool backward) = 0;
  /// Full-utterance estimate used for evaluation.
  virtual Eigen::VectorXd separate(const Example& ex) = 0;
  virtual ParameterList<float> parameters() = 0;
  virtual void set_training(bool on) = 0;
  virtual void save(const std::filesystem::path& path) = 0;
  virtual nlohmann::ordered_json config() const = 0;
};

/// Time-domain model trained with the negative Si-SNR loss.
class AvTasNetTask : public Task {
 public:
  explicit AvTasNetTask(std::unique_ptr<AvTasNet<float>> model);
  std::string kind() const override { return "avtasnet"; }
  double loss(const std::vector<const Chunk*>& batch, bool backward) override;
  Eigen::VectorXd separate(const Example& ex) override;
  ParameterList<float> parameters() override { return model_->parameters(); }
  void set_training(bool on) override { model_->set_training(on); }
  void save(const std::filesystem::path& path) override { save_avtasnet(path, *model_); }
  nlohmann::ordered_json config() const override;
  AvTasNet<float>& model() { return *model_; }

 private:
  std::unique_ptr<AvTasNet<float>> model_;
};

/// Spectrogram baseline trained with the PSA loss; evaluation resynthesizes
/// with the mixture phase unless `phase` is set to oracle.
class FavsTask : public Task {
 public:
  explicit FavsTask(std::unique_ptr<FavsNet<float>> model, PhaseSource phase = PhaseSource::mix);
  std::string kind() const override { return "favs"; }
  double loss(const std::vector<const Chunk*>& batch, bool backward) override;
  Eigen::VectorXd separate(const Example& ex) override;
  ParameterList<float> parameters() override { return model_->parameters(); }
  void set_training(bool on) override { model_->set_training(on); }
  void save(const std::filesystem::path& path) override { save_favs(path, *model_); }
  nlohmann::ordered_json config() const override;
  FavsNet<float>& model() { return *model_; }
  void set_phase(PhaseSource phase) { phase_ = phase; }

 private:
  std::unique_ptr<FavsNet<float>> model_;
  PhaseSource phase_;
};

/// Loads either checkpoint kind.
std::unique_ptr<Task> load_task(const std::filesystem::path& checkpoint);

/// Raised when the training loss becomes non-finite.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate used during the epoch
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  long steps = 0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Written after every improving epoch when non-empty.
  std::filesystem::path checkpoint;
};

/// Blends the training sets by shuffling their concatenated examples each
/// epoch, so each set contributes in proportion to its size. Validation
/// uses the first chunk of every validation example. On return the model
/// holds the best-validation weights.
TrainResult train(Task& task, std::span<const Dataset* const> train_sets, const Dataset& validation,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Epoch visiting order over blended training sets: (set, example) pairs.
std::vector<std::pair<int, int>> blended_order(std::span<const Dataset* const> sets, std::mt19937_64& rng);

/// Mean loss over fixed first chunks, without gradients.
double validation_loss(Task& task, const Dataset& validation, Eigen::Index chunk_len);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

struct EvalRow {
  std::string mixture_id;
  double si_snr = 0.0;          // estimate vs target, dB
  double mixture_si_snr = 0.0;  // mixture vs target, dB
  double improvement = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> per_utterance;
  double mean_si_snr = 0.0;
  double mean_mixture_si_snr = 0.0;
  double mean_si_snr_improvement = 0.0;
  std::string config_digest;
  std::vector<std::string> errors;
  bool incomplete = false;

  nlohmann::ordered_json to_json() const;
  std::string to_table() const;
  /// Writes <stem>.json and <stem>.txt.
  void write(const std::filesystem::path& stem) const;
};

using SeparateFn = std::function<Eigen::VectorXd(const Example&)>;

/// Scores every example with `separate`; estimates and references are cut
/// to the common length before scoring.
EvalReport evaluate(const SeparateFn& separate, const Dataset& data, const std::string& config_digest);
EvalReport evaluate(Task& task, const Dataset& data);

/// Oracle-mask separator on the shared STFT settings (40 ms / 10 ms Hann).
enum class OracleMask { psm, irm };
SeparateFn oracle_separator(OracleMask kind, PhaseSource phase = PhaseSource::mix);

/// Training condition x test condition grid of mean Si-SNR values.
struct ConditionGrid {
  std::vector<std::string> trainings;
  std::vector<std::string> tests;
  std::vector<std::vector<double>> mean_si_snr;  // [training][test]

  std::string to_table() const;
};

ConditionGrid cross_condition_eval(std::span<std::pair<std::string, Task*> const> models,
                                   std::span<std::pair<std::string, const Dataset*> const> tests);

}  // namespace avtse
