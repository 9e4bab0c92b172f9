#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vrebert/data/records.hpp"
#include "vrebert/encoder/model.hpp"
#include "vrebert/numerics/adamw.hpp"
#include "vrebert/numerics/rng.hpp"

namespace vrebert {

// -log(dist[target]) with the argument clamped at 1e-12. Throws
// ContractError when target is out of range.
double loss_masked_predicate(const PredicateDistribution& dist,
                             std::size_t target);

// Mean clamped negative log-likelihood of probs[rows[i], targets[i]] over
// a [B x P] probability tensor.
Tensor loss_masked_predicate(const Tensor& probs,
                             std::span<const std::size_t> rows,
                             std::span<const std::size_t> targets);

enum class Stage { kS2, kS3 };
const char* to_string(Stage stage);
Stage parse_stage(const std::string& text);

struct EpochLog {
  Stage stage = Stage::kS2;
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double elapsed_ms = 0.0;

  // {"stage", "epoch", "mean_loss", "elapsed_ms"}
  std::string to_json() const;
};

struct TrainConfig {
  Stage stage = Stage::kS2;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  AdamWOptions optimizer;
  double clip_norm = 1.0;  // 0 disables clipping
  std::filesystem::path init_snapshot;  // empty: keep the model's init
  std::filesystem::path snapshot_out;   // empty: do not save
  std::function<void(const EpochLog&)> on_epoch;

  // Throws ConfigError.
  void validate() const;
};

// One example per ground-truth relationship instance.
struct TrainingExample {
  std::size_t image = 0;
  std::size_t sub_idx = 0;
  std::size_t obj_idx = 0;
  std::size_t predicate_id = 0;
};

std::vector<TrainingExample> training_examples(
    const std::vector<ImageRecord>& images);

// Loss of one batch. Pairs shared by several examples are encoded once.
Tensor batch_loss(const Model& model, const std::vector<ImageRecord>& images,
                  std::span<const TrainingExample> batch, bool train, Rng* rng);

// Forward, backward, clip and one AdamW update. Returns the batch loss
// before the update.
double train_step(Model& model, const std::vector<ImageRecord>& images,
                  std::span<const TrainingExample> batch, AdamWState& state,
                  double clip_norm, Rng& dropout_rng);

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t steps = 0;
};

// Copies every parameter of `source` whose name exists in `target`. The
// feature and image-position projections of a language-only source were
// never trained and are skipped. Throws ConfigError on a shape mismatch.
void transfer_parameters(Model& target, const Model& source);

// Language-only stage: the model must have visual_input off. Throws
// ContractError when the images hold no relationships.
TrainResult train_stage2(Model& model, const std::vector<ImageRecord>& train,
                         const TrainConfig& config);

// Multimodal stage. Throws ConfigError when the model is language-only or
// any detection lacks a feature of the configured dimension. A non-empty
// config.init_snapshot is loaded through transfer_parameters first.
TrainResult train_stage3(Model& model, const std::vector<ImageRecord>& train,
                         const TrainConfig& config);

}  // namespace vrebert
