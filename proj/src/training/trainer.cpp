#include "vrebert/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>
#include <tuple>

#include "vrebert/data/features.hpp"
#include "vrebert/errors.hpp"
#include "vrebert/numerics/ops.hpp"

namespace vrebert {

double loss_masked_predicate(const PredicateDistribution& dist,
                             std::size_t target) {
  if (target >= dist.size()) {
    throw ContractError("target predicate " + std::to_string(target) +
                        " outside a distribution over " +
                        std::to_string(dist.size()));
  }
  return -std::log(std::max(dist[target], 1e-12));
}

Tensor loss_masked_predicate(const Tensor& probs,
                             std::span<const std::size_t> rows,
                             std::span<const std::size_t> targets) {
  if (probs.rank() != 2 || rows.size() != targets.size() || rows.empty()) {
    throw ContractError("loss_masked_predicate: " +
                        std::to_string(rows.size()) + " rows, " +
                        std::to_string(targets.size()) + " targets for probs " +
                        shape_to_string(probs.shape()));
  }
  const auto B = probs.dim(0), P = probs.dim(1);
  std::vector<std::size_t> index(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= B || targets[i] >= P) {
      throw ContractError("loss_masked_predicate: target (" +
                          std::to_string(rows[i]) + ", " +
                          std::to_string(targets[i]) + ") out of range");
    }
    index[i] = rows[i] * P + targets[i];
  }
  Tensor picked = ops::gather_elements(probs, index, {index.size()});
  return ops::mean(ops::neg_log_clamped(picked));
}

const char* to_string(Stage stage) { return stage == Stage::kS2 ? "s2" : "s3"; }

Stage parse_stage(const std::string& text) {
  if (text == "s2") return Stage::kS2;
  if (text == "s3") return Stage::kS3;
  throw ConfigError("unknown stage '" + text + "' (expected s2 or s3)");
}

std::string EpochLog::to_json() const {
  nlohmann::ordered_json j = {{"stage", to_string(stage)},
                              {"epoch", epoch},
                              {"mean_loss", mean_loss},
                              {"elapsed_ms", elapsed_ms}};
  return j.dump();
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip norm must be >= 0");
  optimizer.validate();
}

std::vector<TrainingExample> training_examples(
    const std::vector<ImageRecord>& images) {
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const auto& r : images[i].relationships) {
      out.push_back({i, r.sub_idx, r.obj_idx, r.predicate_id});
    }
  }
  return out;
}

Tensor batch_loss(const Model& model, const std::vector<ImageRecord>& images,
                  std::span<const TrainingExample> batch, bool train,
                  Rng* rng) {
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> row_of;
  std::vector<PairInput> pairs;
  std::vector<std::size_t> rows, targets;
  for (const auto& ex : batch) {
    const auto key = std::make_tuple(ex.image, ex.sub_idx, ex.obj_idx);
    auto [it, fresh] = row_of.emplace(key, pairs.size());
    if (fresh) {
      const auto& image = images.at(ex.image);
      pairs.push_back({&image.detections.at(ex.sub_idx),
                       &image.detections.at(ex.obj_idx), image.width,
                       image.height});
    }
    rows.push_back(it->second);
    targets.push_back(ex.predicate_id);
  }
  Tensor probs = model.probabilities(pairs, train, rng);
  return loss_masked_predicate(probs, rows, targets);
}

double train_step(Model& model, const std::vector<ImageRecord>& images,
                  std::span<const TrainingExample> batch, AdamWState& state,
                  double clip_norm, Rng& dropout_rng) {
  auto params = model.trainable_parameters();
  zero_grads(params);
  Tensor loss = batch_loss(model, images, batch, true, &dropout_rng);
  loss.backward();
  if (clip_norm > 0.0) clip_grad_norm(params, clip_norm);
  adamw_step(params, state);
  return loss.item();
}

void transfer_parameters(Model& target, const Model& source) {
  std::vector<NamedTensor> params;
  const bool skip_visual = !source.config().visual_input;
  for (const auto& p : source.named_parameters()) {
    if (skip_visual && (p.name.starts_with("embedding.feature.") ||
                        p.name.starts_with("embedding.position."))) {
      continue;
    }
    params.push_back(p);
  }
  target.load_parameters(params, false);
}

namespace {

TrainResult run_training(Model& model, const std::vector<ImageRecord>& train,
                         const TrainConfig& config) {
  config.validate();
  const auto examples = training_examples(train);
  if (examples.empty()) {
    throw ContractError("training set holds no relationships");
  }
  Rng shuffle_rng = Rng::stream(config.seed, "shuffle");
  Rng dropout_rng = Rng::stream(config.seed, "dropout");
  const auto params = model.trainable_parameters();
  AdamWState state(params, config.optimizer);

  std::vector<std::size_t> order(examples.size());
  std::vector<TrainingExample> batch;
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const auto end = std::min(order.size(), b + config.batch_size);
      batch.clear();
      for (std::size_t i = b; i < end; ++i) batch.push_back(examples[order[i]]);
      total += train_step(model, train, batch, state, config.clip_norm,
                          dropout_rng) *
               static_cast<double>(batch.size());
      ++result.steps;
    }
    EpochLog log;
    log.stage = config.stage;
    log.epoch = epoch;
    log.mean_loss = total / static_cast<double>(examples.size());
    log.elapsed_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    if (config.on_epoch) config.on_epoch(log);
    result.log.push_back(log);
  }
  if (!config.snapshot_out.empty()) model.save(config.snapshot_out);
  return result;
}

}  // namespace

TrainResult train_stage2(Model& model, const std::vector<ImageRecord>& train,
                         const TrainConfig& config) {
  if (model.config().visual_input) {
    throw ConfigError("stage s2 trains a language-only model (visual input off)");
  }
  TrainConfig c = config;
  c.stage = Stage::kS2;
  if (!c.init_snapshot.empty()) {
    transfer_parameters(model, Model::load(c.init_snapshot));
  }
  return run_training(model, train, c);
}

TrainResult train_stage3(Model& model, const std::vector<ImageRecord>& train,
                         const TrainConfig& config) {
  if (!model.config().visual_input) {
    throw ConfigError("stage s3 needs a model with visual input");
  }
  if (!has_features(train, model.config().feature_dim)) {
    throw ConfigError("stage s3 needs region features of dimension " +
                      std::to_string(model.config().feature_dim) +
                      " on every detection");
  }
  TrainConfig c = config;
  c.stage = Stage::kS3;
  if (!c.init_snapshot.empty()) {
    transfer_parameters(model, Model::load(c.init_snapshot));
  }
  return run_training(model, train, c);
}

}  // namespace vrebert
