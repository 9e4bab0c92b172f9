#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vrebert/data/records.hpp"
#include "vrebert/encoder/model.hpp"
#include "vrebert/relationship/ranking.hpp"
#include "vrebert/training/trainer.hpp"

namespace vrebert {

// Fraction of ground-truth instances (deduplicated per image) matched
// exactly by one of the first N predictions of the same image, pooled over
// all images. per_image_hits, when given, receives the hit count of each
// image. Throws ContractError when N < 1 or the spans differ in length.
double recall_at_n(std::span<const std::vector<ScoredTriplet>> predictions,
                   std::span<const std::vector<RelationshipInstance>> ground_truth,
                   std::size_t n, std::vector<std::size_t>* per_image_hits = nullptr);

struct EvalOptions {
  std::vector<std::size_t> ns = {50, 100};
  PairMode mode = PairMode::kGroundTruth;
  std::uint64_t seed = 0;  // recorded in the report fingerprint only
};

struct EvalReport {
  std::string label;  // row name inside an ablation table
  std::string task;   // "predicate" or "zero_shot_predicate"
  std::string pair_mode;
  std::vector<std::size_t> ns;
  std::vector<double> recall;                    // one per N
  std::vector<std::vector<std::size_t>> hits;    // [N index][image]
  std::vector<std::string> image_ids;
  std::size_t ground_truth = 0;
  // Pairs whose highest-probability predicate is one of their ground-truth
  // predicates, over all pairs carrying evaluated ground truth.
  double top1_per_pair = 0.0;
  std::size_t pairs = 0;
  std::string config_fingerprint;
  std::string seed_fingerprint;

  // Throws LookupError when N was not evaluated.
  double recall_at(std::size_t n) const;
  std::string to_json() const;
};

std::string seed_fingerprint(std::uint64_t seed);

// Ground-truth pair scoring over every relationship of `test`.
EvalReport eval_predicate_prediction(const PairScorer& scorer,
                                     const std::vector<ImageRecord>& test,
                                     const EvalOptions& options);
EvalReport eval_predicate_prediction(const Model& model,
                                     const std::vector<ImageRecord>& test,
                                     const EvalOptions& options);

// Recall over split.zero_shot_test only; every annotated pair of the
// affected images is still ranked. Throws ContractError when the zero-shot
// set is empty.
EvalReport eval_zero_shot(const PairScorer& scorer, const DatasetSplit& split,
                          const EvalOptions& options);
EvalReport eval_zero_shot(const Model& model, const DatasetSplit& split,
                          const EvalOptions& options);

struct AblationConfig {
  ModelConfig base;  // vocab_size and num_predicates are filled in
  TrainConfig train;
  EvalOptions eval;
  std::uint64_t init_seed = 7;
};

struct AblationRow {
  std::string name;
  ModelConfig model;
  EvalReport report;
  std::vector<EpochLog> log;
};

// Rows in order: language-only, +pretrained-features-frozen, +fine-tuned,
// +image-pos, +relative-pos. Every row trains from the same seeds on
// split.train and is scored on split.test.
std::vector<AblationRow> run_ablation_suite(const CategoryVocab& categories,
                                            const DatasetSplit& split,
                                            std::size_t feature_dim,
                                            const AblationConfig& config);

// Aligned text table, one row per report.
std::string format_report_table(std::span<const EvalReport> reports);

}  // namespace vrebert
