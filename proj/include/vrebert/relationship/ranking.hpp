#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vrebert/data/records.hpp"
#include "vrebert/encoder/model.hpp"

namespace vrebert {

// P(pred | obj, sub) * P(obj) * P(sub). Throws ContractError when a factor
// lies outside [0, 1].
double relationship_likelihood(double p_pred, double p_obj, double p_sub);

struct ScoredTriplet {
  std::size_t sub_idx = 0;
  std::size_t obj_idx = 0;
  std::size_t predicate_id = 0;
  double likelihood = 0.0;

  friend bool operator==(const ScoredTriplet&, const ScoredTriplet&) = default;
};

// Ranking order: likelihood descending, then (sub_idx, obj_idx,
// predicate_id) ascending.
bool ranks_before(const ScoredTriplet& a, const ScoredTriplet& b);

enum class PairMode {
  kGroundTruth,  // annotated pairs only, detector confidences taken as 1
  kAllPairs,     // every ordered pair of distinct detections
};

const char* to_string(PairMode mode);
PairMode parse_pair_mode(const std::string& text);

using DetectionPair = std::pair<std::size_t, std::size_t>;

// Candidate (sub, obj) pairs in ascending order, self-pairs excluded.
std::vector<DetectionPair> candidate_pairs(const ImageRecord& image,
                                           PairMode mode);

// Predicate distribution for each requested pair of one image.
using PairScorer = std::function<std::vector<PredicateDistribution>(
    const ImageRecord&, const std::vector<DetectionPair>&)>;

// Batches every pair of an image through Model::predict.
PairScorer model_scorer(const Model& model);

// Scores every predicate of every pair and keeps the N best by
// ranks_before. `top_n` of 0 keeps the whole pool.
std::vector<ScoredTriplet> rank_scored(
    const ImageRecord& image, const std::vector<DetectionPair>& pairs,
    const std::vector<PredicateDistribution>& distributions, std::size_t top_n,
    PairMode mode);

// Fewer than two detections (or no candidate pairs) yields an empty list.
std::vector<ScoredTriplet> rank_relationships(const ImageRecord& image,
                                              const PairScorer& scorer,
                                              std::size_t top_n, PairMode mode);

// One JSON object per line in ranked order:
// {"image_id", "sub_idx", "obj_idx", "pred_id", "likelihood"}.
std::string format_prediction_dump(const std::string& image_id,
                                   const std::vector<ScoredTriplet>& ranked);

}  // namespace vrebert
