#include "vrebert/relationship/ranking.hpp"

#include <algorithm>
#include <json.hpp>
#include <set>

#include "vrebert/errors.hpp"

namespace vrebert {

double relationship_likelihood(double p_pred, double p_obj, double p_sub) {
  auto check = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ContractError(std::string(name) + " = " + std::to_string(p) +
                          " is not a probability");
    }
  };
  check(p_pred, "p_pred");
  check(p_obj, "p_obj");
  check(p_sub, "p_sub");
  return p_pred * p_obj * p_sub;
}

bool ranks_before(const ScoredTriplet& a, const ScoredTriplet& b) {
  if (a.likelihood != b.likelihood) return a.likelihood > b.likelihood;
  return std::tie(a.sub_idx, a.obj_idx, a.predicate_id) <
         std::tie(b.sub_idx, b.obj_idx, b.predicate_id);
}

const char* to_string(PairMode mode) {
  return mode == PairMode::kGroundTruth ? "gt" : "all";
}

PairMode parse_pair_mode(const std::string& text) {
  if (text == "gt") return PairMode::kGroundTruth;
  if (text == "all") return PairMode::kAllPairs;
  throw ConfigError("unknown pair mode '" + text + "' (expected gt or all)");
}

std::vector<DetectionPair> candidate_pairs(const ImageRecord& image,
                                           PairMode mode) {
  std::vector<DetectionPair> pairs;
  const auto n = image.detections.size();
  if (n < 2) return pairs;
  if (mode == PairMode::kAllPairs) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t o = 0; o < n; ++o) {
        if (s != o) pairs.emplace_back(s, o);
      }
    }
    return pairs;
  }
  std::set<DetectionPair> unique;
  for (const auto& r : image.relationships) {
    if (r.sub_idx != r.obj_idx) unique.emplace(r.sub_idx, r.obj_idx);
  }
  return {unique.begin(), unique.end()};
}

PairScorer model_scorer(const Model& model) {
  return [&model](const ImageRecord& image,
                  const std::vector<DetectionPair>& pairs) {
    std::vector<PairInput> inputs;
    inputs.reserve(pairs.size());
    for (const auto& [s, o] : pairs) {
      inputs.push_back({&image.detections.at(s), &image.detections.at(o),
                        image.width, image.height});
    }
    return model.predict(inputs);
  };
}

std::vector<ScoredTriplet> rank_scored(
    const ImageRecord& image, const std::vector<DetectionPair>& pairs,
    const std::vector<PredicateDistribution>& distributions, std::size_t top_n,
    PairMode mode) {
  if (distributions.size() != pairs.size()) {
    throw ContractError("rank_scored: " + std::to_string(distributions.size()) +
                        " distributions for " + std::to_string(pairs.size()) +
                        " pairs");
  }
  std::vector<ScoredTriplet> pool;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [s, o] = pairs[i];
    const bool gt = mode == PairMode::kGroundTruth;
    const double p_sub = gt ? 1.0 : image.detections.at(s).confidence;
    const double p_obj = gt ? 1.0 : image.detections.at(o).confidence;
    const auto& dist = distributions[i];
    for (std::size_t p = 0; p < dist.size(); ++p) {
      pool.push_back({s, o, p, relationship_likelihood(dist[p], p_obj, p_sub)});
    }
  }
  const auto keep = top_n == 0 ? pool.size() : std::min(top_n, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + keep, pool.end(), ranks_before);
  pool.resize(keep);
  return pool;
}

std::vector<ScoredTriplet> rank_relationships(const ImageRecord& image,
                                              const PairScorer& scorer,
                                              std::size_t top_n, PairMode mode) {
  const auto pairs = candidate_pairs(image, mode);
  if (pairs.empty()) return {};
  return rank_scored(image, pairs, scorer(image, pairs), top_n, mode);
}

std::string format_prediction_dump(const std::string& image_id,
                                   const std::vector<ScoredTriplet>& ranked) {
  std::string out;
  for (const auto& t : ranked) {
    nlohmann::ordered_json line = {{"image_id", image_id},
                                   {"sub_idx", t.sub_idx},
                                   {"obj_idx", t.obj_idx},
                                   {"pred_id", t.predicate_id},
                                   {"likelihood", t.likelihood}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace vrebert
