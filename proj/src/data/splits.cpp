#include "vrebert/data/splits.hpp"

#include <numeric>

#include "vrebert/errors.hpp"

namespace vrebert {

std::set<TripletType> triplet_types(const std::vector<ImageRecord>& images) {
  std::set<TripletType> types;
  for (const auto& image : images) {
    for (const auto& rel : image.relationships) {
      types.insert(triplet_type(image, rel));
    }
  }
  return types;
}

DatasetSplit make_zero_shot_split(std::vector<ImageRecord> train,
                                  std::vector<ImageRecord> test) {
  DatasetSplit split;
  const auto seen = triplet_types(train);
  for (const auto& image : test) {
    for (const auto& rel : image.relationships) {
      if (!seen.contains(triplet_type(image, rel))) {
        split.zero_shot_test.push_back({image.image_id, rel});
      }
    }
  }
  split.train = std::move(train);
  split.test = std::move(test);
  return split;
}

namespace {

std::vector<double> normalized(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> out(counts.size());
  if (total <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(counts.size()));
  } else {
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] / total;
  }
  return out;
}

}  // namespace

PredicateFrequency::PredicateFrequency(const std::vector<ImageRecord>& train,
                                       std::size_t num_predicates)
    : num_predicates_(num_predicates), totals_(num_predicates, 0.0) {
  if (train.empty()) {
    throw ContractError("predicate_frequency: training set is empty");
  }
  if (num_predicates == 0) {
    throw ContractError("predicate_frequency: no predicates");
  }
  for (const auto& image : train) {
    for (const auto& rel : image.relationships) {
      if (rel.predicate_id >= num_predicates) {
        throw ContractError("predicate_frequency: predicate id out of range");
      }
      totals_[rel.predicate_id] += 1.0;
      auto key = std::pair{image.detections.at(rel.sub_idx).category_id,
                           image.detections.at(rel.obj_idx).category_id};
      auto [it, _] = pairs_.try_emplace(key, num_predicates, 0.0);
      it->second[rel.predicate_id] += 1.0;
    }
  }
}

std::vector<double> PredicateFrequency::unconditioned() const {
  return normalized(totals_);
}

std::vector<double> PredicateFrequency::conditioned(
    std::size_t sub_category, std::size_t obj_category) const {
  auto it = pairs_.find({sub_category, obj_category});
  if (it == pairs_.end()) return unconditioned();
  return normalized(it->second);
}

std::size_t PredicateFrequency::support(std::size_t sub_category,
                                        std::size_t obj_category) const {
  auto it = pairs_.find({sub_category, obj_category});
  if (it == pairs_.end()) return 0;
  return static_cast<std::size_t>(
      std::accumulate(it->second.begin(), it->second.end(), 0.0));
}

std::vector<std::pair<std::size_t, std::size_t>>
PredicateFrequency::observed_pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [key, _] : pairs_) out.push_back(key);
  return out;
}

std::vector<double> predicate_frequency(const std::vector<ImageRecord>& train,
                                        std::size_t num_predicates) {
  return PredicateFrequency(train, num_predicates).unconditioned();
}

}  // namespace vrebert
