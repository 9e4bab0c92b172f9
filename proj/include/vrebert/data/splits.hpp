#pragma once

#include <map>
#include <set>
#include <utility>
#include <vector>

#include "vrebert/data/records.hpp"

namespace vrebert {

std::set<TripletType> triplet_types(const std::vector<ImageRecord>& images);

// zero_shot_test holds exactly the test relationships whose triplet type
// never occurs in train.
DatasetSplit make_zero_shot_split(std::vector<ImageRecord> train,
                                  std::vector<ImageRecord> test);

// Empirical predicate distribution over train relationships, optionally
// conditioned on (subject category, object category).
class PredicateFrequency {
 public:
  // Throws ContractError when train holds no images.
  PredicateFrequency(const std::vector<ImageRecord>& train,
                     std::size_t num_predicates);

  // Uniform when train holds no relationships at all.
  std::vector<double> unconditioned() const;
  // Falls back to unconditioned() for pairs never seen in train.
  std::vector<double> conditioned(std::size_t sub_category,
                                  std::size_t obj_category) const;
  std::size_t support(std::size_t sub_category, std::size_t obj_category) const;
  std::vector<std::pair<std::size_t, std::size_t>> observed_pairs() const;

 private:
  std::size_t num_predicates_;
  std::vector<double> totals_;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> pairs_;
};

std::vector<double> predicate_frequency(const std::vector<ImageRecord>& train,
                                        std::size_t num_predicates);

}  // namespace vrebert
