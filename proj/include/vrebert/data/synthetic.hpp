#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vrebert/data/records.hpp"

namespace vrebert {

// Predicate ids of the synthetic world.
namespace synthetic_predicate {
inline constexpr std::size_t kAbove = 0;
inline constexpr std::size_t kBelow = 1;
inline constexpr std::size_t kLeftOf = 2;
inline constexpr std::size_t kRightOf = 3;
inline constexpr std::size_t kInside = 4;
inline constexpr std::size_t kContains = 5;
inline constexpr std::size_t kNear = 6;
inline constexpr std::size_t kWears = 7;
inline constexpr std::size_t kCount = 8;
}  // namespace synthetic_predicate

// Category 0 is always "person" and 1 is always "hat".
inline constexpr std::size_t kPersonCategory = 0;
inline constexpr std::size_t kHatCategory = 1;

struct SyntheticConfig {
  double world_size = 512.0;  // largest image side; sides vary in [0.6, 1]x
  std::size_t num_images = 200;
  std::size_t num_test_images = 0;  // 0 means num_images / 4 (at least 1)
  std::size_t num_categories = 10;
  std::uint64_t seed = 7;
  std::size_t feature_dim = 0;  // 0 means 5 + num_categories
  std::size_t min_objects = 3;
  std::size_t max_objects = 5;
  // Fraction of triplet types whose train relationships are withheld so the
  // test split carries a zero-shot subset.
  double holdout_fraction = 0.15;
  double noise_sigma = 0.05;

  std::size_t resolved_feature_dim() const;
  std::size_t resolved_test_images() const;
  // Throws ConfigError.
  void validate() const;
};

CategoryVocab synthetic_vocab(std::size_t num_categories);

// Predicates holding for (sub, obj) under the geometric rules:
//   above / below    centers differ vertically by more than 0.05 min(W,H)
//   left of / right of  same horizontally
//   inside / contains   box containment
//   near             center distance < 0.2 min(W,H)
//   wears            replaces the vertical predicate when a person overlaps
//                    a hat lying above it
// Sorted ascending.
std::vector<std::size_t> geometric_predicates(const Detection& sub,
                                              const Detection& obj,
                                              double width, double height);

struct SyntheticDataset {
  CategoryVocab vocab;
  DatasetSplit split;
  std::size_t feature_dim = 0;
  // Withheld triplet types that occur somewhere in the generated images.
  std::vector<TripletType> held_out_types;
};

// Deterministic under config.seed. Features are the normalized box geometry
// and one-hot category plus Gaussian noise, zero-padded to feature_dim.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

}  // namespace vrebert
