#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

namespace vrebert {

// Pixel coordinates in (x_min, y_min, x_max, y_max) order.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b);
bool boxes_overlap(const BoundingBox& a, const BoundingBox& b);
// a lies within b (borders may touch).
bool box_within(const BoundingBox& a, const BoundingBox& b);

struct Detection {
  BoundingBox bbox;
  std::size_t category_id = 0;
  double confidence = 1.0;
  std::vector<float> feature;  // empty until features are attached

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Region feature for the union box of a pair: elementwise max of the two
// region features (the feature file stores one vector per detection).
std::vector<float> union_feature(const Detection& a, const Detection& b);

// Subject and object are indices into ImageRecord::detections.
struct RelationshipInstance {
  std::size_t sub_idx = 0;
  std::size_t predicate_id = 0;
  std::size_t obj_idx = 0;

  friend bool operator==(const RelationshipInstance&,
                         const RelationshipInstance&) = default;
  friend auto operator<=>(const RelationshipInstance&,
                          const RelationshipInstance&) = default;
};

struct ImageRecord {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Detection> detections;
  std::vector<RelationshipInstance> relationships;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// (subject category, predicate, object category)
using TripletType = std::tuple<std::size_t, std::size_t, std::size_t>;

TripletType triplet_type(const ImageRecord& image,
                         const RelationshipInstance& rel);

struct ZeroShotInstance {
  std::string image_id;
  RelationshipInstance relationship;

  friend bool operator==(const ZeroShotInstance&,
                         const ZeroShotInstance&) = default;
};

struct DatasetSplit {
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> test;
  std::vector<ZeroShotInstance> zero_shot_test;
};

// Object-category and predicate names by index.
struct CategoryVocab {
  std::vector<std::string> objects;
  std::vector<std::string> predicates;

  friend bool operator==(const CategoryVocab&, const CategoryVocab&) = default;
};

// Validates every ImageRecord invariant against the vocabulary sizes.
// `feature_dim` of 0 skips the feature-length check. Throws
// ValidationError naming the offending field.
void validate_record(const ImageRecord& image, const CategoryVocab& vocab,
                     std::size_t feature_dim = 0);

}  // namespace vrebert
