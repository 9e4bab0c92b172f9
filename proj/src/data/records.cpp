#include "vrebert/data/records.hpp"

#include <algorithm>
#include <cmath>

#include "vrebert/errors.hpp"

namespace vrebert {

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min),
          std::max(a.x_max, b.x_max), std::max(a.y_max, b.y_max)};
}

bool boxes_overlap(const BoundingBox& a, const BoundingBox& b) {
  return std::min(a.x_max, b.x_max) > std::max(a.x_min, b.x_min) &&
         std::min(a.y_max, b.y_max) > std::max(a.y_min, b.y_min);
}

bool box_within(const BoundingBox& a, const BoundingBox& b) {
  return a.x_min >= b.x_min && a.y_min >= b.y_min && a.x_max <= b.x_max &&
         a.y_max <= b.y_max;
}

std::vector<float> union_feature(const Detection& a, const Detection& b) {
  if (a.feature.size() != b.feature.size()) {
    throw DimensionError("union_feature: feature lengths " +
                         std::to_string(a.feature.size()) + " and " +
                         std::to_string(b.feature.size()) + " differ");
  }
  std::vector<float> out(a.feature.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(a.feature[i], b.feature[i]);
  }
  return out;
}

TripletType triplet_type(const ImageRecord& image,
                         const RelationshipInstance& rel) {
  return {image.detections.at(rel.sub_idx).category_id, rel.predicate_id,
          image.detections.at(rel.obj_idx).category_id};
}

namespace {

void check(bool ok, const std::string& field, const ImageRecord& image,
           const std::string& detail) {
  if (!ok) {
    throw ValidationError(field, "image '" + image.image_id + "': " + field +
                                     " " + detail);
  }
}

}  // namespace

void validate_record(const ImageRecord& image, const CategoryVocab& vocab,
                     std::size_t feature_dim) {
  check(!image.image_id.empty(), "image_id", image, "must be nonempty");
  check(std::isfinite(image.width) && image.width > 0, "width", image,
        "must be positive");
  check(std::isfinite(image.height) && image.height > 0, "height", image,
        "must be positive");
  for (std::size_t i = 0; i < image.detections.size(); ++i) {
    const auto& d = image.detections[i];
    const auto& b = d.bbox;
    const std::string where = "of object " + std::to_string(i);
    for (auto [v, name] : {std::pair{b.x_min, "x_min"}, {b.y_min, "y_min"},
                           {b.x_max, "x_max"}, {b.y_max, "y_max"}}) {
      check(std::isfinite(v) && v >= 0.0, name, image,
            where + " must be finite and >= 0");
    }
    check(b.x_min <= b.x_max, "x_min", image, where + " exceeds x_max");
    check(b.y_min <= b.y_max, "y_min", image, where + " exceeds y_max");
    check(b.x_max <= image.width, "x_max", image, where + " exceeds width");
    check(b.y_max <= image.height, "y_max", image, where + " exceeds height");
    check(d.category_id < vocab.objects.size(), "category_id", image,
          where + " is outside the object vocabulary");
    check(d.confidence >= 0.0 && d.confidence <= 1.0, "confidence", image,
          where + " must lie in [0, 1]");
    if (feature_dim != 0) {
      check(d.feature.size() == feature_dim, "feature", image,
            where + " has length " + std::to_string(d.feature.size()));
    }
  }
  for (const auto& r : image.relationships) {
    check(r.sub_idx < image.detections.size(), "sub_idx", image,
          "references a missing object");
    check(r.obj_idx < image.detections.size(), "obj_idx", image,
          "references a missing object");
    check(r.predicate_id < vocab.predicates.size(), "pred_id", image,
          "is outside the predicate vocabulary");
  }
}

}  // namespace vrebert
