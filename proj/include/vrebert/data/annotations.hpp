#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vrebert/data/records.hpp"

namespace vrebert {

// Line-delimited JSON, one image per line:
//   {"image_id", "width", "height",
//    "objects": [{"category_id", "bbox": [x_min, y_min, x_max, y_max],
//                 "confidence"}],
//    "relationships": [{"sub_idx", "pred_id", "obj_idx"}]}
// Blank lines are skipped. Parse failures report the line number; invariant
// violations are rethrown as ValidationError prefixed with the record index.
std::vector<ImageRecord> load_annotations(const std::filesystem::path& path,
                                          const CategoryVocab& vocab);
std::vector<ImageRecord> parse_annotations(const std::string& text,
                                           const CategoryVocab& vocab);
std::string format_annotations(const std::vector<ImageRecord>& images);
void save_annotations(const std::filesystem::path& path,
                      const std::vector<ImageRecord>& images);

// Sidecar: {"objects": [...names...], "predicates": [...names...]}
CategoryVocab load_category_vocab(const std::filesystem::path& path);
void save_category_vocab(const std::filesystem::path& path,
                         const CategoryVocab& vocab);

// Converts the original VRD release (annotations_{train,test}.json plus
// objects.json / predicates.json name lists). VRD boxes are
// [ymin, ymax, xmin, xmax]; they are reordered to x-before-y here. Objects
// repeated across relationships are merged by (category, box). Image sizes
// come from `image_sizes` when present, otherwise from the box extents.
struct VrdImport {
  CategoryVocab vocab;
  std::vector<ImageRecord> images;
};
VrdImport convert_vrd(
    const std::filesystem::path& annotations_json,
    const std::filesystem::path& objects_json,
    const std::filesystem::path& predicates_json,
    const std::map<std::string, std::pair<double, double>>& image_sizes = {});

}  // namespace vrebert
