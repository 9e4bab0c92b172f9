#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vrebert/data/records.hpp"

namespace vrebert {

using FeatureMap = std::map<std::string, std::vector<std::vector<float>>>;

// "VRF1" feature file: magic, u32 feature dim, then per image until EOF:
// u32 id length + id bytes, u32 count, count x dim little-endian f32.
// Throws ConfigError when the declared dim differs from expected_dim and
// FormatError on bad magic or truncation.
FeatureMap load_features(const std::filesystem::path& path,
                         std::size_t expected_dim);
FeatureMap parse_features(const std::string& bytes, std::size_t expected_dim);

// Serializes the detections' features in record order.
std::string format_features(const std::vector<ImageRecord>& images,
                            std::size_t dim);
void save_features(const std::filesystem::path& path,
                   const std::vector<ImageRecord>& images, std::size_t dim);

// Copies vectors onto detections, order-aligned. Throws ConfigError when an
// image is missing or its count differs from its detection count.
void attach_features(std::vector<ImageRecord>& images,
                     const FeatureMap& features);

// Dimension declared in a feature file header.
std::size_t feature_file_dim(const std::filesystem::path& path);

bool has_features(const std::vector<ImageRecord>& images, std::size_t dim);

}  // namespace vrebert
