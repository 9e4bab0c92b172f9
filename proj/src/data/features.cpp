#include "vrebert/data/features.hpp"

#include <fstream>
#include <sstream>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/binary_io.hpp"
#include "vrebert/numerics/snapshot.hpp"

namespace vrebert {

FeatureMap parse_features(const std::string& bytes, std::size_t expected_dim) {
  std::istringstream in(bytes, std::ios::binary);
  binary::expect_magic(in, "VRF1", "feature file");
  const auto dim = binary::read_le<std::uint32_t>(in, "feature dim");
  if (dim != expected_dim) {
    throw ConfigError("feature file declares dim " + std::to_string(dim) +
                      " but " + std::to_string(expected_dim) +
                      " was expected");
  }
  FeatureMap features;
  while (in.peek() != std::char_traits<char>::eof()) {
    std::string id = binary::read_string(in, "image id");
    const auto count = binary::read_le<std::uint32_t>(in, "detection count");
    std::vector<std::vector<float>> vectors(count, std::vector<float>(dim));
    for (auto& v : vectors) {
      for (auto& x : v) x = binary::read_le<float>(in, "feature payload of " + id);
    }
    if (!features.emplace(id, std::move(vectors)).second) {
      throw FormatError("feature file repeats image id '" + id + "'");
    }
  }
  return features;
}

std::size_t feature_file_dim(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  binary::expect_magic(in, "VRF1", "feature file");
  return binary::read_le<std::uint32_t>(in, "feature dim");
}

FeatureMap load_features(const std::filesystem::path& path,
                         std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_features(buf.str(), expected_dim);
}

std::string format_features(const std::vector<ImageRecord>& images,
                            std::size_t dim) {
  std::ostringstream out(std::ios::binary);
  out.write("VRF1", 4);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  for (const auto& image : images) {
    binary::write_string(out, image.image_id);
    binary::write_le<std::uint32_t>(
        out, static_cast<std::uint32_t>(image.detections.size()));
    for (const auto& d : image.detections) {
      if (d.feature.size() != dim) {
        throw DimensionError("image '" + image.image_id + "' has a feature of length " +
                             std::to_string(d.feature.size()) + ", expected " +
                             std::to_string(dim));
      }
      for (float x : d.feature) binary::write_le<float>(out, x);
    }
  }
  return out.str();
}

void save_features(const std::filesystem::path& path,
                   const std::vector<ImageRecord>& images, std::size_t dim) {
  write_file_atomically(path, format_features(images, dim));
}

void attach_features(std::vector<ImageRecord>& images,
                     const FeatureMap& features) {
  for (auto& image : images) {
    auto it = features.find(image.image_id);
    if (it == features.end()) {
      throw ConfigError("no features for image '" + image.image_id + "'");
    }
    if (it->second.size() != image.detections.size()) {
      throw ConfigError("image '" + image.image_id + "' has " +
                        std::to_string(image.detections.size()) +
                        " detections but " +
                        std::to_string(it->second.size()) + " feature vectors");
    }
    for (std::size_t i = 0; i < image.detections.size(); ++i) {
      image.detections[i].feature = it->second[i];
    }
  }
}

bool has_features(const std::vector<ImageRecord>& images, std::size_t dim) {
  for (const auto& image : images) {
    for (const auto& d : image.detections) {
      if (d.feature.size() != dim) return false;
    }
  }
  return true;
}

}  // namespace vrebert
