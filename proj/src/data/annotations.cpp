#include "vrebert/data/annotations.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/snapshot.hpp"

namespace vrebert {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

template <typename T>
T field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) {
    throw FormatError("line " + std::to_string(line) + ": missing field '" +
                      key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError("line " + std::to_string(line) + ": field '" + key +
                      "': " + e.what());
  }
}

ImageRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) {
    throw FormatError("line " + std::to_string(line) +
                      ": expected a JSON object");
  }
  ImageRecord image;
  image.image_id = field<std::string>(j, "image_id", line);
  image.width = field<double>(j, "width", line);
  image.height = field<double>(j, "height", line);
  for (const auto& o : field<json>(j, "objects", line)) {
    Detection d;
    d.category_id = field<std::size_t>(o, "category_id", line);
    const auto bbox = field<std::vector<double>>(o, "bbox", line);
    if (bbox.size() != 4) {
      throw FormatError("line " + std::to_string(line) +
                        ": bbox must have 4 entries");
    }
    d.bbox = {bbox[0], bbox[1], bbox[2], bbox[3]};
    d.confidence = o.contains("confidence")
                       ? field<double>(o, "confidence", line)
                       : 1.0;
    image.detections.push_back(std::move(d));
  }
  for (const auto& r : field<json>(j, "relationships", line)) {
    image.relationships.push_back({field<std::size_t>(r, "sub_idx", line),
                                   field<std::size_t>(r, "pred_id", line),
                                   field<std::size_t>(r, "obj_idx", line)});
  }
  return image;
}

json record_to_json(const ImageRecord& image) {
  json objects = json::array();
  for (const auto& d : image.detections) {
    objects.push_back({{"category_id", d.category_id},
                       {"bbox",
                        {d.bbox.x_min, d.bbox.y_min, d.bbox.x_max,
                         d.bbox.y_max}},
                       {"confidence", d.confidence}});
  }
  json rels = json::array();
  for (const auto& r : image.relationships) {
    rels.push_back(
        {{"sub_idx", r.sub_idx}, {"pred_id", r.predicate_id}, {"obj_idx", r.obj_idx}});
  }
  return {{"image_id", image.image_id},
          {"width", image.width},
          {"height", image.height},
          {"objects", objects},
          {"relationships", rels}};
}

}  // namespace

std::vector<ImageRecord> parse_annotations(const std::string& text,
                                           const CategoryVocab& vocab) {
  std::vector<ImageRecord> images;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("line " + std::to_string(line_no) + ", byte " +
                        std::to_string(e.byte) + ": " + e.what());
    }
    ImageRecord image = record_from_json(j, line_no);
    try {
      validate_record(image, vocab);
    } catch (const ValidationError& e) {
      throw ValidationError(e.field(), "record " +
                                           std::to_string(images.size()) +
                                           ": " + e.what());
    }
    images.push_back(std::move(image));
  }
  return images;
}

std::vector<ImageRecord> load_annotations(const std::filesystem::path& path,
                                          const CategoryVocab& vocab) {
  return parse_annotations(read_text(path), vocab);
}

std::string format_annotations(const std::vector<ImageRecord>& images) {
  std::string out;
  for (const auto& image : images) {
    out += record_to_json(image).dump();
    out += '\n';
  }
  return out;
}

void save_annotations(const std::filesystem::path& path,
                      const std::vector<ImageRecord>& images) {
  write_file_atomically(path, format_annotations(images));
}

CategoryVocab load_category_vocab(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ", byte " + std::to_string(e.byte) +
                      ": " + e.what());
  }
  CategoryVocab vocab;
  try {
    vocab.objects = j.at("objects").get<std::vector<std::string>>();
    vocab.predicates = j.at("predicates").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return vocab;
}

void save_category_vocab(const std::filesystem::path& path,
                         const CategoryVocab& vocab) {
  json j = {{"objects", vocab.objects}, {"predicates", vocab.predicates}};
  write_file_atomically(path, j.dump(2) + "\n");
}

VrdImport convert_vrd(
    const std::filesystem::path& annotations_json,
    const std::filesystem::path& objects_json,
    const std::filesystem::path& predicates_json,
    const std::map<std::string, std::pair<double, double>>& image_sizes) {
  VrdImport result;
  try {
    result.vocab.objects =
        json::parse(read_text(objects_json)).get<std::vector<std::string>>();
    result.vocab.predicates = json::parse(read_text(predicates_json))
                                  .get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("VRD vocabulary: ") + e.what());
  }
  json root;
  try {
    root = json::parse(read_text(annotations_json));
  } catch (const json::parse_error& e) {
    throw FormatError(annotations_json.string() + ", byte " +
                      std::to_string(e.byte) + ": " + e.what());
  }
  if (!root.is_object()) {
    throw FormatError("VRD annotations: expected an object keyed by image");
  }
  for (const auto& [image_id, rels] : root.items()) {
    ImageRecord image;
    image.image_id = image_id;
    auto intern = [&image](const json& o) -> std::size_t {
      const auto b = o.at("bbox").get<std::vector<double>>();
      if (b.size() != 4) throw FormatError("VRD bbox must have 4 entries");
      Detection d;
      d.category_id = o.at("category").get<std::size_t>();
      d.bbox = {b[2], b[0], b[3], b[1]};  // [ymin, ymax, xmin, xmax]
      for (std::size_t i = 0; i < image.detections.size(); ++i) {
        const auto& e = image.detections[i];
        if (e.category_id == d.category_id && e.bbox == d.bbox) return i;
      }
      image.detections.push_back(std::move(d));
      return image.detections.size() - 1;
    };
    try {
      for (const auto& r : rels) {
        const auto sub = intern(r.at("subject"));
        const auto obj = intern(r.at("object"));
        image.relationships.push_back(
            {sub, r.at("predicate").get<std::size_t>(), obj});
      }
    } catch (const json::exception& e) {
      throw FormatError("VRD image '" + image_id + "': " + e.what());
    }
    if (auto it = image_sizes.find(image_id); it != image_sizes.end()) {
      image.width = it->second.first;
      image.height = it->second.second;
    } else {
      image.width = 1.0;
      image.height = 1.0;
      for (const auto& d : image.detections) {
        image.width = std::max(image.width, d.bbox.x_max);
        image.height = std::max(image.height, d.bbox.y_max);
      }
    }
    validate_record(image, result.vocab);
    result.images.push_back(std::move(image));
  }
  return result;
}

}  // namespace vrebert
