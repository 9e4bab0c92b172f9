#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "vrebert/data/records.hpp"

namespace vrebert {

inline constexpr const char* kToolVersion = "0.1.0";

// Runs one `vrebert` subcommand. args excludes the program name. Returns
// the process exit code: 0 success, 2 usage or configuration error, 1 any
// other failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

// Dataset directory layout written by `generate`.
struct DatasetFiles {
  static constexpr const char* kTrain = "train.jsonl";
  static constexpr const char* kTest = "test.jsonl";
  static constexpr const char* kCategories = "categories.json";
  static constexpr const char* kVocab = "vocab.txt";
  static constexpr const char* kTrainFeatures = "train.vrf";
  static constexpr const char* kTestFeatures = "test.vrf";
  static constexpr const char* kManifest = "manifest.json";
};

struct LoadedDataset {
  CategoryVocab categories;
  DatasetSplit split;
  std::size_t feature_dim = 0;  // 0 when no features were attached
};

// Reads a dataset directory; `features_dir`, when non-empty, supplies
// train.vrf / test.vrf to attach.
LoadedDataset load_dataset(const std::filesystem::path& data_dir,
                           const std::filesystem::path& features_dir);

}  // namespace vrebert
