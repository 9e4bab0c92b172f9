#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vrebert/numerics/tensor.hpp"

namespace vrebert {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// "VRW1" parameter block:
//   magic "VRW1", u32 count, then per record
//   u32 name length, name bytes, u32 rank, rank x u64 extents,
//   numel x little-endian f64.
void write_parameters(std::ostream& out, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> read_parameters(std::istream& in);

void save_parameters(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_parameters(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomically(const std::filesystem::path& path,
                           const std::string& bytes);

}  // namespace vrebert
