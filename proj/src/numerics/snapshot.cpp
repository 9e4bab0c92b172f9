#include "vrebert/numerics/snapshot.hpp"

#include <fstream>
#include <sstream>

#include "vrebert/errors.hpp"
#include "vrebert/numerics/binary_io.hpp"

namespace vrebert {

void write_parameters(std::ostream& out,
                      const std::vector<NamedTensor>& params) {
  out.write("VRW1", 4);
  binary::write_le<std::uint32_t>(out,
                                  static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    binary::write_string(out, name);
    binary::write_le<std::uint32_t>(out,
                                    static_cast<std::uint32_t>(tensor.rank()));
    for (auto extent : tensor.shape()) {
      binary::write_le<std::uint64_t>(out, extent);
    }
    for (double v : tensor.data()) binary::write_le<double>(out, v);
  }
}

std::vector<NamedTensor> read_parameters(std::istream& in) {
  binary::expect_magic(in, "VRW1", "parameter snapshot");
  const auto count = binary::read_le<std::uint32_t>(in, "parameter count");
  std::vector<NamedTensor> params;
  params.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor record;
    record.name = binary::read_string(in, "parameter name");
    const auto rank = binary::read_le<std::uint32_t>(in, "parameter rank");
    if (rank == 0 || rank > 8) {
      throw FormatError("parameter '" + record.name + "' has invalid rank " +
                        std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& extent : shape) {
      extent = binary::read_le<std::uint64_t>(in, "parameter extent");
      if (extent == 0 || extent > (1ull << 32)) {
        throw FormatError("parameter '" + record.name + "' has invalid extent");
      }
    }
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = binary::read_le<double>(in, record.name);
    record.tensor = Tensor::from(std::move(shape), std::move(values));
    params.push_back(std::move(record));
  }
  return params;
}

void write_file_atomically(const std::filesystem::path& path,
                           const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename onto " + path.string() + ": " + ec.message());
}

void save_parameters(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& params) {
  std::ostringstream out(std::ios::binary);
  write_parameters(out, params);
  write_file_atomically(path, out.str());
}

std::vector<NamedTensor> load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_parameters(in);
}

}  // namespace vrebert
