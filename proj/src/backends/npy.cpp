#include "salad/backends/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <string>

#include "salad/core/error.hpp"

namespace salad::backends {

NpyArray read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw IoError("not an .npy file: " + path.string());
  unsigned char ver[2];
  in.read(reinterpret_cast<char*>(ver), 2);
  std::uint32_t hlen = 0;
  if (ver[0] == 1) {
    std::uint16_t h16 = 0;
    in.read(reinterpret_cast<char*>(&h16), 2);
    hlen = h16;
  } else {
    in.read(reinterpret_cast<char*>(&hlen), 4);
  }
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw IoError("truncated .npy header: " + path.string());
  if (header.find("'<f4'") == std::string::npos) {
    throw IoError("only little-endian float32 .npy is supported: " + path.string());
  }
  if (header.find("'fortran_order': True") != std::string::npos) {
    throw IoError("fortran-ordered .npy is not supported: " + path.string());
  }
  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('shape':\s*\(([^)]*)\))"))) {
    throw IoError("no shape in .npy header: " + path.string());
  }
  NpyArray out;
  const std::string dims = m[1];
  std::size_t total = 1;
  const std::regex number(R"(\d+)");
  for (std::sregex_iterator it(dims.begin(), dims.end(), number), end; it != end; ++it) {
    out.shape.push_back(std::stoull(it->str()));
    total *= out.shape.back();
  }
  out.data.resize(total);
  in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(total * sizeof(float)));
  if (!in) throw IoError("truncated .npy payload: " + path.string());
  return out;
}

void write_npy(const std::filesystem::path& path, const NpyArray& array) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::string shape;
  for (std::size_t i = 0; i < array.shape.size(); ++i) {
    shape += std::to_string(array.shape[i]);
    if (array.shape.size() == 1 || i + 1 < array.shape.size()) shape += ",";
  }
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + shape + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto hlen = static_cast<std::uint16_t>(header.size());
  out.write(reinterpret_cast<const char*>(&hlen), 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(array.data.data()),
            static_cast<std::streamsize>(array.data.size() * sizeof(float)));
}

}  // namespace salad::backends
