#include "apot/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "apot/errors.hpp"

namespace apot {

namespace {

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw InputError("truncated tensor file '" + path + "'");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::vector<double> read_tensor_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file '" + path + "'");
  if (read_u32(in, path) != kTensorMagic) throw InputError("'" + path + "' is not a tensor file (bad magic)");
  const std::uint32_t count = read_u32(in, path);
  std::vector<float> raw(count);
  if (count > 0 && !in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(count) * 4)) {
    throw InputError("tensor file '" + path + "' shorter than its element count");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InputError("tensor file '" + path + "' has trailing bytes");
  }
  return {raw.begin(), raw.end()};
}

void write_tensor_f32(const std::string& path, std::span<const double> values) {
  if (values.size() > 0xFFFFFFFFu) throw InputError("tensor too large for the u32 count field");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write tensor file '" + path + "'");
  write_u32(out, kTensorMagic);
  write_u32(out, static_cast<std::uint32_t>(values.size()));
  for (double v : values) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace apot
