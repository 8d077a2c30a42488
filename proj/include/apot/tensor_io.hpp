#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace apot {

/// Raw tensor file: u32 magic "APOT" (0x41504F54), u32 element count, then
/// that many little-endian IEEE-754 binary32 values.
inline constexpr std::uint32_t kTensorMagic = 0x41504F54;

std::vector<double> read_tensor_f32(const std::string& path);
void write_tensor_f32(const std::string& path, std::span<const double> values);

}  // namespace apot
