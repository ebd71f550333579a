#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "latentwarp/grid.hpp"

namespace latentwarp {

/// Rounds every value to the nearest multiple of 1/255 after clamping to [0, 1].
Image quantize_8bit(const Image& image);

/// 8-bit RGB PNG. Values are clamped to [0, 1] and rounded.
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

std::string base64_encode(const std::uint8_t* data, std::size_t size);
inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return base64_encode(bytes.data(), bytes.size());
}
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian float32 packing of a grid in channel-major order.
std::vector<std::uint8_t> pack_float32(const Grid& grid);
Grid unpack_float32(const std::vector<std::uint8_t>& bytes, Shape shape);

/// Writes `<stem>.f32` (raw little-endian float32, CHW) and `<stem>.json`
/// describing shape, dtype, byte order and channel order.
void write_latent_dump(const std::filesystem::path& stem, const Grid& latent);
Grid read_latent_dump(const std::filesystem::path& stem);

}  // namespace latentwarp
