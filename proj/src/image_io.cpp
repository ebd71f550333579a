#include "latentwarp/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include "json.hpp"
#include <stdexcept>

namespace latentwarp {

namespace {

std::uint8_t to_byte(double v) {
  if (!std::isfinite(v)) return 0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int base64_value(char ch) {
  if (ch >= 'A' && ch <= 'Z') return ch - 'A';
  if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
  if (ch >= '0' && ch <= '9') return ch - '0' + 52;
  if (ch == '+') return 62;
  if (ch == '/') return 63;
  return -1;
}

}  // namespace

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (double& v : out.data()) v = to_byte(v) / 255.0;
  return out;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.channels() != 3 || image.height() < 1 || image.width() < 1) {
    throw std::invalid_argument("encode_png: expected a non-empty RGB image, got " +
                                image.shape().to_string());
  }
  const int w = image.width(), h = image.height();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image(c, y, x));

  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("encode_png: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("encode_png: ") + img.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw std::invalid_argument(std::string("decode_png: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::invalid_argument(std::string("decode_png: ") + img.message);
  }
  const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  Image out(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out(c, y, x) = pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file_bytes(path, encode_png(image));
}

Image read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  for (std::size_t i = 0; i < size; i += 3) {
    const std::uint32_t b0 = data[i];
    const std::uint32_t b1 = i + 1 < size ? data[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < size ? data[i + 2] : 0;
    const std::uint32_t n = (b0 << 16) | (b1 << 8) | b2;
    out.push_back(kAlphabet[(n >> 18) & 63]);
    out.push_back(kAlphabet[(n >> 12) & 63]);
    out.push_back(i + 1 < size ? kAlphabet[(n >> 6) & 63] : '=');
    out.push_back(i + 2 < size ? kAlphabet[n & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t padding = 0;
  for (char ch : text) {
    if (ch == '\n' || ch == '\r' || ch == ' ') continue;
    if (ch == '=') {
      ++padding;
      continue;
    }
    const int v = base64_value(ch);
    if (v < 0 || padding > 0) throw std::invalid_argument("base64_decode: invalid input");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  if (padding > 2 || bits >= 6) throw std::invalid_argument("base64_decode: truncated input");
  return out;
}

std::vector<std::uint8_t> pack_float32(const Grid& grid) {
  std::vector<std::uint8_t> out(grid.size() * 4);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(grid.data()[i]));
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

Grid unpack_float32(const std::vector<std::uint8_t>& bytes, Shape shape) {
  if (bytes.size() != shape.size() * 4) {
    throw std::invalid_argument("unpack_float32: " + std::to_string(bytes.size()) +
                                " bytes do not match shape " + shape.to_string());
  }
  Grid g(shape);
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    g.data()[i] = std::bit_cast<float>(bits);
  }
  return g;
}

void write_latent_dump(const std::filesystem::path& stem, const Grid& latent) {
  auto raw = stem;
  raw += ".f32";
  write_file_bytes(raw, pack_float32(latent));
  nlohmann::json meta = {
      {"shape", {latent.channels(), latent.height(), latent.width()}},
      {"channel_order", "CHW"},
      {"dtype", "float32"},
      {"byte_order", "little"},
      {"data_file", raw.filename().string()},
  };
  auto side = stem;
  side += ".json";
  const std::string text = meta.dump(2) + "\n";
  write_file_bytes(side, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Grid read_latent_dump(const std::filesystem::path& stem) {
  auto side = stem;
  side += ".json";
  const auto text = read_file_bytes(side);
  const auto meta = nlohmann::json::parse(text.begin(), text.end());
  const auto& s = meta.at("shape");
  if (meta.at("dtype") != "float32" || meta.at("byte_order") != "little" || s.size() != 3) {
    throw std::invalid_argument("read_latent_dump: unsupported sidecar in '" + side.string() + "'");
  }
  auto raw = stem;
  raw += ".f32";
  return unpack_float32(read_file_bytes(raw), Shape{s[0].get<int>(), s[1].get<int>(), s[2].get<int>()});
}

}  // namespace latentwarp
