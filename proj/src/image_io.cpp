#include "safeedit/image_io.hpp"

#include <cctype>
#include <cstring>
#include <string>

namespace safeedit {

std::vector<std::uint8_t> encode_ppm(int width, int height,
                                     std::span<const std::uint8_t> rgb) {
  std::string header = "P6\n" + std::to_string(width) + " " +
                       std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

namespace {

std::optional<ImageSize> probe_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9 || bytes[0] != 'P' || bytes[1] != '6') return std::nullopt;
  std::size_t pos = 2;
  auto skip_ws = [&] {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
  };
  auto read_int = [&]() -> std::optional<int> {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) return std::nullopt;
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 24) return std::nullopt;
      ++pos;
    }
    return static_cast<int>(v);
  };
  auto w = read_int();
  auto h = read_int();
  if (!w || !h || *w <= 0 || *h <= 0) return std::nullopt;
  return ImageSize{*w, *h};
}

std::optional<ImageSize> probe_png(std::span<const std::uint8_t> bytes) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() < 24 || std::memcmp(bytes.data(), sig, 8) != 0) return std::nullopt;
  // IHDR is the first chunk; width/height are big-endian at offsets 16/20.
  auto be32 = [&](std::size_t off) {
    return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
           (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
  };
  if (std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) return std::nullopt;
  std::uint32_t w = be32(16), h = be32(20);
  if (w == 0 || h == 0 || w > (1u << 24) || h > (1u << 24)) return std::nullopt;
  return ImageSize{static_cast<int>(w), static_cast<int>(h)};
}

} // namespace

std::optional<ImageSize> probe_image_size(std::span<const std::uint8_t> bytes) {
  if (auto s = probe_ppm(bytes)) return s;
  if (auto s = probe_png(bytes)) return s;
  return std::nullopt;
}

} // namespace safeedit
