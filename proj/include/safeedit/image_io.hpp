#pragma once
// Minimal image byte handling: binary PPM (P6) encoding for the stub
// generator and header-level dimension probing for PPM and PNG. The store
// never decodes pixel data beyond this.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace safeedit {

struct ImageSize {
  int width = 0;
  int height = 0;
};

// Encodes interleaved RGB bytes (rgb.size() must be width*height*3) as a
// binary PPM.
std::vector<std::uint8_t> encode_ppm(int width, int height,
                                     std::span<const std::uint8_t> rgb);

// Reads width/height from a PPM (P6) or PNG header. nullopt when the bytes
// are neither.
std::optional<ImageSize> probe_image_size(std::span<const std::uint8_t> bytes);

} // namespace safeedit
