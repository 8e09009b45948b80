#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlclip/common.hpp"

namespace vlclip {

/// Decoded 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Raster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<std::uint8_t> pixels;

  bool empty() const noexcept { return width == 0 || height == 0; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * height;
  }
  std::uint8_t at(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Raster&) const = default;
};

/// Reads a binary PPM (P6) or PGM (P5) file.
Raster load_ppm(const std::string& path);
void save_ppm(const Raster& raster, const std::string& path);

/// Canonical byte serialization of a raster (dims + channels + pixels).
/// The deterministic encoder hashes exactly these bytes.
std::vector<std::uint8_t> raster_bytes(const Raster& raster);

// ---------------------------------------------------------------------------
// Payload-stamped rasters. Synthetic corpora generated by the tooling carry a
// text payload in the leading pixel bytes; the deterministic test encoder
// recognizes it and embeds the payload text instead of the pixels, which
// gives mock backends a usable image<->text alignment signal.
// ---------------------------------------------------------------------------

/// Builds a width x height RGB raster whose leading bytes encode `payload`
/// and whose remaining pixels are deterministic noise derived from `seed`.
Raster make_payload_raster(const std::string& payload, std::uint32_t width,
                           std::uint32_t height, std::uint64_t seed);

/// Extracts the payload text if the raster was produced by
/// make_payload_raster and the stamp survived intact.
std::optional<std::string> extract_payload(const Raster& raster);

}  // namespace vlclip
