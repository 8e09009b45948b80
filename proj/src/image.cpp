#include "vlclip/image.hpp"

#include <cstring>
#include <fstream>

namespace vlclip {

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
bool next_header_token(std::istream& in, std::string& token) {
  token.clear();
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) break;
  }
  if (c == EOF) return false;
  token.push_back(static_cast<char>(c));
  while ((c = in.get()) != EOF && !std::isspace(c)) token.push_back(static_cast<char>(c));
  return true;
}

}  // namespace

Raster load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::image_unreadable, "cannot open " + path);

  std::string magic;
  if (!next_header_token(in, magic) || (magic != "P6" && magic != "P5")) {
    raise(errc::image_unreadable, path + ": not a P5/P6 netpbm file");
  }
  std::string ws, hs, maxs;
  if (!next_header_token(in, ws) || !next_header_token(in, hs) ||
      !next_header_token(in, maxs)) {
    raise(errc::image_unreadable, path + ": truncated header");
  }

  Raster raster;
  try {
    raster.width = static_cast<std::uint32_t>(std::stoul(ws));
    raster.height = static_cast<std::uint32_t>(std::stoul(hs));
    if (std::stoul(maxs) != 255) raise(errc::image_unreadable, path + ": maxval must be 255");
  } catch (const std::logic_error&) {
    raise(errc::image_unreadable, path + ": bad header field");
  }
  raster.channels = magic == "P6" ? 3 : 1;
  if (raster.empty()) raise(errc::image_unreadable, path + ": zero dimensions");

  std::size_t n = raster.pixel_count() * raster.channels;
  raster.pixels.resize(n);
  in.read(reinterpret_cast<char*>(raster.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    raise(errc::image_unreadable, path + ": truncated pixel data");
  }
  return raster;
}

void save_ppm(const Raster& raster, const std::string& path) {
  if (raster.empty() || (raster.channels != 1 && raster.channels != 3)) {
    raise(errc::invalid_argument, "raster not writable as netpbm");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::io_error, "cannot write " + path);
  out << (raster.channels == 3 ? "P6" : "P5") << "\n"
      << raster.width << " " << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.pixels.data()),
            static_cast<std::streamsize>(raster.pixels.size()));
}

std::vector<std::uint8_t> raster_bytes(const Raster& raster) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + raster.pixels.size());
  auto push_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  push_u32(raster.width);
  push_u32(raster.height);
  push_u32(raster.channels);
  bytes.insert(bytes.end(), raster.pixels.begin(), raster.pixels.end());
  return bytes;
}

static constexpr char kPayloadMagic[] = "VLPAY1";
static constexpr std::size_t kPayloadMagicLen = 6;

Raster make_payload_raster(const std::string& payload, std::uint32_t width,
                           std::uint32_t height, std::uint64_t seed) {
  Raster raster;
  raster.width = width;
  raster.height = height;
  raster.channels = 3;
  raster.pixels.resize(raster.pixel_count() * 3);

  std::size_t header = kPayloadMagicLen + 4 + payload.size();
  if (header > raster.pixels.size()) {
    raise(errc::invalid_argument, "raster too small for payload");
  }

  // Smooth structured background so perceptual hashes are stable per seed.
  for (std::uint32_t y = 0; y < height; ++y) {
    for (std::uint32_t x = 0; x < width; ++x) {
      std::uint64_t cell = splitmix64(seed ^ ((y / 8) * 131ull + (x / 8)));
      std::size_t off = (static_cast<std::size_t>(y) * width + x) * 3;
      raster.pixels[off + 0] = static_cast<std::uint8_t>(cell & 0xFF);
      raster.pixels[off + 1] = static_cast<std::uint8_t>((cell >> 8) & 0xFF);
      raster.pixels[off + 2] = static_cast<std::uint8_t>((cell >> 16) & 0xFF);
    }
  }

  std::memcpy(raster.pixels.data(), kPayloadMagic, kPayloadMagicLen);
  std::uint32_t len = static_cast<std::uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) {
    raster.pixels[kPayloadMagicLen + i] = static_cast<std::uint8_t>(len >> (8 * i));
  }
  std::memcpy(raster.pixels.data() + kPayloadMagicLen + 4, payload.data(), payload.size());
  return raster;
}

std::optional<std::string> extract_payload(const Raster& raster) {
  if (raster.channels != 3 || raster.pixels.size() < kPayloadMagicLen + 4) {
    return std::nullopt;
  }
  if (std::memcmp(raster.pixels.data(), kPayloadMagic, kPayloadMagicLen) != 0) {
    return std::nullopt;
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) {
    len |= static_cast<std::uint32_t>(raster.pixels[kPayloadMagicLen + i]) << (8 * i);
  }
  if (kPayloadMagicLen + 4 + len > raster.pixels.size()) return std::nullopt;
  return std::string(reinterpret_cast<const char*>(raster.pixels.data()) + kPayloadMagicLen + 4,
                     len);
}

}  // namespace vlclip
