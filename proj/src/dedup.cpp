#include "vlclip/dedup.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include <json.hpp>

namespace vlclip {

namespace {

constexpr int kResize = 32;
constexpr int kBlock = 8;

std::vector<double> to_luma(const Raster& image) {
  std::vector<double> gray(image.pixel_count());
  if (image.channels == 1) {
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = image.pixels[i];
    return gray;
  }
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const std::uint8_t* p = &image.pixels[i * image.channels];
    double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    gray[i] = std::floor(y + 0.5);
  }
  return gray;
}

// Area-average downscale to kResize x kResize with exact fractional coverage.
std::array<double, kResize * kResize> resize_area(const std::vector<double>& gray,
                                                  std::uint32_t w, std::uint32_t h) {
  std::array<double, kResize * kResize> out{};
  for (int ty = 0; ty < kResize; ++ty) {
    double y0 = static_cast<double>(ty) * h / kResize;
    double y1 = static_cast<double>(ty + 1) * h / kResize;
    for (int tx = 0; tx < kResize; ++tx) {
      double x0 = static_cast<double>(tx) * w / kResize;
      double x1 = static_cast<double>(tx + 1) * w / kResize;
      double acc = 0.0;
      for (std::uint32_t sy = static_cast<std::uint32_t>(y0); sy < y1 && sy < h; ++sy) {
        double wy = std::min<double>(y1, sy + 1) - std::max<double>(y0, sy);
        if (wy <= 0.0) continue;
        for (std::uint32_t sx = static_cast<std::uint32_t>(x0); sx < x1 && sx < w; ++sx) {
          double wx = std::min<double>(x1, sx + 1) - std::max<double>(x0, sx);
          if (wx <= 0.0) continue;
          acc += wx * wy * gray[static_cast<std::size_t>(sy) * w + sx];
        }
      }
      out[static_cast<std::size_t>(ty) * kResize + tx] = acc / ((x1 - x0) * (y1 - y0));
    }
  }
  return out;
}

// Orthonormal 2-D DCT-II, top-left kBlock x kBlock coefficients only.
std::array<double, kBlock * kBlock> dct_block(const std::array<double, kResize * kResize>& g) {
  static const auto cos_table = [] {
    std::array<double, kBlock * kResize> table{};
    for (int u = 0; u < kBlock; ++u) {
      for (int m = 0; m < kResize; ++m) {
        table[u * kResize + m] =
            std::cos(std::numbers::pi * (2.0 * m + 1.0) * u / (2.0 * kResize));
      }
    }
    return table;
  }();

  // rows first: tmp[u][n] = sum_m g[m][n] * cos(u, m)
  std::array<double, kBlock * kResize> tmp{};
  for (int u = 0; u < kBlock; ++u) {
    for (int n = 0; n < kResize; ++n) {
      double acc = 0.0;
      for (int m = 0; m < kResize; ++m) {
        acc += g[static_cast<std::size_t>(m) * kResize + n] * cos_table[u * kResize + m];
      }
      tmp[static_cast<std::size_t>(u) * kResize + n] = acc;
    }
  }

  const double a0 = std::sqrt(1.0 / kResize);
  const double a1 = std::sqrt(2.0 / kResize);
  std::array<double, kBlock * kBlock> out{};
  for (int u = 0; u < kBlock; ++u) {
    for (int v = 0; v < kBlock; ++v) {
      double acc = 0.0;
      for (int n = 0; n < kResize; ++n) {
        acc += tmp[static_cast<std::size_t>(u) * kResize + n] * cos_table[v * kResize + n];
      }
      out[static_cast<std::size_t>(u) * kBlock + v] =
          (u == 0 ? a0 : a1) * (v == 0 ? a0 : a1) * acc;
    }
  }
  return out;
}

}  // namespace

Hash64 phash64(const Raster& image) {
  if (image.empty()) raise(errc::empty_image, "cannot hash empty image");
  if (image.channels != 1 && image.channels != 3) {
    raise(errc::invalid_argument, "phash expects 1 or 3 channels");
  }

  auto gray = to_luma(image);
  auto small = resize_area(gray, image.width, image.height);
  auto coeffs = dct_block(small);

  // Coefficients that are zero in exact arithmetic come out as ~1e-13
  // rounding residue; snap them so the median and the strict comparison see
  // true zeros. Luma-scale signals put meaningful coefficients far above this.
  for (double& c : coeffs) {
    if (std::abs(c) < 1e-6) c = 0.0;
  }

  std::array<double, kBlock * kBlock - 1> ac{};
  std::copy(coeffs.begin() + 1, coeffs.end(), ac.begin());
  std::nth_element(ac.begin(), ac.begin() + 31, ac.end());
  double median = ac[31];  // 32nd order statistic of 63 values

  std::uint64_t bits = 0;
  for (int r = 0; r < kBlock; ++r) {
    for (int c = 0; c < kBlock; ++c) {
      if (coeffs[static_cast<std::size_t>(r) * kBlock + c] > median) {
        bits |= 1ULL << (63 - (r * kBlock + c));
      }
    }
  }
  return Hash64{bits};
}

int hamming(Hash64 a, Hash64 b) { return std::popcount(a.bits ^ b.bits); }

std::vector<Hash64> phash_batch(const std::vector<Raster>& images) {
  // Validate up front; exceptions may not cross the parallel region.
  for (const auto& image : images) {
    if (image.empty()) raise(errc::empty_image, "cannot hash empty image");
    if (image.channels != 1 && image.channels != 3) {
      raise(errc::invalid_argument, "phash expects 1 or 3 channels");
    }
  }
  std::vector<Hash64> hashes(images.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(images.size()); ++i) {
    hashes[static_cast<std::size_t>(i)] = phash64(images[static_cast<std::size_t>(i)]);
  }
  return hashes;
}

namespace {

// Candidate index over the four 16-bit words of each kept hash. Any hash
// within Hamming <= 3 shares at least one word with the probe.
class BandIndex {
 public:
  void add(Hash64 h, std::uint32_t id) {
    for (int band = 0; band < 4; ++band) {
      buckets_[band][word(h, band)].push_back(id);
    }
  }

  template <typename Fn>
  void for_candidates(Hash64 h, Fn&& fn) const {
    for (int band = 0; band < 4; ++band) {
      auto it = buckets_[band].find(word(h, band));
      if (it == buckets_[band].end()) continue;
      for (std::uint32_t id : it->second) fn(id);
    }
  }

 private:
  static std::uint16_t word(Hash64 h, int band) {
    return static_cast<std::uint16_t>(h.bits >> (16 * band));
  }
  std::array<std::unordered_map<std::uint16_t, std::vector<std::uint32_t>>, 4> buckets_;
};

constexpr std::size_t kLinearScanLimit = 100000;

}  // namespace

DedupReport dedup(const std::vector<std::pair<std::string, Hash64>>& items, int threshold) {
  if (threshold < 0 || threshold > 64) {
    raise(errc::invalid_argument, "threshold must be in [0, 64]");
  }

  DedupReport report;
  report.threshold_used = threshold;

  const bool use_bands = items.size() > kLinearScanLimit;
  BandIndex bands;
  std::vector<Hash64> kept_hashes;
  std::vector<std::uint32_t> kept_item;  // index into items, for canonical ids

  for (std::size_t idx = 0; idx < items.size(); ++idx) {
    const auto& [id, hash] = items[idx];
    std::int64_t canonical = -1;
    if (use_bands) {
      std::uint32_t best = UINT32_MAX;
      bands.for_candidates(hash, [&](std::uint32_t kept_idx) {
        if (kept_idx < best && hamming(kept_hashes[kept_idx], hash) <= threshold) {
          best = kept_idx;
        }
      });
      if (best != UINT32_MAX) canonical = best;
    } else {
      for (std::size_t k = 0; k < kept_hashes.size(); ++k) {
        if (hamming(kept_hashes[k], hash) <= threshold) {
          canonical = static_cast<std::int64_t>(k);
          break;
        }
      }
    }

    if (canonical >= 0) {
      report.duplicate_map[id] = items[kept_item[static_cast<std::size_t>(canonical)]].first;
    } else {
      std::uint32_t kept_idx = static_cast<std::uint32_t>(kept_hashes.size());
      if (use_bands) bands.add(hash, kept_idx);
      kept_hashes.push_back(hash);
      kept_item.push_back(static_cast<std::uint32_t>(idx));
      report.unique_ids.push_back(id);
    }
  }
  return report;
}

std::string DedupReport::to_json() const {
  nlohmann::json j;
  j["unique_ids"] = unique_ids;
  j["duplicate_map"] = duplicate_map;
  j["threshold_used"] = threshold_used;
  return j.dump(2);
}

}  // namespace vlclip
