#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vlclip/image.hpp"
#include "vlclip/types.hpp"

namespace vlclip {

/// 64-bit DCT perceptual hash. Bit-exact pipeline:
///   1. BT.601 luma (0.299 R + 0.587 G + 0.114 B), rounded to nearest int
///   2. area-average resize to 32x32 (exact fractional pixel coverage)
///   3. orthonormal 2-D DCT-II, top-left 8x8 block kept
///   4. median of the 63 coefficients excluding the DC term
///   5. bit(r,c) = 1 iff coeff(r,c) > median, DC included in the grid
///   6. packed row-major with bit 63 = (0,0)
Hash64 phash64(const Raster& image);

/// Hamming distance: popcount of xor, in [0, 64].
int hamming(Hash64 a, Hash64 b);

/// Hashes a batch in parallel; output order matches input order.
std::vector<Hash64> phash_batch(const std::vector<Raster>& images);

struct DedupReport {
  std::vector<std::string> unique_ids;               // kept, in first-seen order
  std::map<std::string, std::string> duplicate_map;  // duplicate -> canonical
  int threshold_used = 0;

  std::string to_json() const;
};

/// First-seen scan: an item is a duplicate iff some earlier-kept item's hash
/// is within `threshold` Hamming bits; the canonical is the first such kept
/// item. Input order defines the outcome.
///
/// Lookup is a linear scan over kept hashes up to 10^5 items; beyond that a
/// banded index over the four 16-bit words narrows candidates (exact for
/// thresholds <= 3 by pigeonhole, a close approximation at 4).
DedupReport dedup(const std::vector<std::pair<std::string, Hash64>>& items, int threshold);

}  // namespace vlclip
