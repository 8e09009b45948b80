#pragma once

#include <optional>
#include <vector>

#include "vlclip/image.hpp"
#include "vlclip/types.hpp"

namespace vlclip {

struct GroundingConfig {
  double tau_dino = 1.0;     // softmax temperature, > 0
  double tau_thresh = 0.35;  // confidence threshold in [0, 1]
};

/// Outcome of region selection: either a crop around the winning proposal or
/// the full image when nothing clears the threshold (or nothing was proposed).
struct RegionDecision {
  enum class Kind { kCrop, kFullImage };

  Kind kind = Kind::kFullImage;
  std::optional<BoundingBoxProposal> box;      // present iff kCrop
  std::optional<double> winning_score;         // present iff proposals non-empty

  bool is_crop() const noexcept { return kind == Kind::kCrop; }
};

/// Softmax over affinities at temperature tau_dino, max-subtracted for
/// overflow safety. Returns the proposals in input order with `score` filled;
/// scores sum to 1 within 1e-6.
std::vector<BoundingBoxProposal> normalize_scores(std::vector<BoundingBoxProposal> proposals,
                                                  const GroundingConfig& config);

/// Normalizes, takes the argmax (ties to the lowest index), and crops only if
/// the winning score clears tau_thresh. An empty proposal set keeps the full
/// image.
RegionDecision select_region(const std::vector<BoundingBoxProposal>& proposals,
                             const GroundingConfig& config);

/// Extracts the pixel rectangle named by a normalized box. Output dimensions
/// round to the nearest pixel with a 1x1 floor.
Raster crop_image(const Raster& image, const BoundingBoxProposal& box);

}  // namespace vlclip
