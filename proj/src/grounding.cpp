#include "vlclip/grounding.hpp"

#include <algorithm>
#include <cmath>

namespace vlclip {

std::vector<BoundingBoxProposal> normalize_scores(std::vector<BoundingBoxProposal> proposals,
                                                  const GroundingConfig& config) {
  if (proposals.empty()) raise(errc::empty_proposal_set, "no proposals to normalize");
  if (config.tau_dino <= 0.0) raise(errc::invalid_argument, "tau_dino must be positive");

  double max_logit = -std::numeric_limits<double>::infinity();
  for (const auto& p : proposals) {
    if (!std::isfinite(p.affinity)) {
      raise(errc::non_finite_affinity, "proposal affinity is not finite");
    }
    max_logit = std::max(max_logit, p.affinity / config.tau_dino);
  }

  double denom = 0.0;
  for (const auto& p : proposals) {
    denom += std::exp(p.affinity / config.tau_dino - max_logit);
  }
  for (auto& p : proposals) {
    p.score = std::exp(p.affinity / config.tau_dino - max_logit) / denom;
  }
  return proposals;
}

RegionDecision select_region(const std::vector<BoundingBoxProposal>& proposals,
                             const GroundingConfig& config) {
  RegionDecision decision;
  if (proposals.empty()) return decision;  // full image, no score

  auto scored = normalize_scores(proposals, config);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scored.size(); ++i) {
    if (*scored[i].score > *scored[best].score) best = i;  // strict: ties keep lowest index
  }
  decision.winning_score = *scored[best].score;
  if (*decision.winning_score >= config.tau_thresh) {
    decision.kind = RegionDecision::Kind::kCrop;
    decision.box = scored[best];
  }
  return decision;
}

Raster crop_image(const Raster& image, const BoundingBoxProposal& box) {
  if (!box.geometry_valid()) raise(errc::invalid_argument, "box geometry invalid");
  if (image.empty()) raise(errc::empty_image, "cannot crop empty raster");

  auto round_px = [](double v) { return static_cast<std::int64_t>(std::llround(v)); };
  std::int64_t x0 = round_px(box.x * image.width);
  std::int64_t y0 = round_px(box.y * image.height);
  if (x0 >= image.width || y0 >= image.height) {
    raise(errc::degenerate_box, "source rectangle falls outside the raster");
  }
  // Nearest-pixel dimensions with a 1x1 floor, clamped to stay in bounds.
  std::int64_t w = std::max<std::int64_t>(1, round_px(box.w * image.width));
  std::int64_t h = std::max<std::int64_t>(1, round_px(box.h * image.height));
  w = std::min<std::int64_t>(w, image.width - x0);
  h = std::min<std::int64_t>(h, image.height - y0);

  Raster out;
  out.width = static_cast<std::uint32_t>(w);
  out.height = static_cast<std::uint32_t>(h);
  out.channels = image.channels;
  out.pixels.resize(static_cast<std::size_t>(w) * h * image.channels);

  std::size_t row_bytes = static_cast<std::size_t>(w) * image.channels;
  for (std::int64_t row = 0; row < h; ++row) {
    const std::uint8_t* src = image.pixels.data() +
        ((static_cast<std::size_t>(y0 + row) * image.width + x0) * image.channels);
    std::copy(src, src + row_bytes,
              out.pixels.data() + static_cast<std::size_t>(row) * row_bytes);
  }
  return out;
}

}  // namespace vlclip
