#include <doctest.h>

#include <cmath>
#include <random>

#include "support/testutil.hpp"
#include "vlclip/grounding.hpp"

using namespace vlclip;

namespace {

BoundingBoxProposal box_with_affinity(double affinity) {
  BoundingBoxProposal p;
  p.x = 0.1;
  p.y = 0.1;
  p.w = 0.5;
  p.h = 0.5;
  p.affinity = affinity;
  return p;
}

}  // namespace

TEST_CASE("equal affinities normalize to a uniform distribution") {
  GroundingConfig config;
  config.tau_dino = 3.7;
  auto scored = normalize_scores({box_with_affinity(2.0), box_with_affinity(2.0)}, config);
  CHECK(*scored[0].score == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(*scored[1].score == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax of [ln 2, 0] at unit temperature is [2/3, 1/3]") {
  GroundingConfig config;
  config.tau_dino = 1.0;
  auto scored = normalize_scores({box_with_affinity(std::log(2.0)), box_with_affinity(0.0)},
                                 config);
  CHECK(*scored[0].score == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(*scored[1].score == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("a single proposal normalizes to score 1") {
  auto scored = normalize_scores({box_with_affinity(-5.0)}, GroundingConfig{});
  CHECK(*scored[0].score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalize_scores error contracts") {
  CHECK_THROWS_WITH_AS((void)normalize_scores({}, GroundingConfig{}),
                       doctest::Contains("EmptyProposalSet"), Error);
  auto nan_box = box_with_affinity(std::nan(""));
  CHECK_THROWS_WITH_AS((void)normalize_scores({nan_box}, GroundingConfig{}),
                       doctest::Contains("NonFiniteAffinity"), Error);
}

TEST_CASE("select_region crops when the argmax clears the threshold") {
  GroundingConfig config;
  config.tau_thresh = 0.35;
  // softmax of [ln 9, 0] = [0.9, 0.1]
  auto decision = select_region({box_with_affinity(std::log(9.0)), box_with_affinity(0.0)},
                                config);
  REQUIRE(decision.is_crop());
  CHECK(*decision.winning_score == doctest::Approx(0.9));
  CHECK(decision.box->affinity == doctest::Approx(std::log(9.0)));
}

TEST_CASE("select_region keeps the full image below the threshold") {
  GroundingConfig config;
  config.tau_thresh = 0.35;
  // five equal proposals: every score is 0.2
  std::vector<BoundingBoxProposal> proposals(5, box_with_affinity(1.0));
  auto decision = select_region(proposals, config);
  CHECK(!decision.is_crop());
  CHECK(*decision.winning_score == doctest::Approx(0.2));
}

TEST_CASE("an empty proposal set keeps the full image with no score") {
  auto decision = select_region({}, GroundingConfig{});
  CHECK(decision.kind == RegionDecision::Kind::kFullImage);
  CHECK(!decision.winning_score.has_value());
  CHECK(!decision.box.has_value());
}

TEST_CASE("identity crop copies the image pixel for pixel") {
  auto image = testing::noise_raster(37, 23, 99);
  BoundingBoxProposal full;
  full.w = 1.0;
  full.h = 1.0;
  CHECK(crop_image(image, full) == image);
}

TEST_CASE("quarter crop on a 100x100 raster starts at source pixel (25,25)") {
  auto image = testing::noise_raster(100, 100, 7);
  BoundingBoxProposal box;
  box.x = 0.25;
  box.y = 0.25;
  box.w = 0.5;
  box.h = 0.5;
  auto crop = crop_image(image, box);
  CHECK(crop.width == 50);
  CHECK(crop.height == 50);
  for (int c = 0; c < 3; ++c) {
    CHECK(crop.at(0, 0, c) == image.at(25, 25, c));
    CHECK(crop.at(49, 49, c) == image.at(74, 74, c));
  }
}

TEST_CASE("sub-pixel boxes round up to a 1x1 crop") {
  auto image = testing::noise_raster(100, 100, 3);
  BoundingBoxProposal box;
  box.w = 0.001;
  box.h = 0.001;
  auto crop = crop_image(image, box);
  CHECK(crop.width == 1);
  CHECK(crop.height == 1);
  CHECK(crop.at(0, 0, 0) == image.at(0, 0, 0));
}

TEST_CASE("grounding properties over randomized proposal sets") {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> affinity(-4.0, 4.0);
  std::uniform_int_distribution<int> count(1, 12);
  std::uniform_real_distribution<double> tau(0.2, 5.0);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);

  for (int trial = 0; trial < 1000; ++trial) {
    GroundingConfig config;
    config.tau_dino = tau(rng);
    config.tau_thresh = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

    int n = count(rng);
    std::vector<BoundingBoxProposal> proposals;
    for (int i = 0; i < n; ++i) proposals.push_back(box_with_affinity(affinity(rng)));

    auto scored = normalize_scores(proposals, config);
    double sum = 0.0;
    for (const auto& p : scored) sum += *p.score;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

    // shift invariance: adding a constant to all affinities changes nothing
    double c = shift(rng);
    auto shifted = proposals;
    for (auto& p : shifted) p.affinity += c;
    auto base_decision = select_region(proposals, config);
    auto shifted_decision = select_region(shifted, config);
    CHECK(base_decision.kind == shifted_decision.kind);
    CHECK(*base_decision.winning_score ==
          doctest::Approx(*shifted_decision.winning_score).epsilon(1e-9));

    // temperature never changes the winner
    std::size_t best_affinity = 0;
    for (std::size_t i = 1; i < proposals.size(); ++i) {
      if (proposals[i].affinity > proposals[best_affinity].affinity) best_affinity = i;
    }
    std::size_t best_score = 0;
    for (std::size_t i = 1; i < scored.size(); ++i) {
      if (*scored[i].score > *scored[best_score].score) best_score = i;
    }
    CHECK(best_affinity == best_score);

    // lowering the threshold never flips CROP to FULL_IMAGE
    if (base_decision.is_crop()) {
      GroundingConfig lower = config;
      lower.tau_thresh = config.tau_thresh / 2.0;
      CHECK(select_region(proposals, lower).is_crop());
    }

    // decision invariants
    if (base_decision.is_crop()) {
      CHECK(*base_decision.winning_score >= config.tau_thresh);
      CHECK(base_decision.box.has_value());
    } else {
      CHECK(*base_decision.winning_score < config.tau_thresh);
    }
  }
}
