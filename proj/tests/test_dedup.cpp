#include <doctest.h>

#include <random>

#include "support/testutil.hpp"
#include "vlclip/dedup.hpp"
#include "vlclip/serial_ref.hpp"

using namespace vlclip;

namespace {

Raster textured_raster(std::uint32_t w, std::uint32_t h) {
  Raster raster;
  raster.width = w;
  raster.height = h;
  raster.channels = 3;
  raster.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      for (std::uint32_t c = 0; c < 3; ++c) {
        raster.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>((x * x * 3 + y * y * 7 + x * y + c * 11) % 256);
      }
    }
  }
  return raster;
}

}  // namespace

TEST_CASE("constant nonblack image hashes to the lone DC bit") {
  // All AC coefficients of a constant signal vanish; the median is 0 and the
  // strict comparison leaves only the positive DC term set, bit 63.
  auto hash = phash64(testing::gray_raster(40, 30, 128));
  CHECK(hash.bits == 0x8000000000000000ULL);
  CHECK(to_hex(hash) == "8000000000000000");
}

TEST_CASE("phash values match the frozen external-oracle hashes") {
  CHECK(to_hex(phash64(textured_raster(50, 40))) == "9429ff8581946b97");
  CHECK(to_hex(phash64(textured_raster(96, 96))) == "ca4c35b54f7a524a");
  CHECK(to_hex(phash64(textured_raster(31, 17))) == "8083021f25af97ff");
}

TEST_CASE("hashing is deterministic") {
  auto image = testing::noise_raster(64, 64, 42);
  CHECK(phash64(image) == phash64(image));
}

TEST_CASE("hash survives a lossless re-encode untouched") {
  testing::TempDir tmp;
  auto image = testing::noise_raster(48, 36, 9);
  save_ppm(image, tmp.file("img.ppm"));
  CHECK(hamming(phash64(image), phash64(load_ppm(tmp.file("img.ppm")))) == 0);
}

TEST_CASE("committed resized/recompressed pairs stay within Hamming 10") {
  std::string dir = std::string(VLCLIP_TEST_DATA_DIR) + "/phash_samples";
  for (int i = 0; i < 20; ++i) {
    char orig[32], pert[32];
    std::snprintf(orig, sizeof(orig), "/orig_%02d.ppm", i);
    std::snprintf(pert, sizeof(pert), "/pert_%02d.ppm", i);
    int d = hamming(phash64(load_ppm(dir + orig)), phash64(load_ppm(dir + pert)));
    INFO("pair ", i, " distance ", d);
    CHECK(d <= 10);
  }
}

TEST_CASE("independent noise images average Hamming 32 within 6") {
  double total = 0.0;
  for (int pair = 0; pair < 200; ++pair) {
    auto a = phash64(testing::noise_raster(32, 32, 1000 + 2 * pair));
    auto b = phash64(testing::noise_raster(32, 32, 1001 + 2 * pair));
    total += hamming(a, b);
  }
  double mean = total / 200.0;
  INFO("mean distance ", mean);
  CHECK(mean >= 26.0);
  CHECK(mean <= 38.0);
}

TEST_CASE("hamming basics") {
  CHECK(hamming(Hash64{0xDEADBEEF}, Hash64{0xDEADBEEF}) == 0);
  CHECK(hamming(Hash64{0}, Hash64{~0ULL}) == 64);
  CHECK(hamming(Hash64{0b1010}, Hash64{0b0110}) == 2);
}

TEST_CASE("empty images are rejected") {
  CHECK_THROWS_WITH_AS((void)phash64(Raster{}), doctest::Contains("EmptyImage"), Error);
}

TEST_CASE("dedup with threshold 0 collapses identical hashes to the first") {
  DedupReport report = dedup({{"a", Hash64{7}}, {"b", Hash64{7}}}, 0);
  CHECK(report.unique_ids == std::vector<std::string>{"a"});
  REQUIRE(report.duplicate_map.count("b"));
  CHECK(report.duplicate_map.at("b") == "a");
}

TEST_CASE("dedup with distinct hashes keeps everything") {
  DedupReport report = dedup({{"a", Hash64{1}}, {"b", Hash64{2}}, {"c", Hash64{4}}}, 0);
  CHECK(report.unique_ids.size() == 3);
  CHECK(report.duplicate_map.empty());
}

TEST_CASE("first-seen scan assigns both near misses to the first keeper") {
  // d(A,B) = 3, d(A,C) = 3, d(B,C) = 6
  Hash64 a{0};
  Hash64 b{0b000111};
  Hash64 c{0b111000};
  DedupReport report = dedup({{"A", a}, {"B", b}, {"C", c}}, 4);
  CHECK(report.unique_ids == std::vector<std::string>{"A"});
  CHECK(report.duplicate_map.at("B") == "A");
  CHECK(report.duplicate_map.at("C") == "A");
}

TEST_CASE("threshold 0 dedup partitions into exact-hash classes") {
  std::mt19937_64 rng(55);
  std::vector<std::pair<std::string, Hash64>> items;
  for (int i = 0; i < 500; ++i) {
    items.emplace_back("item-" + std::to_string(i), Hash64{rng() % 40});  // forced collisions
  }
  DedupReport report = dedup(items, 0);

  // every id appears exactly once across keepers and duplicates
  CHECK(report.unique_ids.size() + report.duplicate_map.size() == items.size());
  std::map<std::uint64_t, std::string> first_of_hash;
  for (const auto& [id, hash] : items) {
    auto it = first_of_hash.find(hash.bits);
    if (it == first_of_hash.end()) {
      first_of_hash.emplace(hash.bits, id);
      CHECK(std::find(report.unique_ids.begin(), report.unique_ids.end(), id) !=
            report.unique_ids.end());
    } else {
      CHECK(report.duplicate_map.at(id) == it->second);
    }
  }
}

TEST_CASE("parallel batch hashing matches the serial reference exactly") {
  std::vector<Raster> images;
  for (int i = 0; i < 64; ++i) images.push_back(testing::noise_raster(40, 40, 900 + i));
  auto parallel = phash_batch(images);
  auto reference = serial::phash_batch(images);
  REQUIRE(parallel.size() == reference.size());
  for (std::size_t i = 0; i < parallel.size(); ++i) CHECK(parallel[i] == reference[i]);
}

TEST_CASE("dedup report serializes to json") {
  DedupReport report = dedup({{"a", Hash64{1}}, {"b", Hash64{1}}}, 2);
  auto json = report.to_json();
  CHECK(json.find("\"unique_ids\"") != std::string::npos);
  CHECK(json.find("\"threshold_used\": 2") != std::string::npos);
}
