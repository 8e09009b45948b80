// Times the OpenMP kernels against their serial reference implementations on
// synthetic workloads and verifies the outputs agree.
#include <chrono>
#include <cstdio>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vlclip/dedup.hpp"
#include "vlclip/hnsw.hpp"
#include "vlclip/serial_ref.hpp"
#include "vlclip/trainer.hpp"

using namespace vlclip;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename Fn>
double time_best_of(Fn&& fn, int repeats = 5) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    double start = now_ms();
    fn();
    best = std::min(best, now_ms() - start);
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool equal) {
  std::printf("%-28s %10.2f ms %10.2f ms %8.2fx   %s\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, equal ? "outputs equal" : "OUTPUTS DIFFER");
}

Raster noise_raster(std::uint32_t w, std::uint32_t h, std::uint64_t seed) {
  Raster raster;
  raster.width = w;
  raster.height = h;
  raster.channels = 3;
  raster.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  std::mt19937_64 rng(seed);
  for (auto& p : raster.pixels) p = static_cast<std::uint8_t>(rng());
  return raster;
}

EmbeddingVector random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> values(dim);
  double sq = 0.0;
  for (auto& v : values) {
    v = normal(rng);
    sq += static_cast<double>(v) * v;
  }
  for (auto& v : values) v = static_cast<float>(v / std::sqrt(sq));
  return EmbeddingVector{std::move(values)};
}

Mat random_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(n, d);
  for (auto& v : m.a) v = normal(rng);
  return m;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; parallel paths run serially\n");
#endif
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

  {
    std::vector<Raster> images;
    for (int i = 0; i < 512; ++i) images.push_back(noise_raster(128, 128, 100 + i));
    std::vector<Hash64> a, b;
    double serial_ms = time_best_of([&] { a = serial::phash_batch(images); });
    double parallel_ms = time_best_of([&] { b = phash_batch(images); });
    report("phash_batch 512x128x128", serial_ms, parallel_ms, a == b);
  }

  {
    std::mt19937_64 rng(7);
    VectorSet set;
    for (int i = 0; i < 200000; ++i) {
      set.add("v" + std::to_string(i), random_unit(128, rng));
    }
    auto query = random_unit(128, rng);
    std::vector<RankedResult> a, b;
    double serial_ms = time_best_of([&] { a = serial::brute_force_search(set, query, 100); });
    double parallel_ms = time_best_of([&] { b = brute_force_search(set, query, 100); });
    bool equal = a.size() == b.size();
    for (std::size_t i = 0; equal && i < a.size(); ++i) {
      equal = a[i].item_id == b[i].item_id && a[i].similarity == b[i].similarity;
    }
    report("brute_force 200k x 128d", serial_ms, parallel_ms, equal);
  }

  {
    std::mt19937_64 rng(11);
    BatchPair batch{random_rows(512, 256, rng), random_rows(512, 256, rng)};
    double loss_a = 0, loss_b = 0;
    double serial_ms = time_best_of([&] { loss_a = serial::clip_loss(batch, 0.07); });
    double parallel_ms = time_best_of([&] { loss_b = clip_loss(batch, 0.07); });
    report("clip_loss N=512 D=256", serial_ms, parallel_ms, loss_a == loss_b);

    ClipGrad grad_a, grad_b;
    serial_ms = time_best_of([&] { grad_a = serial::clip_loss_grad(batch, 0.07); });
    parallel_ms = time_best_of([&] { grad_b = clip_loss_grad(batch, 0.07); });
    report("clip_loss_grad N=512 D=256", serial_ms, parallel_ms,
           grad_a.d_images == grad_b.d_images && grad_a.d_texts == grad_b.d_texts);
  }

  {
    std::mt19937_64 rng(13);
    Mat images = random_rows(2000, 128, rng);
    Mat texts = random_rows(2000, 128, rng);
    double a = 0, b = 0;
    double serial_ms = time_best_of([&] { a = serial::recall_at_k(images, texts, 10); });
    double parallel_ms = time_best_of([&] { b = recall_at_k(images, texts, 10); });
    report("recall@10 2000 pairs", serial_ms, parallel_ms, a == b);
  }

  return 0;
}
