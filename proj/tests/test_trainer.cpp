#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "support/testutil.hpp"
#include "vlclip/serial_ref.hpp"
#include "vlclip/trainer.hpp"

using namespace vlclip;

namespace {

Mat random_rows(std::size_t n, std::size_t d, std::mt19937_64& rng, bool unit = true) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      m(i, j) = normal(rng);
      sq += m(i, j) * m(i, j);
    }
    if (unit) {
      double norm = std::sqrt(sq);
      for (std::size_t j = 0; j < d; ++j) m(i, j) /= norm;
    }
  }
  return m;
}

BatchPair random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return BatchPair{random_rows(n, d, rng), random_rows(n, d, rng)};
}

/// Fixed random rotation built by Gram-Schmidt on seeded Gaussian columns.
Mat random_rotation(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat q(d, d);
  for (std::size_t col = 0; col < d; ++col) {
    std::vector<double> v(d);
    for (auto& x : v) x = normal(rng);
    for (std::size_t prev = 0; prev < col; ++prev) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += v[i] * q(i, prev);
      for (std::size_t i = 0; i < d; ++i) v[i] -= proj * q(i, prev);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) q(i, col) = v[i] / norm;
  }
  return q;
}

/// The two-cluster synthetic alignment task: ten orthogonal cluster
/// directions; image and text embeddings see the shared direction plus
/// independent noise under two different fixed rotations.
struct SyntheticSplit {
  PairDataset train;
  PairDataset validation;
};

SyntheticSplit make_cluster_dataset(std::size_t n_train, std::size_t n_val, std::size_t d,
                                    std::uint64_t seed) {
  const std::size_t clusters = 10;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);

  Mat axes = random_rotation(d, seed + 1);  // columns 0..9 are the clusters
  Mat rot_image = random_rotation(d, seed + 2);
  Mat rot_text = random_rotation(d, seed + 3);

  auto emit = [&](PairDataset& out, std::size_t count, const std::string& prefix) {
    out.images = Mat(count, d);
    out.texts = Mat(count, d);
    for (std::size_t i = 0; i < count; ++i) {
      out.ids.push_back(prefix + std::to_string(i));
      std::size_t cluster = i % clusters;
      std::vector<double> img(d), txt(d);
      for (std::size_t j = 0; j < d; ++j) {
        img[j] = axes(j, cluster) + noise(rng);
        txt[j] = axes(j, cluster) + noise(rng);
      }
      auto place = [&](Mat& dst, const Mat& rot, const std::vector<double>& v, std::size_t row) {
        double sq = 0.0;
        std::vector<double> rotated(d, 0.0);
        for (std::size_t r = 0; r < d; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) acc += rot(r, c) * v[c];
          rotated[r] = acc;
          sq += acc * acc;
        }
        double norm = std::sqrt(sq);
        for (std::size_t c = 0; c < d; ++c) dst(row, c) = rotated[c] / norm;
      };
      place(out.images, rot_image, img, i);
      place(out.texts, rot_text, txt, i);
    }
  };

  SyntheticSplit split;
  emit(split.train, n_train, "train-");
  emit(split.validation, n_val, "val-");
  return split;
}

}  // namespace

TEST_CASE("a single pair has zero loss and zero gradients") {
  auto batch = random_batch(1, 16, 1);
  CHECK(clip_loss(batch, 0.07) == 0.0);
  auto grad = clip_loss_grad(batch, 0.07);
  for (double v : grad.d_images.a) CHECK(v == 0.0);
  for (double v : grad.d_texts.a) CHECK(v == 0.0);
}

TEST_CASE("the 2x2 orthogonal identity case evaluates to ln(1 + e^-1)") {
  BatchPair batch;
  batch.images = Mat(2, 2);
  batch.images(0, 0) = 1.0;
  batch.images(1, 1) = 1.0;
  batch.texts = batch.images;  // v1 = t1, v2 = t2, v1 orthogonal to v2
  double loss = clip_loss(batch, 1.0);
  CHECK(std::abs(loss - std::log(1.0 + std::exp(-1.0))) < 1e-9);
}

TEST_CASE("identical embeddings across the batch give loss ln N") {
  for (std::size_t n : {2, 4, 8, 16}) {
    std::mt19937_64 rng(n);
    auto row = random_rows(1, 8, rng);
    BatchPair batch;
    batch.images = Mat(n, 8);
    batch.texts = Mat(n, 8);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        batch.images(i, j) = row(0, j);
        batch.texts(i, j) = row(0, j);
      }
    }
    CHECK(clip_loss(batch, 0.07) ==
          doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-12));
  }
}

TEST_CASE("loss is positive for N >= 2 and invariant under row permutation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto batch = random_batch(6, 12, seed);
    double loss = clip_loss(batch, 0.07);
    CHECK(loss > 0.0);

    // permute rows of V and T together
    BatchPair permuted;
    permuted.images = Mat(6, 12);
    permuted.texts = Mat(6, 12);
    std::vector<std::size_t> perm = {3, 1, 5, 0, 4, 2};
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 12; ++j) {
        permuted.images(i, j) = batch.images(perm[i], j);
        permuted.texts(i, j) = batch.texts(perm[i], j);
      }
    }
    CHECK(clip_loss(permuted, 0.07) == doctest::Approx(loss).epsilon(1e-12));
  }
}

TEST_CASE("non-finite inputs are rejected") {
  auto batch = random_batch(3, 4, 2);
  batch.images(1, 2) = std::nan("");
  CHECK_THROWS_WITH_AS((void)clip_loss(batch, 0.07), doctest::Contains("NonFiniteInput"),
                       Error);
}

TEST_CASE("symmetric batches have identical image and text gradients") {
  std::mt19937_64 rng(5);
  Mat rows = random_rows(4, 8, rng);
  BatchPair batch{rows, rows};
  auto grad = clip_loss_grad(batch, 0.3);
  REQUIRE(grad.d_images.a.size() == grad.d_texts.a.size());
  for (std::size_t i = 0; i < grad.d_images.a.size(); ++i) {
    CHECK(grad.d_images.a[i] == doctest::Approx(grad.d_texts.a[i]).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central finite differences over 20 seeds") {
  const double h = 1e-4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (std::size_t n : {2, 4, 8}) {
      auto batch = random_batch(n, 16, 1000 + seed);
      auto grad = clip_loss_grad(batch, 0.07);

      double max_rel = 0.0;
      auto check_entry = [&](Mat& target, const Mat& analytic, std::size_t i, std::size_t j) {
        double saved = target(i, j);
        target(i, j) = saved + h;
        double up = clip_loss(batch, 0.07);
        target(i, j) = saved - h;
        double down = clip_loss(batch, 0.07);
        target(i, j) = saved;
        double numeric = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(numeric), std::abs(analytic(i, j)), 1e-8});
        max_rel = std::max(max_rel, std::abs(numeric - analytic(i, j)) / denom);
      };
      // probe a deterministic subset of entries to keep runtime low
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 16; j += 5) {
          check_entry(batch.images, grad.d_images, i, j);
          check_entry(batch.texts, grad.d_texts, i, j);
        }
      }
      INFO("seed ", seed, " n ", n, " max_rel ", max_rel);
      CHECK(max_rel < 1e-4);
    }
  }
}

TEST_CASE("one small gradient step strictly decreases the loss") {
  auto batch = random_batch(8, 16, 77);
  double before = clip_loss(batch, 0.07);
  auto grad = clip_loss_grad(batch, 0.07);
  const double lr = 1e-3;
  for (std::size_t i = 0; i < batch.images.a.size(); ++i) {
    batch.images.a[i] -= lr * grad.d_images.a[i];
    batch.texts.a[i] -= lr * grad.d_texts.a[i];
  }
  CHECK(clip_loss(batch, 0.07) < before);
}

TEST_CASE("parallel loss and gradients equal the serial reference bitwise") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto batch = random_batch(32, 24, seed);
    CHECK(clip_loss(batch, 0.07) == serial::clip_loss(batch, 0.07));
    auto a = clip_loss_grad(batch, 0.07);
    auto b = serial::clip_loss_grad(batch, 0.07);
    CHECK(a.d_images == b.d_images);
    CHECK(a.d_texts == b.d_texts);
  }
}

TEST_CASE("recall_at_k on perfectly aligned orthonormal pairs is 1") {
  Mat eye(8, 8);
  for (std::size_t i = 0; i < 8; ++i) eye(i, i) = 1.0;
  CHECK(recall_at_k(eye, eye, 1) == 1.0);
  CHECK(recall_at_k(eye, eye, 10) == 1.0);  // k beyond corpus size
}

TEST_CASE("recall_at_k is 0 under adversarial counter-alignment at k = 1") {
  // text i matches image i+1; its own image is orthogonal
  Mat images(4, 4);
  Mat texts(4, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    images(i, i) = 1.0;
    texts(i, (i + 1) % 4) = 1.0;
  }
  CHECK(recall_at_k(images, texts, 1) == 0.0);
}

TEST_CASE("parallel recall equals the serial reference") {
  std::mt19937_64 rng(31);
  Mat images = random_rows(200, 16, rng);
  Mat texts = random_rows(200, 16, rng);
  for (std::size_t k : {1, 5, 10, 50}) {
    CHECK(recall_at_k(images, texts, k) == serial::recall_at_k(images, texts, k));
  }
}

TEST_CASE("fit on the two-cluster dataset lifts recall from chance to >= 0.9") {
  auto split = make_cluster_dataset(900, 100, 64, 424242);

  // untrained baseline: identity heads on differently-rotated spaces
  double baseline = recall_at_k(split.validation.images, split.validation.texts, 10);
  INFO("baseline recall ", baseline);
  CHECK(baseline <= 0.15);

  TrainConfig config;
  config.seed = 7;
  auto result = fit(split.train, split.validation, config);

  Mat val_images = result.image_head.project(split.validation.images);
  Mat val_texts = result.text_head.project(split.validation.texts);
  double trained = recall_at_k(val_images, val_texts, 10);
  INFO("trained recall ", trained);
  CHECK(trained >= 0.9);

  CHECK(result.history.best_epoch > 0);
  CHECK(result.history.epochs[result.history.best_epoch].validation_loss <
        result.history.epochs[0].validation_loss);
}

TEST_CASE("zero learning rate gives a flat history and early stop after patience+1") {
  auto split = make_cluster_dataset(60, 20, 16, 9);
  TrainConfig config;
  config.learning_rate = 0.0;
  config.patience = 3;
  config.epochs = 30;
  auto result = fit(split.train, split.validation, config);
  CHECK(result.history.stopped_early);
  CHECK(result.history.epochs.size() == 4);  // patience + 1
  for (const auto& epoch : result.history.epochs) {
    CHECK(epoch.validation_loss == result.history.epochs[0].validation_loss);
  }
}

TEST_CASE("train/validation overlap is a precondition error") {
  auto split = make_cluster_dataset(10, 5, 8, 3);
  split.validation.ids[0] = split.train.ids[0];
  CHECK_THROWS_WITH_AS((void)fit(split.train, split.validation, TrainConfig{}),
                       doctest::Contains("InvalidArgument"), Error);
}

TEST_CASE("empty datasets are rejected") {
  PairDataset empty;
  auto split = make_cluster_dataset(10, 5, 8, 4);
  CHECK_THROWS_WITH_AS((void)fit(empty, split.validation, TrainConfig{}),
                       doctest::Contains("EmptyDataset"), Error);
}

TEST_CASE("projection heads and pair datasets round-trip through their files") {
  testing::TempDir tmp;
  auto split = make_cluster_dataset(12, 4, 8, 5);
  TrainConfig config;
  config.epochs = 2;
  auto result = fit(split.train, split.validation, config);

  save_heads(result.image_head, result.text_head, tmp.file("heads.bin"));
  auto [image_head, text_head] = load_heads(tmp.file("heads.bin"));
  CHECK(image_head.weights.rows == result.image_head.weights.rows);
  for (std::size_t i = 0; i < image_head.weights.a.size(); ++i) {
    CHECK(image_head.weights.a[i] ==
          doctest::Approx(result.image_head.weights.a[i]).epsilon(1e-6));
  }

  save_pairs_jsonl(split.train, tmp.file("pairs.jsonl"));
  auto loaded = load_pairs_jsonl(tmp.file("pairs.jsonl"));
  CHECK(loaded.ids == split.train.ids);
  CHECK(loaded.images.a == split.train.images.a);

  result.history.save_csv(tmp.file("history.csv"));
  std::ifstream csv(tmp.file("history.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,val_loss,recall_at_10");
}
