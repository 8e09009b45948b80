#include "vlclip/serial_ref.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace vlclip::serial {

std::vector<Hash64> phash_batch(const std::vector<Raster>& images) {
  std::vector<Hash64> hashes(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    hashes[i] = phash64(images[i]);
  }
  return hashes;
}

std::vector<RankedResult> brute_force_search(const VectorSet& set, const EmbeddingVector& query,
                                             std::size_t k) {
  if (k < 1) raise(errc::invalid_argument, "k must be >= 1");
  if (query.dim() != set.dim) raise(errc::dimension_mismatch, "query dim mismatch");

  std::vector<RankedResult> all(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    float acc = 0.0f;
    auto row = set.row(i);
    for (std::size_t d = 0; d < set.dim; ++d) acc += row[d] * query.values[d];
    all[i].item_id = set.ids[i];
    all[i].similarity = acc;
  }
  std::sort(all.begin(), all.end(), ranked_before);
  if (all.size() > k) all.resize(k);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = static_cast<std::uint32_t>(i + 1);
  return all;
}

namespace {

double lse(const double* v, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(v[i * stride] - mx);
  return mx + std::log(acc);
}

Mat logits(const BatchPair& batch, double tau) {
  std::size_t n = batch.size();
  std::size_t d = batch.images.cols;
  Mat s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* v = batch.images.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* t = batch.texts.row(j);
      double acc = 0.0;
      for (std::size_t x = 0; x < d; ++x) acc += v[x] * t[x];
      s(i, j) = acc / tau;
    }
  }
  return s;
}

}  // namespace

double clip_loss(const BatchPair& batch, double tau) {
  if (batch.size() == 0) raise(errc::invalid_argument, "batch must have N >= 1");
  std::size_t n = batch.size();
  Mat s = logits(batch, tau);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += lse(s.row(i), n, 1) - s(i, i);
    total += lse(&s.a[i], n, n) - s(i, i);
  }
  return total / (2.0 * static_cast<double>(n));
}

ClipGrad clip_loss_grad(const BatchPair& batch, double tau) {
  std::size_t n = batch.size();
  std::size_t d = batch.images.cols;
  Mat s = logits(batch, tau);

  Mat g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double row_lse = lse(s.row(i), n, 1);
    for (std::size_t j = 0; j < n; ++j) g(i, j) = std::exp(s(i, j) - row_lse);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double col_lse = lse(&s.a[j], n, n);
    for (std::size_t i = 0; i < n; ++i) g(i, j) += std::exp(s(i, j) - col_lse);
  }
  for (std::size_t i = 0; i < n; ++i) g(i, i) -= 2.0;
  double scale = 1.0 / (2.0 * static_cast<double>(n));
  for (double& v : g.a) v *= scale;

  ClipGrad grad;
  grad.d_images = Mat(n, d);
  grad.d_texts = Mat(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double gij = g(i, j) / tau;
      const double* t = batch.texts.row(j);
      double* dv = grad.d_images.row(i);
      for (std::size_t x = 0; x < d; ++x) dv[x] += gij * t[x];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double gij = g(i, j) / tau;
      const double* v = batch.images.row(i);
      double* dt = grad.d_texts.row(j);
      for (std::size_t x = 0; x < d; ++x) dt[x] += gij * v[x];
    }
  }
  return grad;
}

double recall_at_k(const Mat& images, const Mat& texts, std::size_t k) {
  std::size_t n = images.rows;
  std::size_t d = images.cols;
  long hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* t = texts.row(i);
    auto sim_to = [&](std::size_t img) {
      const double* v = images.row(img);
      double acc = 0.0;
      for (std::size_t x = 0; x < d; ++x) acc += v[x] * t[x];
      return acc;
    };
    double paired = sim_to(i);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = sim_to(j);
      if (s > paired || (s == paired && j < i)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace vlclip::serial
