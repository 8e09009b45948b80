#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlclip/types.hpp"

namespace vlclip {

/// Row-major double matrix. Training math runs in double so the analytic
/// gradients can be validated against finite differences at 1e-4 tolerance.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }
  double* row(std::size_t i) { return a.data() + i * cols; }
  bool operator==(const Mat&) const = default;
};

/// Aligned batch: row i of `images` pairs with row i of `texts`.
struct BatchPair {
  Mat images;  // N x D
  Mat texts;   // N x D

  std::size_t size() const noexcept { return images.rows; }
};

/// Symmetric contrastive loss over the batch at temperature tau:
/// mean over rows of the image->text and text->image cross entropies with
/// matched pairs on the diagonal, log-sum-exp stabilized.
double clip_loss(const BatchPair& batch, double tau);

struct ClipGrad {
  Mat d_images;
  Mat d_texts;
};

/// Analytic gradients of clip_loss with respect to every entry of the batch.
ClipGrad clip_loss_grad(const BatchPair& batch, double tau);

/// Fraction of texts whose paired image lands in the top-k images by cosine
/// (ties by ascending row index).
double recall_at_k(const Mat& images, const Mat& texts, std::size_t k);

struct TrainConfig {
  double tau = 0.07;
  std::size_t epochs = 30;
  double learning_rate = 0.2;
  std::size_t batch_size = 64;
  std::size_t patience = 3;
  std::size_t head_dim = 0;        // 0 means same as the input dimension
  double min_improvement = 1e-4;   // validation-loss delta that counts as progress
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  double validation_loss = 0.0;
  double recall_at_10 = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // index of the minimum validation loss
  bool stopped_early = false;

  /// CSV with header epoch,val_loss,recall_at_10.
  void save_csv(const std::string& path) const;
};

/// Linear projection head with re-normalized outputs.
struct ProjectionHead {
  Mat weights;  // head_dim x D

  static ProjectionHead identity(std::size_t head_dim, std::size_t input_dim);
  /// Projects each row and normalizes it; zero rows raise ZeroVector.
  Mat project(const Mat& input) const;
  EmbeddingVector project(const EmbeddingVector& input) const;
};

struct PairDataset {
  std::vector<std::string> ids;
  Mat images;
  Mat texts;

  std::size_t size() const noexcept { return ids.size(); }
};

struct FitResult {
  ProjectionHead image_head;
  ProjectionHead text_head;
  TrainHistory history;
};

/// Trains the two projection heads by mini-batch gradient descent on the
/// contrastive loss, tracking per-epoch validation loss and Recall@10, with
/// early stopping on stalled validation loss. Returns the best-epoch heads.
FitResult fit(const PairDataset& train, const PairDataset& validation,
              const TrainConfig& config);

/// Binary head file io (magic "VLHEADS1", dims, f32 weights, CRC32).
void save_heads(const ProjectionHead& image_head, const ProjectionHead& text_head,
                const std::string& path);
std::pair<ProjectionHead, ProjectionHead> load_heads(const std::string& path);

/// JSONL pair file io: one object per line with id, image, text arrays.
PairDataset load_pairs_jsonl(const std::string& path);
void save_pairs_jsonl(const PairDataset& dataset, const std::string& path);

}  // namespace vlclip
