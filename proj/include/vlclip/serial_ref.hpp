#pragma once

#include "vlclip/dedup.hpp"
#include "vlclip/hnsw.hpp"
#include "vlclip/trainer.hpp"

// Serial reference implementations of the parallel kernels. Same arithmetic
// in the same order, no OpenMP, so results must match the parallel paths
// bit for bit. Kept for testing and for the kernel benchmark.
namespace vlclip::serial {

std::vector<Hash64> phash_batch(const std::vector<Raster>& images);

std::vector<RankedResult> brute_force_search(const VectorSet& set, const EmbeddingVector& query,
                                             std::size_t k);

double clip_loss(const BatchPair& batch, double tau);
ClipGrad clip_loss_grad(const BatchPair& batch, double tau);

double recall_at_k(const Mat& images, const Mat& texts, std::size_t k);

}  // namespace vlclip::serial
