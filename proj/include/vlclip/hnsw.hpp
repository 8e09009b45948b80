#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlclip/types.hpp"

namespace vlclip {

struct HnswParams {
  std::uint32_t M = 16;                // max neighbors per node per layer
  std::uint32_t M0 = 32;               // layer-0 cap, conventionally 2*M
  std::uint32_t ef_construction = 200;
  std::uint32_t ef_search = 100;
  std::uint64_t rng_seed = 0;
  std::uint32_t dim = kDefaultDim;

  double level_multiplier() const;  // 1 / ln(M)
  void validate() const;            // M >= 2, ef_construction >= M, ef_search >= 1
  bool operator==(const HnswParams&) const = default;
};

/// Level draw: floor(-ln(U) * mL) with U uniform in (0, 1].
int assign_level_from_uniform(double u, double multiplier);
int assign_level(std::mt19937_64& rng, double multiplier);

/// Flat id+vector container; the brute-force oracle's input and the
/// embedding-side of shard construction.
struct VectorSet {
  std::uint32_t dim = 0;
  std::vector<std::string> ids;
  std::vector<float> data;  // ids.size() * dim floats

  void add(const std::string& id, const EmbeddingVector& v);
  std::size_t size() const noexcept { return ids.size(); }
  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

/// Exact top-k by full scan (parallel over rows); ordering rules identical to
/// IndexShard::search — similarity descending, ties by ascending item_id.
std::vector<RankedResult> brute_force_search(const VectorSet& set, const EmbeddingVector& query,
                                             std::size_t k);

/// One HNSW graph over the embeddings of a single product type.
///
/// Cosine similarity on unit vectors, computed as a dot product. Build is
/// single-writer; once sealed the structure serves lock-free concurrent
/// searches. Adjacency is kept symmetric and capped: pruning a neighbor list
/// also removes the reverse edges, and lists stay sorted by node index so a
/// snapshot round-trip reproduces traversal order exactly.
class IndexShard {
 public:
  IndexShard(std::string product_type, HnswParams params);

  void insert(const std::string& item_id, const EmbeddingVector& vector);
  std::vector<RankedResult> search(const EmbeddingVector& query, std::size_t k,
                                   std::size_t ef) const;
  std::vector<RankedResult> search(const EmbeddingVector& query, std::size_t k) const {
    return search(query, k, params_.ef_search);
  }

  const std::string& product_type() const noexcept { return product_type_; }
  const HnswParams& params() const noexcept { return params_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool contains(const std::string& item_id) const {
    return id_to_node_.count(item_id) > 0;
  }
  EmbeddingVector vector_of(const std::string& item_id) const;
  int max_level() const noexcept { return max_level_; }

  /// Structural audit: degree caps, level monotonicity, entry-point
  /// validity, symmetric links, unit-norm vectors. Returns human-readable
  /// problems; empty means the graph is sound.
  std::vector<std::string> audit() const;

  /// Snapshot format: magic "VLHNSW01", little-endian sections (params, id
  /// table, vector block, per-level varint-delta adjacency), trailing CRC32.
  void save(const std::string& path) const;
  static IndexShard load(const std::string& path);

 private:
  std::uint32_t layer_cap(int layer) const {
    return layer == 0 ? params_.M0 : params_.M;
  }
  float sim(std::uint32_t node, const float* query) const;
  std::vector<std::uint32_t> search_layer(const float* query,
                                          std::span<const std::uint32_t> entries,
                                          std::size_t ef, int layer) const;
  std::vector<std::uint32_t> select_diverse(const float* base,
                                            const std::vector<std::uint32_t>& by_similarity,
                                            std::size_t cap) const;
  void link(std::uint32_t a, std::uint32_t b, int layer);
  void prune(std::uint32_t node, int layer);

  std::string product_type_;
  HnswParams params_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> id_to_node_;
  std::vector<float> vectors_;                          // size() * dim
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][layer]
  std::uint32_t entry_point_ = UINT32_MAX;
  int max_level_ = -1;
  std::mt19937_64 rng_;
};

}  // namespace vlclip
