#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vlclip/agent.hpp"
#include "vlclip/dedup.hpp"
#include "vlclip/encoders.hpp"
#include "vlclip/grounding.hpp"
#include "vlclip/hnsw.hpp"
#include "vlclip/metrics.hpp"
#include "vlclip/types.hpp"

namespace vlclip {

struct EngineConfig {
  std::string catalog_path;
  std::string store_dir;  // items.jsonl, dedup_report.json, embeddings.bin, index/

  std::size_t dim = kDefaultDim;
  GroundingConfig grounding;
  AgentConfig agent;
  HnswParams hnsw;
  int dedup_threshold = 4;

  EncoderBackendDescriptor encoder;     // embeddings and detector proposals
  std::string agent_backend = "mock";   // mock | remote:<url> | transcript:<path>
  std::string judge_backend = "mock";   // mock | remote:<url>
  std::string prompt_dir;               // external prompt templates, optional

  std::string bind_address = "127.0.0.1:8080";
  std::size_t top_k_default = 10;
  std::uint64_t seed = 0;

  /// key=value file, # comments, dotted keys (e.g. hnsw.m = 16).
  static EngineConfig from_file(const std::string& path);
  void apply(const std::string& key, const std::string& value);
  void finalize();  // propagates dim/seed into sub-configs, loads prompt dir
};

/// Append-only binary store of (item_id, shard key, embedding):
/// magic "VLEMB01", D as u32, then per record u16 id length, id bytes, u16
/// shard-key length, key bytes, D little-endian f32, trailing CRC32 of the
/// record. A torn tail (crash mid-append) is detected and truncated away on
/// open, so interrupted builds stay readable.
class EmbeddingStore {
 public:
  static EmbeddingStore open(const std::string& path, std::size_t dim);

  void append(const std::string& item_id, const std::string& shard_key,
              const EmbeddingVector& vector);
  bool contains(const std::string& item_id) const {
    return offsets_.count(item_id) > 0;
  }
  EmbeddingVector vector_of(const std::string& item_id) const;
  const std::string& shard_key_of(const std::string& item_id) const;
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }

 private:
  struct Entry {
    std::string shard_key;
    std::size_t row;  // index into vectors_ (row * dim)
  };

  std::string path_;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::map<std::string, Entry> offsets_;
  std::vector<float> vectors_;
};

struct IngestResult {
  std::size_t catalog_items = 0;
  std::vector<CatalogItem> unique_items;
  DedupReport report;
  std::vector<std::pair<std::string, std::string>> quarantined;  // id (or line), reason
};

struct BuildResult {
  std::size_t embedded = 0;       // new embeddings this run
  std::size_t reused = 0;         // cache hits from the store
  std::vector<std::string> shard_types;
  std::vector<std::pair<std::string, std::string>> quarantined;
};

/// End-to-end orchestration: ingest -> dedup -> ground -> embed -> index ->
/// serve. Rebuilds swap the index directory atomically; sealed indexes serve
/// concurrent read-only queries.
class Engine {
 public:
  explicit Engine(EngineConfig config);

  /// Hashes every catalog image, removes first-seen duplicates, persists the
  /// unique items and the dedup report under store_dir.
  IngestResult ingest();

  /// Grounds, embeds, and indexes every unique item; items already in the
  /// embedding store are skipped (the store is the cache). One shard per
  /// product type, snapshotted under store_dir/index.
  BuildResult build_index();

  /// Loads the snapshot set and embedding store for querying.
  void load_index();
  bool index_loaded() const noexcept { return !shards_.empty(); }

  std::vector<RankedResult> query_text(const std::string& text, std::size_t k,
                                       const std::optional<std::string>& product_type,
                                       bool refine_query);
  std::vector<RankedResult> query_similar(const std::string& item_id, std::size_t k);

  /// Runs the refinement loop on raw query text (used by --refine).
  QueryTrace refine_text(const std::string& text,
                         const std::optional<std::string>& product_type);

  const EngineConfig& config() const noexcept { return config_; }
  const std::vector<CatalogItem>& unique_items();
  const EmbeddingStore& store();
  std::size_t shard_count() const noexcept { return shards_.size(); }
  std::size_t indexed_items() const;
  EncoderBackend& encoder_backend() { return *encoder_; }
  AgentBackend& agent_backend() { return *agent_; }
  std::shared_ptr<JudgeBackend> make_judge_backend();

  /// Evaluation inputs per protocol: query-based templates a query per item
  /// through the agent backend; similar-item samples anchors uniformly with
  /// the engine seed.
  std::vector<EvalItem> make_eval_items(EvalProtocol protocol, std::size_t sample_size);

 private:
  void ensure_store();
  void ensure_items();
  std::vector<RankedResult> merge_shard_results(const EmbeddingVector& query, std::size_t k,
                                                const std::vector<const IndexShard*>& shards);

  EngineConfig config_;
  std::shared_ptr<EncoderBackend> encoder_;
  std::shared_ptr<AgentBackend> agent_;
  std::unique_ptr<EmbeddingStore> store_;
  std::optional<std::vector<CatalogItem>> unique_items_;
  std::map<std::string, IndexShard> shards_;  // product type -> sealed shard
};

}  // namespace vlclip
