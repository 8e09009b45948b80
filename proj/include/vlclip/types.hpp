#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlclip/common.hpp"

namespace vlclip {

/// Engine-wide embedding dimension default. Every component takes the actual
/// dimension from configuration; mixing dimensions is a hard error.
inline constexpr std::size_t kDefaultDim = 512;

/// One product record. Immutable after construction; `product_type` doubles
/// as the detector prompt and the shard key.
struct CatalogItem {
  std::string item_id;
  std::string image_ref;
  std::string product_type;
  std::optional<std::string> gender_age;
  std::string title;
  std::string description;

  /// Title and description joined with a single space (empty parts skipped).
  std::string raw_text() const;
};

/// Fixed-dimension unit-norm float vector, the shared image/text space.
struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool unit_norm(float tol = 1e-4f) const;
};

/// Cosine of two unit vectors (plain dot product). Dimensions must agree.
float dot(const EmbeddingVector& a, const EmbeddingVector& b);

/// Detector proposal in normalized image coordinates. `affinity` is the raw
/// region-prompt alignment score; `score` is filled by softmax normalization.
struct BoundingBoxProposal {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double affinity = 0.0;
  std::optional<double> score;

  bool geometry_valid() const noexcept {
    return x >= 0.0 && y >= 0.0 && w > 0.0 && h > 0.0 && x + w <= 1.0 + 1e-9 &&
           y + h <= 1.0 + 1e-9;
  }
};

enum class StopReason { kStopToken, kMaxIterations };

/// Full history of one refinement loop run.
struct QueryTrace {
  struct Step {
    std::string feedback;  // evaluator output e^i
    std::string refined;   // refined query q^i
    bool operator==(const Step&) const = default;
  };

  std::string initial_query;
  std::vector<Step> steps;
  StopReason stop_reason = StopReason::kStopToken;
  std::string final_query;

  bool operator==(const QueryTrace&) const = default;
};

struct Hash64 {
  std::uint64_t bits = 0;
  bool operator==(const Hash64&) const = default;
};

/// Renders as a 16-hex-digit string in logs and files.
std::string to_hex(Hash64 h);
Hash64 hash64_from_hex(const std::string& hex);

struct RankedResult {
  std::string item_id;
  float similarity = 0.0f;  // cosine in [-1, 1]
  std::uint32_t rank = 0;   // 1-based
};

/// Ordering shared by every ranked list the engine produces: similarity
/// descending, ties broken by ascending item_id.
bool ranked_before(const RankedResult& a, const RankedResult& b);

/// Sorts in the canonical order and assigns 1-based ranks.
void finalize_ranking(std::vector<RankedResult>& results);

// ---------------------------------------------------------------------------
// Catalog validation and JSONL io
// ---------------------------------------------------------------------------

struct CatalogViolation {
  errc code;
  std::string item_id;  // empty when the record never parsed far enough
  std::string detail;
};

struct CatalogValidation {
  std::vector<CatalogItem> items;  // all items, valid or not, in input order
  std::vector<CatalogViolation> violations;

  bool ok() const noexcept { return violations.empty(); }
};

/// Checks every invariant over the whole list and reports all violations
/// rather than stopping at the first.
CatalogValidation validate_catalog(std::vector<CatalogItem> items);

/// Reads a JSON-lines catalog file (one object per line, UTF-8, LF).
/// Unparseable lines become MalformedRecord violations.
CatalogValidation load_catalog_jsonl(const std::string& path);
void save_catalog_jsonl(const std::vector<CatalogItem>& items, const std::string& path);

}  // namespace vlclip
