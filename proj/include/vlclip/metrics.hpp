#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlclip/types.hpp"

namespace vlclip {

/// Where the ground-truth item landed for one query; NOT_FOUND (nullopt)
/// means it was absent from the retrieved depth and scores zero.
struct RankOutcome {
  std::string query_id;
  std::optional<std::uint32_t> rank_of_correct;  // 1-based when present
};

/// Fraction of outcomes with rank <= k.
double hits_at_k(const std::vector<RankOutcome>& outcomes, std::size_t k);

/// Mean reciprocal rank; NOT_FOUND contributes zero.
double mrr(const std::vector<RankOutcome>& outcomes);

/// Ordered binary relevance labels for one query or anchor.
struct JudgedList {
  std::string id;
  std::vector<int> labels;  // 0/1 per rank position
};

/// Mean of the first k labels. k must not exceed the label count.
double precision_at_k(const JudgedList& judged, std::size_t k);

// ---------------------------------------------------------------------------
// Judge backends
// ---------------------------------------------------------------------------

enum class EvalProtocol { kQueryBased, kSimilarItem };

struct JudgePromptTemplates {
  std::string query_based;   // placeholders {query}, {image}
  std::string similar_item;  // placeholders {image1}, {image2}

  static JudgePromptTemplates defaults();
  static JudgePromptTemplates load_dir(const std::string& dir);
};

/// One relevance question. The rendered prompt travels on the wire; the
/// structured fields exist for in-process mocks.
struct JudgeRequest {
  EvalProtocol protocol = EvalProtocol::kQueryBased;
  std::string system;
  std::string user;

  std::string query_text;        // query-based only
  std::string anchor_item_id;    // similar-item only
  std::string anchor_image_ref;
  std::string result_item_id;
  std::string result_image_ref;
};

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::string complete(const JudgeRequest& request) = 0;
};

/// Deterministic judge over catalog metadata.
///   query-based:  1 iff every query token appears in the item's text
///   similar-item: 1 iff same product type and the titles share a token
class MockJudgeBackend : public JudgeBackend {
 public:
  explicit MockJudgeBackend(const std::vector<CatalogItem>& catalog);
  std::string complete(const JudgeRequest& request) override;

 private:
  std::unordered_map<std::string, CatalogItem> by_id_;
};

/// HTTP adapter sharing the agent wire shape: POST {role:"judge", system,
/// user} -> {"completion": ...}.
class HttpJudgeBackend : public JudgeBackend {
 public:
  HttpJudgeBackend(std::string endpoint, int timeout_ms = 10000, std::string path = "/complete");
  ~HttpJudgeBackend() override;
  std::string complete(const JudgeRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Replays canned verdicts in request order.
class ScriptedJudgeBackend : public JudgeBackend {
 public:
  explicit ScriptedJudgeBackend(std::vector<std::string> completions)
      : completions_(std::move(completions)) {}
  std::string complete(const JudgeRequest&) override;

 private:
  std::vector<std::string> completions_;
  std::size_t next_ = 0;
};

/// Renders the prompt, calls the backend, and parses the verdict. The first
/// whitespace token of the completion must be exactly "0" or "1"; anything
/// else raises UnparseableVerdict.
int judge(const JudgeRequest& pair, const JudgePromptTemplates& templates,
          JudgeBackend& backend);

// ---------------------------------------------------------------------------
// Retrieval evaluation
// ---------------------------------------------------------------------------

/// One evaluation unit: a text query or an anchor item, optionally with a
/// known ground-truth target (synthetic corpora).
struct EvalItem {
  std::string id;
  std::string query_text;    // query-based protocol
  std::string anchor_item;   // similar-item protocol
  std::string target_item;   // ground truth when known, else empty
};

using RetrieveFn =
    std::function<std::vector<RankedResult>(const EvalItem& item, std::size_t k)>;

struct EvalConfig {
  std::vector<std::size_t> ks = {1, 3, 5};
  std::size_t retrieval_depth = 10;  // K
  int max_parallel_judges = 8;
  JudgePromptTemplates templates = JudgePromptTemplates::defaults();
};

struct EvalReport {
  EvalProtocol protocol = EvalProtocol::kQueryBased;
  std::map<std::size_t, double> precision_at;  // k -> mean precision
  bool has_rank_metrics = false;               // ground truth was available
  double hits_at_5 = 0.0;
  double mrr_value = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // retrieval or judging failed; salvaged
  std::vector<std::string> errors;
  std::size_t retrieval_depth = 0;

  std::string to_json() const;
  std::string to_table() const;  // plain-text metric table
};

/// Runs retrieval for every item, judges each (query, result) or
/// (anchor, result) pair, and aggregates Precision@k, plus HITS@5/MRR when
/// targets are known. Per-item failures are salvaged into the report.
EvalReport evaluate_retrieval(const RetrieveFn& retrieve, const std::vector<EvalItem>& items,
                              EvalProtocol protocol,
                              const std::vector<CatalogItem>& catalog, JudgeBackend& backend,
                              const EvalConfig& config);

}  // namespace vlclip
