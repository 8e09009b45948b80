#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vlclip/types.hpp"

namespace vlclip {

/// Ordered concatenation of product type, demographics, raw text, and
/// in-context examples; the shared input of all three agents.
struct ConcatText {
  std::string product_type;
  std::optional<std::string> gender_age;
  std::string raw_text;
  std::string in_context;
  std::string rendered;  // in-order segments joined with single spaces
};

ConcatText build_concat(const CatalogItem& item, const std::string& in_context);

struct EvaluatorVerdict {
  bool is_stop = false;
  std::string feedback;  // non-empty exactly when is_stop is false
};

struct PromptTemplates {
  std::string summarizer_system;
  std::string summarizer_user;
  std::string evaluator_system;
  std::string evaluator_user;
  std::string refiner_system;
  std::string refiner_user;

  static PromptTemplates defaults();
  /// Reads <role>_{system,user}.txt from a directory; missing files keep
  /// their default text.
  static PromptTemplates load_dir(const std::string& dir);
};

/// Substitutes {product_details}, {summary}, {feedback}, {memory}.
std::string render_template(const std::string& tpl, const std::string& product_details,
                            const std::string& summary, const std::string& feedback,
                            const std::string& memory);

struct AgentConfig {
  std::size_t max_iterations = 5;  // loop bound i_max
  std::size_t min_words = 10;
  std::size_t max_words = 20;
  PromptTemplates templates = PromptTemplates::defaults();
  std::vector<std::string> banned_nonvisual_terms = default_banned_terms();

  static std::vector<std::string> default_banned_terms();
  void validate() const;
};

/// One agent call. `role` is summarizer, evaluator, refiner, or judge;
/// `system`/`user` are the rendered prompts that travel on the wire. The
/// structured fields mirror the inputs for in-process mock backends, which
/// must not parse prompts.
struct AgentRequest {
  std::string role;
  std::string system;
  std::string user;

  struct Fields {
    std::string product_type;
    std::string gender_age;
    std::string raw_text;
    std::string in_context;
    std::string rendered;
    std::string query;
    std::string feedback;
  } fields;
};

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual std::string complete(const AgentRequest& request) = 0;
};

/// Deterministic rule-based backend.
///   summarizer: raw-text words truncated to max_words; falls back to
///               product type (+ demographics) when the raw text is empty
///   evaluator:  first matching rule of (1) banned non-visual term present,
///               (2) over the word limit, (3) color/type token absent from
///               the concat; otherwise emits <STOP>
///   refiner:    applies the feedback mechanically (drop the named phrase /
///               truncate to max_words)
class MockAgentBackend : public AgentBackend {
 public:
  explicit MockAgentBackend(AgentConfig config) : config_(std::move(config)) {}
  std::string complete(const AgentRequest& request) override;

 private:
  std::string summarize(const AgentRequest::Fields& f) const;
  std::string evaluate(const AgentRequest::Fields& f) const;
  std::string refine(const AgentRequest::Fields& f) const;

  AgentConfig config_;
};

/// HTTP adapter: POST {role, system, user} to the endpoint, expects
/// {"completion": ...}.
class HttpAgentBackend : public AgentBackend {
 public:
  HttpAgentBackend(std::string endpoint, int timeout_ms = 10000, std::string path = "/complete");
  ~HttpAgentBackend() override;
  std::string complete(const AgentRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Records every request/completion pair of an inner backend as JSONL.
class TranscriptRecorder : public AgentBackend {
 public:
  explicit TranscriptRecorder(std::shared_ptr<AgentBackend> inner) : inner_(std::move(inner)) {}
  std::string complete(const AgentRequest& request) override;
  void save(const std::string& path) const;

 private:
  std::shared_ptr<AgentBackend> inner_;
  std::vector<std::pair<AgentRequest, std::string>> records_;
};

/// Replays a recorded transcript in order; the roles must line up with the
/// recorded session or the replay aborts.
class TranscriptReplayBackend : public AgentBackend {
 public:
  static TranscriptReplayBackend from_file(const std::string& path);
  std::string complete(const AgentRequest& request) override;
  std::size_t remaining() const noexcept { return records_.size() - next_; }

 private:
  struct Record {
    std::string role;
    std::string completion;
  };
  std::vector<Record> records_;
  std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

std::string summarize(const ConcatText& concat, const AgentConfig& config,
                      AgentBackend& backend);

/// STOP detection is a literal, case-sensitive "<STOP>" match anywhere in
/// the completion.
EvaluatorVerdict evaluate(const std::string& query, const ConcatText& concat,
                          const AgentConfig& config, AgentBackend& backend);

std::string refine(const std::string& query, const std::string& feedback,
                   const ConcatText& concat, const AgentConfig& config, AgentBackend& backend);

/// Carries the partial trace when a backend fails mid-loop.
class AgentLoopError : public Error {
 public:
  AgentLoopError(const Error& cause, QueryTrace partial)
      : Error(cause.code(), cause.what()), partial_(std::move(partial)) {}
  const QueryTrace& partial_trace() const noexcept { return partial_; }

 private:
  QueryTrace partial_;
};

/// Summarize, then alternate evaluate/refine until <STOP> or the iteration
/// bound. The returned trace is complete and ordered.
QueryTrace run_refinement_loop(const ConcatText& concat, const AgentConfig& config,
                               AgentBackend& backend);

}  // namespace vlclip
