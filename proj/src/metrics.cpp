#include "vlclip/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vlclip {

double hits_at_k(const std::vector<RankOutcome>& outcomes, std::size_t k) {
  if (outcomes.empty()) raise(errc::empty_dataset, "no outcomes");
  if (k < 1) raise(errc::invalid_argument, "k must be >= 1");
  std::size_t hits = 0;
  for (const auto& outcome : outcomes) {
    if (outcome.rank_of_correct && *outcome.rank_of_correct <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

double mrr(const std::vector<RankOutcome>& outcomes) {
  if (outcomes.empty()) raise(errc::empty_dataset, "no outcomes");
  double total = 0.0;
  for (const auto& outcome : outcomes) {
    if (outcome.rank_of_correct) total += 1.0 / static_cast<double>(*outcome.rank_of_correct);
  }
  return total / static_cast<double>(outcomes.size());
}

double precision_at_k(const JudgedList& judged, std::size_t k) {
  if (k < 1) raise(errc::invalid_argument, "k must be >= 1");
  if (k > judged.labels.size()) {
    raise(errc::invalid_argument, "k exceeds judged label count for " + judged.id);
  }
  int sum = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (judged.labels[i] != 0 && judged.labels[i] != 1) {
      raise(errc::invalid_argument, "labels must be binary");
    }
    sum += judged.labels[i];
  }
  return static_cast<double>(sum) / static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// Judge plumbing
// ---------------------------------------------------------------------------

JudgePromptTemplates JudgePromptTemplates::defaults() {
  JudgePromptTemplates t;
  t.query_based =
      "Look at the image and the query. Answer strictly with 0 or 1: return 1 if the "
      "image's visual characteristics match the product type, attributes, and details in "
      "the query, and 0 if they do not.\nQuery: {query}\nImage: {image}";
  t.similar_item =
      "Answer strictly with 0 or 1 whether the two images are visually similar in pattern, "
      "style, and design. Return 1 when they share the product type and their main visual "
      "characteristics match; return 0 otherwise.\nImage 1: {image1}\nImage 2: {image2}";
  return t;
}

JudgePromptTemplates JudgePromptTemplates::load_dir(const std::string& dir) {
  JudgePromptTemplates t = defaults();
  auto read_into = [&](const std::string& name, std::string& slot) {
    std::ifstream in(dir + "/" + name);
    if (!in) return;
    slot.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    while (!slot.empty() && (slot.back() == '\n' || slot.back() == '\r')) slot.pop_back();
  };
  read_into("judge_query.txt", t.query_based);
  read_into("judge_similar.txt", t.similar_item);
  return t;
}

MockJudgeBackend::MockJudgeBackend(const std::vector<CatalogItem>& catalog) {
  for (const auto& item : catalog) by_id_.emplace(item.item_id, item);
}

std::string MockJudgeBackend::complete(const JudgeRequest& request) {
  auto result = by_id_.find(request.result_item_id);
  if (result == by_id_.end()) return "0";

  if (request.protocol == EvalProtocol::kQueryBased) {
    std::string item_text = result->second.product_type + " " +
                            result->second.gender_age.value_or("") + " " +
                            result->second.raw_text();
    for (const auto& word : split_words(request.query_text)) {
      std::string token = strip_punct(word);
      if (token.empty()) continue;
      if (!contains_phrase(item_text, token)) return "0";
    }
    return "1";
  }

  auto anchor = by_id_.find(request.anchor_item_id);
  if (anchor == by_id_.end()) return "0";
  if (anchor->second.product_type != result->second.product_type) return "0";
  auto anchor_words = split_words(anchor->second.title);
  if (anchor_words.empty()) return "1";  // same type, nothing more to compare
  for (const auto& word : anchor_words) {
    std::string token = strip_punct(word);
    if (!token.empty() && contains_phrase(result->second.title, token)) return "1";
  }
  return "0";
}

struct HttpJudgeBackend::Impl {
  Impl(std::string endpoint, int timeout_ms, std::string path)
      : client(endpoint), path(std::move(path)) {
    client.set_connection_timeout(0, timeout_ms * 1000);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
  }
  httplib::Client client;
  std::string path;
};

HttpJudgeBackend::HttpJudgeBackend(std::string endpoint, int timeout_ms, std::string path)
    : impl_(std::make_unique<Impl>(std::move(endpoint), timeout_ms, std::move(path))) {}

HttpJudgeBackend::~HttpJudgeBackend() = default;

std::string HttpJudgeBackend::complete(const JudgeRequest& request) {
  nlohmann::json body{{"role", "judge"}, {"system", request.system}, {"user", request.user}};
  auto res = impl_->client.Post(impl_->path, body.dump(), "application/json");
  if (!res) raise(errc::backend_unavailable, "judge endpoint unreachable");
  if (res->status < 200 || res->status >= 300) {
    raise(errc::backend_unavailable, "judge endpoint returned " + std::to_string(res->status));
  }
  nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("completion")) {
    raise(errc::backend_unavailable, "judge reply malformed: " + res->body.substr(0, 200));
  }
  return reply["completion"].get<std::string>();
}

std::string ScriptedJudgeBackend::complete(const JudgeRequest&) {
  if (next_ >= completions_.size()) {
    raise(errc::backend_unavailable, "scripted judge exhausted");
  }
  return completions_[next_++];
}

int judge(const JudgeRequest& pair, const JudgePromptTemplates& templates,
          JudgeBackend& backend) {
  JudgeRequest request = pair;
  std::string user;
  if (pair.protocol == EvalProtocol::kQueryBased) {
    user = templates.query_based;
    auto sub = [&user](std::string_view key, const std::string& value) {
      std::size_t pos = user.find(key);
      if (pos != std::string::npos) user.replace(pos, key.size(), value);
    };
    sub("{query}", pair.query_text);
    sub("{image}", pair.result_image_ref);
  } else {
    user = templates.similar_item;
    auto sub = [&user](std::string_view key, const std::string& value) {
      std::size_t pos = user.find(key);
      if (pos != std::string::npos) user.replace(pos, key.size(), value);
    };
    sub("{image1}", pair.anchor_image_ref);
    sub("{image2}", pair.result_image_ref);
  }
  request.user = user;

  std::string completion = backend.complete(request);
  auto words = split_words(completion);
  if (words.empty() || (words.front() != "0" && words.front() != "1")) {
    raise(errc::unparseable_verdict,
          "judge completion is not a strict 0/1 token: '" + completion.substr(0, 80) + "'");
  }
  return words.front() == "1" ? 1 : 0;
}

// ---------------------------------------------------------------------------
// evaluate_retrieval
// ---------------------------------------------------------------------------

EvalReport evaluate_retrieval(const RetrieveFn& retrieve, const std::vector<EvalItem>& items,
                              EvalProtocol protocol,
                              const std::vector<CatalogItem>& catalog, JudgeBackend& backend,
                              const EvalConfig& config) {
  if (items.empty()) raise(errc::empty_dataset, "no evaluation items");
  std::size_t max_k = 0;
  for (std::size_t k : config.ks) max_k = std::max(max_k, k);
  if (max_k > config.retrieval_depth) {
    raise(errc::invalid_argument, "retrieval depth below the largest k");
  }

  std::unordered_map<std::string, const CatalogItem*> by_id;
  for (const auto& item : catalog) by_id.emplace(item.item_id, &item);

  EvalReport report;
  report.protocol = protocol;
  report.retrieval_depth = config.retrieval_depth;

  // Phase 1: retrieval (serial; the engine handles its own parallelism).
  struct Row {
    const EvalItem* item;
    std::vector<RankedResult> results;
  };
  std::vector<Row> rows;
  std::vector<RankOutcome> outcomes;
  bool all_targets_known = true;
  for (const auto& item : items) {
    if (item.target_item.empty()) all_targets_known = false;
    try {
      rows.push_back({&item, retrieve(item, config.retrieval_depth)});
    } catch (const Error& e) {
      report.errors.push_back(item.id + ": " + e.what());
      ++report.skipped;
    }
  }
  if (all_targets_known) {
    for (const auto& row : rows) {
      RankOutcome outcome{row.item->id, std::nullopt};
      for (const auto& r : row.results) {
        if (r.item_id == row.item->target_item) {
          outcome.rank_of_correct = r.rank;
          break;
        }
      }
      outcomes.push_back(outcome);
    }
  }

  // Phase 2: judge all pairs in parallel, bounded in-flight; sums are
  // order-independent.
  struct PairTask {
    std::size_t row;
    std::size_t position;  // rank - 1
  };
  std::vector<PairTask> tasks;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t p = 0; p < rows[r].results.size(); ++p) tasks.push_back({r, p});
  }
  std::vector<int> labels(tasks.size(), 0);
  std::vector<std::string> task_errors(tasks.size());

  int threads = std::max(1, config.max_parallel_judges);
#ifdef _OPENMP
  threads = std::min(threads, omp_get_max_threads());
#endif
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(tasks.size()); ++t) {
    const PairTask& task = tasks[static_cast<std::size_t>(t)];
    const Row& row = rows[task.row];
    const RankedResult& result = row.results[task.position];
    try {
      JudgeRequest request;
      request.protocol = protocol;
      request.result_item_id = result.item_id;
      if (auto it = by_id.find(result.item_id); it != by_id.end()) {
        request.result_image_ref = it->second->image_ref;
      }
      if (protocol == EvalProtocol::kQueryBased) {
        request.query_text = row.item->query_text;
      } else {
        request.anchor_item_id = row.item->anchor_item;
        if (auto it = by_id.find(row.item->anchor_item); it != by_id.end()) {
          request.anchor_image_ref = it->second->image_ref;
        }
      }
      labels[static_cast<std::size_t>(t)] = judge(request, config.templates, backend);
    } catch (const Error& e) {
      task_errors[static_cast<std::size_t>(t)] = e.what();
    }
  }

  // Phase 3: aggregate per-list precision.
  std::vector<JudgedList> judged(rows.size());
  std::vector<bool> row_failed(rows.size(), false);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    judged[r].id = rows[r].item->id;
    judged[r].labels.assign(rows[r].results.size(), 0);
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (!task_errors[t].empty()) {
      row_failed[tasks[t].row] = true;
      report.errors.push_back(rows[tasks[t].row].item->id + ": " + task_errors[t]);
      continue;
    }
    judged[tasks[t].row].labels[tasks[t].position] = labels[t];
  }

  for (std::size_t k : config.ks) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (row_failed[r]) continue;
      if (judged[r].labels.size() < k) continue;  // fewer results than k (tiny shard)
      sum += precision_at_k(judged[r], k);
      ++counted;
    }
    report.precision_at[k] = counted ? sum / static_cast<double>(counted) : 0.0;
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (row_failed[r]) {
      ++report.skipped;
    } else {
      ++report.evaluated;
    }
  }

  if (all_targets_known && !outcomes.empty()) {
    report.has_rank_metrics = true;
    report.hits_at_5 = hits_at_k(outcomes, 5);
    report.mrr_value = mrr(outcomes);
  }
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["protocol"] = protocol == EvalProtocol::kQueryBased ? "query" : "similar";
  nlohmann::json prec;
  for (const auto& [k, v] : precision_at) prec["precision@" + std::to_string(k)] = v;
  j["precision"] = prec;
  if (has_rank_metrics) {
    j["hits@5"] = hits_at_5;
    j["mrr"] = mrr_value;
  }
  j["evaluated"] = evaluated;
  j["skipped"] = skipped;
  j["retrieval_depth"] = retrieval_depth;
  j["errors"] = errors;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << "Protocol: " << (protocol == EvalProtocol::kQueryBased ? "query-based retrieval"
                                                                : "similar item recommendation")
      << "\n";
  out << "Metric";
  for (const auto& [k, v] : precision_at) out << "\tPrecision@" << k;
  out << "\n" << "value";
  out.setf(std::ios::fixed);
  out.precision(4);
  for (const auto& [k, v] : precision_at) out << "\t" << v;
  out << "\n";
  if (has_rank_metrics) {
    out << "HITS@5\t" << hits_at_5 << "\nMRR\t" << mrr_value << "\n";
  }
  out << "evaluated\t" << evaluated << "\nskipped\t" << skipped << "\n";
  return out.str();
}

}  // namespace vlclip
