#include "vlclip/agent.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

namespace vlclip {

ConcatText build_concat(const CatalogItem& item, const std::string& in_context) {
  ConcatText concat;
  concat.product_type = item.product_type;
  concat.gender_age = item.gender_age;
  concat.raw_text = item.raw_text();
  concat.in_context = in_context;

  std::vector<std::string> segments;
  segments.push_back(item.product_type);
  if (item.gender_age && !item.gender_age->empty()) segments.push_back(*item.gender_age);
  if (!concat.raw_text.empty()) segments.push_back(concat.raw_text);
  if (!in_context.empty()) segments.push_back(in_context);
  concat.rendered = join_words(segments);
  return concat;
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.summarizer_system =
      "You are a product copywriter. Write one description of fewer than 20 words that "
      "captures only what is visible in the product: color, texture, shape, and material. "
      "No sales language, prices, brand names, or benefits.";
  t.summarizer_user = "Product Details: {product_details}\n{memory}";
  t.evaluator_system =
      "You review product summaries against the product details. Requirements: fewer than "
      "20 words; only visually observable attributes (color, texture, shape, material); no "
      "sales language; no prices, brand names, benefits, or abstract descriptors; mention "
      "only information present in the product details. Respond with a score, a short "
      "justification, and one suggestion chosen from: (1) Add the information (2) Remove "
      "the information (3) Rephrase the information (4) Shorten the summary. (5) Do "
      "nothing. If the summary is too long, ask to shorten it. If it contains non-visual "
      "content, ask to remove it. If no revision is needed, end your output with \"<STOP>\".";
  t.evaluator_user =
      "Evaluate the product summary below against the product details.\n"
      "Product Details: {product_details}\n"
      "Summary Content: {summary}\n"
      "Give your score, justification, and suggestions.\n{memory}";
  t.refiner_system =
      "You are a product copywriter. Rewrite the summary so it follows every suggestion. "
      "Use only details present in the product data, keep it under 20 words, and describe "
      "only visually observable attributes (color, texture, shape, material). Output the "
      "final summary alone, with no commentary.";
  t.refiner_user =
      "Refine the summary.\n"
      "Product Details: {product_details}\n"
      "Summary Content: {summary}\n"
      "Evaluator Feedback: {feedback}\n"
      "Provide one final summary as output.\n{memory}";
  return t;
}

PromptTemplates PromptTemplates::load_dir(const std::string& dir) {
  PromptTemplates t = defaults();
  auto read_into = [&](const std::string& name, std::string& slot) {
    std::ifstream in(dir + "/" + name);
    if (!in) return;
    slot.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    while (!slot.empty() && (slot.back() == '\n' || slot.back() == '\r')) slot.pop_back();
  };
  read_into("summarizer_system.txt", t.summarizer_system);
  read_into("summarizer_user.txt", t.summarizer_user);
  read_into("evaluator_system.txt", t.evaluator_system);
  read_into("evaluator_user.txt", t.evaluator_user);
  read_into("refiner_system.txt", t.refiner_system);
  read_into("refiner_user.txt", t.refiner_user);
  return t;
}

std::string render_template(const std::string& tpl, const std::string& product_details,
                            const std::string& summary, const std::string& feedback,
                            const std::string& memory) {
  std::string out = tpl;
  auto replace_all = [&out](std::string_view key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), value);
      pos += value.size();
    }
  };
  replace_all("{product_details}", product_details);
  replace_all("{summary}", summary);
  replace_all("{feedback}", feedback);
  replace_all("{memory}", memory);
  return out;
}

std::vector<std::string> AgentConfig::default_banned_terms() {
  return {"quick-drying",  "machine wash", "machine washable", "durable",
          "comfortable",   "breathable",   "waterproof",       "wrinkle-free",
          "easy care",     "high quality", "free shipping",    "lightweight",
          "best seller"};
}

void AgentConfig::validate() const {
  if (max_iterations < 1) raise(errc::invalid_argument, "i_max must be >= 1");
  if (min_words >= max_words) raise(errc::invalid_argument, "min_words must be < max_words");
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& color_vocabulary() {
  static const std::vector<std::string> colors = {
      "black", "white",  "red",    "blue",   "green",     "yellow", "orange", "purple",
      "pink",  "brown",  "gray",   "grey",   "beige",     "teal",   "navy",   "ivory",
      "gold",  "silver", "maroon", "olive",  "cream",     "tan",    "turquoise",
      "burgundy", "magenta", "charcoal", "lavender", "coral"};
  return colors;
}

const std::vector<std::string>& type_vocabulary() {
  static const std::vector<std::string> types = {
      "dress",   "shirt",  "t-shirt", "tshirt",  "blouse", "pants",  "jeans",   "skirt",
      "jacket",  "coat",   "sweater", "handbag", "bag",    "backpack", "table", "chair",
      "sofa",    "rug",    "lamp",    "curtain", "sheet",  "blanket", "vase",   "dresser",
      "shoes",   "boots",  "sandals", "sundress", "hat",   "scarf",  "bench",   "stool"};
  return types;
}

std::string truncate_words(const std::string& text, std::size_t max_words) {
  auto words = split_words(text);
  if (words.size() > max_words) words.resize(max_words);
  return join_words(words);
}

/// Removes every occurrence of the (possibly multi-word) phrase, matching
/// case- and punctuation-insensitively on word boundaries.
std::string remove_phrase(const std::string& text, const std::string& phrase) {
  auto words = split_words(text);
  auto target = split_words(phrase);
  if (target.empty()) return text;

  auto norm = [](const std::string& w) { return to_lower(strip_punct(w)); };
  std::vector<std::string> target_norm;
  target_norm.reserve(target.size());
  for (const auto& w : target) target_norm.push_back(norm(w));

  std::vector<std::string> kept;
  std::size_t i = 0;
  while (i < words.size()) {
    bool match = i + target.size() <= words.size();
    for (std::size_t j = 0; match && j < target.size(); ++j) {
      if (norm(words[i + j]) != target_norm[j]) match = false;
    }
    if (match) {
      i += target.size();
    } else {
      kept.push_back(words[i]);
      ++i;
    }
  }
  return join_words(kept);
}

}  // namespace

std::string MockAgentBackend::summarize(const AgentRequest::Fields& f) const {
  std::string source = f.raw_text;
  if (split_words(source).empty()) {
    source = f.product_type;
    if (!f.gender_age.empty()) source += " " + f.gender_age;
  }
  return truncate_words(source, config_.max_words);
}

std::string MockAgentBackend::evaluate(const AgentRequest::Fields& f) const {
  for (const auto& term : config_.banned_nonvisual_terms) {
    if (contains_phrase(f.query, term)) {
      return "Suggestions: 2. Remove the information of [" + term + "].";
    }
  }
  if (word_count(f.query) > config_.max_words) {
    return "Suggestions: 4. Shorten the summary.";
  }
  for (const auto& word : split_words(f.query)) {
    std::string token = to_lower(strip_punct(word));
    bool known = std::find(color_vocabulary().begin(), color_vocabulary().end(), token) !=
                     color_vocabulary().end() ||
                 std::find(type_vocabulary().begin(), type_vocabulary().end(), token) !=
                     type_vocabulary().end();
    if (known && !contains_phrase(f.rendered, token)) {
      return "Suggestions: 2. Remove the information of [" + token + "].";
    }
  }
  return "Suggestions: 5. Do nothing.\n<STOP>";
}

std::string MockAgentBackend::refine(const AgentRequest::Fields& f) const {
  std::string query = f.query;
  std::size_t open = f.feedback.find('[');
  std::size_t close = f.feedback.find(']');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    query = remove_phrase(query, f.feedback.substr(open + 1, close - open - 1));
  }
  // Shorten requests (and any unrecognized feedback) resolve to the word cap.
  return truncate_words(query, config_.max_words);
}

std::string MockAgentBackend::complete(const AgentRequest& request) {
  if (request.role == "summarizer") return summarize(request.fields);
  if (request.role == "evaluator") return evaluate(request.fields);
  if (request.role == "refiner") return refine(request.fields);
  // querygen templates an evaluation query from catalog fields, standing in
  // for attribute extraction.
  if (request.role == "querygen") return summarize(request.fields);
  raise(errc::invalid_argument, "mock agent does not serve role " + request.role);
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

struct HttpAgentBackend::Impl {
  Impl(std::string endpoint, int timeout_ms, std::string path)
      : client(endpoint), path(std::move(path)) {
    client.set_connection_timeout(0, timeout_ms * 1000);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
  }
  httplib::Client client;
  std::string path;
};

HttpAgentBackend::HttpAgentBackend(std::string endpoint, int timeout_ms, std::string path)
    : impl_(std::make_unique<Impl>(std::move(endpoint), timeout_ms, std::move(path))) {}

HttpAgentBackend::~HttpAgentBackend() = default;

std::string HttpAgentBackend::complete(const AgentRequest& request) {
  nlohmann::json body{{"role", request.role}, {"system", request.system}, {"user", request.user}};
  auto res = impl_->client.Post(impl_->path, body.dump(), "application/json");
  if (!res) raise(errc::backend_unavailable, "agent endpoint unreachable");
  if (res->status < 200 || res->status >= 300) {
    raise(errc::backend_unavailable,
          "agent endpoint returned " + std::to_string(res->status) + ": " +
              res->body.substr(0, 200));
  }
  nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("completion") || !reply["completion"].is_string()) {
    raise(errc::backend_unavailable, "agent reply malformed: " + res->body.substr(0, 200));
  }
  return reply["completion"].get<std::string>();
}

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

std::string TranscriptRecorder::complete(const AgentRequest& request) {
  std::string completion = inner_->complete(request);
  records_.emplace_back(request, completion);
  return completion;
}

void TranscriptRecorder::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::io_error, "cannot write transcript " + path);
  for (const auto& [request, completion] : records_) {
    nlohmann::json j{{"role", request.role},
                     {"system", request.system},
                     {"user", request.user},
                     {"completion", completion}};
    out << j.dump() << "\n";
  }
}

TranscriptReplayBackend TranscriptReplayBackend::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io_error, "cannot read transcript " + path);
  TranscriptReplayBackend backend;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) raise(errc::malformed_record, "bad transcript line in " + path);
    backend.records_.push_back({j.at("role").get<std::string>(),
                                j.at("completion").get<std::string>()});
  }
  return backend;
}

std::string TranscriptReplayBackend::complete(const AgentRequest& request) {
  if (next_ >= records_.size()) {
    raise(errc::backend_unavailable, "transcript exhausted at role " + request.role);
  }
  const Record& record = records_[next_];
  if (record.role != request.role) {
    raise(errc::backend_unavailable,
          "transcript divergence: expected " + record.role + ", got " + request.role);
  }
  ++next_;
  return record.completion;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

AgentRequest make_request(const std::string& role, const ConcatText& concat,
                          const AgentConfig& config, const std::string& query,
                          const std::string& feedback) {
  AgentRequest request;
  request.role = role;
  request.fields.product_type = concat.product_type;
  request.fields.gender_age = concat.gender_age.value_or("");
  request.fields.raw_text = concat.raw_text;
  request.fields.in_context = concat.in_context;
  request.fields.rendered = concat.rendered;
  request.fields.query = query;
  request.fields.feedback = feedback;

  const PromptTemplates& t = config.templates;
  const std::string& system = role == "summarizer"   ? t.summarizer_system
                              : role == "evaluator" ? t.evaluator_system
                                                    : t.refiner_system;
  const std::string& user = role == "summarizer"   ? t.summarizer_user
                            : role == "evaluator" ? t.evaluator_user
                                                  : t.refiner_user;
  request.system = system;
  request.user = render_template(user, concat.rendered, query, feedback, concat.in_context);
  return request;
}

}  // namespace

std::string summarize(const ConcatText& concat, const AgentConfig& config,
                      AgentBackend& backend) {
  std::string completion =
      trim(backend.complete(make_request("summarizer", concat, config, "", "")));
  if (completion.empty()) raise(errc::empty_completion, "summarizer returned nothing");
  return completion;
}

EvaluatorVerdict evaluate(const std::string& query, const ConcatText& concat,
                          const AgentConfig& config, AgentBackend& backend) {
  if (query.empty()) raise(errc::invalid_argument, "cannot evaluate an empty query");
  std::string completion = backend.complete(make_request("evaluator", concat, config, query, ""));
  if (completion.find("<STOP>") != std::string::npos) {
    return {true, ""};
  }
  std::string feedback = trim(completion);
  if (feedback.empty()) raise(errc::empty_completion, "evaluator returned nothing");
  return {false, feedback};
}

std::string refine(const std::string& query, const std::string& feedback,
                   const ConcatText& concat, const AgentConfig& config, AgentBackend& backend) {
  if (feedback.empty()) raise(errc::invalid_argument, "refine requires feedback");
  std::string completion =
      trim(backend.complete(make_request("refiner", concat, config, query, feedback)));
  if (completion.empty()) raise(errc::empty_completion, "refiner returned nothing");
  return completion;
}

QueryTrace run_refinement_loop(const ConcatText& concat, const AgentConfig& config,
                               AgentBackend& backend) {
  config.validate();
  QueryTrace trace;
  try {
    std::string query = summarize(concat, config, backend);
    trace.initial_query = query;
    trace.final_query = query;

    for (std::size_t i = 1; i <= config.max_iterations; ++i) {
      EvaluatorVerdict verdict = evaluate(query, concat, config, backend);
      if (verdict.is_stop) {
        trace.stop_reason = StopReason::kStopToken;
        trace.final_query = query;
        return trace;
      }
      query = refine(query, verdict.feedback, concat, config, backend);
      trace.steps.push_back({verdict.feedback, query});
      trace.final_query = query;
    }
    trace.stop_reason = StopReason::kMaxIterations;
    return trace;
  } catch (const AgentLoopError&) {
    throw;
  } catch (const Error& e) {
    throw AgentLoopError(e, trace);
  }
}

}  // namespace vlclip
