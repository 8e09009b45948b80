#include "vlclip/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

namespace fs = std::filesystem;

namespace vlclip {

// ---------------------------------------------------------------------------
// EngineConfig
// ---------------------------------------------------------------------------

namespace {

std::string trim_ws(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& value, const std::string& key) {
  try {
    if constexpr (std::is_floating_point_v<T>) {
      return static_cast<T>(std::stod(value));
    } else {
      return static_cast<T>(std::stoll(value));
    }
  } catch (const std::logic_error&) {
    raise(errc::invalid_argument, "config value for " + key + " is not numeric: " + value);
  }
}

}  // namespace

EngineConfig EngineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io_error, "cannot open config " + path);
  EngineConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string stripped = trim_ws(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      raise(errc::invalid_argument,
            "config line " + std::to_string(lineno) + " is not key=value");
    }
    config.apply(trim_ws(stripped.substr(0, eq)), trim_ws(stripped.substr(eq + 1)));
  }
  config.finalize();
  return config;
}

void EngineConfig::apply(const std::string& key, const std::string& value) {
  if (key == "catalog") catalog_path = value;
  else if (key == "store_dir") store_dir = value;
  else if (key == "dim") dim = parse_number<std::size_t>(value, key);
  else if (key == "seed") seed = parse_number<std::uint64_t>(value, key);
  else if (key == "top_k") top_k_default = parse_number<std::size_t>(value, key);
  else if (key == "bind") bind_address = value;
  else if (key == "prompt_dir") prompt_dir = value;
  else if (key == "dedup.threshold") dedup_threshold = parse_number<int>(value, key);
  else if (key == "grounding.tau_dino") grounding.tau_dino = parse_number<double>(value, key);
  else if (key == "grounding.tau_thresh") grounding.tau_thresh = parse_number<double>(value, key);
  else if (key == "agent.i_max") agent.max_iterations = parse_number<std::size_t>(value, key);
  else if (key == "agent.min_words") agent.min_words = parse_number<std::size_t>(value, key);
  else if (key == "agent.max_words") agent.max_words = parse_number<std::size_t>(value, key);
  else if (key == "agent.backend") agent_backend = value;
  else if (key == "judge.backend") judge_backend = value;
  else if (key == "hnsw.m") hnsw.M = parse_number<std::uint32_t>(value, key);
  else if (key == "hnsw.m0") hnsw.M0 = parse_number<std::uint32_t>(value, key);
  else if (key == "hnsw.ef_construction") hnsw.ef_construction = parse_number<std::uint32_t>(value, key);
  else if (key == "hnsw.ef_search") hnsw.ef_search = parse_number<std::uint32_t>(value, key);
  else if (key == "encoder.kind") {
    if (value == "deterministic") encoder.kind = EncoderBackendDescriptor::Kind::kDeterministicTest;
    else if (value == "remote") encoder.kind = EncoderBackendDescriptor::Kind::kRemote;
    else raise(errc::invalid_argument, "encoder.kind must be deterministic or remote");
  }
  else if (key == "encoder.endpoint") encoder.endpoint = value;
  else if (key == "encoder.timeout_ms") encoder.timeout_ms = parse_number<int>(value, key);
  else if (key == "encoder.max_in_flight") encoder.max_in_flight = parse_number<int>(value, key);
  else raise(errc::invalid_argument, "unknown config key: " + key);
}

void EngineConfig::finalize() {
  encoder.dimension = dim;
  hnsw.dim = static_cast<std::uint32_t>(dim);
  hnsw.rng_seed = seed;
  if (!prompt_dir.empty()) agent.templates = PromptTemplates::load_dir(prompt_dir);
  if (grounding.tau_dino <= 0.0) raise(errc::invalid_argument, "tau_dino must be positive");
  if (grounding.tau_thresh < 0.0 || grounding.tau_thresh > 1.0) {
    raise(errc::invalid_argument, "tau_thresh must be in [0, 1]");
  }
  if (dedup_threshold < 0 || dedup_threshold > 64) {
    raise(errc::invalid_argument, "dedup threshold must be in [0, 64]");
  }
  agent.validate();
  hnsw.validate();
}

// ---------------------------------------------------------------------------
// EmbeddingStore
// ---------------------------------------------------------------------------

namespace {
constexpr char kStoreMagic[] = "VLEMB01";
constexpr std::size_t kStoreMagicLen = 7;
}  // namespace

EmbeddingStore EmbeddingStore::open(const std::string& path, std::size_t dim) {
  EmbeddingStore store;
  store.path_ = path;
  store.dim_ = dim;

  if (!fs::exists(path)) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(errc::io_error, "cannot create store " + path);
    out.write(kStoreMagic, kStoreMagicLen);
    std::uint32_t d = static_cast<std::uint32_t>(dim);
    out.write(reinterpret_cast<const char*>(&d), 4);
    return store;
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::io_error, "cannot open store " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  in.close();

  if (buf.size() < kStoreMagicLen + 4 ||
      std::memcmp(buf.data(), kStoreMagic, kStoreMagicLen) != 0) {
    raise(errc::corrupt_snapshot, "bad embedding store header in " + path);
  }
  std::uint32_t stored_dim = 0;
  std::memcpy(&stored_dim, buf.data() + kStoreMagicLen, 4);
  if (stored_dim != dim) {
    raise(errc::dimension_mismatch, "store is D=" + std::to_string(stored_dim) +
                                        ", engine configured D=" + std::to_string(dim));
  }

  std::size_t off = kStoreMagicLen + 4;
  std::size_t good_end = off;
  while (off < buf.size()) {
    std::size_t record_start = off;
    auto remaining = [&] { return buf.size() - off; };
    auto read_u16 = [&]() -> std::uint16_t {
      std::uint16_t v;
      std::memcpy(&v, buf.data() + off, 2);
      off += 2;
      return v;
    };
    if (remaining() < 2) break;
    std::uint16_t id_len = read_u16();
    if (remaining() < id_len) break;
    std::string id(reinterpret_cast<const char*>(buf.data() + off), id_len);
    off += id_len;
    if (remaining() < 2) break;
    std::uint16_t key_len = read_u16();
    if (remaining() < key_len) break;
    std::string key(reinterpret_cast<const char*>(buf.data() + off), key_len);
    off += key_len;
    std::size_t vec_bytes = dim * 4;
    if (remaining() < vec_bytes + 4) break;
    const std::uint8_t* vec_ptr = buf.data() + off;
    off += vec_bytes;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + off, 4);
    off += 4;
    std::uint32_t actual = crc32(
        std::span<const std::uint8_t>(buf.data() + record_start, off - 4 - record_start));
    if (actual != stored_crc) break;  // torn or corrupt tail

    if (!store.offsets_.count(id)) {
      Entry entry{key, store.ids_.size()};
      store.ids_.push_back(id);
      store.offsets_.emplace(std::move(id), std::move(entry));
      std::size_t base = store.vectors_.size();
      store.vectors_.resize(base + dim);
      std::memcpy(store.vectors_.data() + base, vec_ptr, vec_bytes);
    }
    good_end = off;
  }

  if (good_end != buf.size()) {
    fs::resize_file(path, good_end);  // drop the torn tail before new appends
  }
  return store;
}

void EmbeddingStore::append(const std::string& item_id, const std::string& shard_key,
                            const EmbeddingVector& vector) {
  if (vector.dim() != dim_) raise(errc::dimension_mismatch, "store append dim mismatch");
  if (offsets_.count(item_id)) raise(errc::duplicate_vector_id, item_id);
  if (item_id.size() > UINT16_MAX || shard_key.size() > UINT16_MAX) {
    raise(errc::invalid_argument, "id or shard key too long");
  }

  std::vector<std::uint8_t> record;
  auto put_u16 = [&](std::uint16_t v) {
    record.push_back(static_cast<std::uint8_t>(v & 0xFF));
    record.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  put_u16(static_cast<std::uint16_t>(item_id.size()));
  record.insert(record.end(), item_id.begin(), item_id.end());
  put_u16(static_cast<std::uint16_t>(shard_key.size()));
  record.insert(record.end(), shard_key.begin(), shard_key.end());
  std::size_t base = record.size();
  record.resize(base + dim_ * 4);
  std::memcpy(record.data() + base, vector.values.data(), dim_ * 4);
  std::uint32_t crc = crc32(std::span<const std::uint8_t>(record.data(), record.size()));
  for (int i = 0; i < 4; ++i) record.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));

  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) raise(errc::io_error, "cannot append to store " + path_);
  out.write(reinterpret_cast<const char*>(record.data()),
            static_cast<std::streamsize>(record.size()));
  out.flush();
  if (!out) raise(errc::io_error, "short write to store " + path_);

  Entry entry{shard_key, ids_.size()};
  ids_.push_back(item_id);
  offsets_.emplace(item_id, std::move(entry));
  vectors_.insert(vectors_.end(), vector.values.begin(), vector.values.end());
}

EmbeddingVector EmbeddingStore::vector_of(const std::string& item_id) const {
  auto it = offsets_.find(item_id);
  if (it == offsets_.end()) raise(errc::unknown_item, item_id);
  const float* base = vectors_.data() + it->second.row * dim_;
  return EmbeddingVector{std::vector<float>(base, base + dim_)};
}

const std::string& EmbeddingStore::shard_key_of(const std::string& item_id) const {
  auto it = offsets_.find(item_id);
  if (it == offsets_.end()) raise(errc::unknown_item, item_id);
  return it->second.shard_key;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<AgentBackend> make_agent_backend(const std::string& spec,
                                                 const AgentConfig& config) {
  if (spec == "mock") return std::make_shared<MockAgentBackend>(config);
  if (spec.rfind("remote:", 0) == 0) {
    return std::make_shared<HttpAgentBackend>(spec.substr(7));
  }
  if (spec.rfind("transcript:", 0) == 0) {
    return std::make_shared<TranscriptReplayBackend>(
        TranscriptReplayBackend::from_file(spec.substr(11)));
  }
  raise(errc::invalid_argument, "unknown agent backend: " + spec);
}

}  // namespace

Engine::Engine(EngineConfig config) : config_(std::move(config)) {
  config_.finalize();
  encoder_ = make_encoder_backend(config_.encoder);
  agent_ = make_agent_backend(config_.agent_backend, config_.agent);
}

std::shared_ptr<JudgeBackend> Engine::make_judge_backend() {
  if (config_.judge_backend == "mock") {
    ensure_items();
    return std::make_shared<MockJudgeBackend>(*unique_items_);
  }
  if (config_.judge_backend.rfind("remote:", 0) == 0) {
    return std::make_shared<HttpJudgeBackend>(config_.judge_backend.substr(7));
  }
  raise(errc::invalid_argument, "unknown judge backend: " + config_.judge_backend);
}

IngestResult Engine::ingest() {
  if (config_.catalog_path.empty() || config_.store_dir.empty()) {
    raise(errc::invalid_argument, "ingest requires catalog and store_dir");
  }
  fs::create_directories(config_.store_dir);

  CatalogValidation validation = load_catalog_jsonl(config_.catalog_path);
  IngestResult result;
  result.catalog_items = validation.items.size();

  // Per-item violations quarantine the item; the rest of the run continues.
  std::vector<char> bad(validation.items.size(), 0);
  std::unordered_map<std::string, std::size_t> first_by_id;
  for (std::size_t i = 0; i < validation.items.size(); ++i) {
    first_by_id.emplace(validation.items[i].item_id, i);
  }
  for (const auto& violation : validation.violations) {
    if (violation.item_id.empty()) {
      result.quarantined.emplace_back("<unparsed>", violation.detail);
      continue;
    }
    // DuplicateId flags the later occurrence; EmptyProductType flags all.
    for (std::size_t i = 0; i < validation.items.size(); ++i) {
      if (validation.items[i].item_id != violation.item_id) continue;
      if (violation.code == errc::duplicate_id && i == first_by_id[violation.item_id]) continue;
      if (!bad[i]) {
        bad[i] = 1;
        result.quarantined.emplace_back(violation.item_id, errc_name(violation.code));
      }
    }
  }

  // Hash every readable image in parallel, then dedup sequentially in input
  // order (order defines canonicals).
  std::vector<Hash64> hashes(validation.items.size());
  std::vector<std::string> hash_errors(validation.items.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(validation.items.size()); ++i) {
    auto idx = static_cast<std::size_t>(i);
    if (bad[idx]) continue;
    try {
      hashes[idx] = phash64(load_ppm(validation.items[idx].image_ref));
    } catch (const Error& e) {
      hash_errors[idx] = e.what();
    }
  }

  std::vector<std::pair<std::string, Hash64>> hashed;
  std::unordered_map<std::string, std::size_t> item_index;
  for (std::size_t i = 0; i < validation.items.size(); ++i) {
    if (bad[i]) continue;
    if (!hash_errors[i].empty()) {
      result.quarantined.emplace_back(validation.items[i].item_id, hash_errors[i]);
      continue;
    }
    hashed.emplace_back(validation.items[i].item_id, hashes[i]);
    item_index.emplace(validation.items[i].item_id, i);
  }

  result.report = dedup(hashed, config_.dedup_threshold);
  for (const auto& id : result.report.unique_ids) {
    result.unique_items.push_back(validation.items[item_index[id]]);
  }

  save_catalog_jsonl(result.unique_items, config_.store_dir + "/items.jsonl");
  {
    std::ofstream out(config_.store_dir + "/dedup_report.json");
    out << result.report.to_json() << "\n";
  }
  {
    nlohmann::json q = nlohmann::json::array();
    for (const auto& [id, reason] : result.quarantined) {
      q.push_back({{"item_id", id}, {"reason", reason}});
    }
    std::ofstream out(config_.store_dir + "/quarantine.json");
    out << q.dump(2) << "\n";
  }

  unique_items_ = result.unique_items;
  return result;
}

void Engine::ensure_items() {
  if (unique_items_) return;
  std::string path = config_.store_dir + "/items.jsonl";
  if (!fs::exists(path)) raise(errc::io_error, "no items.jsonl under " + config_.store_dir + "; run ingest first");
  CatalogValidation validation = load_catalog_jsonl(path);
  if (!validation.ok()) raise(errc::malformed_record, "items.jsonl failed validation");
  unique_items_ = std::move(validation.items);
}

void Engine::ensure_store() {
  if (store_) return;
  store_ = std::make_unique<EmbeddingStore>(
      EmbeddingStore::open(config_.store_dir + "/embeddings.bin", config_.dim));
}

const std::vector<CatalogItem>& Engine::unique_items() {
  ensure_items();
  return *unique_items_;
}

const EmbeddingStore& Engine::store() {
  ensure_store();
  return *store_;
}

BuildResult Engine::build_index() {
  ensure_items();
  ensure_store();

  BuildResult result;

  // Embed items missing from the store. Vectors are computed in parallel but
  // appended in catalog order, keeping the store byte-deterministic.
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < unique_items_->size(); ++i) {
    if (store_->contains((*unique_items_)[i].item_id)) {
      ++result.reused;
    } else {
      todo.push_back(i);
    }
  }

  std::vector<EmbeddingVector> computed(todo.size());
  std::vector<std::string> errors(todo.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(todo.size()); ++t) {
    const CatalogItem& item = (*unique_items_)[todo[static_cast<std::size_t>(t)]];
    try {
      auto proposals = detect_regions(item.image_ref, item.product_type, *encoder_);
      RegionDecision decision = select_region(proposals, config_.grounding);
      computed[static_cast<std::size_t>(t)] =
          encode_image(item.image_ref, decision, *encoder_, config_.dim);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(t)] = e.what();
    }
  }
  for (std::size_t t = 0; t < todo.size(); ++t) {
    const CatalogItem& item = (*unique_items_)[todo[t]];
    if (!errors[t].empty()) {
      result.quarantined.emplace_back(item.item_id, errors[t]);
      continue;
    }
    store_->append(item.item_id, item.product_type, computed[t]);
    ++result.embedded;
  }

  // Group by product type, in store insertion order within each shard.
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& id : store_->ids()) {
    groups[store_->shard_key_of(id)].push_back(id);
  }

  // Build shards (independent; parallel across shards), snapshot into a
  // fresh directory, then swap it in atomically.
  std::string tmp_dir = config_.store_dir + "/index.tmp";
  fs::remove_all(tmp_dir);
  fs::create_directories(tmp_dir);

  std::vector<std::pair<std::string, std::vector<std::string>>> group_list(groups.begin(),
                                                                            groups.end());
  std::vector<std::string> build_errors(group_list.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t g = 0; g < static_cast<std::int64_t>(group_list.size()); ++g) {
    auto gi = static_cast<std::size_t>(g);
    const auto& [type, ids] = group_list[gi];
    try {
      IndexShard shard(type, config_.hnsw);
      for (const auto& id : ids) {
        shard.insert(id, store_->vector_of(id));
      }
      char name[32];
      std::snprintf(name, sizeof(name), "shard_%03zu.hnsw", gi);
      shard.save(tmp_dir + "/" + name);
    } catch (const Error& e) {
      build_errors[gi] = e.what();
    }
  }

  nlohmann::json manifest = nlohmann::json::array();
  for (std::size_t gi = 0; gi < group_list.size(); ++gi) {
    if (!build_errors[gi].empty()) {
      // A failed shard aborts that shard only.
      result.quarantined.emplace_back("shard:" + group_list[gi].first, build_errors[gi]);
      continue;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "shard_%03zu.hnsw", gi);
    manifest.push_back({{"product_type", group_list[gi].first},
                        {"file", name},
                        {"items", group_list[gi].second.size()}});
    result.shard_types.push_back(group_list[gi].first);
  }
  {
    std::ofstream out(tmp_dir + "/shards.json");
    out << manifest.dump(2) << "\n";
  }

  std::string live_dir = config_.store_dir + "/index";
  std::string old_dir = config_.store_dir + "/index.old";
  fs::remove_all(old_dir);
  if (fs::exists(live_dir)) fs::rename(live_dir, old_dir);
  fs::rename(tmp_dir, live_dir);
  fs::remove_all(old_dir);

  shards_.clear();  // any previously loaded snapshot set is stale now
  return result;
}

void Engine::load_index() {
  ensure_store();
  std::string live_dir = config_.store_dir + "/index";
  std::string manifest_path = live_dir + "/shards.json";
  std::ifstream in(manifest_path);
  if (!in) raise(errc::io_error, "no index manifest at " + manifest_path + "; run index first");
  nlohmann::json manifest = nlohmann::json::parse(in, nullptr, false);
  if (manifest.is_discarded()) raise(errc::corrupt_snapshot, "bad manifest " + manifest_path);

  shards_.clear();
  for (const auto& entry : manifest) {
    std::string type = entry.at("product_type").get<std::string>();
    std::string file = entry.at("file").get<std::string>();
    shards_.emplace(type, IndexShard::load(live_dir + "/" + file));
  }
}

std::size_t Engine::indexed_items() const {
  std::size_t total = 0;
  for (const auto& [_, shard] : shards_) total += shard.size();
  return total;
}

std::vector<RankedResult> Engine::merge_shard_results(
    const EmbeddingVector& query, std::size_t k,
    const std::vector<const IndexShard*>& shards) {
  std::vector<RankedResult> merged;
  for (const IndexShard* shard : shards) {
    std::size_t ef = std::max<std::size_t>(shard->params().ef_search, k);
    auto results = shard->search(query, k, ef);
    merged.insert(merged.end(), results.begin(), results.end());
  }
  finalize_ranking(merged);
  if (merged.size() > k) merged.resize(k);
  return merged;
}

QueryTrace Engine::refine_text(const std::string& text,
                               const std::optional<std::string>& product_type) {
  ConcatText concat;
  concat.product_type = product_type.value_or("");
  concat.raw_text = text;
  std::vector<std::string> segments;
  if (!concat.product_type.empty()) segments.push_back(concat.product_type);
  if (!text.empty()) segments.push_back(text);
  concat.rendered = join_words(segments);
  return run_refinement_loop(concat, config_.agent, *agent_);
}

std::vector<RankedResult> Engine::query_text(const std::string& text, std::size_t k,
                                             const std::optional<std::string>& product_type,
                                             bool refine_query) {
  if (shards_.empty()) raise(errc::empty_index, "no index loaded");
  if (k < 1) raise(errc::invalid_argument, "k must be >= 1");

  std::string final_text = text;
  if (refine_query) {
    final_text = refine_text(text, product_type).final_query;
  }
  EmbeddingVector query = encode_text(final_text, *encoder_, config_.dim);

  std::vector<const IndexShard*> targets;
  if (product_type) {
    auto it = shards_.find(*product_type);
    if (it == shards_.end()) {
      raise(errc::empty_index, "no shard for product type '" + *product_type + "'");
    }
    targets.push_back(&it->second);
  } else {
    for (const auto& [_, shard] : shards_) targets.push_back(&shard);
  }
  return merge_shard_results(query, k, targets);
}

std::vector<RankedResult> Engine::query_similar(const std::string& item_id, std::size_t k) {
  if (shards_.empty()) raise(errc::empty_index, "no index loaded");
  ensure_store();
  EmbeddingVector anchor = store_->vector_of(item_id);  // UnknownItem if absent
  const std::string& type = store_->shard_key_of(item_id);
  auto it = shards_.find(type);
  if (it == shards_.end()) raise(errc::empty_index, "no shard for product type '" + type + "'");

  std::size_t ef = std::max<std::size_t>(it->second.params().ef_search, k + 1);
  auto results = it->second.search(anchor, k + 1, ef);
  std::erase_if(results, [&](const RankedResult& r) { return r.item_id == item_id; });
  if (results.size() > k) results.resize(k);
  for (std::size_t i = 0; i < results.size(); ++i) {
    results[i].rank = static_cast<std::uint32_t>(i + 1);
  }
  return results;
}

std::vector<EvalItem> Engine::make_eval_items(EvalProtocol protocol, std::size_t sample_size) {
  ensure_items();
  if (shards_.empty()) raise(errc::empty_index, "load the index before building eval items");

  std::vector<const CatalogItem*> indexed;
  for (const auto& item : *unique_items_) {
    const std::string* key = nullptr;
    try {
      key = &store_->shard_key_of(item.item_id);
    } catch (const Error&) {
      continue;  // quarantined at embed time
    }
    if (shards_.count(*key)) indexed.push_back(&item);
  }
  if (indexed.empty()) raise(errc::empty_index, "no indexed items to evaluate");

  std::vector<const CatalogItem*> sample = indexed;
  if (sample.size() > sample_size) {
    std::mt19937_64 rng(config_.seed);
    std::vector<const CatalogItem*> picked;
    std::sample(indexed.begin(), indexed.end(), std::back_inserter(picked), sample_size, rng);
    sample = std::move(picked);
  }

  std::vector<EvalItem> items;
  items.reserve(sample.size());
  for (const CatalogItem* item : sample) {
    EvalItem eval;
    eval.id = item->item_id;
    if (protocol == EvalProtocol::kQueryBased) {
      // The generated query targets the item it was templated from.
      eval.target_item = item->item_id;
      AgentRequest request;
      request.role = "querygen";
      request.fields.product_type = item->product_type;
      request.fields.gender_age = item->gender_age.value_or("");
      request.fields.raw_text = item->title;
      eval.query_text = agent_->complete(request);
    } else {
      // Anchors are excluded from their own results, so there is no
      // ground-truth target and rank metrics stay off.
      eval.anchor_item = item->item_id;
    }
    items.push_back(std::move(eval));
  }
  return items;
}

}  // namespace vlclip
