#include "vlclip/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

namespace vlclip {

double HnswParams::level_multiplier() const { return 1.0 / std::log(static_cast<double>(M)); }

void HnswParams::validate() const {
  if (M < 2) raise(errc::invalid_argument, "HNSW M must be >= 2");
  if (ef_construction < M) raise(errc::invalid_argument, "ef_construction must be >= M");
  if (ef_search < 1) raise(errc::invalid_argument, "ef_search must be >= 1");
  if (dim == 0) raise(errc::invalid_argument, "dim must be positive");
}

int assign_level_from_uniform(double u, double multiplier) {
  if (u <= 0.0 || u > 1.0) raise(errc::invalid_argument, "U must be in (0, 1]");
  return static_cast<int>(std::floor(-std::log(u) * multiplier));
}

int assign_level(std::mt19937_64& rng, double multiplier) {
  // 53-bit draw mapped to (0, 1] so ln is always finite.
  double u = (static_cast<double>(rng() >> 11) + 1.0) * 0x1p-53;
  return assign_level_from_uniform(u, multiplier);
}

void VectorSet::add(const std::string& id, const EmbeddingVector& v) {
  if (dim == 0) dim = static_cast<std::uint32_t>(v.dim());
  if (v.dim() != dim) raise(errc::dimension_mismatch, "vector dim mismatch in set");
  ids.push_back(id);
  data.insert(data.end(), v.values.begin(), v.values.end());
}

namespace {

float dot_span(const float* a, const float* b, std::size_t dim) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < dim; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

std::vector<RankedResult> brute_force_search(const VectorSet& set, const EmbeddingVector& query,
                                             std::size_t k) {
  if (k < 1) raise(errc::invalid_argument, "k must be >= 1");
  if (query.dim() != set.dim) raise(errc::dimension_mismatch, "query dim mismatch");

  std::vector<RankedResult> all(set.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(set.size()); ++i) {
    auto idx = static_cast<std::size_t>(i);
    all[idx].item_id = set.ids[idx];
    all[idx].similarity = dot_span(set.row(idx).data(), query.values.data(), set.dim);
  }
  std::sort(all.begin(), all.end(), ranked_before);
  if (all.size() > k) all.resize(k);
  for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = static_cast<std::uint32_t>(i + 1);
  return all;
}

// ---------------------------------------------------------------------------
// IndexShard
// ---------------------------------------------------------------------------

IndexShard::IndexShard(std::string product_type, HnswParams params)
    : product_type_(std::move(product_type)), params_(params) {
  params_.validate();
  rng_.seed(params_.rng_seed ^ fnv1a64(product_type_));
}

float IndexShard::sim(std::uint32_t node, const float* query) const {
  return dot_span(&vectors_[static_cast<std::size_t>(node) * params_.dim], query, params_.dim);
}

EmbeddingVector IndexShard::vector_of(const std::string& item_id) const {
  auto it = id_to_node_.find(item_id);
  if (it == id_to_node_.end()) raise(errc::unknown_item, item_id);
  const float* base = &vectors_[static_cast<std::size_t>(it->second) * params_.dim];
  return EmbeddingVector{std::vector<float>(base, base + params_.dim)};
}

std::vector<std::uint32_t> IndexShard::search_layer(const float* query,
                                                    std::span<const std::uint32_t> entries,
                                                    std::size_t ef, int layer) const {
  // Both heaps order by (similarity, node index) so traversal is fully
  // deterministic even under similarity ties.
  using Scored = std::pair<float, std::uint32_t>;
  auto better = [](const Scored& a, const Scored& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  auto worse = [&better](const Scored& a, const Scored& b) { return better(b, a); };

  std::priority_queue<Scored, std::vector<Scored>, decltype(worse)> candidates(worse);
  std::priority_queue<Scored, std::vector<Scored>, decltype(better)> results(better);
  std::vector<bool> visited(ids_.size(), false);

  for (std::uint32_t entry : entries) {
    if (visited[entry]) continue;
    visited[entry] = true;
    Scored seed{sim(entry, query), entry};
    candidates.push(seed);
    results.push(seed);
    if (results.size() > ef) results.pop();
  }

  while (!candidates.empty()) {
    Scored current = candidates.top();
    candidates.pop();
    if (results.size() >= ef && worse(current, results.top())) break;

    for (std::uint32_t nb : links_[current.second][static_cast<std::size_t>(layer)]) {
      if (visited[nb]) continue;
      visited[nb] = true;
      Scored scored{sim(nb, query), nb};
      if (results.size() < ef || better(scored, results.top())) {
        candidates.push(scored);
        results.push(scored);
        if (results.size() > ef) results.pop();
      }
    }
  }

  std::vector<Scored> sorted;
  sorted.reserve(results.size());
  while (!results.empty()) {
    sorted.push_back(results.top());
    results.pop();
  }
  std::sort(sorted.begin(), sorted.end(), better);
  std::vector<std::uint32_t> out;
  out.reserve(sorted.size());
  for (const auto& s : sorted) out.push_back(s.second);
  return out;
}

void IndexShard::link(std::uint32_t a, std::uint32_t b, int layer) {
  auto& list = links_[a][static_cast<std::size_t>(layer)];
  auto it = std::lower_bound(list.begin(), list.end(), b);
  if (it == list.end() || *it != b) list.insert(it, b);
}

std::vector<std::uint32_t> IndexShard::select_diverse(
    const float* base, const std::vector<std::uint32_t>& by_similarity, std::size_t cap) const {
  // Keep a candidate only when it is closer to the base than to every
  // neighbor kept so far, then backfill the remaining slots with the nearest
  // rejected candidates.
  std::vector<std::uint32_t> kept;
  std::vector<std::uint32_t> rejected;
  for (std::uint32_t candidate : by_similarity) {
    if (kept.size() >= cap) break;
    float to_base = sim(candidate, base);
    bool diverse = true;
    for (std::uint32_t existing : kept) {
      const float* ev = &vectors_[static_cast<std::size_t>(existing) * params_.dim];
      if (sim(candidate, ev) > to_base) {
        diverse = false;
        break;
      }
    }
    (diverse ? kept : rejected).push_back(candidate);
  }
  for (std::uint32_t candidate : rejected) {
    if (kept.size() >= cap) break;
    kept.push_back(candidate);
  }
  return kept;
}

void IndexShard::prune(std::uint32_t node, int layer) {
  auto& list = links_[node][static_cast<std::size_t>(layer)];
  std::uint32_t cap = layer_cap(layer);
  if (list.size() <= cap) return;

  const float* base = &vectors_[static_cast<std::size_t>(node) * params_.dim];
  std::vector<std::pair<float, std::uint32_t>> scored;
  scored.reserve(list.size());
  for (std::uint32_t nb : list) scored.emplace_back(sim(nb, base), nb);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::uint32_t> by_similarity;
  by_similarity.reserve(scored.size());
  for (const auto& [_, nb] : scored) by_similarity.push_back(nb);

  std::vector<std::uint32_t> kept = select_diverse(base, by_similarity, cap);
  std::sort(kept.begin(), kept.end());

  // Symmetric drop: removed neighbors forget this node too. Each dropped
  // neighbor gets one repair edge to its closest kept node with spare
  // capacity, so the cut does not strand it.
  std::vector<std::uint32_t> dropped;
  for (std::uint32_t nb : by_similarity) {
    if (std::binary_search(kept.begin(), kept.end(), nb)) continue;
    auto& other = links_[nb][static_cast<std::size_t>(layer)];
    auto it = std::lower_bound(other.begin(), other.end(), node);
    if (it != other.end() && *it == node) other.erase(it);
    dropped.push_back(nb);
  }
  list = std::move(kept);

  for (std::uint32_t nb : dropped) {
    auto& nb_list = links_[nb][static_cast<std::size_t>(layer)];
    if (nb_list.size() >= cap) continue;
    const float* nbv = &vectors_[static_cast<std::size_t>(nb) * params_.dim];
    std::uint32_t best = UINT32_MAX;
    float best_sim = -2.0f;
    for (std::uint32_t candidate : list) {
      if (candidate == nb) continue;
      const auto& cand_list = links_[candidate][static_cast<std::size_t>(layer)];
      if (cand_list.size() >= cap) continue;
      if (std::binary_search(nb_list.begin(), nb_list.end(), candidate)) continue;
      float s = sim(candidate, nbv);
      if (s > best_sim || (s == best_sim && candidate < best)) {
        best_sim = s;
        best = candidate;
      }
    }
    if (best != UINT32_MAX) {
      link(nb, best, layer);
      link(best, nb, layer);
    }
  }
}

void IndexShard::insert(const std::string& item_id, const EmbeddingVector& vector) {
  if (vector.dim() != params_.dim) {
    raise(errc::dimension_mismatch, "insert dim " + std::to_string(vector.dim()) +
                                        " into shard dim " + std::to_string(params_.dim));
  }
  if (!vector.unit_norm()) raise(errc::invalid_argument, "vector must be unit norm");
  if (id_to_node_.count(item_id)) raise(errc::duplicate_vector_id, item_id);

  int level = assign_level(rng_, params_.level_multiplier());
  std::uint32_t node = static_cast<std::uint32_t>(ids_.size());
  ids_.push_back(item_id);
  id_to_node_.emplace(item_id, node);
  vectors_.insert(vectors_.end(), vector.values.begin(), vector.values.end());
  levels_.push_back(level);
  links_.emplace_back(static_cast<std::size_t>(level) + 1);

  if (node == 0) {
    entry_point_ = 0;
    max_level_ = level;
    return;
  }

  const float* query = &vectors_[static_cast<std::size_t>(node) * params_.dim];
  const std::size_t descend_beam = 8;
  std::vector<std::uint32_t> entries{entry_point_};
  for (int layer = max_level_; layer > level; --layer) {
    entries = search_layer(query, entries, descend_beam, layer);
  }

  for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
    auto candidates = search_layer(query, entries, params_.ef_construction, layer);
    entries.assign(candidates.begin(),
                   candidates.begin() + std::min<std::size_t>(candidates.size(), descend_beam));

    auto chosen = select_diverse(query, candidates, layer_cap(layer));
    for (std::uint32_t nb : chosen) {
      link(node, nb, layer);
      link(nb, node, layer);
    }
    for (std::uint32_t nb : chosen) prune(nb, layer);
    prune(node, layer);
  }

  if (level > max_level_) {
    max_level_ = level;
    entry_point_ = node;
  }
}

std::vector<RankedResult> IndexShard::search(const EmbeddingVector& query, std::size_t k,
                                             std::size_t ef) const {
  if (ids_.empty()) raise(errc::empty_index, "shard '" + product_type_ + "' is empty");
  if (k < 1) raise(errc::invalid_argument, "k must be >= 1");
  if (ef < k) raise(errc::invalid_argument, "ef must be >= k");
  if (query.dim() != params_.dim) raise(errc::dimension_mismatch, "query dim mismatch");

  // A small beam through the upper layers multi-seeds the layer-0 search,
  // which recovers tail neighbors that a single greedy entry would miss.
  const std::size_t upper_beam = std::min<std::size_t>(16, ef);
  const float* q = query.values.data();
  std::vector<std::uint32_t> seeds{entry_point_};
  for (int layer = max_level_; layer >= 1; --layer) {
    seeds = search_layer(q, seeds, upper_beam, layer);
  }
  auto found = search_layer(q, seeds, ef, 0);

  std::vector<RankedResult> results;
  results.reserve(found.size());
  for (std::uint32_t node : found) {
    results.push_back({ids_[node], sim(node, q), 0});
  }
  finalize_ranking(results);
  if (results.size() > k) {
    results.resize(k);
  }
  return results;
}

std::vector<std::string> IndexShard::audit() const {
  std::vector<std::string> problems;
  auto complain = [&](const std::string& p) { problems.push_back(p); };

  if (!ids_.empty()) {
    if (entry_point_ >= ids_.size()) {
      complain("entry point out of range");
    } else if (levels_[entry_point_] != max_level_) {
      complain("entry point level != max level");
    }
  }
  for (std::uint32_t node = 0; node < ids_.size(); ++node) {
    if (levels_[node] > max_level_) complain("node above max level");
    if (links_[node].size() != static_cast<std::size_t>(levels_[node]) + 1) {
      complain("layer list count mismatch at node " + std::to_string(node));
    }
    const float* base = &vectors_[static_cast<std::size_t>(node) * params_.dim];
    double sq = 0.0;
    for (std::uint32_t d = 0; d < params_.dim; ++d) sq += static_cast<double>(base[d]) * base[d];
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
      complain("vector not unit norm at node " + std::to_string(node));
    }
    for (int layer = 0; layer <= levels_[node]; ++layer) {
      const auto& list = links_[node][static_cast<std::size_t>(layer)];
      if (list.size() > layer_cap(layer)) {
        complain("degree cap exceeded at node " + std::to_string(node) + " layer " +
                 std::to_string(layer));
      }
      if (!std::is_sorted(list.begin(), list.end())) {
        complain("adjacency not in canonical order at node " + std::to_string(node));
      }
      for (std::uint32_t nb : list) {
        if (nb >= ids_.size()) {
          complain("neighbor out of range at node " + std::to_string(node));
          continue;
        }
        if (nb == node) complain("self loop at node " + std::to_string(node));
        if (levels_[nb] < layer) {
          complain("neighbor below layer at node " + std::to_string(node));
          continue;
        }
        const auto& back = links_[nb][static_cast<std::size_t>(layer)];
        if (!std::binary_search(back.begin(), back.end(), node)) {
          complain("asymmetric link " + std::to_string(node) + "->" + std::to_string(nb));
        }
      }
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Snapshot io
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "VLHNSW01";
constexpr std::size_t kMagicLen = 8;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(u(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u(4)); }
  std::uint64_t u64() { return u(8); }
  std::uint64_t varint() { return varint_decode(data_, offset_); }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + offset_), n);
    offset_ += n;
    return s;
  }

  void floats(float* dst, std::size_t count) {
    need(count * 4);
    std::memcpy(dst, data_.data() + offset_, count * 4);
    offset_ += count * 4;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::uint64_t u(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(data_[offset_ + static_cast<std::size_t>(i)]) << (8 * i);
    }
    offset_ += static_cast<std::size_t>(bytes);
    return v;
  }
  void need(std::size_t n) {
    if (offset_ + n > data_.size()) raise(errc::corrupt_snapshot, "truncated snapshot");
  }

  std::span<const std::uint8_t> data_;
  std::size_t offset_ = 0;
};

}  // namespace

void IndexShard::save(const std::string& path) const {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + kMagicLen);

  // params section
  put_u32(buf, params_.M);
  put_u32(buf, params_.M0);
  put_u32(buf, params_.ef_construction);
  put_u32(buf, params_.ef_search);
  put_u64(buf, params_.rng_seed);
  put_u32(buf, params_.dim);
  put_u16(buf, static_cast<std::uint16_t>(product_type_.size()));
  buf.insert(buf.end(), product_type_.begin(), product_type_.end());
  put_u32(buf, static_cast<std::uint32_t>(ids_.size()));
  put_u32(buf, entry_point_);
  put_u32(buf, static_cast<std::uint32_t>(max_level_ + 1));

  // id table
  for (const auto& id : ids_) {
    put_u16(buf, static_cast<std::uint16_t>(id.size()));
    buf.insert(buf.end(), id.begin(), id.end());
  }

  // vector block
  std::size_t vec_bytes = vectors_.size() * 4;
  std::size_t pos = buf.size();
  buf.resize(pos + vec_bytes);
  std::memcpy(buf.data() + pos, vectors_.data(), vec_bytes);

  // adjacency: per node, level then per-layer delta-encoded sorted lists
  for (std::uint32_t node = 0; node < ids_.size(); ++node) {
    varint_encode(static_cast<std::uint64_t>(levels_[node]), buf);
    for (int layer = 0; layer <= levels_[node]; ++layer) {
      const auto& list = links_[node][static_cast<std::size_t>(layer)];
      varint_encode(list.size(), buf);
      std::uint32_t prev = 0;
      for (std::size_t i = 0; i < list.size(); ++i) {
        std::uint32_t delta = i == 0 ? list[i] : list[i] - prev;
        varint_encode(delta, buf);
        prev = list[i];
      }
    }
  }

  put_u32(buf, crc32(std::span<const std::uint8_t>(buf.data(), buf.size())));

  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::io_error, "cannot write snapshot " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) raise(errc::io_error, "short write to " + path);
}

IndexShard IndexShard::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::io_error, "cannot read snapshot " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());

  if (buf.size() < kMagicLen + 4) raise(errc::corrupt_snapshot, "snapshot too small");
  if (std::memcmp(buf.data(), "VLHNSW", 6) != 0) {
    raise(errc::corrupt_snapshot, "bad magic in " + path);
  }
  if (std::memcmp(buf.data(), kMagic, kMagicLen) != 0) {
    raise(errc::version_mismatch,
          "snapshot version " + std::string(reinterpret_cast<char*>(buf.data()) + 6, 2) +
              " not supported");
  }

  std::size_t payload = buf.size() - 4;
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) {
    stored_crc |= static_cast<std::uint32_t>(buf[payload + static_cast<std::size_t>(i)]) << (8 * i);
  }
  if (crc32(std::span<const std::uint8_t>(buf.data(), payload)) != stored_crc) {
    raise(errc::corrupt_snapshot, "checksum mismatch in " + path);
  }

  Reader r(std::span<const std::uint8_t>(buf.data() + kMagicLen, payload - kMagicLen));
  HnswParams params;
  params.M = r.u32();
  params.M0 = r.u32();
  params.ef_construction = r.u32();
  params.ef_search = r.u32();
  params.rng_seed = r.u64();
  params.dim = r.u32();
  std::string product_type = r.str(r.u16());
  std::uint32_t count = r.u32();
  std::uint32_t entry = r.u32();
  int max_level = static_cast<int>(r.u32()) - 1;

  IndexShard shard(product_type, params);
  shard.ids_.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = r.str(r.u16());
    shard.id_to_node_.emplace(id, i);
    shard.ids_.push_back(std::move(id));
  }
  shard.vectors_.resize(static_cast<std::size_t>(count) * params.dim);
  r.floats(shard.vectors_.data(), shard.vectors_.size());

  shard.levels_.resize(count);
  shard.links_.resize(count);
  for (std::uint32_t node = 0; node < count; ++node) {
    int level = static_cast<int>(r.varint());
    shard.levels_[node] = level;
    shard.links_[node].resize(static_cast<std::size_t>(level) + 1);
    for (int layer = 0; layer <= level; ++layer) {
      std::size_t n = r.varint();
      auto& list = shard.links_[node][static_cast<std::size_t>(layer)];
      list.reserve(n);
      std::uint32_t prev = 0;
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t v = (i == 0 ? 0 : prev) + static_cast<std::uint32_t>(r.varint());
        list.push_back(v);
        prev = v;
      }
    }
  }
  shard.entry_point_ = entry;
  shard.max_level_ = max_level;

  if (count > 0 && entry >= count) raise(errc::corrupt_snapshot, "entry point out of range");
  return shard;
}

}  // namespace vlclip
