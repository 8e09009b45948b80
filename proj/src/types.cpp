#include "vlclip/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace vlclip {

std::string CatalogItem::raw_text() const {
  if (title.empty()) return description;
  if (description.empty()) return title;
  return title + " " + description;
}

bool EmbeddingVector::unit_norm(float tol) const {
  double sq = 0.0;
  for (float v : values) sq += static_cast<double>(v) * v;
  return std::abs(std::sqrt(sq) - 1.0) <= tol;
}

float dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    raise(errc::dimension_mismatch,
          "dot over " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    acc += static_cast<double>(a.values[i]) * b.values[i];
  }
  return static_cast<float>(acc);
}

std::string to_hex(Hash64 h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h.bits));
  return std::string(buf, 16);
}

Hash64 hash64_from_hex(const std::string& hex) {
  if (hex.size() != 16) raise(errc::malformed_record, "hash hex must be 16 digits");
  return Hash64{std::stoull(hex, nullptr, 16)};
}

bool ranked_before(const RankedResult& a, const RankedResult& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.item_id < b.item_id;
}

void finalize_ranking(std::vector<RankedResult>& results) {
  std::sort(results.begin(), results.end(), ranked_before);
  for (std::size_t i = 0; i < results.size(); ++i) {
    results[i].rank = static_cast<std::uint32_t>(i + 1);
  }
}

CatalogValidation validate_catalog(std::vector<CatalogItem> items) {
  CatalogValidation out;
  std::unordered_set<std::string> seen;
  for (const auto& item : items) {
    if (item.item_id.empty()) {
      out.violations.push_back({errc::malformed_record, item.item_id, "empty item_id"});
    } else if (!seen.insert(item.item_id).second) {
      out.violations.push_back({errc::duplicate_id, item.item_id, "item_id reused"});
    }
    if (item.product_type.empty()) {
      out.violations.push_back({errc::empty_product_type, item.item_id, "product_type empty"});
    }
  }
  out.items = std::move(items);
  return out;
}

CatalogValidation load_catalog_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io_error, "cannot open catalog " + path);

  CatalogValidation parsed;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      parsed.violations.push_back(
          {errc::malformed_record, "", "line " + std::to_string(lineno) + " is not a JSON object"});
      continue;
    }
    try {
      CatalogItem item;
      item.item_id = j.at("item_id").get<std::string>();
      item.image_ref = j.at("image_ref").get<std::string>();
      item.product_type = j.at("product_type").get<std::string>();
      if (j.contains("gender_age") && !j["gender_age"].is_null()) {
        item.gender_age = j["gender_age"].get<std::string>();
      }
      item.title = j.value("title", "");
      item.description = j.value("description", "");
      parsed.items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      parsed.violations.push_back(
          {errc::malformed_record, "", "line " + std::to_string(lineno) + ": " + e.what()});
    }
  }

  CatalogValidation out = validate_catalog(std::move(parsed.items));
  out.violations.insert(out.violations.begin(), parsed.violations.begin(),
                        parsed.violations.end());
  return out;
}

void save_catalog_jsonl(const std::vector<CatalogItem>& items, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::io_error, "cannot write catalog " + path);
  for (const auto& item : items) {
    nlohmann::json j{
        {"item_id", item.item_id},         {"image_ref", item.image_ref},
        {"product_type", item.product_type},
        {"gender_age", item.gender_age ? nlohmann::json(*item.gender_age) : nlohmann::json()},
        {"title", item.title},             {"description", item.description},
    };
    out << j.dump() << "\n";
  }
}

}  // namespace vlclip
