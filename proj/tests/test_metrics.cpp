#include <doctest.h>

#include <random>

#include "support/testutil.hpp"
#include "vlclip/metrics.hpp"

using namespace vlclip;

namespace {

std::vector<RankOutcome> outcomes_of(const std::vector<int>& ranks) {
  // rank <= 0 encodes NOT_FOUND
  std::vector<RankOutcome> out;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    RankOutcome o{"q" + std::to_string(i), std::nullopt};
    if (ranks[i] > 0) o.rank_of_correct = static_cast<std::uint32_t>(ranks[i]);
    out.push_back(o);
  }
  return out;
}

// Naive re-implementations used as the independent metric oracle.
double naive_hits(const std::vector<int>& ranks, std::size_t k) {
  double hits = 0;
  for (int r : ranks) {
    if (r > 0 && static_cast<std::size_t>(r) <= k) hits += 1;
  }
  return hits / static_cast<double>(ranks.size());
}

double naive_mrr(const std::vector<int>& ranks) {
  double total = 0;
  for (int r : ranks) {
    if (r > 0) total += 1.0 / r;
  }
  return total / static_cast<double>(ranks.size());
}

double naive_precision(const std::vector<int>& labels, std::size_t k) {
  double sum = 0;
  for (std::size_t i = 0; i < k; ++i) sum += labels[i];
  return sum / static_cast<double>(k);
}

}  // namespace

TEST_CASE("hits_at_k hand values") {
  CHECK(hits_at_k(outcomes_of({1, 6, 3}), 5) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(hits_at_k(outcomes_of({1, 2, 3, 4}), 5) == 1.0);  // saturated
  CHECK(hits_at_k(outcomes_of({-1, -1}), 5) == 0.0);      // NOT_FOUND scores zero
}

TEST_CASE("mrr hand values") {
  CHECK(mrr(outcomes_of({1, 1, 1})) == 1.0);
  CHECK(mrr(outcomes_of({1, 2, 4})) == doctest::Approx((1.0 + 0.5 + 0.25) / 3.0).epsilon(1e-12));
  CHECK(mrr(outcomes_of({-1, -1, -1})) == 0.0);
}

TEST_CASE("precision_at_k hand values") {
  JudgedList judged{"q", {1, 1, 0, 1, 0}};
  CHECK(precision_at_k(judged, 5) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(precision_at_k(JudgedList{"q", {0, 0, 0}}, 3) == 0.0);
  CHECK(precision_at_k(JudgedList{"q", {1, 0}}, 1) == 1.0);
  CHECK_THROWS_AS((void)precision_at_k(judged, 6), Error);
}

TEST_CASE("metrics match the naive oracle exactly on 1000 random cases") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + rng() % 40;
    std::vector<int> ranks(n);
    for (auto& r : ranks) {
      r = rng() % 4 == 0 ? -1 : static_cast<int>(1 + rng() % 30);
    }
    std::size_t k = 1 + rng() % 10;
    CHECK(std::abs(hits_at_k(outcomes_of(ranks), k) - naive_hits(ranks, k)) <= 1e-12);
    CHECK(std::abs(mrr(outcomes_of(ranks)) - naive_mrr(ranks)) <= 1e-12);

    std::vector<int> labels(n + k);
    for (auto& l : labels) l = static_cast<int>(rng() % 2);
    CHECK(std::abs(precision_at_k(JudgedList{"q", labels}, k) - naive_precision(labels, k)) <=
          1e-12);
  }
}

TEST_CASE("metric structure properties hold on random outcome sets") {
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 20;
    std::vector<int> ranks(n);
    for (auto& r : ranks) r = rng() % 5 == 0 ? -1 : static_cast<int>(1 + rng() % 25);
    auto outcomes = outcomes_of(ranks);

    // hits is non-decreasing in k
    double prev = 0.0;
    for (std::size_t k = 1; k <= 30; ++k) {
      double h = hits_at_k(outcomes, k);
      CHECK(h >= prev);
      prev = h;
    }
    // mrr never exceeds the found fraction (hits at unbounded depth)
    CHECK(mrr(outcomes) <= hits_at_k(outcomes, 1000) + 1e-12);

    // flipping a 0 to 1 inside the top-k never lowers precision
    std::vector<int> labels(25);
    for (auto& l : labels) l = static_cast<int>(rng() % 2);
    std::size_t k = 5 + rng() % 10;
    double before = precision_at_k(JudgedList{"q", labels}, k);
    for (std::size_t i = 0; i < k; ++i) {
      if (labels[i] == 0) {
        auto improved = labels;
        improved[i] = 1;
        CHECK(precision_at_k(JudgedList{"q", improved}, k) >= before);
      }
    }
  }
}

TEST_CASE("judge parses strict single-token verdicts only") {
  JudgePromptTemplates templates;
  JudgeRequest pair;
  pair.protocol = EvalProtocol::kQueryBased;
  pair.query_text = "teal blouse";

  ScriptedJudgeBackend yes({"1"});
  CHECK(judge(pair, templates, yes) == 1);

  ScriptedJudgeBackend no({"0\n"});
  CHECK(judge(pair, templates, no) == 0);

  ScriptedJudgeBackend chatty({"I think 1 maybe"});
  CHECK_THROWS_WITH_AS((void)judge(pair, templates, chatty),
                       doctest::Contains("UnparseableVerdict"), Error);

  ScriptedJudgeBackend empty({"   "});
  CHECK_THROWS_AS((void)judge(pair, templates, empty), Error);
}

TEST_CASE("mock judge applies the attribute-overlap rule") {
  std::vector<CatalogItem> catalog(2);
  catalog[0] = {"a", "/img/a.ppm", "blouse", std::nullopt, "teal floral blouse", ""};
  catalog[1] = {"b", "/img/b.ppm", "blouse", std::nullopt, "crimson solid blouse", ""};
  MockJudgeBackend backend(catalog);
  JudgePromptTemplates templates;

  JudgeRequest pair;
  pair.protocol = EvalProtocol::kQueryBased;
  pair.query_text = "teal floral blouse";
  pair.result_item_id = "a";
  CHECK(judge(pair, templates, backend) == 1);
  pair.result_item_id = "b";
  CHECK(judge(pair, templates, backend) == 0);
}

TEST_CASE("mock judge similar-item rule keys on product type and token overlap") {
  std::vector<CatalogItem> catalog(3);
  catalog[0] = {"a", "", "rug", std::nullopt, "woven geometric rug", ""};
  catalog[1] = {"b", "", "rug", std::nullopt, "flat woven runner", ""};
  catalog[2] = {"c", "", "lamp", std::nullopt, "woven shade lamp", ""};
  MockJudgeBackend backend(catalog);
  JudgePromptTemplates templates;

  JudgeRequest pair;
  pair.protocol = EvalProtocol::kSimilarItem;
  pair.anchor_item_id = "a";
  pair.result_item_id = "b";
  CHECK(judge(pair, templates, backend) == 1);  // same type, shares "woven"
  pair.result_item_id = "c";
  CHECK(judge(pair, templates, backend) == 0);  // different product type
}

TEST_CASE("evaluate_retrieval on a planted corpus reaches precision@1 of 1") {
  // synthetic corpus: each query is its target's exact title
  std::vector<CatalogItem> catalog;
  std::vector<EvalItem> items;
  for (int i = 0; i < 12; ++i) {
    CatalogItem item;
    item.item_id = "it" + std::to_string(i);
    item.product_type = "rug";
    item.title = "rug number " + std::to_string(i);
    catalog.push_back(item);

    EvalItem eval;
    eval.id = item.item_id;
    eval.query_text = item.title;
    eval.target_item = item.item_id;
    items.push_back(eval);
  }

  // retrieval always ranks the target first, then neighbors by index
  RetrieveFn retrieve = [&](const EvalItem& item, std::size_t k) {
    std::vector<RankedResult> results;
    results.push_back({item.target_item, 1.0f, 1});
    for (std::size_t j = 0; results.size() < k; ++j) {
      std::string other = "it" + std::to_string(j);
      if (other != item.target_item) {
        results.push_back({other, 0.5f - 0.01f * static_cast<float>(j),
                           static_cast<std::uint32_t>(results.size() + 1)});
      }
    }
    return results;
  };

  MockJudgeBackend backend(catalog);
  EvalConfig config;
  auto report = evaluate_retrieval(retrieve, items, EvalProtocol::kQueryBased, catalog, backend,
                                   config);
  CHECK(report.precision_at.size() == 3);  // ks {1,3,5}
  CHECK(report.precision_at.at(1) == 1.0);
  CHECK(report.has_rank_metrics);
  CHECK(report.hits_at_5 == 1.0);
  CHECK(report.mrr_value == 1.0);
  CHECK(report.evaluated == items.size());
  CHECK(report.skipped == 0);

  // json and table renderings carry the metric names
  CHECK(report.to_json().find("precision@1") != std::string::npos);
  CHECK(report.to_table().find("Precision@5") != std::string::npos);
}

TEST_CASE("a judge that always denies yields zero precision everywhere") {
  std::vector<CatalogItem> catalog(1);
  catalog[0].item_id = "x";
  catalog[0].product_type = "rug";

  std::vector<EvalItem> items(2);
  items[0] = {"q0", "anything", "", "x"};
  items[1] = {"q1", "anything", "", "x"};

  RetrieveFn retrieve = [&](const EvalItem&, std::size_t k) {
    std::vector<RankedResult> results;
    for (std::size_t j = 0; j < k; ++j) {
      results.push_back({"x", 1.0f - 0.01f * static_cast<float>(j),
                         static_cast<std::uint32_t>(j + 1)});
    }
    return results;
  };

  ScriptedJudgeBackend zeros(std::vector<std::string>(20, "0"));
  EvalConfig config;
  config.max_parallel_judges = 1;  // scripted backend is sequential
  auto report = evaluate_retrieval(retrieve, items, EvalProtocol::kQueryBased, catalog, zeros,
                                   config);
  for (const auto& [k, v] : report.precision_at) CHECK(v == 0.0);
}

TEST_CASE("scripted verdict sessions reproduce the report bit for bit") {
  std::vector<CatalogItem> catalog(1);
  catalog[0].item_id = "x";
  catalog[0].product_type = "rug";
  std::vector<EvalItem> items(1);
  items[0] = {"q0", "query", "", "x"};

  RetrieveFn retrieve = [&](const EvalItem&, std::size_t k) {
    std::vector<RankedResult> results;
    for (std::size_t j = 0; j < k; ++j) {
      results.push_back({"x", 1.0f, static_cast<std::uint32_t>(j + 1)});
    }
    return results;
  };

  std::vector<std::string> verdicts = {"1", "0", "1", "1", "0", "1", "0", "0", "1", "1"};
  EvalConfig config;
  config.max_parallel_judges = 1;

  ScriptedJudgeBackend first(verdicts);
  auto a = evaluate_retrieval(retrieve, items, EvalProtocol::kQueryBased, catalog, first, config);
  ScriptedJudgeBackend second(verdicts);
  auto b = evaluate_retrieval(retrieve, items, EvalProtocol::kQueryBased, catalog, second, config);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("retrieval failures are salvaged into the report") {
  std::vector<CatalogItem> catalog(1);
  catalog[0].item_id = "x";
  catalog[0].product_type = "rug";
  std::vector<EvalItem> items(2);
  items[0] = {"ok", "query", "", ""};
  items[1] = {"boom", "query", "", ""};

  RetrieveFn retrieve = [&](const EvalItem& item, std::size_t k) {
    if (item.id == "boom") raise(errc::empty_index, "shard gone");
    std::vector<RankedResult> results;
    for (std::size_t j = 0; j < k; ++j) {
      results.push_back({"x", 1.0f, static_cast<std::uint32_t>(j + 1)});
    }
    return results;
  };

  ScriptedJudgeBackend ones(std::vector<std::string>(10, "1"));
  EvalConfig config;
  config.max_parallel_judges = 1;
  auto report =
      evaluate_retrieval(retrieve, items, EvalProtocol::kQueryBased, catalog, ones, config);
  CHECK(report.evaluated == 1);
  CHECK(report.skipped == 1);
  REQUIRE(report.errors.size() == 1);
  CHECK(report.errors[0].find("boom") != std::string::npos);
}
