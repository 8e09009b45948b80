#include <doctest.h>

#include "vlclip/agent.hpp"
#include "vlclip/metrics.hpp"
#include "vlclip/pipeline.hpp"

using namespace vlclip;

TEST_CASE("shipped prompt files match the built-in defaults") {
  auto defaults = PromptTemplates::defaults();
  auto loaded = PromptTemplates::load_dir(std::string(VLCLIP_CONFIG_DIR) + "/prompts");
  CHECK(loaded.summarizer_system == defaults.summarizer_system);
  CHECK(loaded.summarizer_user == defaults.summarizer_user);
  CHECK(loaded.evaluator_system == defaults.evaluator_system);
  CHECK(loaded.evaluator_user == defaults.evaluator_user);
  CHECK(loaded.refiner_system == defaults.refiner_system);
  CHECK(loaded.refiner_user == defaults.refiner_user);

  auto judge_defaults = JudgePromptTemplates::defaults();
  auto judge_loaded = JudgePromptTemplates::load_dir(std::string(VLCLIP_CONFIG_DIR) + "/prompts");
  CHECK(judge_loaded.query_based == judge_defaults.query_based);
  CHECK(judge_loaded.similar_item == judge_defaults.similar_item);
}

TEST_CASE("the shipped default config parses with stock values") {
  auto config = EngineConfig::from_file(std::string(VLCLIP_CONFIG_DIR) + "/default.conf");
  CHECK(config.dim == 512);
  CHECK(config.hnsw.M == 16);
  CHECK(config.hnsw.ef_construction == 200);
  CHECK(config.hnsw.ef_search == 100);
  CHECK(config.dedup_threshold == 4);
  CHECK(config.grounding.tau_thresh == 0.35);
  CHECK(config.agent.max_iterations == 5);
  CHECK(config.top_k_default == 10);
  CHECK(config.encoder.kind == EncoderBackendDescriptor::Kind::kDeterministicTest);
}
