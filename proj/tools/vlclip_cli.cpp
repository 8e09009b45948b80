// Command-line front end: ingest -> index -> query/eval/serve, plus
// projection-head training over exported embedding pairs.
#include <algorithm>
#include <iostream>
#include <numeric>
#include <random>

#include <filesystem>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlclip/image.hpp"
#include "vlclip/metrics.hpp"
#include "vlclip/pipeline.hpp"
#include "vlclip/service.hpp"
#include "vlclip/trainer.hpp"

using namespace vlclip;

namespace {

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

EngineConfig load_config(const CommonOpts& opts) {
  EngineConfig config;
  if (!opts.config_path.empty()) config = EngineConfig::from_file(opts.config_path);
  if (opts.seed_set) config.seed = opts.seed;
  return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key=value config file");
  cmd->add_option("--seed", opts.seed, "engine seed")->each([&opts](const std::string&) {
    opts.seed_set = true;
  });
}

void print_results(const std::vector<RankedResult>& results) {
  for (const auto& r : results) {
    std::cout << r.rank << "\t" << r.item_id << "\t" << r.similarity << "\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"vlclip: multimodal product retrieval engine"};
  app.require_subcommand(1);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "validate, hash, and dedup a catalog");
  CommonOpts ingest_opts;
  std::string ingest_catalog, ingest_out;
  ingest_cmd->add_option("--catalog", ingest_catalog, "catalog JSONL")->required();
  ingest_cmd->add_option("--out", ingest_out, "store directory")->required();
  add_common(ingest_cmd, ingest_opts);

  // index
  auto* index_cmd = app.add_subcommand("index", "ground, embed, and build HNSW shards");
  CommonOpts index_opts;
  std::string index_store;
  index_cmd->add_option("--store", index_store, "store directory")->required();
  add_common(index_cmd, index_opts);

  // query
  auto* query_cmd = app.add_subcommand("query", "search the index");
  CommonOpts query_opts;
  std::string query_store, query_text_arg, query_item, query_type;
  std::size_t query_k = 0;
  bool query_refine = false;
  query_cmd->add_option("--store", query_store, "store directory")->required();
  query_cmd->add_option("--text", query_text_arg, "text query");
  query_cmd->add_option("--item", query_item, "anchor item id for similar-item search");
  query_cmd->add_option("--k", query_k, "results to return");
  query_cmd->add_option("--type", query_type, "restrict to one product type shard");
  query_cmd->add_flag("--refine", query_refine, "run the query refinement loop first");
  add_common(query_cmd, query_opts);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "judge-based retrieval evaluation");
  CommonOpts eval_opts;
  std::string eval_store, eval_protocol = "query", eval_out;
  std::size_t eval_sample = 100;
  eval_cmd->add_option("--store", eval_store, "store directory")->required();
  eval_cmd->add_option("--protocol", eval_protocol, "query | similar")
      ->check(CLI::IsMember({"query", "similar"}));
  eval_cmd->add_option("--out", eval_out, "report JSON path")->required();
  eval_cmd->add_option("--sample", eval_sample, "evaluation sample size");
  add_common(eval_cmd, eval_opts);

  // train
  auto* train_cmd = app.add_subcommand("train", "fit projection heads on embedding pairs");
  CommonOpts train_opts;
  std::string train_pairs, train_out;
  double train_val_fraction = 0.2;
  TrainConfig train_config;
  train_cmd->add_option("--pairs", train_pairs, "pairs JSONL (id, image, text)")->required();
  train_cmd->add_option("--out", train_out, "output heads file")->required();
  train_cmd->add_option("--val-fraction", train_val_fraction, "validation split fraction");
  train_cmd->add_option("--epochs", train_config.epochs, "epoch limit");
  train_cmd->add_option("--lr", train_config.learning_rate, "learning rate");
  train_cmd->add_option("--batch", train_config.batch_size, "mini-batch size");
  train_cmd->add_option("--patience", train_config.patience, "early stopping patience");
  add_common(train_cmd, train_opts);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the query service");
  CommonOpts serve_opts;
  std::string serve_store, serve_bind;
  serve_cmd->add_option("--store", serve_store, "store directory")->required();
  serve_cmd->add_option("--bind", serve_bind, "host:port (default from config)");
  add_common(serve_cmd, serve_opts);

  // synth
  auto* synth_cmd = app.add_subcommand(
      "synth", "generate a synthetic payload-stamped catalog for the test encoder");
  CommonOpts synth_opts;
  std::string synth_out;
  std::size_t synth_items = 100, synth_duplicates = 0;
  std::string synth_types = "rug,lamp,dress";
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--items", synth_items, "item count");
  synth_cmd->add_option("--duplicates", synth_duplicates, "planted exact duplicates");
  synth_cmd->add_option("--types", synth_types, "comma-separated product types");
  add_common(synth_cmd, synth_opts);

  CLI11_PARSE(app, argc, argv);

  if (ingest_cmd->parsed()) {
    EngineConfig config = load_config(ingest_opts);
    config.catalog_path = ingest_catalog;
    config.store_dir = ingest_out;
    Engine engine(config);
    auto result = engine.ingest();
    std::cout << "catalog items:  " << result.catalog_items << "\n"
              << "unique items:   " << result.unique_items.size() << "\n"
              << "duplicates:     " << result.report.duplicate_map.size() << "\n"
              << "quarantined:    " << result.quarantined.size() << "\n";
    return 0;
  }

  if (index_cmd->parsed()) {
    EngineConfig config = load_config(index_opts);
    config.store_dir = index_store;
    Engine engine(config);
    auto result = engine.build_index();
    std::cout << "embedded:  " << result.embedded << "\n"
              << "reused:    " << result.reused << "\n"
              << "shards:    " << result.shard_types.size() << "\n";
    for (const auto& type : result.shard_types) std::cout << "  " << type << "\n";
    if (!result.quarantined.empty()) {
      std::cout << "quarantined: " << result.quarantined.size() << "\n";
    }
    return 0;
  }

  if (query_cmd->parsed()) {
    if (query_text_arg.empty() == query_item.empty()) {
      std::cerr << "provide exactly one of --text or --item\n";
      return 2;
    }
    EngineConfig config = load_config(query_opts);
    config.store_dir = query_store;
    Engine engine(config);
    engine.load_index();
    std::size_t k = query_k ? query_k : config.top_k_default;
    std::optional<std::string> type;
    if (!query_type.empty()) type = query_type;
    if (!query_text_arg.empty()) {
      print_results(engine.query_text(query_text_arg, k, type, query_refine));
    } else {
      print_results(engine.query_similar(query_item, k));
    }
    return 0;
  }

  if (eval_cmd->parsed()) {
    EngineConfig config = load_config(eval_opts);
    config.store_dir = eval_store;
    Engine engine(config);
    engine.load_index();

    EvalProtocol protocol =
        eval_protocol == "query" ? EvalProtocol::kQueryBased : EvalProtocol::kSimilarItem;
    auto items = engine.make_eval_items(protocol, eval_sample);
    auto judge_backend = engine.make_judge_backend();

    RetrieveFn retrieve = [&](const EvalItem& item, std::size_t k) {
      if (protocol == EvalProtocol::kQueryBased) {
        return engine.query_text(item.query_text, k, std::nullopt, false);
      }
      return engine.query_similar(item.anchor_item, k);
    };

    EvalConfig eval_config;
    if (!config.prompt_dir.empty()) {
      eval_config.templates = JudgePromptTemplates::load_dir(config.prompt_dir);
    }
    auto report = evaluate_retrieval(retrieve, items, protocol, engine.unique_items(),
                                     *judge_backend, eval_config);
    std::ofstream out(eval_out);
    out << report.to_json() << "\n";
    std::cout << report.to_table();
    return 0;
  }

  if (train_cmd->parsed()) {
    auto dataset = load_pairs_jsonl(train_pairs);
    if (train_opts.seed_set) train_config.seed = train_opts.seed;

    // deterministic shuffled split
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(train_config.seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t val_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(dataset.size()) * train_val_fraction));
    if (val_count >= dataset.size()) {
      std::cerr << "validation fraction leaves no training data\n";
      return 2;
    }

    auto take = [&](std::size_t begin, std::size_t end) {
      PairDataset out;
      out.images = Mat(end - begin, dataset.images.cols);
      out.texts = Mat(end - begin, dataset.texts.cols);
      for (std::size_t i = begin; i < end; ++i) {
        out.ids.push_back(dataset.ids[order[i]]);
        std::copy(dataset.images.row(order[i]),
                  dataset.images.row(order[i]) + dataset.images.cols,
                  out.images.row(i - begin));
        std::copy(dataset.texts.row(order[i]), dataset.texts.row(order[i]) + dataset.texts.cols,
                  out.texts.row(i - begin));
      }
      return out;
    };
    PairDataset validation = take(0, val_count);
    PairDataset train_split = take(val_count, dataset.size());

    auto result = fit(train_split, validation, train_config);
    save_heads(result.image_head, result.text_head, train_out);
    result.history.save_csv(train_out + ".history.csv");
    std::cout << "epochs run:    " << result.history.epochs.size() << "\n"
              << "best epoch:    " << result.history.best_epoch << "\n"
              << "best val loss: "
              << result.history.epochs[result.history.best_epoch].validation_loss << "\n"
              << "recall@10:     "
              << result.history.epochs[result.history.best_epoch].recall_at_10 << "\n"
              << "stopped early: " << (result.history.stopped_early ? "yes" : "no") << "\n";
    return 0;
  }

  if (synth_cmd->parsed()) {
    static const char* kColors[] = {"teal",  "black", "white", "beige", "navy",
                                    "green", "red",   "blue",  "ivory", "brown"};
    static const char* kPatterns[] = {"striped", "floral", "plaid", "solid", "dotted"};
    std::vector<std::string> types;
    {
      std::stringstream ss(synth_types);
      std::string type;
      while (std::getline(ss, type, ',')) {
        if (!type.empty()) types.push_back(type);
      }
    }
    if (types.empty()) {
      std::cerr << "--types must name at least one product type\n";
      return 2;
    }
    std::filesystem::create_directories(synth_out);
    std::uint64_t seed = synth_opts.seed_set ? synth_opts.seed : 0;

    std::vector<CatalogItem> items;
    for (std::size_t i = 0; i < synth_items; ++i) {
      CatalogItem item;
      item.item_id = "item-" + std::to_string(i);
      item.product_type = types[i % types.size()];
      if (i % 3 == 0) item.gender_age = "women";
      item.title = std::string(kColors[i % 10]) + " " + kPatterns[i % 5] + " " +
                   item.product_type + " style " + std::to_string(i);
      item.description = "piece number " + std::to_string(i) +
                         " with woven texture, soft matte finish, rounded edges, slim seams "
                         "and a sturdy reinforced base";
      item.image_ref = synth_out + "/img_" + std::to_string(i) + ".ppm";
      save_ppm(make_payload_raster(item.title, 64, 48, seed + i), item.image_ref);
      items.push_back(std::move(item));
    }
    for (std::size_t d = 0; d < synth_duplicates; ++d) {
      CatalogItem item = items[d % synth_items];
      item.item_id = "dup-" + std::to_string(d);
      item.image_ref = synth_out + "/dup_" + std::to_string(d) + ".ppm";
      std::filesystem::copy_file(items[d % synth_items].image_ref, item.image_ref);
      items.push_back(std::move(item));
    }
    save_catalog_jsonl(items, synth_out + "/catalog.jsonl");
    std::cout << "wrote " << items.size() << " items to " << synth_out << "/catalog.jsonl\n";
    return 0;
  }

  if (serve_cmd->parsed()) {
    EngineConfig config = load_config(serve_opts);
    config.store_dir = serve_store;
    if (!serve_bind.empty()) config.bind_address = serve_bind;
    Engine engine(config);
    engine.load_index();

    auto colon = config.bind_address.rfind(':');
    if (colon == std::string::npos) {
      std::cerr << "bind address must be host:port\n";
      return 2;
    }
    std::string host = config.bind_address.substr(0, colon);
    int port = std::stoi(config.bind_address.substr(colon + 1));
    std::cout << "serving " << engine.indexed_items() << " items across "
              << engine.shard_count() << " shards on " << host << ":" << port << "\n";
    QueryService service(engine);
    service.run(host, port);
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
