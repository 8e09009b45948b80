#include "vlclip/service.hpp"

#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace vlclip {

struct QueryService::Impl {
  explicit Impl(Engine& engine) : engine(engine) { register_routes(); }

  void register_routes() {
    server.Get("/v1/healthz", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json body{{"status", engine.index_loaded() ? "ok" : "no_index"},
                          {"shards", engine.shard_count()},
                          {"items", engine.indexed_items()}};
      res.set_content(body.dump(), "application/json");
    });

    server.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) {
        res.status = 400;
        res.set_content(R"({"error":"body must be a JSON object"})", "application/json");
        return;
      }
      try {
        std::size_t k = body.value("k", engine.config().top_k_default);
        std::optional<std::string> type;
        if (body.contains("product_type") && body["product_type"].is_string()) {
          type = body["product_type"].get<std::string>();
        }
        std::vector<RankedResult> results;
        if (body.contains("text") && body["text"].is_string()) {
          results = engine.query_text(body["text"].get<std::string>(), k, type,
                                      body.value("refine", false));
        } else if (body.contains("item_id") && body["item_id"].is_string()) {
          results = engine.query_similar(body["item_id"].get<std::string>(), k);
        } else {
          res.status = 400;
          res.set_content(R"({"error":"provide text or item_id"})", "application/json");
          return;
        }
        nlohmann::json out;
        out["results"] = nlohmann::json::array();
        for (const auto& r : results) {
          out["results"].push_back(
              {{"item_id", r.item_id}, {"similarity", r.similarity}, {"rank", r.rank}});
        }
        res.set_content(out.dump(), "application/json");
      } catch (const Error& e) {
        res.status = e.code() == errc::unknown_item || e.code() == errc::empty_index ? 404 : 400;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      }
    });
  }

  Engine& engine;
  httplib::Server server;
  std::thread worker;
};

QueryService::QueryService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}

QueryService::~QueryService() { stop(); }

int QueryService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) raise(errc::io_error, "cannot bind service on " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    raise(errc::io_error, "cannot bind service on " + host + ":" + std::to_string(port));
  }
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void QueryService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (impl_ && impl_->worker.joinable()) impl_->worker.join();
}

void QueryService::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    raise(errc::io_error, "service failed on " + host + ":" + std::to_string(port));
  }
}

}  // namespace vlclip
