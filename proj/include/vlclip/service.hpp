#pragma once

#include <memory>
#include <string>

#include "vlclip/pipeline.hpp"

namespace vlclip {

/// Read-only HTTP front end over a sealed index.
///   POST /v1/query {text?, item_id?, k?, product_type?, refine?}
///        -> {"results": [{item_id, similarity, rank}]}
///   GET  /v1/healthz -> {"status", "shards", "items"}
/// Errors are non-2xx with {"error": message}.
class QueryService {
 public:
  explicit QueryService(Engine& engine);
  ~QueryService();

  /// Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host, int port);
  void stop();

  /// Blocking variant for the CLI.
  void run(const std::string& host, int port);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vlclip
