#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "topictrail/beta.hpp"
#include "topictrail/corpus.hpp"
#include "topictrail/llm.hpp"
#include "topictrail/metrics.hpp"
#include "topictrail/retrieval.hpp"
#include "topictrail/saliency.hpp"

namespace topictrail {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path corpus_dir;
  std::filesystem::path model_dir;
  /// LLM response cache root; defaults to <corpus_dir>/cache/llm.
  std::optional<std::filesystem::path> cache_dir;
  LlmSettings llm;
  RetrievalOptions retrieval;
  SaliencyConfig saliency;
  std::size_t topn = kDefaultTopN;
  bool prelabel = false;
  std::vector<std::string> cors_origins = {"*"};
  std::optional<std::filesystem::path> static_dir;
  std::size_t session_cap = 256;
  std::chrono::seconds session_ttl{3600};
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Handler failure mapped to an HTTP status and a stable machine code.
struct ApiError {
  int status = 500;
  std::string code;
  std::string message;

  nlohmann::json to_json() const { return {{"error", {{"code", code}, {"message", message}}}}; }
};

ApiError to_api_error(const std::exception& e);

/// In-memory grounded sessions with an LRU cap and idle TTL.
class SessionStore {
 public:
  struct Entry {
    std::mutex mutex;  // serializes turns within one session
    GroundedSession session;
    std::chrono::steady_clock::time_point last_access;
  };

  SessionStore(std::size_t capacity, std::chrono::seconds ttl) : capacity_(capacity), ttl_(ttl) {}

  std::shared_ptr<Entry> create(GroundedSession session);
  std::shared_ptr<Entry> find(const std::string& id);
  std::size_t size() const;

 private:
  void evict_expired(std::chrono::steady_clock::time_point now);

  std::size_t capacity_;
  std::chrono::seconds ttl_;
  mutable std::mutex mutex_;
  std::list<std::string> order_;  // most recent first
  std::unordered_map<std::string, std::pair<std::shared_ptr<Entry>, std::list<std::string>::iterator>> entries_;
};

/// The exploration API over one corpus and one tensor. Transport-agnostic:
/// HttpServer forwards requests to handle().
class Service {
 public:
  /// Loads and validates every artifact; throws StartupValidation.
  explicit Service(ServiceConfig cfg, std::shared_ptr<LlmProvider> provider = nullptr);
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ApiResponse handle(const std::string& method, const std::string& path,
                     const std::map<std::string, std::string>& query, const std::string& body);

  /// Labels every topic through the cache; returns the number of labels.
  std::size_t prelabel_all();

  const ServiceConfig& config() const { return cfg_; }
  const ProcessedCorpus& corpus() const { return corpus_; }
  const BetaTensor& beta() const { return *beta_; }
  bool index_cache_hit() const { return index_cache_hit_; }

 private:
  nlohmann::json meta() const;
  nlohmann::json topics() const;
  nlohmann::json label(std::size_t k);
  nlohmann::json salient(std::size_t k, const std::map<std::string, std::string>& query) const;
  nlohmann::json trend(std::size_t k, const std::map<std::string, std::string>& query) const;
  nlohmann::json metrics();
  nlohmann::json retrieve(const std::map<std::string, std::string>& query) const;
  nlohmann::json summarize(const nlohmann::json& body);
  nlohmann::json create_session(const nlohmann::json& body);
  nlohmann::json chat(const std::string& id, const nlohmann::json& body);

  std::vector<std::string> resolve_docs(const nlohmann::json& body, std::vector<std::string>& texts) const;
  std::size_t parse_topic(const std::string& raw) const;
  std::size_t parse_time(const std::string& raw) const;

  ServiceConfig cfg_;
  ProcessedCorpus corpus_;
  std::optional<BetaTensor> beta_;
  std::unique_ptr<Retriever> retriever_;
  std::unique_ptr<SaliencyScorer> scorer_;
  bool index_cache_hit_ = false;
  ResponseCache cache_;
  LlmClient client_;
  SessionStore sessions_;
  std::mutex metrics_mutex_;
  std::optional<nlohmann::json> metrics_;
};

/// Binds Service to an HTTP listener with CORS and optional static assets.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and starts serving on a background thread; returns the bound port
  /// (port 0 picks a free one).
  int start(const std::string& host, int port);
  void stop();
  /// Blocks until the listener exits.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs the service until SIGINT or SIGTERM.
int serve(const ServiceConfig& cfg);

}  // namespace topictrail
