#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace topictrail {

struct StubReply {
  int status = 200;
  std::string content;
  std::chrono::milliseconds delay{0};
};

/// Local OpenAI-compatible chat-completions server for tests and offline
/// demos. Listens on 127.0.0.1 and counts every completion request.
class StubLlmServer {
 public:
  using Handler = std::function<StubReply(const nlohmann::json& body)>;

  explicit StubLlmServer(Handler handler = default_reply, int port = 0);
  ~StubLlmServer();
  StubLlmServer(const StubLlmServer&) = delete;
  StubLlmServer& operator=(const StubLlmServer&) = delete;

  int port() const { return port_; }
  /// Base URL to use as LLM_API_BASE.
  std::string endpoint() const;

  std::size_t calls() const { return calls_.load(); }
  std::vector<nlohmann::json> requests() const;
  void set_handler(Handler handler);

  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

  /// Labels for labeling prompts, one bullet per document (at most 7) for
  /// summaries, and for chat either a sentence quoted from the documents that
  /// shares a word with the question or the refusal sentinel.
  static StubReply default_reply(const nlohmann::json& body);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mutex_;
  Handler handler_;
  std::vector<nlohmann::json> requests_;
  std::thread thread_;
};

}  // namespace topictrail
