#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "topictrail/beta.hpp"

namespace topictrail {

inline constexpr std::string_view kRefusalSentinel =
    "The information is not available in the documents provided.";

struct ChatTurn {
  std::string role;  // "user" or "assistant"
  std::string content;
  bool operator==(const ChatTurn&) const = default;
};

struct LlmRequest {
  std::string endpoint;  // base URL, e.g. https://api.openai.com/v1
  std::string model;
  std::optional<std::string> system;
  std::vector<ChatTurn> history;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 512;
};

/// Field-ordered, length-prefixed bytes that identify a request. The bearer
/// key and temperature are not part of it.
std::string canonical_bytes(const LlmRequest& req);

/// 64-hex SHA-256 of canonical_bytes.
std::string cache_key(const LlmRequest& req);

/// OpenAI-compatible chat-completions JSON body.
std::string request_body(const LlmRequest& req);

struct LlmSettings {
  std::string endpoint = "http://127.0.0.1:8000/v1";
  std::string api_key;
  std::string model = "gpt-4o-mini";
  int timeout_secs = 60;
  int max_tokens = 512;

  /// Reads LLM_API_BASE, LLM_API_KEY, LLM_MODEL and LLM_TIMEOUT_SECS over
  /// the defaults.
  static LlmSettings from_env();
};

class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  /// Returns the assistant message text. Throws ProviderError.
  virtual std::string complete(const LlmRequest& req) = 0;
};

/// POSTs request_body to {endpoint}/chat/completions.
class HttpChatProvider : public LlmProvider {
 public:
  explicit HttpChatProvider(LlmSettings settings) : settings_(std::move(settings)) {}
  std::string complete(const LlmRequest& req) override;

 private:
  LlmSettings settings_;
};

class LlmClient {
 public:
  LlmClient(LlmSettings settings, std::shared_ptr<LlmProvider> provider)
      : settings_(std::move(settings)), provider_(std::move(provider)) {}

  LlmRequest make_request(std::optional<std::string> system, std::string user) const;
  std::string complete(const LlmRequest& req) { return provider_->complete(req); }
  const LlmSettings& settings() const { return settings_; }

 private:
  LlmSettings settings_;
  std::shared_ptr<LlmProvider> provider_;
};

/// Disk cache of responses, one file per key under <root>/<first2>/<key>.
/// Writes are atomic; concurrent misses on one key share a single compute.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root) : root_(std::move(root)) {}

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, std::string_view value) const;
  std::filesystem::path path_for(const std::string& key) const;

  /// Returns (value, hit). On a miss `compute` runs once per key even under
  /// concurrent callers; an exception leaves the cache untouched.
  std::pair<std::string, bool> get_or_compute(const std::string& key,
                                              const std::function<std::string()>& compute);

 private:
  std::filesystem::path root_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::shared_future<std::string>> in_flight_;
};

struct KeywordTrajectory {
  std::size_t topic = 0;
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;  // (timestamp label, top-N)
};

KeywordTrajectory keyword_trajectory(const BetaTensor& beta, std::size_t k, std::size_t n);

// Prompt templates. Placeholders are substituted verbatim.
extern const std::string_view kLabelTemplate;
extern const std::string_view kSummaryTemplate;
extern const std::string_view kChatTemplate;

/// "label: w1, w2, ..." lines in time order, newline separated.
std::string render_trajectory(const KeywordTrajectory& traj);
std::string render_label_prompt(const KeywordTrajectory& traj);

struct ContextBudget {
  std::size_t total_chars = 24000;
  std::size_t per_doc_chars = 4000;
};

/// Numbered documents, each cut to per_doc_chars; documents that would push
/// past total_chars are dropped from the tail with a note. Throws
/// ContextOverflow when even the first document does not fit.
std::string render_context(const std::vector<std::string>& docs, const ContextBudget& budget);
std::string render_summary_prompt(std::string_view timestamp, const std::vector<std::string>& words,
                                  std::string_view context_texts);
/// The full chat template. The request splits it: everything before
/// "User Question:" is the system text, the rest is the user turn.
std::string render_chat_prompt(std::string_view context_texts, std::string_view question);
std::string render_chat_system(std::string_view context_texts);
std::string render_chat_user(std::string_view question);

LlmRequest build_label_prompt(const KeywordTrajectory& traj, const LlmSettings& settings = {});

/// Cached label for `traj`, or nullopt; never calls the provider.
std::optional<std::string> cached_label(const KeywordTrajectory& traj, const LlmSettings& settings,
                                        const ResponseCache& cache);

std::string label_topic(const KeywordTrajectory& traj, LlmClient& client, ResponseCache& cache);

std::string summarize(const std::vector<std::string>& context_docs, const std::vector<std::string>& words,
                      std::string_view timestamp, LlmClient& client, ResponseCache& cache,
                      const ContextBudget& budget = {});

struct GroundedSession {
  std::string id;
  std::vector<std::string> context_docs;
  std::vector<std::string> doc_ids;
  std::string summary;
  std::vector<ChatTurn> history;
};

/// One grounded turn: the session's documents go in the system text, the
/// whole history is replayed, and the reply is appended. History is left
/// untouched when the provider fails.
std::string chat_reply(GroundedSession& session, std::string_view user_question, LlmClient& client,
                       const ContextBudget& budget = {});

}  // namespace topictrail
