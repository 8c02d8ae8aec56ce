#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <set>

#include "topictrail/corpus.hpp"
#include "topictrail/error.hpp"
#include "topictrail/llm.hpp"
#include "topictrail/llm_stub.hpp"

namespace topictrail {
namespace {

using json = nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ProviderError(0, "llm_config", "LLM endpoint must be an absolute URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::set<std::string> content_words(const std::string& text) {
  std::set<std::string> words;
  std::string cur;
  for (char c : text + " ") {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      if (cur.size() >= 3 && !english_stopwords().contains(cur)) words.insert(cur);
      cur.clear();
    }
  }
  return words;
}

}  // namespace

std::string HttpChatProvider::complete(const LlmRequest& req) {
  const auto url = parse_url(req.endpoint.empty() ? settings_.endpoint : req.endpoint);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::seconds(settings_.timeout_secs);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);

  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(url.path + "/chat/completions", headers, request_body(req), "application/json");
  if (!res) {
    const auto err = res.error();
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read &&
                            elapsed >= std::chrono::milliseconds(timeout) * 9 / 10);
    throw ProviderError(0, timed_out ? "llm_timeout" : "llm_transport_error",
                        "LLM request to " + url.origin + " failed: " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError(res->status, "llm_http_error",
                        "LLM provider returned HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 200));
  }
  try {
    const auto body = json::parse(res->body);
    const auto& content = body.at("choices").at(0).at("message").at("content");
    if (content.is_null()) throw Error(ErrorCode::EmptyResponse, "provider returned no content");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(res->status, "llm_bad_response", std::string("unparseable LLM response: ") + e.what());
  }
}

struct StubLlmServer::Impl {
  httplib::Server server;
};

StubLlmServer::StubLlmServer(Handler handler, int port)
    : impl_(std::make_unique<Impl>()), handler_(std::move(handler)) {
  impl_->server.Post(R"(/v1/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
    ++calls_;
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":{"message":"invalid json"}})", "application/json");
      return;
    }
    Handler handler;
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(body);
      handler = handler_;
    }
    const auto reply = handler(body);
    if (reply.delay.count() > 0) std::this_thread::sleep_for(reply.delay);
    res.status = reply.status;
    if (reply.status >= 200 && reply.status < 300) {
      json out = {{"id", "stub-" + std::to_string(calls_.load())},
                  {"object", "chat.completion"},
                  {"model", body.value("model", std::string{})},
                  {"choices", json::array({{{"index", 0},
                                            {"message", {{"role", "assistant"}, {"content", reply.content}}},
                                            {"finish_reason", "stop"}}})}};
      res.set_content(out.dump(), "application/json");
    } else {
      res.set_content(json{{"error", {{"message", reply.content}}}}.dump(), "application/json");
    }
  });
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
  } else {
    port_ = impl_->server.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (port_ <= 0) throw Error(ErrorCode::Io, "stub LLM server could not bind a port");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

StubLlmServer::~StubLlmServer() {
  stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubLlmServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

std::vector<json> StubLlmServer::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

void StubLlmServer::set_handler(Handler handler) {
  std::lock_guard lock(mutex_);
  handler_ = std::move(handler);
}

void StubLlmServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void StubLlmServer::stop() { impl_->server.stop(); }

StubReply StubLlmServer::default_reply(const json& body) {
  std::string system;
  std::string user;
  for (const auto& m : body.value("messages", json::array())) {
    const auto role = m.value("role", std::string{});
    if (role == "system") system = m.value("content", std::string{});
    if (role == "user") user = m.value("content", std::string{});
  }

  if (user.find("Return ONLY the label") != std::string::npos) {
    const std::string marker = "Top words over time: ";
    auto pos = user.find(marker);
    std::vector<std::string> words;
    if (pos != std::string::npos) {
      auto line = user.substr(pos + marker.size(), user.find('\n', pos) - pos - marker.size());
      line = line.substr(line.find(": ") == std::string::npos ? 0 : line.find(": ") + 2);
      std::string cur;
      for (char c : line + ",") {
        if (c == ',') {
          if (!cur.empty()) words.push_back(cur);
          cur.clear();
        } else if (c != ' ') {
          cur.push_back(c);
        }
      }
    }
    std::string label = "Stub Topic";
    if (words.size() >= 2) label = words[0] + " and " + words[1];
    return {200, label, {}};
  }

  if (user.size() >= 8 && user.compare(user.size() - 8, 8, "Summary:") == 0) {
    std::size_t docs = 0;
    for (std::size_t pos = 0; (pos = user.find("Document ", pos)) != std::string::npos; ++pos) ++docs;
    const auto bullets = std::clamp<std::size_t>(docs, 1, 7);
    std::string out;
    for (std::size_t i = 1; i <= bullets; ++i) {
      out += "- Theme " + std::to_string(i) + " drawn from document " + std::to_string(i) + ".";
      if (i < bullets) out += "\n";
    }
    return {200, out, {}};
  }

  if (system.find("strictly based on the provided sample documents") != std::string::npos) {
    const std::string q_marker = "User Question: ";
    const auto question = user.rfind(q_marker, 0) == 0 ? user.substr(q_marker.size()) : user;
    const auto qwords = content_words(question);
    const auto docs_at = system.find("Documents: ");
    const auto docs = docs_at == std::string::npos ? std::string{} : system.substr(docs_at + 11);
    std::size_t start = 0;
    while (start < docs.size()) {
      auto end = docs.find_first_of(".\n", start);
      if (end == std::string::npos) end = docs.size();
      const auto sentence = docs.substr(start, end - start);
      for (const auto& w : content_words(sentence)) {
        if (qwords.contains(w) && w != "document") {
          const auto b = sentence.find_first_not_of(" ");
          return {200, "According to the documents: " + sentence.substr(b == std::string::npos ? 0 : b) + ".", {}};
        }
      }
      start = end + 1;
    }
    return {200, std::string(kRefusalSentinel), {}};
  }

  return {200, "stub reply", {}};
}

}  // namespace topictrail
