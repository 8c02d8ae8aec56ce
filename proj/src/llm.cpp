#include "topictrail/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "topictrail/error.hpp"
#include "topictrail/io.hpp"

namespace topictrail {
namespace {

using json = nlohmann::json;

constexpr std::string_view kCacheHeader = "topictrail-llm-cache/1";

void put_field(std::string& out, std::string_view name, std::string_view value) {
  out.append(name);
  out.push_back(':');
  out.append(std::to_string(value.size()));
  out.push_back(':');
  out.append(value);
  out.push_back('\n');
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Single pass over the template so substituted text is never rescanned.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string_view, std::string_view>>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      bool matched = false;
      for (const auto& [name, value] : values) {
        if (tmpl.compare(i + 1, name.size(), name) == 0 && i + 1 + name.size() < tmpl.size() &&
            tmpl[i + 1 + name.size()] == '}') {
          out.append(value);
          i += name.size() + 2;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

// Largest prefix of at most `limit` bytes that ends on a UTF-8 boundary.
bool is_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

std::size_t count_chars(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) n += !is_continuation(c);
  return n;
}

// First `limit` code points of s.
std::string_view utf8_prefix(std::string_view s, std::size_t limit) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (is_continuation(s[i])) continue;
    if (seen == limit) return s.substr(0, i);
    ++seen;
  }
  return s;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.append(sep);
    out.append(items[i]);
  }
  return out;
}

}  // namespace

const std::string_view kLabelTemplate =
    "You are an expert in topic modeling and temporal data analysis. Given the top words for a "
    "topic across multiple time points, your task is to return a short, specific, descriptive "
    "topic label. Avoid vague, generic, or overly broad labels. Focus on consistent themes in the "
    "top words over time. Use concise noun phrases, 2-5 words max. Do not include any "
    "explanation, justification, or extra output.\n"
    "\n"
    "Top words over time: {trajectory}\n"
    "\n"
    "Return ONLY the label (no quotes, no extra text):";

const std::string_view kSummaryTemplate =
    "Given the following documents from {timestamp} that mention the words: {word_list}, identify "
    "the key themes or discussion points from that time. Be concise. Each bullet should capture a "
    "distinct theme in 1-2 short sentences. Avoid any elaboration, examples, or justification.\n"
    "\n"
    "Return no more than 5-7 bullets.\n"
    "\n"
    "{context_texts}\n"
    "\n"
    "Summary:";

const std::string_view kChatTemplate =
    "You are an assistant answering questions strictly based on the provided sample documents "
    "below.\n"
    "\n"
    "If the answer is not clearly supported by the text, respond with: \"The information is not "
    "available in the documents provided.\"\n"
    "\n"
    "Documents: {context_texts}\n"
    "\n"
    "User Question: {user_question}";

std::string canonical_bytes(const LlmRequest& req) {
  std::string out = "topictrail-llm-request/1\n";
  put_field(out, "endpoint", req.endpoint);
  put_field(out, "model", req.model);
  if (req.system) {
    put_field(out, "system", *req.system);
  } else {
    out += "system:-\n";
  }
  put_field(out, "user", req.user);
  put_field(out, "max_tokens", std::to_string(req.max_tokens));
  if (!req.history.empty()) {
    put_field(out, "history", std::to_string(req.history.size()));
    for (const auto& turn : req.history) {
      put_field(out, "role", turn.role);
      put_field(out, "content", turn.content);
    }
  }
  return out;
}

std::string cache_key(const LlmRequest& req) { return sha256_hex(canonical_bytes(req)); }

std::string request_body(const LlmRequest& req) {
  json body;
  body["model"] = req.model;
  auto& messages = body["messages"] = json::array();
  if (req.system) messages.push_back({{"role", "system"}, {"content", *req.system}});
  for (const auto& turn : req.history) messages.push_back({{"role", turn.role}, {"content", turn.content}});
  messages.push_back({{"role", "user"}, {"content", req.user}});
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_tokens;
  return body.dump();
}

LlmSettings LlmSettings::from_env() {
  LlmSettings s;
  if (const char* v = std::getenv("LLM_API_BASE"); v && *v) s.endpoint = v;
  if (const char* v = std::getenv("LLM_API_KEY"); v && *v) s.api_key = v;
  if (const char* v = std::getenv("LLM_MODEL"); v && *v) s.model = v;
  if (const char* v = std::getenv("LLM_TIMEOUT_SECS"); v && *v) {
    try {
      s.timeout_secs = std::stoi(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, std::string("LLM_TIMEOUT_SECS is not an integer: ") + v);
    }
  }
  return s;
}

LlmRequest LlmClient::make_request(std::optional<std::string> system, std::string user) const {
  LlmRequest req;
  req.endpoint = settings_.endpoint;
  req.model = settings_.model;
  req.system = std::move(system);
  req.user = std::move(user);
  req.temperature = 0.0;
  req.max_tokens = settings_.max_tokens;
  return req;
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return root_ / key.substr(0, 2) / key;
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const auto path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  const auto raw = read_file(path);
  // Header lines, a blank line, then exactly `bytes` bytes of value.
  const auto split = raw.find("\n\n");
  if (split == std::string::npos) return std::nullopt;
  std::istringstream header(raw.substr(0, split));
  std::string line;
  std::string stored_key;
  std::size_t length = std::string::npos;
  if (!std::getline(header, line) || line != kCacheHeader) return std::nullopt;
  while (std::getline(header, line)) {
    if (line.rfind("key: ", 0) == 0) stored_key = line.substr(5);
    if (line.rfind("bytes: ", 0) == 0) length = std::stoull(line.substr(7));
  }
  const auto body = std::string_view(raw).substr(split + 2);
  if (stored_key != key || length != body.size()) return std::nullopt;
  return std::string(body);
}

void ResponseCache::put(const std::string& key, std::string_view value) const {
  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  std::string file(kCacheHeader);
  file += "\nkey: " + key + "\ncreated_at: " + std::to_string(now) +
          "\nbytes: " + std::to_string(value.size()) + "\n\n";
  file.append(value);
  write_file_atomic(path_for(key), file);
}

std::pair<std::string, bool> ResponseCache::get_or_compute(const std::string& key,
                                                           const std::function<std::string()>& compute) {
  if (auto hit = get(key)) return {std::move(*hit), true};

  std::promise<std::string> promise;
  std::shared_future<std::string> waiting;
  {
    std::lock_guard lock(mutex_);
    if (auto it = in_flight_.find(key); it != in_flight_.end()) {
      waiting = it->second;
    } else {
      // Re-check under the lock: another caller may have finished meanwhile.
      if (auto hit = get(key)) return {std::move(*hit), true};
      in_flight_.emplace(key, promise.get_future().share());
    }
  }
  if (waiting.valid()) return {waiting.get(), true};

  try {
    auto value = compute();
    put(key, value);
    promise.set_value(value);
    std::lock_guard lock(mutex_);
    in_flight_.erase(key);
    return {std::move(value), false};
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    in_flight_.erase(key);
    throw;
  }
}

KeywordTrajectory keyword_trajectory(const BetaTensor& beta, std::size_t k, std::size_t n) {
  KeywordTrajectory traj;
  traj.topic = k;
  for (std::size_t t = 0; t < beta.num_times(); ++t) {
    traj.rows.emplace_back(beta.timestamps()[t], top_words(beta, k, t, n).words);
  }
  return traj;
}

std::string render_trajectory(const KeywordTrajectory& traj) {
  std::vector<std::string> lines;
  lines.reserve(traj.rows.size());
  for (const auto& [label, words] : traj.rows) lines.push_back(label + ": " + join(words, ", "));
  return join(lines, "\n");
}

std::string render_label_prompt(const KeywordTrajectory& traj) {
  if (traj.rows.empty()) throw Error(ErrorCode::InvalidArgument, "trajectory has no rows");
  const auto rendered = render_trajectory(traj);
  return render_template(kLabelTemplate, {{"trajectory", rendered}});
}

std::string render_context(const std::vector<std::string>& docs, const ContextBudget& budget) {
  if (docs.empty()) throw Error(ErrorCode::InvalidArgument, "no context documents");
  std::string out;
  std::size_t used = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::string block = "Document " + std::to_string(i + 1) + ":\n";
    const auto kept = utf8_prefix(docs[i], budget.per_doc_chars);
    block.append(kept);
    if (kept.size() < docs[i].size()) block += " [truncated]";
    const std::string_view sep = out.empty() ? "" : "\n\n";
    const auto cost = sep.size() + count_chars(block);
    if (used + cost > budget.total_chars) {
      if (i == 0) {
        throw Error(ErrorCode::ContextOverflow, "document 1 needs " + std::to_string(cost) +
                                                   " characters but the context budget is " +
                                                   std::to_string(budget.total_chars));
      }
      out += "\n\n[" + std::to_string(docs.size() - i) +
             " more documents omitted to fit the context budget]";
      break;
    }
    out.append(sep);
    out.append(block);
    used += cost;
  }
  return out;
}

std::string render_summary_prompt(std::string_view timestamp, const std::vector<std::string>& words,
                                  std::string_view context_texts) {
  const auto word_list = join(words, ", ");
  return render_template(kSummaryTemplate,
                         {{"timestamp", timestamp}, {"word_list", word_list}, {"context_texts", context_texts}});
}

std::string render_chat_prompt(std::string_view context_texts, std::string_view question) {
  return render_template(kChatTemplate, {{"context_texts", context_texts}, {"user_question", question}});
}

std::string render_chat_system(std::string_view context_texts) {
  const auto full = render_chat_prompt(context_texts, "");
  const auto cut = full.rfind("\n\nUser Question: ");
  return full.substr(0, cut);
}

std::string render_chat_user(std::string_view question) {
  return "User Question: " + std::string(question);
}

LlmRequest build_label_prompt(const KeywordTrajectory& traj, const LlmSettings& settings) {
  LlmRequest req;
  req.endpoint = settings.endpoint;
  req.model = settings.model;
  req.user = render_label_prompt(traj);
  req.temperature = 0.0;
  req.max_tokens = settings.max_tokens;
  return req;
}

std::optional<std::string> cached_label(const KeywordTrajectory& traj, const LlmSettings& settings,
                                        const ResponseCache& cache) {
  return cache.get(cache_key(build_label_prompt(traj, settings)));
}

std::string label_topic(const KeywordTrajectory& traj, LlmClient& client, ResponseCache& cache) {
  const auto req = build_label_prompt(traj, client.settings());
  return cache
      .get_or_compute(cache_key(req),
                      [&] {
                        const auto raw = client.complete(req);
                        std::istringstream lines(raw);
                        std::string line;
                        while (std::getline(lines, line)) {
                          auto label = trim(line);
                          if (!label.empty()) return label;
                        }
                        throw Error(ErrorCode::EmptyResponse, "provider returned an empty label");
                      })
      .first;
}

std::string summarize(const std::vector<std::string>& context_docs, const std::vector<std::string>& words,
                      std::string_view timestamp, LlmClient& client, ResponseCache& cache,
                      const ContextBudget& budget) {
  if (context_docs.empty()) throw Error(ErrorCode::InvalidArgument, "summarize needs at least one document");
  const auto context = render_context(context_docs, budget);
  const auto req = client.make_request(std::nullopt, render_summary_prompt(timestamp, words, context));
  return cache
      .get_or_compute(cache_key(req),
                      [&] {
                        auto text = trim(client.complete(req));
                        if (text.empty()) throw Error(ErrorCode::EmptyResponse, "provider returned an empty summary");
                        return text;
                      })
      .first;
}

std::string chat_reply(GroundedSession& session, std::string_view user_question, LlmClient& client,
                       const ContextBudget& budget) {
  if (session.context_docs.empty()) throw Error(ErrorCode::InvalidArgument, "session has no context documents");
  auto req = client.make_request(render_chat_system(render_context(session.context_docs, budget)),
                                 render_chat_user(user_question));
  req.history = session.history;
  auto reply = trim(client.complete(req));
  if (reply.empty()) throw Error(ErrorCode::EmptyResponse, "provider returned an empty reply");
  session.history.push_back({"user", req.user});
  session.history.push_back({"assistant", reply});
  return reply;
}

}  // namespace topictrail
