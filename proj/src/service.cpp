#include "topictrail/service.hpp"

#include <httplib.h>

#include <atomic>
#include <charconv>
#include <csignal>
#include <iostream>
#include <random>
#include <thread>

#include "topictrail/error.hpp"
#include "topictrail/text.hpp"

namespace topictrail {
namespace {

using json = nlohmann::json;
using Query = std::map<std::string, std::string>;

class HttpFailure : public std::runtime_error {
 public:
  HttpFailure(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

[[noreturn]] void bad_request(const std::string& message) { throw HttpFailure(400, "bad_request", message); }

std::size_t parse_size(const std::string& name, const std::string& raw) {
  std::size_t value = 0;
  const auto* end = raw.data() + raw.size();
  const auto [ptr, ec] = std::from_chars(raw.data(), end, value);
  if (raw.empty() || ec != std::errc{} || ptr != end) bad_request(name + " must be a non-negative integer");
  return value;
}

double parse_double(const std::string& name, const std::string& raw) {
  try {
    std::size_t used = 0;
    const double value = std::stod(raw, &used);
    if (used != raw.size()) bad_request(name + " must be a number");
    return value;
  } catch (const std::logic_error&) {
    bad_request(name + " must be a number");
  }
}

std::optional<std::string> param(const Query& query, const std::string& name) {
  auto it = query.find(name);
  if (it == query.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string::npos) end = path.size();
    if (end > start) parts.push_back(path.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

std::vector<std::string> split_csv(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : raw + ",") {
    if (c == ',') {
      auto b = cur.find_first_not_of(' ');
      auto e = cur.find_last_not_of(' ');
      if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

json spans_json(const std::vector<Span>& spans) {
  auto out = json::array();
  for (const auto& s : spans) out.push_back({s.begin, s.end});
  return out;
}

std::vector<std::string> bullet_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    auto line = text.substr(start, end - start);
    auto b = line.find_first_not_of(" \t\r");
    if (b != std::string::npos) {
      line = line.substr(b);
      if (line.rfind("- ", 0) == 0 || line.rfind("* ", 0) == 0) line = line.substr(2);
      out.push_back(line);
    }
    start = end + 1;
  }
  return out;
}

ProcessedCorpus load_corpus_checked(const std::filesystem::path& dir) {
  for (const char* name : {"tokens.jsonl", "vocab.txt", "timestamps.txt"}) {
    if (!std::filesystem::exists(dir / name)) {
      throw Error(ErrorCode::StartupValidation, "missing corpus file " + (dir / name).string());
    }
  }
  try {
    return load_processed(dir);
  } catch (const Error& e) {
    throw Error(ErrorCode::StartupValidation, "invalid corpus in " + dir.string() + ": " + e.what());
  }
}

BetaTensor load_beta_checked(const std::filesystem::path& model_dir, const std::filesystem::path& corpus_dir) {
  if (!std::filesystem::exists(model_dir / "beta.f32") && !std::filesystem::exists(model_dir / "beta.json")) {
    throw Error(ErrorCode::StartupValidation, "missing model file " + (model_dir / "beta.f32").string());
  }
  try {
    return load_beta(model_dir, corpus_dir);
  } catch (const Error& e) {
    throw Error(ErrorCode::StartupValidation, "invalid model in " + model_dir.string() + ": " + e.what());
  }
}

}  // namespace

ApiError to_api_error(const std::exception& e) {
  if (const auto* h = dynamic_cast<const HttpFailure*>(&e)) return {h->status(), h->code(), h->what()};
  if (const auto* p = dynamic_cast<const ProviderError*>(&e)) return {502, p->kind(), p->what()};
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->code()) {
      case ErrorCode::InvalidArgument:
      case ErrorCode::Parse:
        return {400, "bad_request", err->what()};
      case ErrorCode::IndexOutOfRange:
        return {404, "not_found", err->what()};
      case ErrorCode::UnknownTerm:
      case ErrorCode::UndefinedTerm:
        return {404, "unknown_term", err->what()};
      case ErrorCode::ContextOverflow:
        return {422, "context_overflow", err->what()};
      case ErrorCode::EmptyResponse:
        return {502, "llm_empty_response", err->what()};
      default:
        return {500, "internal", err->what()};
    }
  }
  if (dynamic_cast<const json::exception*>(&e) != nullptr) return {400, "bad_request", e.what()};
  return {500, "internal", e.what()};
}

std::shared_ptr<SessionStore::Entry> SessionStore::create(GroundedSession session) {
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lock(mutex_);
  evict_expired(now);
  while (!order_.empty() && entries_.size() >= capacity_) {
    entries_.erase(order_.back());
    order_.pop_back();
  }
  auto entry = std::make_shared<Entry>();
  entry->session = std::move(session);
  entry->last_access = now;
  order_.push_front(entry->session.id);
  entries_[entry->session.id] = {entry, order_.begin()};
  return entry;
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) {
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lock(mutex_);
  evict_expired(now);
  auto it = entries_.find(id);
  if (it == entries_.end()) return nullptr;
  order_.splice(order_.begin(), order_, it->second.second);
  it->second.first->last_access = now;
  return it->second.first;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void SessionStore::evict_expired(std::chrono::steady_clock::time_point now) {
  while (!order_.empty()) {
    auto it = entries_.find(order_.back());
    if (now - it->second.first->last_access < ttl_) break;
    entries_.erase(it);
    order_.pop_back();
  }
}

Service::Service(ServiceConfig cfg, std::shared_ptr<LlmProvider> provider)
    : cfg_(std::move(cfg)),
      corpus_(load_corpus_checked(cfg_.corpus_dir)),
      cache_(cfg_.cache_dir.value_or(cfg_.corpus_dir / "cache" / "llm")),
      client_(cfg_.llm, provider ? provider : std::make_shared<HttpChatProvider>(cfg_.llm)),
      sessions_(cfg_.session_cap, cfg_.session_ttl) {
  if (!std::filesystem::is_directory(cfg_.model_dir)) {
    throw Error(ErrorCode::StartupValidation, "model directory not found: " + cfg_.model_dir.string());
  }
  beta_.emplace(load_beta_checked(cfg_.model_dir, cfg_.corpus_dir));
  if (beta_->num_times() != corpus_.num_times()) {
    throw Error(ErrorCode::StartupValidation, "model has " + std::to_string(beta_->num_times()) +
                                                  " timestamps but the corpus has " +
                                                  std::to_string(corpus_.num_times()));
  }
  try {
    cfg_.saliency.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::StartupValidation, e.what());
  }
  if (cfg_.topn == 0) throw Error(ErrorCode::StartupValidation, "topn must be >= 1");
  auto loaded = build_or_load_index(corpus_, cfg_.corpus_dir / "index.cache");
  index_cache_hit_ = loaded.cache_hit;
  retriever_ = std::make_unique<Retriever>(corpus_, std::move(loaded.index));
  scorer_ = std::make_unique<SaliencyScorer>(*beta_, cfg_.saliency);
}

std::size_t Service::prelabel_all() {
  std::size_t n = 0;
  for (std::size_t k = 0; k < beta_->num_topics(); ++k) {
    label_topic(keyword_trajectory(*beta_, k, cfg_.topn), client_, cache_);
    ++n;
  }
  return n;
}

ApiResponse Service::handle(const std::string& method, const std::string& path, const Query& query,
                            const std::string& body) {
  try {
    const auto parts = split_path(path);
    if (parts.size() < 2 || parts[0] != "api") throw HttpFailure(404, "not_found", "no route for " + path);
    const auto parse_body = [&] {
      if (body.empty()) return json::object();
      auto j = json::parse(body, nullptr, false);
      if (j.is_discarded() || !j.is_object()) bad_request("request body must be a JSON object");
      return j;
    };
    const auto require = [&](const char* m) {
      if (method != m) throw HttpFailure(405, "method_not_allowed", method + " not allowed on " + path);
    };
    const auto& head = parts[1];
    if (parts.size() == 2) {
      if (head == "meta") return require("GET"), ApiResponse{200, meta()};
      if (head == "topics") return require("GET"), ApiResponse{200, topics()};
      if (head == "metrics") return require("GET"), ApiResponse{200, metrics()};
      if (head == "retrieve") return require("GET"), ApiResponse{200, retrieve(query)};
      if (head == "summarize") return require("POST"), ApiResponse{200, summarize(parse_body())};
      if (head == "sessions") return require("POST"), ApiResponse{201, create_session(parse_body())};
    }
    if (parts.size() == 4 && head == "topics") {
      const auto k = parse_topic(parts[2]);
      if (parts[3] == "label") return require("POST"), ApiResponse{200, label(k)};
      if (parts[3] == "salient") return require("GET"), ApiResponse{200, salient(k, query)};
      if (parts[3] == "trend") return require("GET"), ApiResponse{200, trend(k, query)};
    }
    if (parts.size() == 4 && head == "sessions" && parts[3] == "chat") {
      return require("POST"), ApiResponse{200, chat(parts[2], parse_body())};
    }
    throw HttpFailure(404, "not_found", "no route for " + path);
  } catch (const std::exception& e) {
    const auto err = to_api_error(e);
    return {err.status, err.to_json()};
  }
}

std::size_t Service::parse_topic(const std::string& raw) const {
  const auto k = parse_size("topic", raw);
  if (k >= beta_->num_topics()) {
    throw HttpFailure(404, "not_found", "topic " + raw + " out of range [0, " +
                                            std::to_string(beta_->num_topics()) + ")");
  }
  return k;
}

std::size_t Service::parse_time(const std::string& raw) const {
  const auto t = parse_size("time", raw);
  if (t >= corpus_.num_times()) {
    throw HttpFailure(404, "not_found", "time " + raw + " out of range [0, " +
                                            std::to_string(corpus_.num_times()) + ")");
  }
  return t;
}

json Service::meta() const {
  return {{"T", beta_->num_times()},
          {"K", beta_->num_topics()},
          {"V", beta_->vocab_size()},
          {"docs", corpus_.documents().size()},
          {"model_name", beta_->model_name()},
          {"timestamps", corpus_.timestamps()},
          {"topn", cfg_.topn}};
}

json Service::topics() const {
  auto out = json::array();
  for (std::size_t k = 0; k < beta_->num_topics(); ++k) {
    const auto traj = keyword_trajectory(*beta_, k, cfg_.topn);
    const auto label = cached_label(traj, client_.settings(), cache_);
    auto times = json::array();
    for (std::size_t t = 0; t < traj.rows.size(); ++t) {
      times.push_back({{"time", t}, {"timestamp", traj.rows[t].first}, {"words", traj.rows[t].second}});
    }
    out.push_back({{"id", k}, {"label", label ? json(*label) : json(nullptr)}, {"top_words", times}});
  }
  return {{"topics", out}};
}

json Service::label(std::size_t k) {
  const auto traj = keyword_trajectory(*beta_, k, cfg_.topn);
  const bool was_cached = cached_label(traj, client_.settings(), cache_).has_value();
  return {{"topic", k}, {"label", label_topic(traj, client_, cache_)}, {"cached", was_cached}};
}

json Service::salient(std::size_t k, const Query& query) const {
  const auto pool = param(query, "pool");
  const auto limit_raw = param(query, "limit");
  const std::size_t limit = limit_raw ? parse_size("limit", *limit_raw) : 10;
  if (limit == 0) bad_request("limit must be >= 1");
  std::optional<std::size_t> pool_size;
  if (pool) {
    pool_size = parse_size("pool", *pool);
    if (*pool_size == 0) bad_request("pool must be >= 1");
  }
  auto cfg = cfg_.saliency;
  if (pool_size) cfg.pool_size = *pool_size;
  return json::parse(saliency_json(*beta_, k, cfg, scorer_->rank(k, limit, pool_size)));
}

json Service::trend(std::size_t k, const Query& query) const {
  const auto raw = param(query, "words");
  if (!raw) bad_request("words is required");
  const auto words = split_csv(*raw);
  if (words.empty()) bad_request("words must name at least one term");
  auto series = json::array();
  for (const auto& w : words) {
    const auto id = beta_->term_id(fold_case(w));
    if (!id) throw HttpFailure(404, "unknown_term", "term not in vocabulary: " + w);
    series.push_back(json{{"word", beta_->vocab()[*id]}, {"values", json(trajectory(*beta_, k, *id).series)}});
  }
  return {{"topic", k}, {"timestamps", beta_->timestamps()}, {"series", series}};
}

json Service::metrics() {
  std::lock_guard lock(metrics_mutex_);
  if (!metrics_) metrics_ = json::parse(ttq(*beta_, corpus_, cfg_.topn).to_json());
  return *metrics_;
}

json Service::retrieve(const Query& query) const {
  const auto word = param(query, "word");
  const auto time = param(query, "time");
  if (!word || word->empty()) bad_request("word is required");
  if (!time) bad_request("time is required");
  auto opts = cfg_.retrieval;
  if (auto limit = param(query, "limit")) {
    opts.limit = parse_size("limit", *limit);
    if (opts.limit == 0) bad_request("limit must be >= 1");
  }
  if (auto lambda = param(query, "lambda")) {
    opts.lambda = parse_double("lambda", *lambda);
    if (!(opts.lambda >= 0.0 && opts.lambda <= 1.0)) bad_request("lambda must be in [0, 1]");
  }
  const auto t = parse_time(*time);
  auto results = json::array();
  for (const auto& r : retriever_->retrieve(*word, t, opts)) {
    const auto& doc = corpus_.documents()[*corpus_.doc_index(r.id)];
    results.push_back(
        {{"id", r.id}, {"text", doc.text}, {"relevance", r.relevance}, {"highlights", spans_json(r.highlights)}});
  }
  return {{"word", *word}, {"time", t}, {"timestamp", corpus_.timestamps()[t]}, {"results", results}};
}

std::vector<std::string> Service::resolve_docs(const json& body, std::vector<std::string>& texts) const {
  std::vector<std::string> ids;
  if (body.contains("doc_ids")) {
    if (!body["doc_ids"].is_array() || body["doc_ids"].empty()) bad_request("doc_ids must be a non-empty array");
    for (const auto& id : body["doc_ids"]) {
      if (!id.is_string()) bad_request("doc_ids must hold strings");
      const auto idx = corpus_.doc_index(id.get<std::string>());
      if (!idx) throw HttpFailure(404, "unknown_document", "document not found: " + id.get<std::string>());
      ids.push_back(id.get<std::string>());
      texts.push_back(corpus_.documents()[*idx].text);
    }
    return ids;
  }
  if (!body.contains("word") || !body["word"].is_string() || !body.contains("time")) {
    bad_request("expected doc_ids or word and time");
  }
  if (!body["time"].is_number_unsigned()) bad_request("time must be a non-negative integer");
  const auto t = body["time"].get<std::size_t>();
  if (t >= corpus_.num_times()) throw HttpFailure(404, "not_found", "time out of range");
  auto opts = cfg_.retrieval;
  if (body.contains("limit")) {
    if (!body["limit"].is_number_unsigned() || body["limit"].get<std::size_t>() == 0) {
      bad_request("limit must be a positive integer");
    }
    opts.limit = body["limit"].get<std::size_t>();
  }
  for (const auto& r : retriever_->retrieve(body["word"].get<std::string>(), t, opts)) {
    ids.push_back(r.id);
    texts.push_back(corpus_.documents()[*corpus_.doc_index(r.id)].text);
  }
  if (ids.empty()) throw HttpFailure(404, "no_documents", "no documents match the query");
  return ids;
}

json Service::summarize(const json& body) {
  std::vector<std::string> texts;
  const auto ids = resolve_docs(body, texts);
  std::vector<std::string> words;
  std::string timestamp;
  if (body.contains("words")) {
    if (!body["words"].is_array()) bad_request("words must be an array");
    for (const auto& w : body["words"]) words.push_back(w.get<std::string>());
  } else if (body.contains("word")) {
    words.push_back(body["word"].get<std::string>());
  }
  if (body.contains("time") && body["time"].is_number_unsigned()) {
    const auto t = body["time"].get<std::size_t>();
    if (t < corpus_.num_times()) timestamp = corpus_.timestamps()[t];
  }
  if (body.contains("timestamp")) timestamp = body["timestamp"].get<std::string>();
  const auto summary = topictrail::summarize(texts, words, timestamp, client_, cache_);
  return {{"summary", summary}, {"bullets", bullet_lines(summary)}, {"doc_ids", ids}};
}

json Service::create_session(const json& body) {
  GroundedSession session;
  session.doc_ids = resolve_docs(body, session.context_docs);
  if (body.contains("summary")) session.summary = body["summary"].get<std::string>();
  session.id = new_session_id();
  auto entry = sessions_.create(std::move(session));
  return {{"session_id", entry->session.id}, {"doc_ids", entry->session.doc_ids}};
}

json Service::chat(const std::string& id, const json& body) {
  if (!body.contains("message") || !body["message"].is_string() || body["message"].get<std::string>().empty()) {
    bad_request("message must be a non-empty string");
  }
  auto entry = sessions_.find(id);
  if (!entry) throw HttpFailure(404, "unknown_session", "session not found: " + id);
  std::lock_guard lock(entry->mutex);
  const auto reply = chat_reply(entry->session, body["message"].get<std::string>(), client_);
  const auto turn = entry->session.history.size() / 2 - 1;
  return {{"session_id", id}, {"reply", reply}, {"turn", turn}};
}

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Service& s) : service(s) {}

  bool origin_allowed(const std::string& origin) const {
    for (const auto& o : service.config().cors_origins) {
      if (o == "*" || o == origin) return true;
    }
    return false;
  }

  void forward(const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto out = service.handle(req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& server = impl_->server;
  auto* impl = impl_.get();
  if (const auto& dir = service.config().static_dir) {
    if (!server.set_mount_point("/", dir->string())) {
      throw Error(ErrorCode::StartupValidation, "static directory not found: " + dir->string());
    }
  }
  const auto handler = [impl](const httplib::Request& req, httplib::Response& res) { impl->forward(req, res); };
  server.Get("/api/.*", handler);
  server.Post("/api/.*", handler);
  server.Options("/api/.*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.set_post_routing_handler([impl](const httplib::Request& req, httplib::Response& res) {
    const auto origin = req.get_header_value("Origin");
    if (origin.empty() || !impl->origin_allowed(origin)) return;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Vary", "Origin");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
}

HttpServer::~HttpServer() {
  stop();
  wait();
}

int HttpServer::start(const std::string& host, int port) {
  auto& server = impl_->server;
  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorCode::Io, "could not bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  return bound;
}

void HttpServer::stop() { impl_->server.stop(); }

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

namespace {
std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }
}  // namespace

int serve(const ServiceConfig& cfg) {
  Service service(cfg);
  std::cerr << "loaded " << service.corpus().documents().size() << " documents, "
            << service.beta().num_topics() << " topics, index "
            << (service.index_cache_hit() ? "from cache" : "built") << "\n";
  if (cfg.prelabel) {
    try {
      std::cerr << "labeled " << service.prelabel_all() << " topics\n";
    } catch (const std::exception& e) {
      std::cerr << "warning: pre-labeling stopped: " << e.what() << "\n";
    }
  }
  HttpServer server(service);
  const int port = server.start(cfg.host, cfg.port);
  std::cerr << "listening on http://" << cfg.host << ":" << port << "\n";
  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::cerr << "shutting down\n";
  server.stop();
  server.wait();
  return 0;
}

}  // namespace topictrail
