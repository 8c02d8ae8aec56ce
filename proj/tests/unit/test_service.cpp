#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "support.hpp"
#include "topictrail/error.hpp"
#include "topictrail/io.hpp"
#include "topictrail/llm_stub.hpp"
#include "topictrail/service.hpp"

using namespace topictrail;
using nlohmann::json;

namespace {

struct Fixture {
  explicit Fixture(StubLlmServer::Handler h = StubLlmServer::default_reply, int timeout = 10) : stub(std::move(h)) {
    tt_test::stage_fixtures(dir);
    cfg.corpus_dir = dir / "corpus";
    cfg.model_dir = dir / "model";
    cfg.llm.endpoint = stub.endpoint();
    cfg.llm.model = "stub-model";
    cfg.llm.timeout_secs = timeout;
  }
  tt_test::TempDir dir;
  StubLlmServer stub;
  ServiceConfig cfg;
};

ApiResponse get(Service& s, const std::string& path, std::map<std::string, std::string> q = {}) {
  return s.handle("GET", path, q, "");
}

ApiResponse post(Service& s, const std::string& path, const json& body = json::object()) {
  return s.handle("POST", path, {}, body.dump());
}

std::string error_code(const ApiResponse& r) { return r.body.at("error").at("code").get<std::string>(); }

}  // namespace

TEST(ServiceApi, Meta) {
  Fixture f;
  Service s(f.cfg);
  const auto r = get(s, "/api/meta");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["T"], 3);
  EXPECT_EQ(r.body["K"], 2);
  EXPECT_EQ(r.body["V"], s.corpus().vocab().size());
  EXPECT_EQ(r.body["docs"], 30);
  EXPECT_EQ(r.body["timestamps"], json({"2019", "2020", "2021"}));
  EXPECT_EQ(r.body["model_name"], "fixture-2topic");
}

TEST(ServiceApi, TopicsListingNeverCallsTheProvider) {
  Fixture f;
  Service s(f.cfg);
  const auto r = get(s, "/api/topics");
  ASSERT_EQ(r.status, 200);
  ASSERT_EQ(r.body["topics"].size(), 2u);
  for (const auto& t : r.body["topics"]) {
    EXPECT_TRUE(t["label"].is_null());
    ASSERT_EQ(t["top_words"].size(), 3u);
    EXPECT_EQ(t["top_words"][0]["words"].size(), 10u);
  }
  EXPECT_EQ(f.stub.calls(), 0u);

  const auto label = post(s, "/api/topics/0/label");
  ASSERT_EQ(label.status, 200);
  EXPECT_EQ(label.body["cached"], false);
  EXPECT_EQ(f.stub.calls(), 1u);
  const auto again = post(s, "/api/topics/0/label");
  EXPECT_EQ(again.body["cached"], true);
  EXPECT_EQ(again.body["label"], label.body["label"]);
  EXPECT_EQ(f.stub.calls(), 1u);

  const auto listed = get(s, "/api/topics");
  EXPECT_EQ(listed.body["topics"][0]["label"], label.body["label"]);
  EXPECT_TRUE(listed.body["topics"][1]["label"].is_null());
  EXPECT_EQ(f.stub.calls(), 1u);
}

TEST(ServiceApi, PrelabelFillsEveryTopic) {
  Fixture f;
  Service s(f.cfg);
  EXPECT_EQ(s.prelabel_all(), 2u);
  const auto listed = get(s, "/api/topics");
  for (const auto& t : listed.body["topics"]) EXPECT_TRUE(t["label"].is_string());
}

TEST(ServiceApi, SalientAndTrend) {
  Fixture f;
  Service s(f.cfg);
  const auto r = get(s, "/api/topics/1/salient", {{"limit", "5"}, {"pool", "50"}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["topic"], 1);
  EXPECT_EQ(r.body["words"].size(), 5u);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GE(r.body["words"][i - 1]["s_final"], r.body["words"][i]["s_final"]);
  EXPECT_EQ(get(s, "/api/topics/7/salient").status, 404);
  EXPECT_EQ(get(s, "/api/topics/x/salient").status, 400);
  EXPECT_EQ(get(s, "/api/topics/0/salient", {{"limit", "0"}}).status, 400);

  const auto word = s.beta().vocab()[0];
  const auto tr = get(s, "/api/topics/0/trend", {{"words", word}});
  ASSERT_EQ(tr.status, 200);
  ASSERT_EQ(tr.body["series"].size(), 1u);
  ASSERT_EQ(tr.body["series"][0]["values"].size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_NEAR(tr.body["series"][0]["values"][t].get<double>(), s.beta().at(t, 0, 0), 1e-7);
  }
  const auto bad = get(s, "/api/topics/0/trend", {{"words", "notaword"}});
  EXPECT_EQ(bad.status, 404);
  EXPECT_EQ(error_code(bad), "unknown_term");
}

TEST(ServiceApi, MetricsShape) {
  Fixture f;
  Service s(f.cfg);
  const auto r = get(s, "/api/metrics");
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(r.body.contains("ttq"));
  EXPECT_EQ(get(s, "/api/metrics").body, r.body);
}

TEST(ServiceApi, RetrieveStatuses) {
  Fixture f;
  Service s(f.cfg);
  const auto ok = get(s, "/api/retrieve", {{"word", "rbi"}, {"time", "0"}});
  ASSERT_EQ(ok.status, 200);
  EXPECT_EQ(ok.body["results"].size(), 2u);
  EXPECT_EQ(ok.body["timestamp"], "2019");
  EXPECT_FALSE(ok.body["results"][0]["highlights"].empty());

  EXPECT_EQ(get(s, "/api/retrieve", {{"word", "rbi"}, {"time", "-1"}}).status, 400);
  EXPECT_EQ(get(s, "/api/retrieve", {{"word", "rbi"}}).status, 400);
  EXPECT_EQ(get(s, "/api/retrieve", {{"word", "rbi"}, {"time", "0"}, {"lambda", "2"}}).status, 400);
  const auto far = get(s, "/api/retrieve", {{"word", "rbi"}, {"time", "99"}});
  EXPECT_EQ(far.status, 404);
  const auto none = get(s, "/api/retrieve", {{"word", "nonexistentword"}, {"time", "0"}});
  EXPECT_EQ(none.status, 200);
  EXPECT_TRUE(none.body["results"].empty());
}

TEST(ServiceApi, IndexCacheReusedAcrossStarts) {
  Fixture f;
  {
    Service s(f.cfg);
    EXPECT_FALSE(s.index_cache_hit());
  }
  Service again(f.cfg);
  EXPECT_TRUE(again.index_cache_hit());
  EXPECT_TRUE(std::filesystem::exists(f.cfg.corpus_dir / "index.cache"));
}

TEST(ServiceApi, SummarizeAndChatSession) {
  Fixture f;
  Service s(f.cfg);
  const auto sum = post(s, "/api/summarize", {{"word", "rbi"}, {"time", 0}});
  ASSERT_EQ(sum.status, 200) << sum.body.dump();
  EXPECT_EQ(sum.body["doc_ids"].size(), 2u);
  EXPECT_EQ(sum.body["bullets"].size(), 2u);

  const auto created = post(s, "/api/sessions", {{"doc_ids", sum.body["doc_ids"]}});
  ASSERT_EQ(created.status, 201);
  const auto id = created.body["session_id"].get<std::string>();
  const auto chat = post(s, "/api/sessions/" + id + "/chat", {{"message", "What about the football league?"}});
  ASSERT_EQ(chat.status, 200);
  EXPECT_EQ(chat.body["reply"], kRefusalSentinel);
  EXPECT_EQ(chat.body["turn"], 0);
  const auto second = post(s, "/api/sessions/" + id + "/chat", {{"message", "What did the RBI do?"}});
  EXPECT_EQ(second.body["turn"], 1);
  EXPECT_NE(second.body["reply"], kRefusalSentinel);
  EXPECT_EQ(f.stub.requests().back()["messages"].size(), 4u);

  const auto missing = post(s, "/api/sessions/ffff/chat", {{"message", "hi"}});
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(error_code(missing), "unknown_session");
  EXPECT_EQ(post(s, "/api/sessions/" + id + "/chat", {{"message", ""}}).status, 400);
  EXPECT_EQ(post(s, "/api/sessions", {{"doc_ids", {"nope"}}}).status, 404);
  EXPECT_EQ(s.handle("POST", "/api/summarize", {}, "{not json").status, 400);
}

TEST(ServiceApi, ProviderTimeoutMapsTo502) {
  Fixture f([](const json&) { return StubReply{200, "late", std::chrono::milliseconds(2500)}; }, 1);
  Service s(f.cfg);
  const auto created = post(s, "/api/sessions", {{"word", "rbi"}, {"time", 0}});
  ASSERT_EQ(created.status, 201);
  const auto chat =
      post(s, "/api/sessions/" + created.body["session_id"].get<std::string>() + "/chat", {{"message", "hi"}});
  EXPECT_EQ(chat.status, 502);
  EXPECT_EQ(error_code(chat), "llm_timeout");
}

TEST(ServiceApi, RoutingErrors) {
  Fixture f;
  Service s(f.cfg);
  EXPECT_EQ(get(s, "/api/nothing").status, 404);
  EXPECT_EQ(post(s, "/api/meta").status, 405);
  EXPECT_EQ(get(s, "/api/topics/0/label").status, 405);
}

TEST(ServiceStartup, MissingTensorNamed) {
  Fixture f;
  std::filesystem::remove(f.cfg.model_dir / "beta.f32");
  try {
    Service s(f.cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StartupValidation);
    EXPECT_NE(std::string(e.what()).find("beta.f32"), std::string::npos);
  }
}

TEST(ServiceStartup, CorruptTensorRejected) {
  Fixture f;
  auto bytes = read_file(f.cfg.model_dir / "beta.f32");
  bytes.resize(bytes.size() - 4);
  write_file_atomic(f.cfg.model_dir / "beta.f32", bytes);
  EXPECT_THROW(Service s(f.cfg), Error);
}

TEST(Sessions, LruCapAndTtl) {
  SessionStore store(2, std::chrono::seconds(3600));
  GroundedSession a, b, c;
  a.id = "a";
  b.id = "b";
  c.id = "c";
  store.create(a);
  store.create(b);
  EXPECT_TRUE(store.find("a"));
  store.create(c);
  EXPECT_EQ(store.size(), 2u);
  EXPECT_TRUE(store.find("a"));
  EXPECT_FALSE(store.find("b"));

  SessionStore expiring(4, std::chrono::seconds(0));
  expiring.create(a);
  std::this_thread::sleep_for(std::chrono::milliseconds(5));
  EXPECT_FALSE(expiring.find("a"));
}

TEST(HttpServerTest, CorsAndJsonOverSocket) {
  Fixture f;
  f.cfg.cors_origins = {"http://allowed.example"};
  Service s(f.cfg);
  HttpServer server(s);
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);

  auto res = client.Get("/api/meta", {{"Origin", "http://allowed.example"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://allowed.example");
  EXPECT_NE(res->get_header_value("Content-Type").find("application/json"), std::string::npos);
  EXPECT_EQ(json::parse(res->body)["K"], 2);

  res = client.Get("/api/meta", {{"Origin", "http://evil.example"}});
  ASSERT_TRUE(res);
  EXPECT_FALSE(res->has_header("Access-Control-Allow-Origin"));

  res = client.Options("/api/summarize", {{"Origin", "http://allowed.example"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);

  res = client.Get("/api/retrieve?word=rbi&time=0");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["results"].size(), 2u);

  res = client.Post("/api/topics/0/label", "", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  res = client.Get("/api/topics/9/salient");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body)["error"]["code"], "not_found");
  server.stop();
}
