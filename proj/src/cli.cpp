#include "topictrail/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iomanip>
#include <iostream>
#include <thread>

#include "topictrail/beta.hpp"
#include "topictrail/corpus.hpp"
#include "topictrail/error.hpp"
#include "topictrail/io.hpp"
#include "topictrail/llm.hpp"
#include "topictrail/llm_stub.hpp"
#include "topictrail/metrics.hpp"
#include "topictrail/retrieval.hpp"
#include "topictrail/saliency.hpp"
#include "topictrail/service.hpp"
#include "topictrail/text.hpp"

namespace topictrail {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::atomic<bool> g_interrupted{false};
extern "C" void on_interrupt(int) { g_interrupted = true; }

void wait_for_signal() {
  g_interrupted = false;
  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

struct Globals {
  bool json = false;
  bool quiet = false;
};

// Emits `result` as JSON under --json, otherwise the human text.
void report(const Globals& g, std::ostream& out, const json& result, const std::string& text) {
  if (g.json) {
    out << result.dump(2) << "\n";
  } else if (!g.quiet && !text.empty()) {
    out << text;
  }
}

fs::path corpus_or_model(const std::string& corpus, const fs::path& model) {
  if (!corpus.empty()) return corpus;
  if (fs::exists(model / "vocab.txt")) return model;
  throw Error(ErrorCode::InvalidArgument, "no vocab.txt in " + model.string() + "; pass --corpus");
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

ResponseCache llm_cache(const fs::path& corpus_dir) { return ResponseCache(corpus_dir / "cache" / "llm"); }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal topic exploration toolkit", "topictrail"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read flags from a TOML or INI file");
  Globals g;
  app.add_flag("--json", g.json, "Print machine-readable JSON on stdout");
  app.add_flag("--quiet", g.quiet, "Suppress informational output");

  std::function<void()> action;

  IngestConfig ingest;
  std::string input, out_dir, stopwords_file;
  bool no_stopwords = false;
  bool keep_punct = false;
  std::size_t max_vocab = 0, min_doc_freq = 0;
  auto* pre = app.add_subcommand("preprocess", "Tokenize, detect phrases and bin a docs.jsonl corpus");
  pre->add_option("--input", input, "docs.jsonl with id, text and timestamp")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", out_dir, "Output directory")->required();
  pre->add_option("--stopwords", stopwords_file, "Stopword file, one per line (default: built-in English list)")
      ->check(CLI::ExistingFile);
  pre->add_flag("--no-stopwords", no_stopwords, "Keep stopwords");
  pre->add_option("--min-count-bigram", ingest.min_count_bigram, "Minimum pair count for a phrase")
      ->capture_default_str();
  pre->add_option("--threshold-bigram", ingest.threshold_bigram, "Phrase score threshold")->capture_default_str();
  pre->add_option("--min-chars", ingest.min_chars, "Minimum token length in characters")->capture_default_str();
  pre->add_option("--min-words-docs", ingest.min_words_docs, "Drop documents with fewer tokens")
      ->capture_default_str();
  pre->add_option("--max-vocab", max_vocab, "Keep the most frequent terms by document frequency (0 = all)");
  pre->add_option("--min-doc-freq", min_doc_freq, "Drop terms in fewer documents (0 = off)");
  pre->add_flag("--keep-punctuation", keep_punct, "Do not strip edge punctuation");
  pre->callback([&] {
    action = [&] {
      if (!no_stopwords) {
        if (stopwords_file.empty()) {
          ingest.stopwords = english_stopwords();
        } else {
          for (auto& w : read_lines(stopwords_file)) {
            if (!w.empty()) ingest.stopwords.insert(fold_case(w));
          }
        }
      }
      ingest.remove_punctuation = !keep_punct;
      if (max_vocab > 0) ingest.max_vocab = max_vocab;
      if (min_doc_freq > 0) ingest.min_doc_freq = min_doc_freq;
      const auto docs = read_docs_jsonl(input);
      const auto corpus = preprocess_corpus(docs, ingest);
      write_processed(corpus, out_dir);
      const auto& s = corpus.stats();
      report(g, out, json::parse(corpus.stats_json()),
             "documents " + std::to_string(s.num_docs) + " of " + std::to_string(docs.size()) + ", vocabulary " +
                 std::to_string(s.vocab_size) + ", timestamps " + std::to_string(s.num_timestamps) +
                 ", avg length " + fixed(s.avg_len, 2) + "\nwrote " + out_dir + "\n");
    };
  });

  std::string corpus_dir, model_dir, out_file;
  auto* validate = app.add_subcommand("validate", "Check a topic-word tensor against a processed corpus");
  validate->add_option("--corpus", corpus_dir, "Processed corpus directory (default: the model directory)");
  validate->add_option("--model", model_dir, "Model directory with model_meta.json and beta.f32")
      ->required()
      ->check(CLI::ExistingDirectory);
  validate->callback([&] {
    action = [&] {
      const auto beta = load_beta(model_dir, corpus_or_model(corpus_dir, model_dir));
      json result = {{"ok", true},
                     {"T", beta.num_times()},
                     {"K", beta.num_topics()},
                     {"V", beta.vocab_size()},
                     {"model_name", beta.model_name()},
                     {"vocab_sha256", beta.vocab_ref()},
                     {"timestamps_sha256", beta.timestamp_ref()}};
      report(g, out, result,
             "ok: T=" + std::to_string(beta.num_times()) + " K=" + std::to_string(beta.num_topics()) +
                 " V=" + std::to_string(beta.vocab_size()) + "\n");
    };
  });

  std::size_t topn = kDefaultTopN;
  auto* evaluate = app.add_subcommand("evaluate", "Temporal coherence, smoothness and quality");
  evaluate->add_option("--corpus", corpus_dir, "Processed corpus directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--model", model_dir, "Model directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--topn", topn, "Top words per topic and time")->capture_default_str()->check(CLI::PositiveNumber);
  evaluate->add_option("--out", out_file, "Write the quality report here");
  evaluate->callback([&] {
    action = [&] {
      const auto corpus = load_processed(corpus_dir);
      const auto beta = load_beta(model_dir, corpus_dir);
      const auto quality = ttq(beta, corpus, topn);
      const auto text = quality.to_json();
      if (!out_file.empty()) write_file_atomic(out_file, text);
      std::string human;
      for (std::size_t k = 0; k < quality.per_topic.size(); ++k) {
        const auto& q = quality.per_topic[k];
        human += "topic " + std::to_string(k) + "  ttc " + fixed(q.ttc) + "  tts " + fixed(q.tts) + "  ttq " +
                 fixed(q.ttq) + "\n";
      }
      human += "mean     ttc " + fixed(quality.ttc) + "  tts " + fixed(quality.tts) + "  ttq " + fixed(quality.ttq) + "\n";
      report(g, out, json::parse(text), human);
    };
  });

  std::size_t topic = 0;
  std::size_t limit = 10;
  SaliencyConfig saliency;
  auto* salient = app.add_subcommand("salient", "Rank the most salient words of a topic");
  salient->add_option("--model", model_dir, "Model directory")->required()->check(CLI::ExistingDirectory);
  salient->add_option("--corpus", corpus_dir, "Processed corpus directory (default: the model directory)");
  salient->add_option("--topic", topic, "Topic index")->required();
  salient->add_option("--pool", saliency.pool_size, "Candidate words by peak probability")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  salient->add_option("--limit", limit, "Words to report")->capture_default_str()->check(CLI::PositiveNumber);
  salient->add_option("--top-n", saliency.top_n_membership, "Top-N used for uniqueness")->capture_default_str();
  salient->add_option("--out", out_file, "Write the ranking here");
  salient->callback([&] {
    action = [&] {
      const auto beta = load_beta(model_dir, corpus_or_model(corpus_dir, model_dir));
      const auto scores = rank_salient(beta, topic, saliency, limit);
      const auto text = saliency_json(beta, topic, saliency, scores);
      if (!out_file.empty()) write_file_atomic(out_file, text);
      std::string human;
      for (const auto& s : scores) {
        human += beta.vocab()[s.word] + "  " + fixed(s.s_final) + "  (burst " + fixed(s.s_burst) + ", spec " +
                 fixed(s.s_spec) + ", uniq " + fixed(s.s_uniq) + ")\n";
      }
      report(g, out, json::parse(text), human);
    };
  });

  bool all_topics = false;
  auto* label = app.add_subcommand("label", "Name topics with the configured LLM (cached)");
  label->add_option("--corpus", corpus_dir, "Processed corpus directory")->required()->check(CLI::ExistingDirectory);
  label->add_option("--model", model_dir, "Model directory")->required()->check(CLI::ExistingDirectory);
  auto* label_topic_opt = label->add_option("--topic", topic, "Topic index");
  label->add_flag("--all", all_topics, "Label every topic")->excludes(label_topic_opt);
  label->add_option("--topn", topn, "Words per timestamp in the prompt")->capture_default_str();
  label->callback([&] {
    if (!all_topics && label_topic_opt->count() == 0) throw CLI::ValidationError("label", "--topic or --all is required");
    action = [&] {
      const auto beta = load_beta(model_dir, corpus_dir);
      LlmClient client(LlmSettings::from_env(), std::make_shared<HttpChatProvider>(LlmSettings::from_env()));
      auto cache = llm_cache(corpus_dir);
      json labels = json::array();
      std::string human;
      const std::size_t first = all_topics ? 0 : topic;
      const std::size_t last = all_topics ? beta.num_topics() : topic + 1;
      for (std::size_t k = first; k < last; ++k) {
        const auto name = label_topic(keyword_trajectory(beta, k, topn), client, cache);
        labels.push_back({{"topic", k}, {"label", name}});
        human += std::to_string(k) + "  " + name + "\n";
      }
      report(g, out, {{"labels", labels}}, human);
    };
  });

  std::string word;
  std::size_t time = 0;
  RetrievalOptions ropts;
  auto* retrieve = app.add_subcommand("retrieve", "Documents for a word at a timestamp");
  retrieve->add_option("--corpus", corpus_dir, "Processed corpus directory")->required()->check(CLI::ExistingDirectory);
  retrieve->add_option("--word", word, "Query term")->required();
  retrieve->add_option("--time", time, "Timestamp index")->required();
  retrieve->add_option("--limit", ropts.limit, "Documents to return")->capture_default_str()->check(CLI::PositiveNumber);
  retrieve->add_option("--lambda", ropts.lambda, "Relevance weight in MMR")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  retrieve->add_option("--candidates", ropts.candidate_cap, "Candidate pool before MMR")->capture_default_str();
  retrieve->callback([&] {
    action = [&] {
      const auto corpus = load_processed(corpus_dir);
      auto loaded = build_or_load_index(corpus, fs::path(corpus_dir) / "index.cache");
      Retriever retriever(corpus, std::move(loaded.index));
      json results = json::array();
      std::string human;
      for (const auto& r : retriever.retrieve(word, time, ropts)) {
        const auto& doc = corpus.documents()[*corpus.doc_index(r.id)];
        json spans = json::array();
        for (const auto& s : r.highlights) spans.push_back({s.begin, s.end});
        results.push_back({{"id", r.id}, {"relevance", r.relevance}, {"highlights", spans}, {"text", doc.text}});
        human += r.id + "  " + fixed(r.relevance) + "  " + doc.text.substr(0, 100) + "\n";
      }
      report(g, out,
             {{"word", word}, {"time", time}, {"timestamp", corpus.timestamps().at(time)}, {"results", results}},
             human);
    };
  });

  auto* summarize_cmd = app.add_subcommand("summarize", "Summarize the documents retrieved for a word");
  summarize_cmd->add_option("--corpus", corpus_dir, "Processed corpus directory")->required()->check(CLI::ExistingDirectory);
  summarize_cmd->add_option("--word", word, "Query term")->required();
  summarize_cmd->add_option("--time", time, "Timestamp index")->required();
  summarize_cmd->add_option("--limit", ropts.limit, "Documents to summarize")->capture_default_str();
  summarize_cmd->callback([&] {
    action = [&] {
      const auto corpus = load_processed(corpus_dir);
      auto loaded = build_or_load_index(corpus, fs::path(corpus_dir) / "index.cache");
      Retriever retriever(corpus, std::move(loaded.index));
      std::vector<std::string> texts;
      for (const auto& r : retriever.retrieve(word, time, ropts)) {
        texts.push_back(corpus.documents()[*corpus.doc_index(r.id)].text);
      }
      if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "no documents contain " + word);
      const auto settings = LlmSettings::from_env();
      LlmClient client(settings, std::make_shared<HttpChatProvider>(settings));
      auto cache = llm_cache(corpus_dir);
      const auto summary = summarize(texts, {word}, corpus.timestamps().at(time), client, cache);
      report(g, out, {{"summary", summary}, {"documents", texts.size()}}, summary + "\n");
    };
  });

  ServiceConfig svc;
  std::vector<std::string> cors;
  std::string static_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--corpus", svc.corpus_dir, "Processed corpus directory")->required();
  serve_cmd->add_option("--model", svc.model_dir, "Model directory")->required();
  serve_cmd->add_option("--host", svc.host, "Listen address")->capture_default_str();
  serve_cmd->add_option("--port", svc.port, "Listen port (0 picks a free port)")->capture_default_str();
  serve_cmd->add_flag("--prelabel", svc.prelabel, "Label every topic before serving");
  serve_cmd->add_option("--cors-origin", cors, "Allowed browser origin (repeatable, default any)");
  serve_cmd->add_option("--static", static_dir, "Serve a built web UI from this directory");
  serve_cmd->add_option("--topn", svc.topn, "Top words per topic and time")->capture_default_str();
  serve_cmd->add_option("--lambda", svc.retrieval.lambda, "Default MMR relevance weight")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  serve_cmd->callback([&] {
    action = [&] {
      svc.llm = LlmSettings::from_env();
      if (!cors.empty()) svc.cors_origins = cors;
      if (!static_dir.empty()) svc.static_dir = static_dir;
      serve(svc);
    };
  });

  int stub_port = 8000;
  auto* stub = app.add_subcommand("stub-llm", "Run the offline chat-completions stub");
  stub->add_option("--port", stub_port, "Listen port on 127.0.0.1 (0 picks a free port)")->capture_default_str();
  stub->callback([&] {
    action = [&] {
      StubLlmServer server(StubLlmServer::default_reply, stub_port);
      report(g, out, {{"endpoint", server.endpoint()}}, "LLM_API_BASE=" + server.endpoint() + "\n");
      out.flush();
      wait_for_signal();
      server.stop();
    };
  });

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    action();
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace topictrail
