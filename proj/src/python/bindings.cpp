#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "topictrail/beta.hpp"
#include "topictrail/corpus.hpp"
#include "topictrail/error.hpp"
#include "topictrail/llm.hpp"
#include "topictrail/llm_stub.hpp"
#include "topictrail/metrics.hpp"
#include "topictrail/retrieval.hpp"
#include "topictrail/saliency.hpp"
#include "topictrail/service.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace topictrail;

namespace {

py::dict quality_dict(const TemporalQuality& q) {
  py::list per_topic;
  for (std::size_t k = 0; k < q.per_topic.size(); ++k) {
    const auto& t = q.per_topic[k];
    per_topic.append(py::dict("topic"_a = k, "ttc"_a = t.ttc, "tts"_a = t.tts, "ttq"_a = t.ttq));
  }
  return py::dict("topn"_a = q.topn, "ttc"_a = q.ttc, "tts"_a = q.tts, "ttq"_a = q.ttq, "per_topic"_a = per_topic);
}

ProcessedCorpus preprocess_py(const py::list& docs, std::optional<std::vector<std::string>> stopwords,
                              int min_count_bigram, double threshold_bigram, int min_chars,
                              int min_words_docs, bool remove_punctuation) {
  std::vector<RawDocument> raw;
  for (const auto& item : docs) {
    const auto d = item.cast<py::dict>();
    raw.push_back({d["id"].cast<std::string>(), d["text"].cast<std::string>(), d["timestamp"].cast<std::string>()});
  }
  IngestConfig cfg;
  if (stopwords) {
    cfg.stopwords.insert(stopwords->begin(), stopwords->end());
  } else {
    cfg.stopwords = english_stopwords();
  }
  cfg.min_count_bigram = min_count_bigram;
  cfg.threshold_bigram = threshold_bigram;
  cfg.min_chars = min_chars;
  cfg.min_words_docs = min_words_docs;
  cfg.remove_punctuation = remove_punctuation;
  py::gil_scoped_release release;
  return preprocess_corpus(raw, cfg);
}

struct PyRetriever {
  py::object owner;  // keeps the corpus alive
  std::unique_ptr<Retriever> retriever;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Temporal topic exploration: ingest, quality metrics, saliency, retrieval and LLM helpers";

  static auto* error_type = new py::object(py::exception<Error>(m, "TopicTrailError", PyExc_ValueError));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = (*error_type)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type->ptr(), exc.ptr());
    }
  });

  py::class_<ProcessedCorpus>(m, "Corpus")
      .def_static("load", &load_processed, "directory"_a)
      .def("save", [](const ProcessedCorpus& c, const std::filesystem::path& dir) { write_processed(c, dir); },
           "directory"_a)
      .def_property_readonly("vocab", &ProcessedCorpus::vocab)
      .def_property_readonly("timestamps", &ProcessedCorpus::timestamps)
      .def_property_readonly("num_docs", [](const ProcessedCorpus& c) { return c.documents().size(); })
      .def_property_readonly("checksum", &ProcessedCorpus::checksum)
      .def("tokens", [](const ProcessedCorpus& c, const std::string& id) {
        const auto idx = c.doc_index(id);
        if (!idx) throw py::key_error(id);
        std::vector<std::string> out;
        for (auto t : c.documents()[*idx].tokens) out.push_back(c.term(t));
        return out;
      })
      .def("doc_ids", [](const ProcessedCorpus& c) {
        std::vector<std::string> out;
        for (const auto& d : c.documents()) out.push_back(d.id);
        return out;
      })
      .def("time_index", [](const ProcessedCorpus& c, const std::string& id) {
        const auto idx = c.doc_index(id);
        if (!idx) throw py::key_error(id);
        return c.documents()[*idx].time_index;
      })
      .def("stats", [](const ProcessedCorpus& c) {
        return py::module_::import("json").attr("loads")(c.stats_json());
      });

  m.def("preprocess", &preprocess_py, "docs"_a, "stopwords"_a = py::none(), "min_count_bigram"_a = 5,
        "threshold_bigram"_a = 20.0, "min_chars"_a = 3, "min_words_docs"_a = 3, "remove_punctuation"_a = true,
        "Tokenize, merge phrases, prune and bin a list of {id, text, timestamp} dicts");
  m.def("bigram_score", &bigram_score, "pair_count"_a, "left_count"_a, "right_count"_a, "vocab_size"_a,
        "min_count"_a);

  py::class_<BetaTensor>(m, "BetaTensor")
      .def(py::init([](std::size_t T, std::size_t K, std::vector<float> values, std::vector<std::string> vocab,
                       std::vector<std::string> timestamps, std::string name) {
             return BetaTensor(T, K, std::move(values), std::move(vocab), std::move(timestamps), std::move(name));
           }),
           "num_times"_a, "num_topics"_a, "values"_a, "vocab"_a, "timestamps"_a, "model_name"_a = "")
      .def_static("load", py::overload_cast<const std::filesystem::path&, const std::filesystem::path&>(&load_beta),
                  "model_dir"_a, "corpus_dir"_a)
      .def("save", [](const BetaTensor& b, const std::filesystem::path& dir) { write_beta(b, dir); }, "model_dir"_a)
      .def_property_readonly("shape", [](const BetaTensor& b) {
        return py::make_tuple(b.num_times(), b.num_topics(), b.vocab_size());
      })
      .def_property_readonly("vocab", &BetaTensor::vocab)
      .def_property_readonly("timestamps", &BetaTensor::timestamps)
      .def_property_readonly("model_name", &BetaTensor::model_name)
      .def("at", [](const BetaTensor& b, std::size_t t, std::size_t k, TermId v) {
        if (t >= b.num_times() || k >= b.num_topics() || v >= b.vocab_size()) throw py::index_error();
        return b.at(t, k, v);
      })
      .def("top_words", [](const BetaTensor& b, std::size_t k, std::size_t t, std::size_t n) {
        return top_words(b, k, t, n).words;
      }, "topic"_a, "time"_a, "n"_a = kDefaultTopN)
      .def("trajectory", [](const BetaTensor& b, std::size_t k, const std::string& word) {
        const auto v = b.term_id(word);
        if (!v) throw Error(ErrorCode::UnknownTerm, "term not in vocabulary: " + word);
        return trajectory(b, k, *v).series;
      }, "topic"_a, "word"_a);

  m.def("npmi", [](const ProcessedCorpus& c, const std::string& a, const std::string& b) {
    const std::vector<std::string> terms{a, b};
    return npmi(cooccurrence_stats(c, terms), a, b);
  }, "corpus"_a, "a"_a, "b"_a);
  m.def("evaluate", [](const BetaTensor& b, const ProcessedCorpus& c, std::size_t topn) {
    return quality_dict(ttq(b, c, topn));
  }, "beta"_a, "corpus"_a, "topn"_a = kDefaultTopN, "Temporal coherence, smoothness and quality per topic");

  m.def("salient", [](const BetaTensor& b, std::size_t k, std::size_t pool, std::size_t limit, std::size_t top_n) {
    SaliencyConfig cfg;
    cfg.pool_size = pool;
    cfg.top_n_membership = top_n;
    py::list out;
    for (const auto& s : rank_salient(b, k, cfg, limit)) {
      out.append(py::dict("word"_a = b.vocab()[s.word], "id"_a = s.word, "s_burst"_a = s.s_burst,
                          "s_spec"_a = s.s_spec, "s_uniq"_a = s.s_uniq, "s_final"_a = s.s_final));
    }
    return out;
  }, "beta"_a, "topic"_a, "pool"_a = 500, "limit"_a = 10, "top_n"_a = 10);

  py::class_<PyRetriever>(m, "Retriever")
      .def(py::init([](py::object corpus) {
        auto& c = corpus.cast<const ProcessedCorpus&>();
        return PyRetriever{corpus, std::make_unique<Retriever>(c, InvertedIndex::build(c))};
      }), "corpus"_a)
      .def("postings", [](const PyRetriever& r, const std::string& word, std::size_t t) {
        return r.retriever->index().posting_ids(r.retriever->corpus(), word, t);
      }, "word"_a, "time"_a)
      .def("retrieve", [](const PyRetriever& r, const std::string& word, std::size_t t, std::size_t limit,
                          double lambda) {
        RetrievalOptions opts;
        opts.limit = limit;
        opts.lambda = lambda;
        py::list out;
        for (const auto& res : r.retriever->retrieve(word, t, opts)) {
          py::list spans;
          for (const auto& s : res.highlights) spans.append(py::make_tuple(s.begin, s.end));
          out.append(py::dict("id"_a = res.id, "relevance"_a = res.relevance, "highlights"_a = spans));
        }
        return out;
      }, "word"_a, "time"_a, "limit"_a = 20, "lambda_"_a = 0.7);
  m.def("highlight", [](const std::string& text, const std::string& term) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& s : highlight(text, term)) out.emplace_back(s.begin, s.end);
    return out;
  }, "text"_a, "term"_a);

  m.def("cache_key", [](const std::string& user, std::optional<std::string> system, const std::string& model,
                        const std::string& endpoint, int max_tokens) {
    LlmRequest req;
    req.user = user;
    req.system = std::move(system);
    req.model = model;
    req.endpoint = endpoint;
    req.max_tokens = max_tokens;
    return cache_key(req);
  }, "user"_a, "system"_a = py::none(), "model"_a = LlmSettings{}.model, "endpoint"_a = LlmSettings{}.endpoint,
        "max_tokens"_a = 512);
  m.def("label_prompt", [](const BetaTensor& b, std::size_t k, std::size_t topn) {
    return render_label_prompt(keyword_trajectory(b, k, topn));
  }, "beta"_a, "topic"_a, "topn"_a = kDefaultTopN);
  m.def("label_topic", [](const BetaTensor& b, std::size_t k, const std::filesystem::path& cache_dir,
                          const std::string& endpoint, const std::string& model, std::size_t topn) {
    LlmSettings settings;
    settings.endpoint = endpoint;
    settings.model = model;
    const auto traj = keyword_trajectory(b, k, topn);
    py::gil_scoped_release release;
    LlmClient client(settings, std::make_shared<HttpChatProvider>(settings));
    ResponseCache cache(cache_dir);
    return label_topic(traj, client, cache);
  }, "beta"_a, "topic"_a, "cache_dir"_a, "endpoint"_a, "model"_a = LlmSettings{}.model, "topn"_a = kDefaultTopN);
  m.attr("REFUSAL") = std::string(kRefusalSentinel);

  py::class_<StubLlmServer>(m, "StubLlm")
      .def(py::init([] { return std::make_unique<StubLlmServer>(); }))
      .def_property_readonly("endpoint", &StubLlmServer::endpoint)
      .def_property_readonly("calls", &StubLlmServer::calls)
      .def("stop", &StubLlmServer::stop);

  py::class_<Service>(m, "Service")
      .def(py::init([](const std::filesystem::path& corpus_dir, const std::filesystem::path& model_dir,
                       const std::string& llm_endpoint) {
             ServiceConfig cfg;
             cfg.corpus_dir = corpus_dir;
             cfg.model_dir = model_dir;
             cfg.llm.endpoint = llm_endpoint;
             return std::make_unique<Service>(cfg);
           }),
           "corpus_dir"_a, "model_dir"_a, "llm_endpoint"_a = LlmSettings{}.endpoint)
      .def("handle", [](Service& s, const std::string& method, const std::string& path,
                        const std::map<std::string, std::string>& query, const std::string& body) {
        ApiResponse res;
        {
          py::gil_scoped_release release;
          res = s.handle(method, path, query, body);
        }
        return py::make_tuple(res.status, py::module_::import("json").attr("loads")(res.body.dump()));
      }, "method"_a, "path"_a, "query"_a = std::map<std::string, std::string>{}, "body"_a = "");
}
