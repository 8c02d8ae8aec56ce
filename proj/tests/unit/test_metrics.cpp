#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "support.hpp"
#include "topictrail/error.hpp"
#include "topictrail/metrics.hpp"

using namespace topictrail;
using tt_test::DocSpec;

namespace {

using DocSets = std::vector<std::set<std::string>>;

DocSets doc_sets(const ProcessedCorpus& c) {
  DocSets out;
  for (const auto& d : c.documents()) {
    std::set<std::string> s;
    for (auto t : d.tokens) s.insert(c.term(t));
    out.push_back(s);
  }
  return out;
}

double oracle_npmi(const DocSets& docs, const std::string& a, const std::string& b) {
  if (a == b) return 1.0;
  double D = docs.size(), da = 0, db = 0, dab = 0;
  for (const auto& s : docs) {
    const bool ha = s.count(a) > 0, hb = s.count(b) > 0;
    da += ha;
    db += hb;
    dab += ha && hb;
  }
  if (dab == 0) return -1.0;
  if (dab == D) return 1.0;
  const double pab = dab / D, pa = da / D, pb = db / D;
  return std::clamp(std::log(pab / (pa * pb)) / -std::log(pab), -1.0, 1.0);
}

// A corpus over vocab w0..w{V-1} where every word occurs at least once.
ProcessedCorpus random_corpus(std::mt19937& rng, std::size_t D, std::size_t V, std::size_t T) {
  std::uniform_int_distribution<std::size_t> pick_word(0, V - 1), pick_doc(0, D - 1), pick_t(0, T - 1);
  std::uniform_int_distribution<int> len(1, 8);
  std::vector<ProcessedDocument> docs(D);
  for (std::size_t d = 0; d < D; ++d) {
    docs[d].id = "d" + std::to_string(d);
    docs[d].time_index = d < T ? d : pick_t(rng);
    const int n = len(rng);
    for (int i = 0; i < n; ++i) docs[d].tokens.push_back(static_cast<TermId>(pick_word(rng)));
  }
  for (std::size_t v = 0; v < V; ++v) docs[pick_doc(rng)].tokens.push_back(static_cast<TermId>(v));
  return ProcessedCorpus(std::move(docs), tt_test::numbered("w", V), tt_test::numbered("t", T));
}

// Beta whose top-N set at each time is given explicitly, strictly ordered.
BetaTensor beta_with_tops(const std::vector<std::vector<std::vector<std::size_t>>>& tops, std::size_t V) {
  std::vector<std::vector<std::vector<double>>> rows;
  for (const auto& per_t : tops) {
    rows.emplace_back();
    for (const auto& set : per_t) {
      std::vector<double> row(V, 0.001);
      for (std::size_t i = 0; i < set.size(); ++i) row[set[i]] = 1.0 - 0.01 * static_cast<double>(i);
      rows.back().push_back(row);
    }
  }
  return tt_test::beta_from(rows);
}

}  // namespace

TEST(Cooccurrence, WorkedExamples) {
  const auto c = tt_test::corpus_from(
      {{"d1", 0, {"w1", "w2"}}, {"d2", 0, {"w1", "w2", "w1"}}, {"d3", 0, {"x"}}, {"d4", 0, {"y"}}}, 1);
  const std::vector<std::string> terms{"w1", "w2", "x", "y"};
  const auto stats = cooccurrence_stats(c, terms);
  EXPECT_EQ(stats.num_docs(), 4u);
  EXPECT_EQ(stats.df("w1"), 2u);
  EXPECT_EQ(stats.df("w2"), 2u);
  EXPECT_EQ(stats.jdf("w1", "w2"), 2u);
  EXPECT_EQ(stats.jdf("x", "y"), 0u);
  EXPECT_EQ(stats.jdf("w2", "w1"), stats.jdf("w1", "w2"));
}

TEST(Cooccurrence, UnknownTerm) {
  const auto c = tt_test::corpus_from({{"d1", 0, {"a", "b"}}}, 1);
  const std::vector<std::string> terms{"a", "zzz"};
  try {
    cooccurrence_stats(c, terms);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownTerm);
  }
}

TEST(Npmi, WorkedExamples) {
  const auto c = tt_test::corpus_from(
      {{"d1", 0, {"a", "b"}}, {"d2", 0, {"a", "b"}}, {"d3", 0, {"c"}}, {"d4", 0, {"d"}}}, 1);
  const std::vector<std::string> terms{"a", "b", "c", "d"};
  const auto stats = cooccurrence_stats(c, terms);
  EXPECT_DOUBLE_EQ(npmi(stats, "a", "b"), 1.0);
  EXPECT_DOUBLE_EQ(npmi(stats, "a", "c"), -1.0);
  EXPECT_DOUBLE_EQ(npmi(stats, "a", "a"), 1.0);

  const auto indep = tt_test::corpus_from(
      {{"d1", 0, {"a", "b"}}, {"d2", 0, {"a"}}, {"d3", 0, {"b"}}, {"d4", 0, {"z"}}}, 1);
  const std::vector<std::string> ab{"a", "b"};
  EXPECT_NEAR(npmi(cooccurrence_stats(indep, ab), "a", "b"), 0.0, 1e-15);
}

TEST(Npmi, PresentInEveryDocument) {
  const auto c = tt_test::corpus_from({{"d1", 0, {"a", "b"}}, {"d2", 0, {"b", "a"}}}, 1);
  const std::vector<std::string> ab{"a", "b"};
  EXPECT_DOUBLE_EQ(npmi(cooccurrence_stats(c, ab), "a", "b"), 1.0);
}

TEST(Npmi, UndefinedTerm) {
  std::vector<ProcessedDocument> docs{{"d1", {0}, 0, "a"}};
  ProcessedCorpus c(docs, {"a", "ghost"}, {"t0"});
  const std::vector<std::string> terms{"a", "ghost"};
  const auto stats = cooccurrence_stats(c, terms);
  try {
    npmi(stats, "a", "ghost");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UndefinedTerm);
  }
}

TEST(Npmi, MatchesBruteForceOnRandomCorpora) {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t D = 2 + rng() % 49, V = 2 + rng() % 29;
    const auto c = random_corpus(rng, D, V, 1);
    const auto sets = doc_sets(c);
    const auto stats = cooccurrence_stats(c, c.vocab());
    for (const auto& a : c.vocab()) {
      for (const auto& b : c.vocab()) {
        const double got = npmi(stats, a, b);
        ASSERT_NEAR(got, oracle_npmi(sets, a, b), 1e-9) << a << " " << b;
        ASSERT_GE(got, -1.0);
        ASSERT_LE(got, 1.0);
        ASSERT_EQ(got, npmi(stats, b, a));
      }
    }
  }
}

TEST(Tts, Anchors) {
  const auto same = beta_with_tops({{{0, 1, 2}}, {{0, 1, 2}}, {{0, 1, 2}}}, 8);
  EXPECT_DOUBLE_EQ(tts_topic(same, 0, 3), 1.0);

  const auto disjoint = beta_with_tops({{{0, 1}}, {{2, 3}}, {{4, 5}}}, 8);
  EXPECT_DOUBLE_EQ(tts_topic(disjoint, 0, 2), 0.0);

  const auto three_of_five = beta_with_tops({{{0, 1, 2, 3, 4}}, {{0, 1, 2, 5, 6}}, {{0, 1, 2, 7, 8}}}, 12);
  EXPECT_NEAR(tts_topic(three_of_five, 0, 5), 0.6, 1e-12);

  const auto single = beta_with_tops({{{0, 1}}}, 4);
  EXPECT_DOUBLE_EQ(tts_topic(single, 0, 2), 1.0);
}

TEST(Tts, IdenticalAdjacentSetsNeverDecrease) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const auto beta = tt_test::random_beta(rng, 4, 1, 12, 0.0);
    const double before = tts_topic(beta, 0, 4);
    std::vector<std::vector<std::vector<double>>> rows(4, std::vector<std::vector<double>>(1));
    for (std::size_t t = 0; t < 4; ++t) {
      for (TermId v = 0; v < 12; ++v) rows[t][0].push_back(beta.at(t == 2 ? 1 : t, 0, v));
    }
    EXPECT_GE(tts_topic(tt_test::beta_from(rows), 0, 4), before - 1e-15);
  }
}

TEST(Ttc, CrossPairMean) {
  // Top-2 sets {a,b} then {a,c}: pairs (a,a)=1, (a,c)=0, (b,a)=0, (b,c)=-1.
  const auto c = tt_test::corpus_from(
      {{"d1", 0, {"a", "b"}}, {"d2", 0, {"a", "c"}}, {"d3", 1, {"c"}}, {"d4", 1, {"b"}}}, 2);
  const std::vector<std::string> abc{"a", "b", "c"};
  const auto stats = cooccurrence_stats(c, abc);
  const auto sets = doc_sets(c);
  ASSERT_DOUBLE_EQ(npmi(stats, "a", "c"), 0.0);
  ASSERT_DOUBLE_EQ(npmi(stats, "b", "a"), 0.0);
  ASSERT_DOUBLE_EQ(npmi(stats, "b", "c"), -1.0);
  const auto beta = tt_test::beta_from({{{0.6, 0.4, 0.0}}, {{0.6, 0.0, 0.4}}}, {"a", "b", "c"});
  EXPECT_NEAR(ttc_topic(beta, stats, 0, 2), (1.0 + 0.0 + 0.0 - 1.0) / 4.0, 1e-15);
}

TEST(Ttc, Bounds) {
  const auto together = tt_test::corpus_from({{"d1", 0, {"a", "b", "c"}}, {"d2", 1, {"a", "b", "c"}}}, 2);
  const std::vector<std::string> abc{"a", "b", "c"};
  const auto beta = tt_test::beta_from({{{0.5, 0.3, 0.2}}, {{0.2, 0.3, 0.5}}}, {"a", "b", "c"});
  EXPECT_DOUBLE_EQ(ttc_topic(beta, cooccurrence_stats(together, abc), 0, 2), 1.0);

  const auto apart = tt_test::corpus_from({{"d1", 0, {"a", "b"}}, {"d2", 1, {"c", "d"}}}, 2);
  const std::vector<std::string> abcd{"a", "b", "c", "d"};
  const auto split = tt_test::beta_from({{{0.5, 0.5, 0, 0}}, {{0, 0, 0.5, 0.5}}}, {"a", "b", "c", "d"});
  EXPECT_DOUBLE_EQ(ttc_topic(split, cooccurrence_stats(apart, abcd), 0, 2), -1.0);
}

TEST(Ttc, SingleTimestampUsesWithinSetMean) {
  const auto c = tt_test::corpus_from({{"d1", 0, {"a", "b"}}, {"d2", 0, {"a", "c"}}, {"d3", 0, {"b"}}}, 1);
  const std::vector<std::string> abc{"a", "b", "c"};
  const auto stats = cooccurrence_stats(c, abc);
  const auto beta = tt_test::beta_from({{{0.5, 0.3, 0.2}}}, {"a", "b", "c"});
  const double expected = (npmi(stats, "a", "b") + npmi(stats, "a", "c") + npmi(stats, "b", "c")) / 3.0;
  EXPECT_NEAR(ttc_topic(beta, stats, 0, 3), expected, 1e-15);
  const auto q = ttq(beta, c, 3);
  EXPECT_DOUBLE_EQ(q.per_topic[0].tts, 1.0);
  EXPECT_EQ(q.per_topic[0].ttq, q.per_topic[0].ttc);
}

TEST(Ttc, MatchesOracleOnRandomInputs) {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t T = 2 + rng() % 3, V = 6 + rng() % 10, N = 2 + rng() % 4;
    const auto c = random_corpus(rng, 30, V, T);
    const auto beta = tt_test::random_beta(rng, T, 2, V, 0.0);
    const auto sets = doc_sets(c);
    const auto stats = cooccurrence_stats(c, c.vocab());
    for (std::size_t k = 0; k < 2; ++k) {
      double total = 0.0;
      for (std::size_t t = 0; t + 1 < T; ++t) {
        const auto a = top_words(beta, k, t, N).words;
        const auto b = top_words(beta, k, t + 1, N).words;
        double s = 0.0;
        for (const auto& x : a) {
          for (const auto& y : b) s += oracle_npmi(sets, x, y);
        }
        total += s / static_cast<double>(a.size() * b.size());
      }
      EXPECT_NEAR(ttc_topic(beta, stats, k, N), total / static_cast<double>(T - 1), 1e-9);
    }
  }
}

TEST(Ttq, ProductIsExactAndAggregatesAreMeans) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_corpus(rng, 25, 10, 3);
    const auto beta = tt_test::random_beta(rng, 3, 3, 10, 0.1);
    const auto q = ttq(beta, c, 4);
    double sc = 0, ss = 0, sq = 0;
    for (const auto& p : q.per_topic) {
      EXPECT_EQ(p.ttq, p.ttc * p.tts);
      EXPECT_GE(p.tts, 0.0);
      EXPECT_LE(p.tts, 1.0);
      EXPECT_GE(p.ttc, -1.0);
      EXPECT_LE(p.ttc, 1.0);
      sc += p.ttc;
      ss += p.tts;
      sq += p.ttq;
    }
    EXPECT_DOUBLE_EQ(q.ttc, sc / 3.0);
    EXPECT_DOUBLE_EQ(q.tts, ss / 3.0);
    EXPECT_DOUBLE_EQ(q.ttq, sq / 3.0);
  }
}

TEST(Ttq, ZeroSmoothnessAnnihilates) {
  const auto c = tt_test::corpus_from({{"d1", 0, {"a", "b"}}, {"d2", 1, {"c", "d"}}}, 2);
  const auto beta = tt_test::beta_from({{{0.5, 0.5, 0, 0}}, {{0, 0, 0.5, 0.5}}}, {"a", "b", "c", "d"});
  const auto q = ttq(beta, c, 2);
  EXPECT_EQ(q.per_topic[0].tts, 0.0);
  EXPECT_EQ(q.per_topic[0].ttq, 0.0);
}

TEST(Ttq, JsonShape) {
  const auto c = tt_test::corpus_from({{"d1", 0, {"a", "b"}}, {"d2", 1, {"a", "b"}}}, 2);
  const auto beta = tt_test::beta_from({{{0.5, 0.5}}, {{0.5, 0.5}}}, {"a", "b"});
  const auto j = nlohmann::json::parse(ttq(beta, c, 2).to_json());
  EXPECT_EQ(j["topn"], 2);
  EXPECT_EQ(j["per_topic"].size(), 1u);
  EXPECT_DOUBLE_EQ(j["ttq"].get<double>(), 1.0);
}

TEST(Npmi, SameDocumentSetIsExactlyOne) {
  const auto c = tt_test::corpus_from(
      {{"d1", 0, {"a", "b"}}, {"d2", 0, {"b", "a", "x"}}, {"d3", 0, {"x"}}, {"d4", 0, {"y"}}, {"d5", 0, {"y"}}}, 1);
  const auto stats = cooccurrence_stats(c, c.vocab());
  EXPECT_EQ(npmi(stats, "a", "b"), 1.0);
  EXPECT_EQ(npmi(stats, "a", "y"), -1.0);
}
