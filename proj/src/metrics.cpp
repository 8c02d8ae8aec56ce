#include "topictrail/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include <json.hpp>

#include "topictrail/error.hpp"

namespace topictrail {

CooccurrenceStats::CooccurrenceStats(const ProcessedCorpus& corpus, std::span<const std::string> terms)
    : num_docs_(corpus.documents().size()) {
  std::unordered_map<TermId, std::size_t> by_id;
  for (const auto& term : terms) {
    if (slots_.contains(term)) continue;
    auto id = corpus.term_id(term);
    if (!id) throw Error(ErrorCode::UnknownTerm, "'" + term + "' is not in the corpus vocabulary");
    by_id.emplace(*id, slots_.size());
    slots_.emplace(term, slots_.size());
  }
  const std::size_t words = (num_docs_ + 63) / 64;
  doc_bits_.assign(slots_.size(), std::vector<std::uint64_t>(words, 0));
  for (std::size_t d = 0; d < num_docs_; ++d) {
    for (auto v : corpus.documents()[d].tokens) {
      auto it = by_id.find(v);
      if (it != by_id.end()) doc_bits_[it->second][d / 64] |= std::uint64_t{1} << (d % 64);
    }
  }
  df_.resize(slots_.size());
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    std::size_t count = 0;
    for (auto w : doc_bits_[s]) count += static_cast<std::size_t>(std::popcount(w));
    df_[s] = count;
  }
}

const std::vector<std::uint64_t>& CooccurrenceStats::bits(const std::string& term) const {
  auto it = slots_.find(term);
  if (it == slots_.end()) throw Error(ErrorCode::UnknownTerm, "'" + term + "' is not tracked");
  return doc_bits_[it->second];
}

std::size_t CooccurrenceStats::df(const std::string& term) const {
  auto it = slots_.find(term);
  if (it == slots_.end()) throw Error(ErrorCode::UnknownTerm, "'" + term + "' is not tracked");
  return df_[it->second];
}

std::size_t CooccurrenceStats::jdf(const std::string& a, const std::string& b) const {
  const auto& x = bits(a);
  const auto& y = bits(b);
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) count += static_cast<std::size_t>(std::popcount(x[i] & y[i]));
  return count;
}

CooccurrenceStats cooccurrence_stats(const ProcessedCorpus& corpus, std::span<const std::string> terms) {
  return CooccurrenceStats(corpus, terms);
}

double npmi(const CooccurrenceStats& stats, const std::string& a, const std::string& b) {
  const auto dfa = stats.df(a);
  const auto dfb = stats.df(b);
  if (dfa == 0 || dfb == 0) {
    throw Error(ErrorCode::UndefinedTerm, "'" + (dfa == 0 ? a : b) + "' occurs in no document");
  }
  if (a == b) return 1.0;
  const auto joint = stats.jdf(a, b);
  if (joint == 0) return -1.0;
  const double D = static_cast<double>(stats.num_docs());
  if (joint == stats.num_docs()) return 1.0;
  if (joint == dfa && joint == dfb) return 1.0;  // identical document sets
  const double pa = static_cast<double>(dfa) / D;
  const double pb = static_cast<double>(dfb) / D;
  const double pab = static_cast<double>(joint) / D;
  const double value = std::log(pab / (pa * pb)) / -std::log(pab);
  return std::clamp(value, -1.0, 1.0);
}

double tts_topic(const BetaTensor& beta, std::size_t k, std::size_t n) {
  const auto T = beta.num_times();
  if (T == 1) {
    (void)top_words(beta, k, 0, n);
    return 1.0;
  }
  const double denom = static_cast<double>(std::min(n, beta.vocab_size()));
  auto prev = top_words(beta, k, 0, n).ids;
  std::sort(prev.begin(), prev.end());
  double total = 0.0;
  for (std::size_t t = 1; t < T; ++t) {
    auto cur = top_words(beta, k, t, n).ids;
    std::sort(cur.begin(), cur.end());
    std::vector<TermId> common;
    std::set_intersection(prev.begin(), prev.end(), cur.begin(), cur.end(), std::back_inserter(common));
    total += static_cast<double>(common.size()) / denom;
    prev = std::move(cur);
  }
  return total / static_cast<double>(T - 1);
}

double ttc_topic(const BetaTensor& beta, const CooccurrenceStats& stats, std::size_t k, std::size_t n) {
  const auto T = beta.num_times();
  if (T == 1) {
    const auto words = top_words(beta, k, 0, n).words;
    if (words.size() < 2) return 1.0;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      for (std::size_t j = i + 1; j < words.size(); ++j) {
        sum += npmi(stats, words[i], words[j]);
        ++pairs;
      }
    }
    return sum / static_cast<double>(pairs);
  }
  double total = 0.0;
  auto prev = top_words(beta, k, 0, n).words;
  for (std::size_t t = 1; t < T; ++t) {
    auto cur = top_words(beta, k, t, n).words;
    double sum = 0.0;
    for (const auto& wi : prev) {
      for (const auto& wj : cur) sum += npmi(stats, wi, wj);
    }
    total += sum / static_cast<double>(prev.size() * cur.size());
    prev = std::move(cur);
  }
  return total / static_cast<double>(T - 1);
}

std::vector<std::string> top_word_union(const BetaTensor& beta, std::size_t n) {
  std::set<std::string> terms;
  for (std::size_t t = 0; t < beta.num_times(); ++t) {
    for (std::size_t k = 0; k < beta.num_topics(); ++k) {
      for (auto& w : top_words(beta, k, t, n).words) terms.insert(std::move(w));
    }
  }
  return {terms.begin(), terms.end()};
}

TemporalQuality ttq(const BetaTensor& beta, const ProcessedCorpus& corpus, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "N must be >= 1");
  const auto terms = top_word_union(beta, n);
  const CooccurrenceStats stats(corpus, terms);

  TemporalQuality q;
  q.topn = n;
  q.per_topic.reserve(beta.num_topics());
  for (std::size_t k = 0; k < beta.num_topics(); ++k) {
    TopicQuality tq;
    tq.ttc = ttc_topic(beta, stats, k, n);
    tq.tts = tts_topic(beta, k, n);
    tq.ttq = tq.ttc * tq.tts;
    q.per_topic.push_back(tq);
  }
  const double K = static_cast<double>(beta.num_topics());
  for (const auto& tq : q.per_topic) {
    q.ttc += tq.ttc;
    q.tts += tq.tts;
    q.ttq += tq.ttq;
  }
  q.ttc /= K;
  q.tts /= K;
  q.ttq /= K;
  return q;
}

std::string TemporalQuality::to_json() const {
  nlohmann::json j;
  j["topn"] = topn;
  j["ttc"] = ttc;
  j["tts"] = tts;
  j["ttq"] = ttq;
  auto& rows = j["per_topic"] = nlohmann::json::array();
  for (std::size_t k = 0; k < per_topic.size(); ++k) {
    rows.push_back({{"topic", k}, {"ttc", per_topic[k].ttc}, {"tts", per_topic[k].tts},
                    {"ttq", per_topic[k].ttq}});
  }
  return j.dump(2) + "\n";
}

}  // namespace topictrail
