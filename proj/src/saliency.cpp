#include "topictrail/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "topictrail/error.hpp"

namespace topictrail {
namespace {

double ratio(double peak, double mean, double eps) {
  if (peak == 0.0) return 0.0;
  return peak / (mean + eps);
}

double peak_in_topic(const BetaTensor& beta, std::size_t k, TermId v) {
  double peak = 0.0;
  for (std::size_t t = 0; t < beta.num_times(); ++t) peak = std::max(peak, beta.at(t, k, v));
  return peak;
}

double mean_in_topic(const BetaTensor& beta, std::size_t k, TermId v) {
  double sum = 0.0;
  for (std::size_t t = 0; t < beta.num_times(); ++t) sum += beta.at(t, k, v);
  return sum / static_cast<double>(beta.num_times());
}

double global_mean(const BetaTensor& beta, TermId v) {
  double sum = 0.0;
  for (std::size_t t = 0; t < beta.num_times(); ++t) {
    for (std::size_t k = 0; k < beta.num_topics(); ++k) sum += beta.at(t, k, v);
  }
  return sum / static_cast<double>(beta.num_times() * beta.num_topics());
}

// Number of topics whose top-N sets contain each word.
std::vector<std::size_t> membership_counts(const BetaTensor& beta, std::size_t n,
                                           UniquenessMembership membership) {
  std::vector<std::size_t> counts(beta.vocab_size(), 0);
  std::vector<std::size_t> hits(beta.vocab_size());
  for (std::size_t k = 0; k < beta.num_topics(); ++k) {
    std::fill(hits.begin(), hits.end(), 0);
    for (std::size_t t = 0; t < beta.num_times(); ++t) {
      for (auto v : top_words(beta, k, t, n).ids) ++hits[v];
    }
    for (std::size_t v = 0; v < hits.size(); ++v) {
      const bool member = membership == UniquenessMembership::AnyTime ? hits[v] > 0
                                                                      : hits[v] == beta.num_times();
      if (member) ++counts[v];
    }
  }
  return counts;
}

double uniqueness_from_count(std::size_t num_topics, std::size_t m) {
  return std::log(static_cast<double>(num_topics) / static_cast<double>(std::max<std::size_t>(m, 1)));
}

void check_topic(const BetaTensor& beta, std::size_t k) {
  if (k >= beta.num_topics()) {
    throw Error(ErrorCode::IndexOutOfRange, "topic " + std::to_string(k) + " out of range [0, " +
                                                std::to_string(beta.num_topics()) + ")");
  }
}

void check_word(const BetaTensor& beta, TermId v) {
  if (v >= beta.vocab_size()) {
    throw Error(ErrorCode::IndexOutOfRange, "word " + std::to_string(v) + " out of range [0, " +
                                                std::to_string(beta.vocab_size()) + ")");
  }
}

}  // namespace

void SaliencyConfig::validate() const {
  if (pool_size < 1) throw Error(ErrorCode::InvalidArgument, "pool_size must be >= 1");
  if (top_n_membership < 1) throw Error(ErrorCode::InvalidArgument, "top_n_membership must be >= 1");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be > 0");
}

double score_burstiness(const BetaTensor& beta, std::size_t k, TermId v, double eps) {
  check_topic(beta, k);
  check_word(beta, v);
  return ratio(peak_in_topic(beta, k, v), mean_in_topic(beta, k, v), eps);
}

double score_specificity(const BetaTensor& beta, std::size_t k, TermId v, double eps) {
  check_topic(beta, k);
  check_word(beta, v);
  return ratio(peak_in_topic(beta, k, v), global_mean(beta, v), eps);
}

double score_uniqueness(const BetaTensor& beta, TermId v, std::size_t n, UniquenessMembership membership) {
  check_word(beta, v);
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "N must be >= 1");
  return uniqueness_from_count(beta.num_topics(), membership_counts(beta, n, membership)[v]);
}

SaliencyScorer::SaliencyScorer(const BetaTensor& beta, SaliencyConfig cfg)
    : beta_(beta), cfg_(cfg) {
  cfg_.validate();
  const auto K = beta.num_topics();
  const auto V = beta.vocab_size();
  global_mean_.resize(V);
  peak_.resize(K * V);
  mean_.resize(K * V);
  for (TermId v = 0; v < V; ++v) {
    global_mean_[v] = global_mean(beta, v);
    for (std::size_t k = 0; k < K; ++k) {
      peak_[k * V + v] = peak_in_topic(beta, k, v);
      mean_[k * V + v] = mean_in_topic(beta, k, v);
    }
  }
  topic_members_ = membership_counts(beta, cfg_.top_n_membership, cfg_.membership);
}

SaliencyScore SaliencyScorer::score(std::size_t k, TermId v) const {
  check_topic(beta_, k);
  check_word(beta_, v);
  const auto V = beta_.vocab_size();
  SaliencyScore s;
  s.topic = k;
  s.word = v;
  s.s_burst = ratio(peak_[k * V + v], mean_[k * V + v], cfg_.epsilon);
  s.s_spec = ratio(peak_[k * V + v], global_mean_[v], cfg_.epsilon);
  s.s_uniq = uniqueness_from_count(beta_.num_topics(), topic_members_[v]);
  s.s_final = s.s_burst * s.s_spec * s.s_uniq;
  return s;
}

std::vector<SaliencyScore> SaliencyScorer::rank(std::size_t k, std::size_t limit,
                                                std::optional<std::size_t> pool_override) const {
  check_topic(beta_, k);
  if (limit == 0) throw Error(ErrorCode::InvalidArgument, "limit must be >= 1");
  if (pool_override && *pool_override == 0) throw Error(ErrorCode::InvalidArgument, "pool must be >= 1");
  const auto V = beta_.vocab_size();
  std::vector<TermId> pool(V);
  std::iota(pool.begin(), pool.end(), TermId{0});
  const auto pool_size = std::min(pool_override.value_or(cfg_.pool_size), pool.size());
  const double* peaks = peak_.data() + k * V;
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(pool_size), pool.end(),
                    [&](TermId a, TermId b) { return peaks[a] != peaks[b] ? peaks[a] > peaks[b] : a < b; });
  pool.resize(pool_size);

  std::vector<SaliencyScore> scores;
  scores.reserve(pool.size());
  for (auto v : pool) scores.push_back(score(k, v));
  std::sort(scores.begin(), scores.end(), [](const SaliencyScore& a, const SaliencyScore& b) {
    return a.s_final != b.s_final ? a.s_final > b.s_final : a.word < b.word;
  });
  if (scores.size() > limit) scores.resize(limit);
  return scores;
}

std::vector<SaliencyScore> rank_salient(const BetaTensor& beta, std::size_t k, const SaliencyConfig& cfg,
                                        std::size_t limit) {
  check_topic(beta, k);
  return SaliencyScorer(beta, cfg).rank(k, limit);
}

std::string saliency_json(const BetaTensor& beta, std::size_t k, const SaliencyConfig& cfg,
                          const std::vector<SaliencyScore>& scores) {
  nlohmann::json j;
  j["topic"] = k;
  j["pool"] = cfg.pool_size;
  j["top_n_membership"] = cfg.top_n_membership;
  j["epsilon"] = cfg.epsilon;
  auto& words = j["words"] = nlohmann::json::array();
  for (const auto& s : scores) {
    words.push_back({{"word", beta.vocab()[s.word]},
                     {"id", s.word},
                     {"s_burst", s.s_burst},
                     {"s_spec", s.s_spec},
                     {"s_uniq", s.s_uniq},
                     {"s_final", s.s_final}});
  }
  return j.dump(2) + "\n";
}

}  // namespace topictrail
