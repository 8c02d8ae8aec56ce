#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "topictrail/beta.hpp"
#include "topictrail/corpus.hpp"

namespace topictrail {

inline constexpr std::size_t kDefaultTopN = 10;

/// Boolean whole-document co-occurrence counts for a fixed term set.
class CooccurrenceStats {
 public:
  /// Throws UnknownTerm when a term is not in the corpus vocabulary.
  CooccurrenceStats(const ProcessedCorpus& corpus, std::span<const std::string> terms);

  std::size_t num_docs() const { return num_docs_; }
  std::size_t df(const std::string& term) const;
  /// Symmetric; jdf(a, a) == df(a).
  std::size_t jdf(const std::string& a, const std::string& b) const;
  bool tracks(const std::string& term) const { return slots_.contains(term); }

 private:
  const std::vector<std::uint64_t>& bits(const std::string& term) const;

  std::size_t num_docs_ = 0;
  std::unordered_map<std::string, std::size_t> slots_;
  std::vector<std::vector<std::uint64_t>> doc_bits_;
  std::vector<std::size_t> df_;
};

CooccurrenceStats cooccurrence_stats(const ProcessedCorpus& corpus, std::span<const std::string> terms);

/// Normalized PMI in [-1, 1]. Identical terms and pairs present in every
/// document score 1; pairs that never co-occur score -1.
double npmi(const CooccurrenceStats& stats, const std::string& a, const std::string& b);

/// Mean adjacent-timestamp overlap of a topic's top-N sets; 1 when T == 1.
double tts_topic(const BetaTensor& beta, std::size_t k, std::size_t n);

/// Mean cross-timestamp NPMI of a topic's adjacent top-N sets. With T == 1 it
/// falls back to the mean pairwise NPMI inside the single set.
double ttc_topic(const BetaTensor& beta, const CooccurrenceStats& stats, std::size_t k, std::size_t n);

struct TopicQuality {
  double ttc = 0.0;
  double tts = 0.0;
  double ttq = 0.0;
};

struct TemporalQuality {
  std::size_t topn = kDefaultTopN;
  std::vector<TopicQuality> per_topic;
  double ttc = 0.0;
  double tts = 0.0;
  double ttq = 0.0;

  std::string to_json() const;
};

/// Every term that appears in some top-N set of the tensor, sorted.
std::vector<std::string> top_word_union(const BetaTensor& beta, std::size_t n);

TemporalQuality ttq(const BetaTensor& beta, const ProcessedCorpus& corpus, std::size_t n = kDefaultTopN);

}  // namespace topictrail
