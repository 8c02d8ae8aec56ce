#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "topictrail/corpus.hpp"

namespace topictrail {

/// Byte range [begin, end) into a document's original text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

/// Sorted by term id, no duplicates.
using SparseVector = std::vector<std::pair<TermId, double>>;

struct DocVector {
  std::string id;
  SparseVector weights;
};

double cosine(const SparseVector& a, const SparseVector& b);

/// term -> time_index -> document ordinals, each list sorted by document id.
class InvertedIndex {
 public:
  InvertedIndex() = default;

  static InvertedIndex build(const ProcessedCorpus& corpus);

  std::span<const std::uint32_t> postings(TermId term, std::size_t t) const;
  /// Document ids for (term, t); empty when the term is unknown.
  std::vector<std::string> posting_ids(const ProcessedCorpus& corpus, std::string_view term,
                                       std::size_t t) const;

  const std::string& built_from() const { return checksum_; }
  std::size_t num_terms() const { return postings_.size(); }
  std::size_t num_times() const { return num_times_; }

  std::string serialize() const;
  /// Returns nullopt when the bytes are not a cache for `expected_checksum`.
  static std::optional<InvertedIndex> deserialize(std::string_view bytes,
                                                  std::string_view expected_checksum);

  bool operator==(const InvertedIndex&) const = default;

 private:
  std::string checksum_;
  std::size_t num_times_ = 0;
  std::vector<std::map<std::uint32_t, std::vector<std::uint32_t>>> postings_;
};

struct IndexLoad {
  InvertedIndex index;
  bool cache_hit = false;
};

/// Reuses `cache_file` when its checksum header matches the corpus, otherwise
/// builds a fresh index and rewrites the cache.
IndexLoad build_or_load_index(const ProcessedCorpus& corpus, const std::filesystem::path& cache_file);

/// l2-normalized TF-IDF with raw term counts and idf = ln(D / df).
class TfIdfModel {
 public:
  explicit TfIdfModel(const ProcessedCorpus& corpus);

  const SparseVector& vector(std::size_t doc) const { return vectors_.at(doc); }
  double weight(std::size_t doc, TermId term) const;
  double idf(TermId term) const { return idf_.at(term); }

 private:
  std::vector<double> idf_;
  std::vector<SparseVector> vectors_;
};

/// Greedy maximal marginal relevance. Score ties go to the more relevant
/// candidate, then to the smaller id.
std::vector<std::string> mmr_select(const SparseVector& query, std::span<const DocVector> candidates,
                                    double lambda, std::size_t m);

/// Case-insensitive, token-bounded occurrences of `term`. For "a_b" both the
/// "a_b" and "a b" surfaces match.
std::vector<Span> highlight(std::string_view text, std::string_view term);

struct RetrievalResult {
  std::string id;
  double relevance = 0.0;
  std::vector<Span> highlights;
};

enum class QueryMode {
  TermAxis,  // unit vector on the query word
  Centroid   // mean of the candidate vectors
};

struct RetrievalOptions {
  std::size_t candidate_cap = 200;
  double lambda = 0.7;
  std::size_t limit = 20;
  QueryMode query_mode = QueryMode::TermAxis;
};

class Retriever {
 public:
  Retriever(const ProcessedCorpus& corpus, InvertedIndex index);

  /// Posting list for (word, t) ordered by descending relevance, at most `cap`.
  std::vector<std::size_t> candidates(std::string_view word, std::size_t t, std::size_t cap) const;

  /// candidates -> MMR -> highlight.
  std::vector<RetrievalResult> retrieve(std::string_view word, std::size_t t,
                                        const RetrievalOptions& opts) const;

  const InvertedIndex& index() const { return index_; }
  const TfIdfModel& tfidf() const { return tfidf_; }
  const ProcessedCorpus& corpus() const { return corpus_; }

 private:
  const ProcessedCorpus& corpus_;
  InvertedIndex index_;
  TfIdfModel tfidf_;
};

}  // namespace topictrail
