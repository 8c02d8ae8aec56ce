#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace topictrail {

using TermId = std::uint32_t;

struct RawDocument {
  std::string id;
  std::string text;
  std::string timestamp;
};

struct IngestConfig {
  std::unordered_set<std::string> stopwords;
  int min_count_bigram = 5;
  double threshold_bigram = 20.0;
  bool remove_punctuation = true;
  int min_chars = 3;
  int min_words_docs = 3;
  std::optional<std::size_t> max_vocab;
  std::optional<std::size_t> min_doc_freq;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

/// The standard English stopword list (179 terms).
const std::unordered_set<std::string>& english_stopwords();

/// Whitespace split, lowercase, optional edge-punctuation strip, then the
/// length floor and stopword filter. Underscores survive stripping.
std::vector<std::string> tokenize_doc(std::string_view text, const IngestConfig& cfg);

/// Collocation score (c_ab - min_count) * U / (c_a * c_b).
double bigram_score(std::uint64_t pair_count, std::uint64_t left_count, std::uint64_t right_count,
                    std::uint64_t distinct_terms, int min_count);

/// True when a pair with the given counts is merged under `cfg`.
bool bigram_accepted(std::uint64_t pair_count, std::uint64_t left_count, std::uint64_t right_count,
                     std::uint64_t distinct_terms, const IngestConfig& cfg);

using TermPair = std::pair<std::string, std::string>;

struct BigramResult {
  std::map<TermPair, double> phrases;
  std::vector<std::vector<std::string>> streams;
};

/// One detection pass. Terms that already contain '_' never become a phrase
/// half, so phrases stay at two words.
BigramResult detect_bigrams(std::vector<std::vector<std::string>> streams, const IngestConfig& cfg);

struct TimestampBins {
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> index;
};

/// Numeric order when every label parses as an integer, lexicographic otherwise.
TimestampBins bin_timestamps(std::span<const std::string> raw_labels);

struct ProcessedDocument {
  std::string id;
  std::vector<TermId> tokens;
  std::size_t time_index = 0;
  std::string text;  // original text, kept for highlighting
};

struct CorpusStats {
  std::size_t num_docs = 0;
  double avg_len = 0.0;
  double std_len = 0.0;
  std::size_t num_timestamps = 0;
  std::size_t vocab_size = 0;
  std::vector<std::size_t> docs_per_timestamp;
};

class ProcessedCorpus {
 public:
  ProcessedCorpus() = default;
  ProcessedCorpus(std::vector<ProcessedDocument> documents, std::vector<std::string> vocab,
                  std::vector<std::string> timestamps);

  const std::vector<ProcessedDocument>& documents() const { return documents_; }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::string>& timestamps() const { return timestamps_; }
  const CorpusStats& stats() const { return stats_; }
  std::size_t num_times() const { return timestamps_.size(); }

  std::optional<TermId> term_id(std::string_view term) const;
  const std::string& term(TermId id) const { return vocab_.at(id); }
  std::optional<std::size_t> doc_index(std::string_view id) const;

  std::string tokens_jsonl() const;
  std::string vocab_txt() const;
  std::string timestamps_txt() const;
  std::string stats_json() const;

  /// SHA-256 over the serialized corpus files; identifies index caches.
  std::string checksum() const;

 private:
  std::vector<ProcessedDocument> documents_;
  std::vector<std::string> vocab_;
  std::vector<std::string> timestamps_;
  std::unordered_map<std::string, TermId> term_ids_;
  std::unordered_map<std::string, std::size_t> doc_ids_;
  CorpusStats stats_;
};

ProcessedCorpus preprocess_corpus(std::span<const RawDocument> docs, const IngestConfig& cfg);

std::vector<RawDocument> read_docs_jsonl(const std::filesystem::path& path);

/// Writes tokens.jsonl, vocab.txt, timestamps.txt and stats.json into `dir`.
void write_processed(const ProcessedCorpus& corpus, const std::filesystem::path& dir);
ProcessedCorpus load_processed(const std::filesystem::path& dir);

}  // namespace topictrail
