#include "topictrail/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "topictrail/error.hpp"
#include "topictrail/io.hpp"
#include "topictrail/text.hpp"

namespace topictrail {
namespace {

using json = nlohmann::json;

std::optional<long long> parse_integer(const std::string& s) {
  long long v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

// Drops infrequent terms and short documents until neither step changes
// anything, so the result is closed under a second application.
std::vector<std::vector<std::string>> prune(std::vector<std::vector<std::string>> streams,
                                            std::vector<bool>& alive, const IngestConfig& cfg) {
  const auto min_words = static_cast<std::size_t>(cfg.min_words_docs);
  while (true) {
    bool changed = false;
    std::unordered_map<std::string, std::size_t> df;
    for (std::size_t d = 0; d < streams.size(); ++d) {
      if (!alive[d]) continue;
      std::unordered_set<std::string_view> seen(streams[d].begin(), streams[d].end());
      for (auto term : seen) ++df[std::string(term)];
    }
    std::unordered_set<std::string> keep;
    if (cfg.min_doc_freq || cfg.max_vocab) {
      std::vector<std::pair<std::string, std::size_t>> ranked;
      for (auto& [term, count] : df) {
        if (!cfg.min_doc_freq || count >= *cfg.min_doc_freq) ranked.emplace_back(term, count);
      }
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
      });
      if (cfg.max_vocab && ranked.size() > *cfg.max_vocab) ranked.resize(*cfg.max_vocab);
      for (auto& [term, count] : ranked) keep.insert(term);
    }
    for (std::size_t d = 0; d < streams.size(); ++d) {
      if (!alive[d]) continue;
      auto& s = streams[d];
      if (cfg.min_doc_freq || cfg.max_vocab) {
        const auto before = s.size();
        std::erase_if(s, [&](const std::string& t) { return !keep.contains(t); });
        changed |= s.size() != before;
      }
      if (s.size() < min_words) {
        alive[d] = false;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return streams;
}

}  // namespace

void IngestConfig::validate() const {
  if (min_count_bigram < 1) throw Error(ErrorCode::InvalidArgument, "min_count_bigram must be >= 1");
  if (!(threshold_bigram > 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold_bigram must be > 0");
  if (min_chars < 1) throw Error(ErrorCode::InvalidArgument, "min_chars must be >= 1");
  if (min_words_docs < 1) throw Error(ErrorCode::InvalidArgument, "min_words_docs must be >= 1");
  if (max_vocab && *max_vocab == 0) throw Error(ErrorCode::InvalidArgument, "max_vocab must be >= 1");
}

const std::unordered_set<std::string>& english_stopwords() {
  static const std::unordered_set<std::string> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
      "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
      "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
      "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
      "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
      "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
      "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
      "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
      "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
      "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
      "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
      "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
      "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
      "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
      "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan",
      "shan't", "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't",
      "wouldn", "wouldn't"};
  return words;
}

std::vector<std::string> tokenize_doc(std::string_view text, const IngestConfig& cfg) {
  const auto cps = decode_utf8(text);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_space(cps[i].value)) ++i;
    std::size_t j = i;
    while (j < cps.size() && !is_space(cps[j].value)) ++j;
    std::size_t lo = i;
    std::size_t hi = j;
    if (cfg.remove_punctuation) {
      while (lo < hi && is_punct(cps[lo].value)) ++lo;
      while (hi > lo && is_punct(cps[hi - 1].value)) --hi;
    }
    if (hi > lo && hi - lo >= static_cast<std::size_t>(cfg.min_chars)) {
      std::string term;
      for (std::size_t c = lo; c < hi; ++c) {
        if (cps[c].value == 0xFFFD) {
          term.append(text.substr(cps[c].begin, cps[c].end - cps[c].begin));
        } else {
          append_utf8(term, to_lower(cps[c].value));
        }
      }
      if (!cfg.stopwords.contains(term)) out.push_back(std::move(term));
    }
    i = j;
  }
  return out;
}

double bigram_score(std::uint64_t pair_count, std::uint64_t left_count, std::uint64_t right_count,
                    std::uint64_t distinct_terms, int min_count) {
  if (left_count == 0 || right_count == 0) return 0.0;
  return (static_cast<double>(pair_count) - static_cast<double>(min_count)) *
         static_cast<double>(distinct_terms) /
         (static_cast<double>(left_count) * static_cast<double>(right_count));
}

bool bigram_accepted(std::uint64_t pair_count, std::uint64_t left_count, std::uint64_t right_count,
                     std::uint64_t distinct_terms, const IngestConfig& cfg) {
  if (pair_count < static_cast<std::uint64_t>(cfg.min_count_bigram)) return false;
  return bigram_score(pair_count, left_count, right_count, distinct_terms, cfg.min_count_bigram) >=
         cfg.threshold_bigram;
}

BigramResult detect_bigrams(std::vector<std::vector<std::string>> streams, const IngestConfig& cfg) {
  std::unordered_map<std::string, std::uint64_t> unigrams;
  std::map<TermPair, std::uint64_t> pairs;
  for (const auto& s : streams) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++unigrams[s[i]];
      if (i + 1 < s.size() && s[i].find('_') == std::string::npos &&
          s[i + 1].find('_') == std::string::npos) {
        ++pairs[{s[i], s[i + 1]}];
      }
    }
  }
  const auto distinct = static_cast<std::uint64_t>(unigrams.size());

  BigramResult result;
  for (const auto& [pair, count] : pairs) {
    const auto ca = unigrams[pair.first];
    const auto cb = unigrams[pair.second];
    if (bigram_accepted(count, ca, cb, distinct, cfg)) {
      result.phrases.emplace(pair, bigram_score(count, ca, cb, distinct, cfg.min_count_bigram));
    }
  }

  result.streams.reserve(streams.size());
  for (auto& s : streams) {
    std::vector<std::string> merged;
    merged.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
      if (i + 1 < s.size() && result.phrases.contains(TermPair{s[i], s[i + 1]})) {
        merged.push_back(s[i] + "_" + s[i + 1]);
        i += 2;
      } else {
        merged.push_back(std::move(s[i]));
        ++i;
      }
    }
    result.streams.push_back(std::move(merged));
  }
  return result;
}

TimestampBins bin_timestamps(std::span<const std::string> raw_labels) {
  if (raw_labels.empty()) throw Error(ErrorCode::InvalidArgument, "no timestamp labels");
  std::set<std::string> distinct(raw_labels.begin(), raw_labels.end());
  TimestampBins bins;
  bins.labels.assign(distinct.begin(), distinct.end());

  bool numeric = true;
  std::map<std::string, long long> values;
  for (const auto& label : bins.labels) {
    auto v = parse_integer(label);
    if (!v) {
      numeric = false;
      break;
    }
    values[label] = *v;
  }
  if (numeric) {
    std::stable_sort(bins.labels.begin(), bins.labels.end(),
                     [&](const std::string& a, const std::string& b) { return values[a] < values[b]; });
  }
  for (std::size_t t = 0; t < bins.labels.size(); ++t) bins.index[bins.labels[t]] = t;
  return bins;
}

ProcessedCorpus::ProcessedCorpus(std::vector<ProcessedDocument> documents,
                                 std::vector<std::string> vocab, std::vector<std::string> timestamps)
    : documents_(std::move(documents)), vocab_(std::move(vocab)), timestamps_(std::move(timestamps)) {
  for (TermId v = 0; v < vocab_.size(); ++v) {
    if (!term_ids_.emplace(vocab_[v], v).second) {
      throw Error(ErrorCode::Parse, "duplicate vocabulary term '" + vocab_[v] + "'");
    }
  }
  stats_.num_docs = documents_.size();
  stats_.num_timestamps = timestamps_.size();
  stats_.vocab_size = vocab_.size();
  stats_.docs_per_timestamp.assign(timestamps_.size(), 0);
  double sum = 0.0;
  for (std::size_t d = 0; d < documents_.size(); ++d) {
    const auto& doc = documents_[d];
    if (!doc_ids_.emplace(doc.id, d).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate document id '" + doc.id + "'");
    }
    if (doc.time_index >= timestamps_.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "document '" + doc.id + "' has time_index " +
                                                  std::to_string(doc.time_index));
    }
    for (auto v : doc.tokens) {
      if (v >= vocab_.size()) throw Error(ErrorCode::UnknownTerm, "token id out of vocabulary");
    }
    ++stats_.docs_per_timestamp[doc.time_index];
    sum += static_cast<double>(doc.tokens.size());
  }
  if (!documents_.empty()) {
    stats_.avg_len = sum / static_cast<double>(documents_.size());
    double sq = 0.0;
    for (const auto& doc : documents_) {
      const double diff = static_cast<double>(doc.tokens.size()) - stats_.avg_len;
      sq += diff * diff;
    }
    stats_.std_len = std::sqrt(sq / static_cast<double>(documents_.size()));
  }
}

std::optional<TermId> ProcessedCorpus::term_id(std::string_view term) const {
  auto it = term_ids_.find(std::string(term));
  if (it == term_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> ProcessedCorpus::doc_index(std::string_view id) const {
  auto it = doc_ids_.find(std::string(id));
  if (it == doc_ids_.end()) return std::nullopt;
  return it->second;
}

std::string ProcessedCorpus::tokens_jsonl() const {
  std::string out;
  for (const auto& doc : documents_) {
    json line;
    line["id"] = doc.id;
    line["time_index"] = doc.time_index;
    auto& tokens = line["tokens"] = json::array();
    for (auto v : doc.tokens) tokens.push_back(vocab_[v]);
    if (!doc.text.empty()) line["text"] = doc.text;
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::string ProcessedCorpus::vocab_txt() const {
  std::string out;
  for (const auto& term : vocab_) out += term + '\n';
  return out;
}

std::string ProcessedCorpus::timestamps_txt() const {
  std::string out;
  for (const auto& label : timestamps_) out += label + '\n';
  return out;
}

std::string ProcessedCorpus::stats_json() const {
  json j;
  j["num_docs"] = stats_.num_docs;
  j["avg_len"] = stats_.avg_len;
  j["std_len"] = stats_.std_len;
  j["num_timestamps"] = stats_.num_timestamps;
  j["vocab_size"] = stats_.vocab_size;
  auto& bins = j["docs_per_timestamp"] = json::array();
  for (std::size_t t = 0; t < timestamps_.size(); ++t) {
    bins.push_back({{"timestamp", timestamps_[t]}, {"docs", stats_.docs_per_timestamp[t]}});
  }
  return j.dump(2) + "\n";
}

std::string ProcessedCorpus::checksum() const {
  return sha256_hex(sha256_hex(tokens_jsonl()) + sha256_hex(vocab_txt()) +
                    sha256_hex(timestamps_txt()));
}

ProcessedCorpus preprocess_corpus(std::span<const RawDocument> docs, const IngestConfig& cfg) {
  cfg.validate();
  {
    std::unordered_set<std::string_view> ids;
    for (const auto& doc : docs) {
      if (!ids.insert(doc.id).second) {
        throw Error(ErrorCode::DuplicateId, "duplicate document id '" + doc.id + "'");
      }
    }
  }

  std::vector<std::vector<std::string>> streams;
  streams.reserve(docs.size());
  for (const auto& doc : docs) streams.push_back(tokenize_doc(doc.text, cfg));

  auto bigrams = detect_bigrams(std::move(streams), cfg);
  std::vector<bool> alive(docs.size(), true);
  streams = prune(std::move(bigrams.streams), alive, cfg);

  std::vector<std::string> labels;
  std::unordered_map<std::string, std::uint64_t> freq;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (!alive[d]) continue;
    labels.push_back(docs[d].timestamp);
    for (const auto& t : streams[d]) ++freq[t];
  }
  if (labels.empty()) throw Error(ErrorCode::EmptyCorpus, "every document was filtered out");

  std::vector<std::pair<std::string, std::uint64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> vocab;
  std::unordered_map<std::string, TermId> ids;
  vocab.reserve(ranked.size());
  for (auto& [term, count] : ranked) {
    ids.emplace(term, static_cast<TermId>(vocab.size()));
    vocab.push_back(term);
  }

  const auto bins = bin_timestamps(labels);
  std::vector<ProcessedDocument> out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (!alive[d]) continue;
    ProcessedDocument pd;
    pd.id = docs[d].id;
    pd.text = docs[d].text;
    pd.time_index = bins.index.at(docs[d].timestamp);
    pd.tokens.reserve(streams[d].size());
    for (const auto& t : streams[d]) pd.tokens.push_back(ids.at(t));
    out.push_back(std::move(pd));
  }
  return ProcessedCorpus(std::move(out), std::move(vocab), bins.labels);
}

std::vector<RawDocument> read_docs_jsonl(const std::filesystem::path& path) {
  std::vector<RawDocument> docs;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      RawDocument doc;
      doc.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      doc.text = j.at("text").get<std::string>();
      const auto& ts = j.at("timestamp");
      doc.timestamp = ts.is_string() ? ts.get<std::string>() : ts.dump();
      docs.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

void write_processed(const ProcessedCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "tokens.jsonl", corpus.tokens_jsonl());
  write_file_atomic(dir / "vocab.txt", corpus.vocab_txt());
  write_file_atomic(dir / "timestamps.txt", corpus.timestamps_txt());
  write_file_atomic(dir / "stats.json", corpus.stats_json());
}

ProcessedCorpus load_processed(const std::filesystem::path& dir) {
  auto vocab = read_lines(dir / "vocab.txt");
  auto timestamps = read_lines(dir / "timestamps.txt");
  std::unordered_map<std::string, TermId> ids;
  for (TermId v = 0; v < vocab.size(); ++v) ids.emplace(vocab[v], v);

  std::vector<ProcessedDocument> docs;
  std::size_t line_no = 0;
  const auto tokens_path = dir / "tokens.jsonl";
  for (const auto& line : read_lines(tokens_path)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      ProcessedDocument doc;
      doc.id = j.at("id").get<std::string>();
      doc.time_index = j.at("time_index").get<std::size_t>();
      for (const auto& t : j.at("tokens")) {
        auto it = ids.find(t.get<std::string>());
        if (it == ids.end()) {
          throw Error(ErrorCode::UnknownTerm, tokens_path.string() + ":" + std::to_string(line_no) +
                                                  ": token '" + t.get<std::string>() +
                                                  "' missing from vocab.txt");
        }
        doc.tokens.push_back(it->second);
      }
      if (j.contains("text")) doc.text = j.at("text").get<std::string>();
      docs.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse,
                  tokens_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ProcessedCorpus(std::move(docs), std::move(vocab), std::move(timestamps));
}

}  // namespace topictrail
