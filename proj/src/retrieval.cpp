#include "topictrail/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_map>

#include "topictrail/error.hpp"
#include "topictrail/io.hpp"
#include "topictrail/text.hpp"

namespace topictrail {
namespace {

constexpr std::string_view kCacheMagic = "TTIDX001";
constexpr std::size_t kChecksumLength = 64;

class ByteWriter {
 public:
  void put_u64(std::uint64_t x) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
  }
  void put_u32(std::uint32_t x) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
  }
  void put_bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  bool get_u64(std::uint64_t& x) {
    if (in_.size() - pos_ < 8) return false;
    x = 0;
    for (int i = 0; i < 8; ++i) x |= std::uint64_t{static_cast<unsigned char>(in_[pos_ + i])} << (8 * i);
    pos_ += 8;
    return true;
  }
  bool get_u32(std::uint32_t& x) {
    if (in_.size() - pos_ < 4) return false;
    x = 0;
    for (int i = 0; i < 4; ++i) x |= std::uint32_t{static_cast<unsigned char>(in_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return true;
  }
  bool get_bytes(std::size_t n, std::string_view& out) {
    if (in_.size() - pos_ < n) return false;
    out = in_.substr(pos_, n);
    pos_ += n;
    return true;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

double norm(const SparseVector& v) {
  double sq = 0.0;
  for (const auto& [id, w] : v) sq += w * w;
  return std::sqrt(sq);
}

double dot(const SparseVector& a, const SparseVector& b) {
  double sum = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      sum += a[i].second * b[j].second;
      ++i;
      ++j;
    }
  }
  return sum;
}

// A codepoint that can continue a token: letters, digits, '_' and any
// non-ASCII character that is neither whitespace nor punctuation.
bool is_word_codepoint(char32_t c) {
  if (c < 0x80) {
    return (c >= U'0' && c <= U'9') || (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || c == U'_';
  }
  return !is_space(c) && !is_punct(c);
}

bool is_ascii_space(char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

}  // namespace

double cosine(const SparseVector& a, const SparseVector& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

InvertedIndex InvertedIndex::build(const ProcessedCorpus& corpus) {
  if (corpus.documents().empty()) throw Error(ErrorCode::EmptyCorpus, "cannot index an empty corpus");
  InvertedIndex index;
  index.checksum_ = corpus.checksum();
  index.num_times_ = corpus.num_times();
  index.postings_.resize(corpus.vocab().size());

  const auto& docs = corpus.documents();
  std::vector<std::uint32_t> by_id(docs.size());
  std::iota(by_id.begin(), by_id.end(), 0u);
  std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return docs[a].id < docs[b].id; });
  for (auto d : by_id) {
    const auto& doc = docs[d];
    auto terms = doc.tokens;
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto v : terms) index.postings_[v][static_cast<std::uint32_t>(doc.time_index)].push_back(d);
  }
  return index;
}

std::span<const std::uint32_t> InvertedIndex::postings(TermId term, std::size_t t) const {
  if (term >= postings_.size()) return {};
  const auto& by_time = postings_[term];
  auto it = by_time.find(static_cast<std::uint32_t>(t));
  if (it == by_time.end()) return {};
  return it->second;
}

std::vector<std::string> InvertedIndex::posting_ids(const ProcessedCorpus& corpus, std::string_view term,
                                                    std::size_t t) const {
  std::vector<std::string> ids;
  auto v = corpus.term_id(term);
  if (!v) return ids;
  for (auto d : postings(*v, t)) ids.push_back(corpus.documents()[d].id);
  return ids;
}

std::string InvertedIndex::serialize() const {
  ByteWriter w;
  w.put_bytes(kCacheMagic);
  w.put_bytes(checksum_);
  w.put_u64(num_times_);
  w.put_u64(postings_.size());
  for (const auto& by_time : postings_) {
    w.put_u32(static_cast<std::uint32_t>(by_time.size()));
    for (const auto& [t, docs] : by_time) {
      w.put_u32(t);
      w.put_u32(static_cast<std::uint32_t>(docs.size()));
      for (auto d : docs) w.put_u32(d);
    }
  }
  return w.take();
}

std::optional<InvertedIndex> InvertedIndex::deserialize(std::string_view bytes,
                                                        std::string_view expected_checksum) {
  ByteReader r(bytes);
  std::string_view magic, checksum;
  if (!r.get_bytes(kCacheMagic.size(), magic) || magic != kCacheMagic) return std::nullopt;
  if (!r.get_bytes(kChecksumLength, checksum) || checksum != expected_checksum) return std::nullopt;
  InvertedIndex index;
  index.checksum_ = std::string(checksum);
  std::uint64_t num_times = 0, num_terms = 0;
  if (!r.get_u64(num_times) || !r.get_u64(num_terms)) return std::nullopt;
  if (num_terms > bytes.size()) return std::nullopt;
  index.num_times_ = num_times;
  index.postings_.resize(num_terms);
  for (auto& by_time : index.postings_) {
    std::uint32_t entries = 0;
    if (!r.get_u32(entries)) return std::nullopt;
    for (std::uint32_t e = 0; e < entries; ++e) {
      std::uint32_t t = 0, count = 0;
      if (!r.get_u32(t) || !r.get_u32(count) || count > bytes.size()) return std::nullopt;
      auto& docs = by_time[t];
      docs.resize(count);
      for (auto& d : docs) {
        if (!r.get_u32(d)) return std::nullopt;
      }
    }
  }
  if (!r.done()) return std::nullopt;
  return index;
}

IndexLoad build_or_load_index(const ProcessedCorpus& corpus, const std::filesystem::path& cache_file) {
  const auto checksum = corpus.checksum();
  if (std::filesystem::exists(cache_file)) {
    auto cached = InvertedIndex::deserialize(read_file(cache_file), checksum);
    if (cached && cached->num_terms() == corpus.vocab().size()) return {std::move(*cached), true};
  }
  auto index = InvertedIndex::build(corpus);
  write_file_atomic(cache_file, index.serialize());
  return {std::move(index), false};
}

TfIdfModel::TfIdfModel(const ProcessedCorpus& corpus) {
  const auto& docs = corpus.documents();
  std::vector<std::size_t> df(corpus.vocab().size(), 0);
  std::vector<std::map<TermId, std::size_t>> counts(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (auto v : docs[d].tokens) ++counts[d][v];
    for (const auto& [v, c] : counts[d]) ++df[v];
  }
  const double D = static_cast<double>(docs.size());
  idf_.resize(df.size());
  for (std::size_t v = 0; v < df.size(); ++v) {
    idf_[v] = df[v] == 0 ? 0.0 : std::log(D / static_cast<double>(df[v]));
  }
  vectors_.resize(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    SparseVector vec;
    vec.reserve(counts[d].size());
    for (const auto& [v, c] : counts[d]) vec.emplace_back(v, static_cast<double>(c) * idf_[v]);
    const double n = norm(vec);
    if (n > 0.0) {
      for (auto& [v, w] : vec) w /= n;
    }
    vectors_[d] = std::move(vec);
  }
}

double TfIdfModel::weight(std::size_t doc, TermId term) const {
  const auto& vec = vectors_.at(doc);
  auto it = std::lower_bound(vec.begin(), vec.end(), term,
                             [](const auto& entry, TermId id) { return entry.first < id; });
  return it != vec.end() && it->first == term ? it->second : 0.0;
}

// Scores closer than this are ties.
constexpr double kTieSlack = 1e-12;

std::vector<std::string> mmr_select(const SparseVector& query, std::span<const DocVector> candidates,
                                    double lambda, std::size_t m) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be in [0, 1]");
  if (m == 0) throw Error(ErrorCode::InvalidArgument, "m must be >= 1");
  const auto n = candidates.size();
  std::vector<double> relevance(n);
  for (std::size_t i = 0; i < n; ++i) relevance[i] = cosine(candidates[i].weights, query);

  std::vector<double> redundancy(n, 0.0);  // max similarity to anything selected
  std::vector<bool> taken(n, false);
  std::vector<std::string> selected;
  while (selected.size() < std::min(m, n)) {
    std::size_t best = n;
    double best_score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double score = lambda * relevance[i] - (1.0 - lambda) * redundancy[i];
      const bool better =
          best == n || score > best_score + kTieSlack ||
          (score >= best_score - kTieSlack &&
           (relevance[i] > relevance[best] + kTieSlack ||
            (relevance[i] >= relevance[best] - kTieSlack && candidates[i].id < candidates[best].id)));
      if (better) {
        best = i;
        best_score = score;
      }
    }
    taken[best] = true;
    selected.push_back(candidates[best].id);
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) {
        redundancy[i] = std::max(redundancy[i], cosine(candidates[i].weights, candidates[best].weights));
      }
    }
  }
  return selected;
}

std::vector<Span> highlight(std::string_view text, std::string_view term) {
  if (term.empty()) throw Error(ErrorCode::InvalidArgument, "highlight term must be non-empty");
  const auto folded = fold_case(text);
  const auto needle = fold_case(term);

  std::vector<std::string_view> parts;
  {
    std::string_view rest = needle;
    while (true) {
      const auto cut = rest.find('_');
      parts.push_back(rest.substr(0, cut));
      if (cut == std::string_view::npos) break;
      rest.remove_prefix(cut + 1);
    }
    if (std::any_of(parts.begin(), parts.end(), [](auto p) { return p.empty(); })) {
      parts.assign(1, std::string_view(needle));
    }
  }

  const auto cps = decode_utf8(folded);
  // Byte offset -> whether a token may start/end there.
  std::vector<bool> starts(folded.size() + 1, false);
  std::vector<bool> ends(folded.size() + 1, false);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    starts[cps[i].begin] = i == 0 || !is_word_codepoint(cps[i - 1].value);
    ends[cps[i].begin] = !is_word_codepoint(cps[i].value);
  }
  starts[folded.size()] = false;
  ends[folded.size()] = true;

  std::vector<Span> spans;
  std::size_t p = 0;
  while (p < folded.size()) {
    if (!starts[p]) {
      ++p;
      continue;
    }
    std::size_t pos = p;
    bool ok = true;
    for (std::size_t i = 0; i < parts.size() && ok; ++i) {
      if (i > 0) {
        if (pos < folded.size() && folded[pos] == '_') {
          ++pos;
        } else {
          const auto before = pos;
          while (pos < folded.size() && is_ascii_space(folded[pos])) ++pos;
          ok = pos > before;
        }
      }
      ok = ok && folded.compare(pos, parts[i].size(), parts[i]) == 0;
      pos += parts[i].size();
    }
    if (ok && pos <= folded.size() && ends[pos]) {
      spans.push_back({p, pos});
      p = pos;
    } else {
      ++p;
    }
  }
  return spans;
}

Retriever::Retriever(const ProcessedCorpus& corpus, InvertedIndex index)
    : corpus_(corpus), index_(std::move(index)), tfidf_(corpus) {}

std::vector<std::size_t> Retriever::candidates(std::string_view word, std::size_t t, std::size_t cap) const {
  if (cap == 0) throw Error(ErrorCode::InvalidArgument, "candidate cap must be >= 1");
  if (t >= corpus_.num_times()) {
    throw Error(ErrorCode::IndexOutOfRange, "time " + std::to_string(t) + " out of range [0, " +
                                                std::to_string(corpus_.num_times()) + ")");
  }
  std::vector<std::size_t> docs;
  auto v = corpus_.term_id(fold_case(word));
  if (!v) return docs;
  for (auto d : index_.postings(*v, t)) docs.push_back(d);
  const auto& all = corpus_.documents();
  std::stable_sort(docs.begin(), docs.end(), [&](std::size_t a, std::size_t b) {
    const double ra = tfidf_.weight(a, *v);
    const double rb = tfidf_.weight(b, *v);
    return ra != rb ? ra > rb : all[a].id < all[b].id;
  });
  if (docs.size() > cap) docs.resize(cap);
  return docs;
}

std::vector<RetrievalResult> Retriever::retrieve(std::string_view word, std::size_t t,
                                                 const RetrievalOptions& opts) const {
  const auto docs = candidates(word, t, opts.candidate_cap);
  if (docs.empty()) return {};
  const auto term = fold_case(word);
  const TermId v = *corpus_.term_id(term);

  std::vector<DocVector> vecs;
  vecs.reserve(docs.size());
  std::unordered_map<std::string, std::size_t> by_id;
  for (auto d : docs) {
    vecs.push_back({corpus_.documents()[d].id, tfidf_.vector(d)});
    by_id.emplace(corpus_.documents()[d].id, d);
  }

  SparseVector query;
  if (opts.query_mode == QueryMode::TermAxis) {
    query.emplace_back(v, 1.0);
  } else {
    std::map<TermId, double> sum;
    for (const auto& dv : vecs) {
      for (const auto& [id, w] : dv.weights) sum[id] += w / static_cast<double>(vecs.size());
    }
    query.assign(sum.begin(), sum.end());
  }

  std::vector<RetrievalResult> out;
  for (const auto& id : mmr_select(query, vecs, opts.lambda, opts.limit)) {
    const auto d = by_id.at(id);
    out.push_back({id, tfidf_.weight(d, v), highlight(corpus_.documents()[d].text, term)});
  }
  return out;
}

}  // namespace topictrail
