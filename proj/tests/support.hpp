#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "topictrail/beta.hpp"
#include "topictrail/corpus.hpp"

namespace tt_test {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = fs::temp_directory_path() / ("topictrail-test-" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct DocSpec {
  std::string id;
  std::size_t time = 0;
  std::vector<std::string> tokens;
};

// Builds a corpus directly from token lists. Vocabulary is first-seen order,
// timestamps are "t0".."t{T-1}", and text is the tokens joined by spaces.
inline topictrail::ProcessedCorpus corpus_from(const std::vector<DocSpec>& docs, std::size_t num_times) {
  std::vector<std::string> vocab;
  std::map<std::string, topictrail::TermId> ids;
  std::vector<topictrail::ProcessedDocument> out;
  for (const auto& d : docs) {
    topictrail::ProcessedDocument pd;
    pd.id = d.id;
    pd.time_index = d.time;
    for (const auto& t : d.tokens) {
      auto [it, fresh] = ids.emplace(t, static_cast<topictrail::TermId>(vocab.size()));
      if (fresh) vocab.push_back(t);
      pd.tokens.push_back(it->second);
      if (!pd.text.empty()) pd.text += ' ';
      pd.text += t;
    }
    out.push_back(std::move(pd));
  }
  std::vector<std::string> stamps;
  for (std::size_t t = 0; t < num_times; ++t) stamps.push_back("t" + std::to_string(t));
  return topictrail::ProcessedCorpus(std::move(out), std::move(vocab), std::move(stamps));
}

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// rows[t][k] is an unnormalized weight vector; each row is scaled to sum 1.
inline topictrail::BetaTensor beta_from(const std::vector<std::vector<std::vector<double>>>& rows,
                                        std::vector<std::string> vocab = {}) {
  const auto T = rows.size();
  const auto K = rows.at(0).size();
  const auto V = rows.at(0).at(0).size();
  std::vector<float> values;
  for (const auto& per_t : rows) {
    for (const auto& row : per_t) {
      double sum = 0.0;
      for (double x : row) sum += x;
      for (double x : row) values.push_back(static_cast<float>(x / sum));
    }
  }
  if (vocab.empty()) vocab = numbered("w", V);
  return topictrail::BetaTensor(T, K, std::move(values), std::move(vocab), numbered("t", T));
}

inline topictrail::BetaTensor random_beta(std::mt19937& rng, std::size_t T, std::size_t K, std::size_t V,
                                          double zero_prob = 0.2) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<std::vector<double>>> rows(T, std::vector<std::vector<double>>(K));
  for (auto& per_t : rows) {
    for (auto& row : per_t) {
      row.resize(V);
      bool any = false;
      for (auto& x : row) {
        x = u(rng) < zero_prob ? 0.0 : u(rng);
        any = any || x > 0.0;
      }
      if (!any) row[0] = 1.0;
    }
  }
  return beta_from(rows);
}

#ifdef TOPICTRAIL_FIXTURES
// Copies the bundled corpus and model into `dir` so tests can write caches.
inline void stage_fixtures(const TempDir& dir) {
  fs::copy(fs::path(TOPICTRAIL_FIXTURES) / "processed", dir / "corpus", fs::copy_options::recursive);
  fs::copy(fs::path(TOPICTRAIL_FIXTURES) / "model", dir / "model", fs::copy_options::recursive);
}
#endif

}  // namespace tt_test
