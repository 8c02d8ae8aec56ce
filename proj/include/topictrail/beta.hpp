#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "topictrail/corpus.hpp"

namespace topictrail {

/// Row sums may deviate from one by at most this much before a load is rejected.
inline constexpr double kRowSumTolerance = 1e-4;

struct TopWordSet {
  std::size_t topic = 0;
  std::size_t time = 0;
  std::vector<TermId> ids;
  std::vector<std::string> words;
};

struct Trajectory {
  std::size_t topic = 0;
  TermId word = 0;
  std::vector<double> series;
};

/// Temporal topic-word tensor, immutable once constructed. Values are stored
/// row-major as [t][k][v] single-precision floats, matching beta.f32.
class BetaTensor {
 public:
  /// Validates shape and distributions; rows within kRowSumTolerance are
  /// renormalized, rows beyond it throw NotADistribution.
  BetaTensor(std::size_t num_times, std::size_t num_topics, std::vector<float> values,
             std::vector<std::string> vocab, std::vector<std::string> timestamps,
             std::string model_name = {});

  std::size_t num_times() const { return T_; }
  std::size_t num_topics() const { return K_; }
  std::size_t vocab_size() const { return V_; }
  const std::string& model_name() const { return model_name_; }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::string>& timestamps() const { return timestamps_; }
  const std::vector<float>& values() const { return values_; }

  /// SHA-256 of the vocab.txt / timestamps.txt bytes this tensor is bound to.
  const std::string& vocab_ref() const { return vocab_ref_; }
  const std::string& timestamp_ref() const { return timestamp_ref_; }

  double at(std::size_t t, std::size_t k, TermId v) const {
    return values_[(t * K_ + k) * V_ + v];
  }
  std::span<const float> row(std::size_t t, std::size_t k) const {
    return {values_.data() + (t * K_ + k) * V_, V_};
  }

  std::optional<TermId> term_id(const std::string& term) const;

 private:
  std::size_t T_;
  std::size_t K_;
  std::size_t V_;
  std::vector<float> values_;
  std::vector<std::string> vocab_;
  std::vector<std::string> timestamps_;
  std::string model_name_;
  std::string vocab_ref_;
  std::string timestamp_ref_;
  std::unordered_map<std::string, TermId> term_ids_;
};

/// Loads model_meta.json plus beta.f32 (or beta.json when no binary exists).
BetaTensor load_beta(const std::filesystem::path& meta_path, const std::filesystem::path& tensor_path,
                     const std::filesystem::path& vocab_path,
                     const std::filesystem::path& timestamps_path);

/// Convenience overload: model_dir holds model_meta.json and the tensor,
/// corpus_dir holds vocab.txt and timestamps.txt.
BetaTensor load_beta(const std::filesystem::path& model_dir, const std::filesystem::path& corpus_dir);

/// Writes model_meta.json and beta.f32 (little-endian float32, [t][k][v]).
void write_beta(const BetaTensor& beta, const std::filesystem::path& model_dir);

TopWordSet top_words(const BetaTensor& beta, std::size_t k, std::size_t t, std::size_t n);

Trajectory trajectory(const BetaTensor& beta, std::size_t k, TermId v);

}  // namespace topictrail
