#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "topictrail/beta.hpp"

namespace topictrail {

enum class UniquenessMembership {
  AnyTime,   // v is in the topic's top-N at one or more timestamps
  EveryTime  // v is in the topic's top-N at every timestamp
};

struct SaliencyConfig {
  std::size_t pool_size = 500;
  std::size_t top_n_membership = 10;
  double epsilon = 1e-12;
  UniquenessMembership membership = UniquenessMembership::AnyTime;

  void validate() const;
};

struct SaliencyScore {
  std::size_t topic = 0;
  TermId word = 0;
  double s_burst = 0.0;
  double s_spec = 0.0;
  double s_uniq = 0.0;
  double s_final = 0.0;
};

double score_burstiness(const BetaTensor& beta, std::size_t k, TermId v, double eps);
double score_specificity(const BetaTensor& beta, std::size_t k, TermId v, double eps);
double score_uniqueness(const BetaTensor& beta, TermId v, std::size_t n,
                        UniquenessMembership membership = UniquenessMembership::AnyTime);

/// Precomputes per-word peaks, global means and top-N membership so a whole
/// topic can be ranked without rescanning the tensor per word.
class SaliencyScorer {
 public:
  SaliencyScorer(const BetaTensor& beta, SaliencyConfig cfg);

  SaliencyScore score(std::size_t k, TermId v) const;

  /// Top `pool_size` words of topic k by peak probability, scored and sorted
  /// by descending s_final (ties by ascending id), truncated to `limit`.
  /// `pool` overrides the configured pool size.
  std::vector<SaliencyScore> rank(std::size_t k, std::size_t limit,
                                  std::optional<std::size_t> pool = std::nullopt) const;

  const SaliencyConfig& config() const { return cfg_; }

 private:
  const BetaTensor& beta_;
  SaliencyConfig cfg_;
  std::vector<double> global_mean_;         // [v]
  std::vector<double> peak_;                // [k][v]
  std::vector<double> mean_;                // [k][v]
  std::vector<std::size_t> topic_members_;  // [v]
};

std::vector<SaliencyScore> rank_salient(const BetaTensor& beta, std::size_t k,
                                        const SaliencyConfig& cfg, std::size_t limit);

std::string saliency_json(const BetaTensor& beta, std::size_t k, const SaliencyConfig& cfg,
                          const std::vector<SaliencyScore>& scores);

}  // namespace topictrail
