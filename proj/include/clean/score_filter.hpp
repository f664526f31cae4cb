#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clean/resegment.hpp"

namespace clean {

inline constexpr double kDefaultThetaCtc = 0.10;

struct FilterConfig {
  double theta_ctc = kDefaultThetaCtc;  // nearest-rank quantile in [0, 1]
};

/// Nearest-rank cutoff for one language. Utterances ordered by
/// (confidence, utterance_id) at or below (cutoff, cutoff_utterance_id) are
/// low; exactly low_count of the sample_count utterances are.
struct LanguageThreshold {
  std::string language;
  double cutoff = 0.0;  // -inf when low_count == 0
  std::string cutoff_utterance_id;
  std::size_t sample_count = 0;
  std::size_t low_count = 0;

  bool is_low(double confidence, std::string_view utterance_id) const;

  friend bool operator==(const LanguageThreshold&, const LanguageThreshold&) = default;
};

using ThresholdMap = std::map<std::string, LanguageThreshold, std::less<>>;

/// ceil(theta * n) with a tolerance so products like 0.3 * 10 do not round up to 4.
std::size_t nearest_rank_count(double theta, std::size_t n);

ThresholdMap compute_thresholds(std::span<const AlignedUtterance> utterances, const FilterConfig& config);

struct LongformFilterResult {
  std::vector<AlignedUtterance> kept;
  std::vector<std::string> discarded_recordings;  // sorted
};

/// Discards a whole recording when any of its utterances is low.
LongformFilterResult filter_longforms(std::span<const AlignedUtterance> utterances, const ThresholdMap& thresholds);

}  // namespace clean
