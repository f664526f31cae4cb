#include "clean/score_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "clean/error.hpp"

namespace clean {

bool LanguageThreshold::is_low(double confidence, std::string_view utterance_id) const {
  if (low_count == 0) return false;
  if (confidence != cutoff) return confidence < cutoff;
  return utterance_id <= cutoff_utterance_id;
}

std::size_t nearest_rank_count(double theta, std::size_t n) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "theta must lie in [0, 1]");
  const double exact = theta * static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
  return std::min(k, n);
}

ThresholdMap compute_thresholds(std::span<const AlignedUtterance> utterances, const FilterConfig& config) {
  std::map<std::string, std::vector<const AlignedUtterance*>, std::less<>> by_language;
  for (const auto& utt : utterances) {
    if (!std::isfinite(utt.confidence.value))
      throw Error(ErrorKind::InvalidArgument, "utterance " + utt.utterance_id + " has a non-finite confidence");
    by_language[utt.language].push_back(&utt);
  }
  ThresholdMap out;
  for (auto& [language, group] : by_language) {
    std::sort(group.begin(), group.end(), [](const AlignedUtterance* a, const AlignedUtterance* b) {
      if (a->confidence.value != b->confidence.value) return a->confidence.value < b->confidence.value;
      return a->utterance_id < b->utterance_id;
    });
    LanguageThreshold th;
    th.language = language;
    th.sample_count = group.size();
    th.low_count = nearest_rank_count(config.theta_ctc, group.size());
    if (th.low_count == 0) {
      th.cutoff = -std::numeric_limits<double>::infinity();
    } else {
      th.cutoff = group[th.low_count - 1]->confidence.value;
      th.cutoff_utterance_id = group[th.low_count - 1]->utterance_id;
    }
    out.emplace(language, std::move(th));
  }
  return out;
}

LongformFilterResult filter_longforms(std::span<const AlignedUtterance> utterances, const ThresholdMap& thresholds) {
  std::set<std::string, std::less<>> discarded;
  for (const auto& utt : utterances) {
    auto it = thresholds.find(utt.language);
    if (it == thresholds.end())
      throw Error(ErrorKind::MissingThreshold, "no threshold for language '" + utt.language + "'");
    if (it->second.is_low(utt.confidence.value, utt.utterance_id)) discarded.insert(utt.recording_id);
  }
  LongformFilterResult out;
  for (const auto& utt : utterances)
    if (!discarded.contains(utt.recording_id)) out.kept.push_back(utt);
  out.discarded_recordings.assign(discarded.begin(), discarded.end());
  return out;
}

}  // namespace clean
