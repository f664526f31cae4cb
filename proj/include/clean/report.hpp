#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clean/score_filter.hpp"

namespace clean {

inline constexpr std::string_view kPipelineVersion = "1.0.0";
// Thresholds rank utterances by count, not by duration.
inline constexpr std::string_view kQuantileBasis = "nearest_rank_count";

enum class Stage { Resegmentation = 0, LidFilter = 1, CtcFilter = 2 };
inline constexpr std::array<Stage, 3> kStages{Stage::Resegmentation, Stage::LidFilter, Stage::CtcFilter};
std::string_view stage_name(Stage stage);

struct LanguageStats {
  std::size_t utterance_count = 0;
  double hours = 0.0;

  friend bool operator==(const LanguageStats&, const LanguageStats&) = default;
};

/// Output of one stage. `total` is the sum over languages in code order.
struct StageStats {
  std::map<std::string, LanguageStats> per_language;
  LanguageStats total;

  void add(const std::string& language, double seconds);
  void finalize();

  friend bool operator==(const StageStats&, const StageStats&) = default;
};

struct Rejection {
  std::string recording_id;
  std::string reason;
  std::string stage;

  friend bool operator==(const Rejection&, const Rejection&) = default;
};

/// Everything a run reports except wall-clock timings, so two runs over the
/// same inputs serialize to identical bytes.
struct CleaningReport {
  std::string version{kPipelineVersion};
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> config;  // echo, in field order
  double theta_ctc = kDefaultThetaCtc;
  std::array<StageStats, 3> stages;
  ThresholdMap thresholds;
  std::vector<Rejection> rejections;  // sorted by recording_id
  std::vector<std::string> band_bound_recordings;
  std::map<std::string, double> mean_start_drift_s;  // per language, stage-1 captions
  std::optional<std::string> error;                   // set on a partial report

  const StageStats& stage(Stage s) const { return stages[static_cast<std::size_t>(s)]; }
  StageStats& stage(Stage s) { return stages[static_cast<std::size_t>(s)]; }

  friend bool operator==(const CleaningReport&, const CleaningReport&) = default;
};

/// Line-delimited JSON: one `meta` record, `stage` records (per language then
/// the `*` total), `threshold`, `drift`, `band`, `rejection` and optional
/// `error` records.
std::string format_machine_report(const CleaningReport& report);
CleaningReport parse_machine_report(std::string_view text);

/// Ctc-filter hours, one row per report: `theta`, `Total`, then languages by
/// hours in the first row (descending, ties by code). Every cell is right
/// aligned in 10 columns; hours use three decimals.
std::string format_text_table(std::span<const CleaningReport> reports);

}  // namespace clean
