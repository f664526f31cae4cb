#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clean/lid.hpp"
#include "clean/report.hpp"

namespace clean {

struct PipelineConfig {
  std::filesystem::path input_manifest;
  std::filesystem::path tokenizer;
  std::filesystem::path audio_lid;
  std::filesystem::path text_lid_model;
  std::filesystem::path output_dir;
  std::filesystem::path alias_table;  // optional; empty selects the built-in table
  double theta_ctc = kDefaultThetaCtc;
  double max_duration = kDefaultMaxDuration;
  int confidence_window = 30;
  double nonspeech_floor = kDefaultNonspeechFloor;
  std::size_t band_frames = 3750;
  std::uint64_t trellis_budget_mb = 256;
  int workers = 1;
  bool skip_bad = false;
  bool cache = true;
};

/// `key = value` lines named after the PipelineConfig fields; `#` comments.
/// Relative paths resolve against `base_dir`. Throws ErrorKind::Config.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);
void validate_config(const PipelineConfig& config);
std::string format_config(const PipelineConfig& config);

/// Fields that affect output bytes, in declaration order. Worker count,
/// output directory and the cache switch are execution details and excluded.
std::vector<std::pair<std::string, std::string>> config_echo(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

/// Per-recording result of resegmentation.
struct RecordingOutcome {
  std::string recording_id;
  std::string language;
  std::vector<AlignedUtterance> utterances;
  std::string rejection_reason;  // non-empty when the recording yields nothing
  std::size_t num_captions = 0;
  std::size_t nonspeech_dropped = 0;
  std::size_t oversize_rejected = 0;
  bool band_bound = false;
  double drift_sum_s = 0.0;
  std::size_t drift_count = 0;

  friend bool operator==(const RecordingOutcome&, const RecordingOutcome&) = default;
};

/// Cached product of stages 1 and 2; stage 3 reruns from it per theta.
struct AlignedCorpus {
  std::string cache_key;
  std::vector<RecordingOutcome> recordings;  // sorted by recording_id
  std::vector<LidVerdict> verdicts;
  std::vector<AlignedUtterance> lid_kept;
  double stage_seconds[2] = {0.0, 0.0};

  friend bool operator==(const AlignedCorpus& a, const AlignedCorpus& b) {
    return a.cache_key == b.cache_key && a.recordings == b.recordings && a.verdicts == b.verdicts &&
           a.lid_kept == b.lid_kept;
  }
};

struct RunResult {
  std::filesystem::path manifest_path;
  std::filesystem::path report_path;
  CleaningReport report;
  std::vector<AlignedUtterance> utterances;  // final manifest content
  double stage_seconds[3] = {0.0, 0.0, 0.0};
  bool from_cache = false;
};

/// Stages 1 and 2, read from or written to the stage cache when enabled.
AlignedCorpus prepare_corpus(const PipelineConfig& config, bool* from_cache = nullptr);

/// Stage 3 plus report assembly; no I/O.
RunResult finish_run(const PipelineConfig& config, const AlignedCorpus& corpus, double theta);

/// align -> drop non-speech -> pack -> LID agreement -> thresholds ->
/// long-form filter. Writes manifest.jsonl, report.jsonl, report.txt,
/// lid_verdicts.jsonl and timings.json under output_dir. On a data error a
/// partial report naming the failure is written before rethrowing.
RunResult run_pipeline(const PipelineConfig& config);

/// Sorted, de-duplicated thetas; duplicates are reported through `warn`.
std::vector<RunResult> sweep_thresholds(const PipelineConfig& config, std::vector<double> thetas,
                                        const std::function<void(const std::string&)>& warn = {});

std::string format_utterance_manifest(std::span<const AlignedUtterance> utterances);
std::vector<AlignedUtterance> parse_utterance_manifest(std::string_view text);

/// Runs fn(i) for i in [0, n) on `workers` threads. Exceptions are captured
/// per index and the lowest failing index is rethrown after all finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace clean
