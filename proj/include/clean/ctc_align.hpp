#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clean/posterior_io.hpp"

namespace clean {

struct TokenInterval {
  int token_id = 0;
  std::size_t start_frame = 0;  // inclusive
  std::size_t end_frame = 0;    // exclusive

  friend bool operator==(const TokenInterval&, const TokenInterval&) = default;
};

/// Best CTC path over the blank-interleaved state sequence. The path covers
/// frames [first_frame, end_frame); frames outside it are unaligned audio.
struct AlignmentPath {
  std::vector<TokenInterval> token_intervals;
  double path_log_prob = 0.0;
  // Log-prob of the emitted symbol per frame. Unaligned frames carry the
  // blank log-prob and do not count towards path_log_prob.
  std::vector<double> per_frame_log_prob;
  std::size_t first_frame = 0;
  std::size_t end_frame = 0;
  std::vector<std::size_t> states;  // one per covered frame
};

struct ConfidenceScore {
  double value = 0.0;  // log domain, <= 0
  int window_frames = 1;

  friend bool operator==(const ConfidenceScore&, const ConfidenceScore&) = default;
};

enum class Step : std::uint8_t { Self = 0, Advance1 = 1, Advance2 = 2, Start = 3 };

/// Per-state inclusive frame ranges. Both bounds are non-decreasing in the
/// state index, so the states active at any frame form one contiguous run.
struct Band {
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;
};

struct TrellisOptions {
  const Band* band = nullptr;
  bool keep_scores = false;
};

/// Viterbi trellis with one backpointer byte per in-band cell. Only the
/// terminal-state scores are retained unless full scores were requested.
class Trellis {
 public:
  std::size_t num_frames() const { return num_frames_; }
  std::size_t num_states() const { return num_states_; }
  bool banded() const { return banded_; }

  bool in_band(std::size_t frame, std::size_t state) const {
    return state >= first_state_[frame] && state < end_state_[frame];
  }
  Step step(std::size_t frame, std::size_t state) const {
    return static_cast<Step>(backptr_[offset_[frame] + (state - first_state_[frame])]);
  }
  // Score of (frame, state) for state in {2N-1, 2N}; -inf when out of band.
  double terminal_score(std::size_t frame, std::size_t state) const;
  std::size_t state_lo(std::size_t state) const { return state_lo_[state]; }
  std::size_t state_hi(std::size_t state) const { return state_hi_[state]; }

  /// Full T x S score matrix (row-major by frame), when kept.
  const std::optional<std::vector<double>>& scores() const { return scores_; }
  double score(std::size_t frame, std::size_t state) const { return (*scores_)[frame * num_states_ + state]; }

  std::size_t backpointer_bytes() const { return backptr_.size(); }

 private:
  friend Trellis build_trellis(const FrameLogPosteriors&, std::span<const int>, const TrellisOptions&);

  std::size_t num_frames_ = 0;
  std::size_t num_states_ = 0;
  bool banded_ = false;
  std::vector<std::size_t> state_lo_, state_hi_;
  std::vector<std::size_t> first_state_, end_state_, offset_;
  std::vector<std::uint8_t> backptr_;
  std::vector<double> final_token_, final_blank_;
  std::optional<std::vector<double>> scores_;
};

/// Frames needed to emit `tokens`: one per token plus a blank between each
/// pair of identical neighbours.
std::size_t min_frames_required(std::span<const int> tokens);

/// CTC segmentation trellis: transitions are self-loop, advance by one, and
/// advance by two (never into a blank, never between identical tokens).
/// States 0 and 1 may also be entered fresh at any frame, and the path may
/// end at any frame, so leading and trailing audio stays unaligned.
Trellis build_trellis(const FrameLogPosteriors& posteriors, std::span<const int> tokens,
                      const TrellisOptions& options = {});

/// Recovers the argmax path. End cell: highest score, then latest frame,
/// then the trailing blank over the last token. Going back, ties prefer
/// advance-by-two, advance-by-one, self-loop, then a fresh start.
AlignmentPath backtrack(const Trellis& trellis, const FrameLogPosteriors& posteriors,
                        std::span<const int> tokens);

/// Debug dump of the kept score matrix in the posterior layout under the
/// "CTCT" magic (T frames x S states, -inf outside the band).
void write_trellis_dump(const std::filesystem::path& path, const Trellis& trellis, double frame_shift);

/// True when some cell of `path` sits on a band edge that is not a matrix edge.
bool band_binds(const Trellis& trellis, const AlignmentPath& path);

struct FrameRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

/// Minimum over all length-`window_frames` windows inside `segment` of the
/// mean per-frame path log-prob; the whole-segment mean when the segment is
/// shorter than the window.
ConfidenceScore segment_confidence(const FrameLogPosteriors& posteriors, const AlignmentPath& path,
                                   FrameRange segment, int window_frames);

// ---------------------------------------------------------------------------

struct AlignConfig {
  int confidence_window = 30;
  std::size_t band_frames = 3750;
  std::uint64_t trellis_budget_bytes = std::uint64_t{256} << 20;
  bool force_band = false;
};

struct CaptionAlignment {
  std::size_t caption_index = 0;  // index into the recording's sorted captions
  bool nonspeech = false;         // empty after normalization; no interval
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;
  std::vector<TokenInterval> tokens;
  ConfidenceScore confidence;
  double start_drift_s = 0.0;  // |raw start - refined start|

  std::size_t frames() const { return end_frame - start_frame; }
};

struct RecordingAlignment {
  std::vector<CaptionAlignment> captions;  // one per input caption, in order
  AlignmentPath path;                      // joint path; empty when nothing was alignable
  bool banded = false;
  bool band_bound = false;
  std::size_t dropped_chars = 0;
};

/// Band of +-band_frames around the linear interpolation of each caption's
/// raw timestamps over its tokens.
Band make_caption_band(std::span<const RawCaption> captions, std::span<const std::size_t> token_counts,
                       std::size_t num_frames, double frame_shift, std::size_t band_frames);

/// Aligns all captions jointly in one DP over the whole recording and splits
/// the path back at caption boundaries. Raw timestamps only shape the band.
RecordingAlignment align_captions(const LongFormRecording& recording, const FrameLogPosteriors& posteriors,
                                  const Tokenizer& tokenizer, const AlignConfig& config = {});

}  // namespace clean
