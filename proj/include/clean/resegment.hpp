#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "clean/ctc_align.hpp"

namespace clean {

inline constexpr double kDefaultMaxDuration = 30.0;
inline constexpr double kDefaultNonspeechFloor = -10.0;

/// A caption with its refined bounds, ready for packing.
struct AlignedCaption {
  std::size_t caption_index = 0;
  std::string text;
  bool nonspeech = false;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;
  ConfidenceScore confidence;

  std::size_t frames() const { return end_frame - start_frame; }
};

std::vector<AlignedCaption> to_aligned_captions(const LongFormRecording& recording,
                                                const RecordingAlignment& alignment);

struct AlignedUtterance {
  std::string utterance_id;  // <recording_id>-<5-digit index>
  std::string recording_id;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;
  std::string text;
  std::string language;
  ConfidenceScore confidence;
  double duration = 0.0;  // seconds
  std::vector<std::size_t> caption_indices;

  friend bool operator==(const AlignedUtterance&, const AlignedUtterance&) = default;
};

std::string make_utterance_id(std::string_view recording_id, std::size_t index);

struct NonspeechResult {
  std::vector<AlignedCaption> kept;
  std::vector<AlignedCaption> dropped;
  std::size_t dropped_count() const { return dropped.size(); }
};

/// Drops captions that tokenized to nothing or whose confidence is below
/// `floor` (text not supported by the audio).
NonspeechResult drop_nonspeech(std::span<const AlignedCaption> captions, double floor = kDefaultNonspeechFloor);

struct PackResult {
  std::vector<AlignedUtterance> utterances;
  std::vector<AlignedCaption> oversize;  // single captions longer than max_duration
};

/// Greedy left-to-right packing at caption boundaries: the next caption joins
/// the current utterance iff the merged span stays within max_duration.
/// Utterance confidence is the minimum over its captions.
PackResult pack_utterances(std::string_view recording_id, std::string_view language,
                           std::span<const AlignedCaption> captions, double frame_shift,
                           double max_duration = kDefaultMaxDuration);

}  // namespace clean
