#include "clean/resegment.hpp"

#include <algorithm>
#include <cstdio>

#include "clean/error.hpp"

namespace clean {

namespace {

// Spans are compared in seconds; the slack absorbs frame_shift rounding such
// as 375 * 0.08 landing a hair above 30.
bool fits(std::size_t frames, double frame_shift, double max_duration) {
  return static_cast<double>(frames) * frame_shift <= max_duration + 1e-9;
}

}  // namespace

std::vector<AlignedCaption> to_aligned_captions(const LongFormRecording& recording,
                                                const RecordingAlignment& alignment) {
  if (alignment.captions.size() != recording.captions.size())
    throw Error(ErrorKind::InvalidArgument, "alignment does not match the recording's captions");
  std::vector<AlignedCaption> out;
  out.reserve(alignment.captions.size());
  for (const auto& cap : alignment.captions) {
    AlignedCaption ac;
    ac.caption_index = cap.caption_index;
    ac.text = recording.captions[cap.caption_index].text;
    ac.nonspeech = cap.nonspeech;
    ac.start_frame = cap.start_frame;
    ac.end_frame = cap.end_frame;
    ac.confidence = cap.confidence;
    out.push_back(std::move(ac));
  }
  return out;
}

std::string make_utterance_id(std::string_view recording_id, std::size_t index) {
  char suffix[32];
  std::snprintf(suffix, sizeof(suffix), "-%05zu", index);
  return std::string(recording_id) + suffix;
}

NonspeechResult drop_nonspeech(std::span<const AlignedCaption> captions, double floor) {
  NonspeechResult out;
  for (const auto& cap : captions) {
    if (cap.nonspeech || cap.confidence.value < floor) out.dropped.push_back(cap);
    else out.kept.push_back(cap);
  }
  return out;
}

PackResult pack_utterances(std::string_view recording_id, std::string_view language,
                           std::span<const AlignedCaption> captions, double frame_shift, double max_duration) {
  PackResult out;
  std::vector<const AlignedCaption*> current;

  auto flush = [&] {
    if (current.empty()) return;
    AlignedUtterance utt;
    utt.utterance_id = make_utterance_id(recording_id, out.utterances.size());
    utt.recording_id = std::string(recording_id);
    utt.language = std::string(language);
    utt.start_frame = current.front()->start_frame;
    utt.end_frame = current.back()->end_frame;
    utt.confidence = current.front()->confidence;
    for (const auto* cap : current) {
      if (!utt.text.empty()) utt.text += ' ';
      utt.text += cap->text;
      utt.confidence.value = std::min(utt.confidence.value, cap->confidence.value);
      utt.caption_indices.push_back(cap->caption_index);
    }
    utt.duration = static_cast<double>(utt.end_frame - utt.start_frame) * frame_shift;
    out.utterances.push_back(std::move(utt));
    current.clear();
  };

  for (const auto& cap : captions) {
    if (cap.nonspeech) continue;
    if (cap.end_frame < cap.start_frame || (!current.empty() && cap.start_frame < current.back()->end_frame))
      throw Error(ErrorKind::InvalidArgument, "captions must be ordered and non-overlapping");
    if (!fits(cap.frames(), frame_shift, max_duration)) {
      flush();
      out.oversize.push_back(cap);
      continue;
    }
    if (!current.empty() && !fits(cap.end_frame - current.front()->start_frame, frame_shift, max_duration))
      flush();
    current.push_back(&cap);
  }
  flush();
  return out;
}

}  // namespace clean
