#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clean/ctc_align.hpp"
#include "clean/lid.hpp"
#include "clean/posterior_io.hpp"

namespace clean {

struct IntRange {
  int lo = 0;
  int hi = 0;  // inclusive

  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct CorruptionSpec {
  double timestamp_shift_s = 0.0;
  double misaligned_fraction = 0.0;   // caption texts shuffled within the recording
  double wrong_label_fraction = 0.0;  // declared language replaced

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

struct SyntheticSpec {
  std::uint64_t seed = 1;
  int num_recordings = 10;
  IntRange captions_per_recording{3, 6};
  int vocab_size = 20;  // letters per language; alphabets are disjoint
  IntRange frames_per_token{1, 3};
  // Logit margin of the true label is log(V-1) + 1/temperature; 0 gives
  // exact one-hot posteriors.
  double noise_temperature = 0.0;
  double logit_noise = 0.5;  // std of Gaussian noise added to every logit
  CorruptionSpec corruption;
  int num_languages = 2;
  IntRange words_per_caption{2, 4};
  IntRange letters_per_word{2, 5};
  IntRange silence_frames{3, 12};  // before, between and after captions
  double frame_shift = kDefaultFrameShift;

  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Same `key = value` format as the pipeline config. Ranges are `lo-hi` or a
/// single integer. Throws ErrorKind::Config.
SyntheticSpec parse_synth_spec(std::string_view text);
SyntheticSpec load_synth_spec(const std::filesystem::path& path);
void validate_synth_spec(const SyntheticSpec& spec);
std::string format_synth_spec(const SyntheticSpec& spec);

/// Codes the generator assigns, in order.
std::span<const std::string_view> synth_language_codes();

struct TrueCaption {
  std::string text;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;  // exclusive
  std::vector<TokenInterval> tokens;
};

struct TruthRecord {
  std::string recording_id;
  std::string true_language;
  std::string declared_language;
  bool misaligned = false;
  bool wrong_label = false;
  double timestamp_shift_s = 0.0;
  std::size_t num_frames = 0;
  std::vector<TrueCaption> captions;       // in audio order
  std::vector<std::size_t> text_source;    // manifest caption i carries the text of captions[text_source[i]]
};

struct SyntheticRecording {
  LongFormRecording entry;
  FrameLogPosteriors posteriors;
  TruthRecord truth;
};

struct SyntheticCorpus {
  SyntheticSpec spec;
  std::vector<std::string> languages;
  Tokenizer tokenizer{{std::string(Tokenizer::kBlankToken), "a"}};
  std::vector<SyntheticRecording> recordings;
  AudioLidMap audio_lid;               // true language for every possible utterance id
  std::vector<LabeledText> lid_corpus;  // true caption texts
};

/// Deterministic in the spec.
SyntheticCorpus generate_corpus(const SyntheticSpec& spec);

/// Writes manifest.jsonl, posteriors/<id>.ctcp, tokenizer.tsv,
/// audio_lid.jsonl, text_lid.bin, truth.jsonl and pipeline.conf into `dir`.
void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir,
                  const TextLidConfig& lid_config = {});

std::string format_truth(const SyntheticCorpus& corpus);

inline constexpr std::size_t kBruteForceMaxFrames = 10;

/// Exhaustive search over every legal start frame, state sequence and end
/// frame, with the same tie-break as backtrack(). Throws InstanceTooLarge
/// for more than kBruteForceMaxFrames frames.
AlignmentPath brute_force_align(const FrameLogPosteriors& posteriors, std::span<const int> tokens);

}  // namespace clean
