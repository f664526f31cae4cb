#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clean/languages.hpp"

namespace clean {

inline constexpr double kDefaultFrameShift = 0.08;
inline constexpr int kBlankId = 0;

/// T x V matrix of natural-log frame posteriors, row-major, blank at column 0.
class FrameLogPosteriors {
 public:
  FrameLogPosteriors() = default;
  /// Checks the shape only; use validate_posteriors() for the value invariants.
  FrameLogPosteriors(std::size_t num_frames, std::size_t vocab_size, std::vector<float> values,
                     double frame_shift = kDefaultFrameShift);

  std::size_t num_frames() const { return num_frames_; }
  std::size_t vocab_size() const { return vocab_size_; }
  double frame_shift() const { return frame_shift_; }

  float at(std::size_t frame, std::size_t token) const { return values_[frame * vocab_size_ + token]; }
  std::span<const float> row(std::size_t frame) const {
    return {values_.data() + frame * vocab_size_, vocab_size_};
  }
  std::span<const float> values() const { return values_; }

  friend bool operator==(const FrameLogPosteriors&, const FrameLogPosteriors&) = default;

 private:
  std::size_t num_frames_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<float> values_;
  double frame_shift_ = kDefaultFrameShift;
};

struct PosteriorLoadOptions {
  std::uint64_t max_bytes = std::uint64_t{4} << 30;  // payload budget
  double row_tolerance = 1e-3;                        // |logsumexp(row)| bound
};

inline constexpr std::string_view kPosteriorMagic = "CTCP";
inline constexpr std::string_view kTrellisMagic = "CTCT";
inline constexpr std::uint32_t kPosteriorVersion = 1;

/// Throws UnnormalizedRow if a value is positive or NaN, or a row's
/// logsumexp is further than `tolerance` from 0.
void validate_posteriors(const FrameLogPosteriors& posteriors, double tolerance = 1e-3);

std::vector<char> encode_posteriors(const FrameLogPosteriors& posteriors,
                                    std::string_view magic = kPosteriorMagic);
FrameLogPosteriors decode_posteriors(std::vector<char> bytes, const PosteriorLoadOptions& options = {},
                                     std::string_view magic = kPosteriorMagic);

void write_posteriors(const std::filesystem::path& path, const FrameLogPosteriors& posteriors,
                      std::string_view magic = kPosteriorMagic);
FrameLogPosteriors load_posteriors(const std::filesystem::path& path,
                                   const PosteriorLoadOptions& options = {});

// ---------------------------------------------------------------------------
// Tokenizer

struct NormalizationRule {
  enum class Kind { Lowercase, StripBracketed, StripPunctuation, CollapseWhitespace };
  Kind kind;
  std::string chars;  // StripPunctuation only

  friend bool operator==(const NormalizationRule&, const NormalizationRule&) = default;
};

struct TokenizeResult {
  std::vector<int> ids;
  std::size_t dropped = 0;  // code points with no matching token
};

/// Greedy longest-match tokenizer over a flat vocabulary. Id 0 is the blank
/// and is never produced.
class Tokenizer {
 public:
  static constexpr std::string_view kBlankToken = "<blank>";

  /// `tokens[i]` is the string for id i; `tokens[0]` must be "<blank>".
  explicit Tokenizer(std::vector<std::string> tokens,
                     std::vector<NormalizationRule> rules = default_rules());

  /// Strip `[...]` tags, lowercase ASCII, strip ASCII punctuation, collapse whitespace.
  static std::vector<NormalizationRule> default_rules();

  std::string normalize(std::string_view text) const;
  TokenizeResult tokenize(std::string_view text) const;

  std::size_t vocab_size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<int> id_of(std::string_view token) const;
  const std::vector<NormalizationRule>& rules() const { return rules_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<NormalizationRule> rules_;
  std::unordered_map<std::string, int> lookup_;
  std::size_t max_token_bytes_ = 0;
};

inline TokenizeResult tokenize(const Tokenizer& tokenizer, std::string_view text) {
  return tokenizer.tokenize(text);
}

/// `token<TAB>id` lines with a mandatory `<blank><TAB>0`. Lines starting with
/// `#!` are normalization directives (`#!lowercase`, `#!strip_bracketed`,
/// `#!strip_punct [chars]`, `#!collapse_whitespace`) applied in file order;
/// when none are present the default rules apply. Other `#` lines without a
/// tab are comments.
Tokenizer load_tokenizer(const std::filesystem::path& path);
Tokenizer parse_tokenizer(std::string_view text);
std::string format_tokenizer(const Tokenizer& tokenizer);
void write_tokenizer(const std::filesystem::path& path, const Tokenizer& tokenizer);

// ---------------------------------------------------------------------------
// Manifests

struct RawCaption {
  std::string text;
  double start = 0.0;
  double end = 0.0;

  // Noisy annotations sometimes have end <= start; kept but flagged.
  bool inverted() const { return end <= start; }

  friend bool operator==(const RawCaption&, const RawCaption&) = default;
};

struct LongFormRecording {
  std::string recording_id;
  std::string declared_language;  // canonical ISO-639-3
  std::string posterior_path;     // as written; relative paths resolve against the manifest dir
  std::vector<RawCaption> captions;

  friend bool operator==(const LongFormRecording&, const LongFormRecording&) = default;
};

std::filesystem::path resolve_posterior_path(const LongFormRecording& recording,
                                             const std::filesystem::path& manifest_dir);

/// One JSON object per line. Captions are stably sorted by start.
std::vector<LongFormRecording> load_manifest(const std::filesystem::path& path,
                                             const LanguageTable& languages = LanguageTable::builtin());
std::vector<LongFormRecording> parse_manifest(std::string_view text,
                                              const LanguageTable& languages = LanguageTable::builtin());
std::string format_manifest(std::span<const LongFormRecording> recordings);
void write_manifest(const std::filesystem::path& path, std::span<const LongFormRecording> recordings);

/// Text helpers shared with the LID module.
std::size_t utf8_length(unsigned char lead);

}  // namespace clean
