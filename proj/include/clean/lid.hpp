#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clean/languages.hpp"
#include "clean/resegment.hpp"

namespace clean {

inline constexpr std::string_view kUndeterminedLanguage = "und";

struct LanguagePrediction {
  std::string code;
  double prob = 0.0;

  friend bool operator==(const LanguagePrediction&, const LanguagePrediction&) = default;
};

// ---------------------------------------------------------------------------
// Text LID: multinomial logistic regression over hashed character n-grams.

struct TextLidConfig {
  std::vector<int> orders{1, 2, 3};
  std::uint32_t buckets = 1u << 18;  // power of two
  int epochs = 5;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
};

struct LabeledText {
  std::string text;
  std::string label;
};

struct TextLidModel {
  std::vector<int> ngram_orders{1, 2, 3};
  std::uint32_t buckets = 0;
  std::vector<std::string> labels;  // sorted, unique
  std::vector<float> bias;          // L
  std::vector<float> weights;       // L x D, row-major by label

  std::size_t num_labels() const { return labels.size(); }
  float weight(std::size_t label, std::uint32_t bucket) const { return weights[label * buckets + bucket]; }

  friend bool operator==(const TextLidModel&, const TextLidModel&) = default;
};

/// Lowercase ASCII, digits and ASCII punctuation to spaces, collapsed whitespace.
std::string normalize_lid_text(std::string_view text);

/// Bucket -> weight, unit-L2 bag of n-grams over the normalized text
/// padded with one space on each side. Sorted by bucket.
std::vector<std::pair<std::uint32_t, double>> ngram_features(std::string_view text, std::span<const int> orders,
                                                             std::uint32_t buckets);

/// Deterministic for a given corpus order and config.
TextLidModel train_text_lid(std::span<const LabeledText> corpus, const TextLidConfig& config = {});

/// Argmax of the softmax; ties go to the lexicographically smaller code.
/// Empty normalized text yields ("und", 0).
LanguagePrediction predict_text_lid(const TextLidModel& model, std::string_view text);

inline constexpr std::string_view kTextLidMagic = "TLID";
inline constexpr std::uint32_t kTextLidVersion = 1;

/// Version 1 files imply n-gram orders {1,2,3}.
std::vector<char> encode_text_lid(const TextLidModel& model);
TextLidModel decode_text_lid(std::vector<char> bytes);
void save_text_lid(const std::filesystem::path& path, const TextLidModel& model);
TextLidModel load_text_lid(const std::filesystem::path& path);

/// `label<TAB>text` lines.
std::vector<LabeledText> load_lid_corpus(const std::filesystem::path& path,
                                         const LanguageTable& languages = LanguageTable::builtin());

// ---------------------------------------------------------------------------
// Audio LID predictions: {utterance_id, language, prob} per line.

using AudioLidMap = std::map<std::string, LanguagePrediction, std::less<>>;

AudioLidMap parse_audio_lid(std::string_view text);
AudioLidMap load_audio_lid(const std::filesystem::path& path);
std::string format_audio_lid(const AudioLidMap& predictions);

// ---------------------------------------------------------------------------

struct LidVerdict {
  std::string utterance_id;
  std::string declared;
  LanguagePrediction text_pred;
  LanguagePrediction audio_pred;
  bool keep = false;

  friend bool operator==(const LidVerdict&, const LidVerdict&) = default;
};

struct LidFilterResult {
  std::vector<AlignedUtterance> kept;
  std::vector<LidVerdict> verdicts;  // one per input utterance, input order
};

/// Keeps an utterance iff its declared language equals both the text and the
/// audio prediction after canonicalization. Probabilities are recorded, not
/// thresholded. Throws MissingAudioPrediction listing every uncovered id.
LidFilterResult lid_agreement_filter(std::span<const AlignedUtterance> utterances, const TextLidModel& text_model,
                                     const AudioLidMap& audio_predictions,
                                     const LanguageTable& languages = LanguageTable::builtin());

}  // namespace clean
