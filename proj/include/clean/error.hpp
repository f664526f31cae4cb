#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clean {

enum class ErrorKind {
  Io,
  MalformedHeader,
  TruncatedPayload,
  DimensionOverflow,
  UnnormalizedRow,
  DuplicateRecordingId,
  UnknownLanguageCode,
  SchemaViolation,
  InvalidArgument,
  InfeasibleLength,
  NoFeasiblePath,
  EmptySegment,
  SingleClassCorpus,
  EmptyDocument,
  DuplicateUtteranceId,
  MissingAudioPrediction,
  MissingThreshold,
  InstanceTooLarge,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. `line()` is 1-based and 0 when the
/// error is not tied to a line of a text input.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::size_t line = 0,
        std::vector<std::string> details = {})
      : std::runtime_error(compose(kind, message, line)),
        kind_(kind),
        line_(line),
        details_(std::move(details)) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }
  // Offending identifiers, e.g. the utterances missing an audio prediction.
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  static std::string compose(ErrorKind kind, const std::string& message, std::size_t line) {
    std::string out(to_string(kind));
    if (line != 0) out += " (line " + std::to_string(line) + ")";
    out += ": ";
    out += message;
    return out;
  }

  ErrorKind kind_;
  std::size_t line_;
  std::vector<std::string> details_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "IoError";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::DimensionOverflow: return "DimensionOverflow";
    case ErrorKind::UnnormalizedRow: return "UnnormalizedRow";
    case ErrorKind::DuplicateRecordingId: return "DuplicateRecordingId";
    case ErrorKind::UnknownLanguageCode: return "UnknownLanguageCode";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InfeasibleLength: return "InfeasibleLength";
    case ErrorKind::NoFeasiblePath: return "NoFeasiblePath";
    case ErrorKind::EmptySegment: return "EmptySegment";
    case ErrorKind::SingleClassCorpus: return "SingleClassCorpus";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::DuplicateUtteranceId: return "DuplicateUtteranceId";
    case ErrorKind::MissingAudioPrediction: return "MissingAudioPrediction";
    case ErrorKind::MissingThreshold: return "MissingThreshold";
    case ErrorKind::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorKind::Config: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace clean
