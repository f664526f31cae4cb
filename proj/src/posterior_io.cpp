#include "clean/posterior_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "clean/error.hpp"

namespace clean {

using detail::ByteReader;
using detail::ByteWriter;

FrameLogPosteriors::FrameLogPosteriors(std::size_t num_frames, std::size_t vocab_size,
                                       std::vector<float> values, double frame_shift)
    : num_frames_(num_frames), vocab_size_(vocab_size), values_(std::move(values)), frame_shift_(frame_shift) {
  if (num_frames_ < 1) throw Error(ErrorKind::InvalidArgument, "posteriors need at least one frame");
  if (vocab_size_ < 2) throw Error(ErrorKind::InvalidArgument, "vocabulary must hold blank plus one token");
  if (values_.size() != num_frames_ * vocab_size_)
    throw Error(ErrorKind::InvalidArgument, "value count does not match T*V");
  if (!(frame_shift_ > 0.0) || !std::isfinite(frame_shift_))
    throw Error(ErrorKind::InvalidArgument, "frame shift must be positive");
}

void validate_posteriors(const FrameLogPosteriors& posteriors, double tolerance) {
  for (std::size_t t = 0; t < posteriors.num_frames(); ++t) {
    const auto row = posteriors.row(t);
    double peak = -std::numeric_limits<double>::infinity();
    for (float v : row) {
      if (std::isnan(v) || v > 0.0f)
        throw Error(ErrorKind::UnnormalizedRow, "frame " + std::to_string(t) + " holds a value > 0 or NaN");
      peak = std::max(peak, static_cast<double>(v));
    }
    double lse = peak;
    if (std::isfinite(peak)) {
      double sum = 0.0;
      for (float v : row) sum += std::exp(static_cast<double>(v) - peak);
      lse = peak + std::log(sum);
    }
    if (!(std::abs(lse) <= tolerance))
      throw Error(ErrorKind::UnnormalizedRow,
                  "frame " + std::to_string(t) + " logsumexp " + std::to_string(lse) + " is not 0");
  }
}

std::vector<char> encode_posteriors(const FrameLogPosteriors& posteriors, std::string_view magic) {
  ByteWriter w;
  w.bytes(magic);
  w.u32(kPosteriorVersion);
  w.u64(posteriors.num_frames());
  w.u64(posteriors.vocab_size());
  w.f64(posteriors.frame_shift());
  w.f32s(posteriors.values());
  return w.data();
}

FrameLogPosteriors decode_posteriors(std::vector<char> bytes, const PosteriorLoadOptions& options,
                                     std::string_view magic) {
  ByteReader r(std::move(bytes));
  std::string got;
  std::uint32_t version = 0;
  std::uint64_t frames = 0, vocab = 0;
  double shift = 0.0;
  if (!r.bytes(4, got) || got != magic) throw Error(ErrorKind::MalformedHeader, "bad magic");
  if (!r.u32(version) || version != kPosteriorVersion)
    throw Error(ErrorKind::MalformedHeader, "unsupported version " + std::to_string(version));
  if (!r.u64(frames) || !r.u64(vocab) || !r.f64(shift))
    throw Error(ErrorKind::MalformedHeader, "truncated header");
  if (frames < 1) throw Error(ErrorKind::MalformedHeader, "num_frames is 0");
  if (vocab < 2) throw Error(ErrorKind::MalformedHeader, "vocab_size < 2");
  if (!(shift > 0.0) || !std::isfinite(shift)) throw Error(ErrorKind::MalformedHeader, "bad frame shift");

  const std::uint64_t max_values = options.max_bytes / sizeof(float);
  if (vocab > max_values / frames)
    throw Error(ErrorKind::DimensionOverflow, std::to_string(frames) + "x" + std::to_string(vocab) +
                                                  " exceeds the memory budget");
  const std::size_t count = static_cast<std::size_t>(frames * vocab);
  if (r.remaining() != count * sizeof(float))
    throw Error(ErrorKind::TruncatedPayload, "payload holds " + std::to_string(r.remaining()) +
                                                 " bytes, expected " + std::to_string(count * sizeof(float)));
  std::vector<float> values(count);
  r.f32s(values);
  FrameLogPosteriors out(frames, vocab, std::move(values), shift);
  validate_posteriors(out, options.row_tolerance);
  return out;
}

void write_posteriors(const std::filesystem::path& path, const FrameLogPosteriors& posteriors,
                      std::string_view magic) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  const auto bytes = encode_posteriors(posteriors, magic);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

FrameLogPosteriors load_posteriors(const std::filesystem::path& path, const PosteriorLoadOptions& options) {
  return decode_posteriors(detail::read_file(path), options);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kDefaultPunctuation = R"(!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~)";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string apply_rule(const NormalizationRule& rule, std::string_view in) {
  std::string out;
  out.reserve(in.size());
  switch (rule.kind) {
    case NormalizationRule::Kind::Lowercase:
      for (char c : in) out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
      break;
    case NormalizationRule::Kind::StripBracketed: {
      std::size_t i = 0;
      while (i < in.size()) {
        if (in[i] == '[') {
          const auto close = in.find(']', i);
          if (close != std::string_view::npos) {
            out.push_back(' ');
            i = close + 1;
            continue;
          }
        }
        out.push_back(in[i++]);
      }
      break;
    }
    case NormalizationRule::Kind::StripPunctuation:
      for (char c : in)
        if (rule.chars.find(c) == std::string::npos) out.push_back(c);
      break;
    case NormalizationRule::Kind::CollapseWhitespace: {
      bool pending = false;
      for (char c : in) {
        if (is_space(c)) {
          pending = !out.empty();
        } else {
          if (pending) out.push_back(' ');
          pending = false;
          out.push_back(c);
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

Tokenizer::Tokenizer(std::vector<std::string> tokens, std::vector<NormalizationRule> rules)
    : tokens_(std::move(tokens)), rules_(std::move(rules)) {
  if (tokens_.size() < 2 || tokens_[0] != kBlankToken)
    throw Error(ErrorKind::InvalidArgument, "token 0 must be <blank> and at least one real token must exist");
  for (std::size_t id = 1; id < tokens_.size(); ++id) {
    const auto& tok = tokens_[id];
    if (tok.empty()) throw Error(ErrorKind::InvalidArgument, "empty token for id " + std::to_string(id));
    if (tok == kBlankToken || !lookup_.emplace(tok, static_cast<int>(id)).second)
      throw Error(ErrorKind::InvalidArgument, "duplicate token '" + tok + "'");
    max_token_bytes_ = std::max(max_token_bytes_, tok.size());
  }
}

std::vector<NormalizationRule> Tokenizer::default_rules() {
  using K = NormalizationRule::Kind;
  return {{K::StripBracketed, {}},
          {K::Lowercase, {}},
          {K::StripPunctuation, std::string(kDefaultPunctuation)},
          {K::CollapseWhitespace, {}}};
}

std::string Tokenizer::normalize(std::string_view text) const {
  std::string cur(text);
  for (const auto& rule : rules_) cur = apply_rule(rule, cur);
  return cur;
}

TokenizeResult Tokenizer::tokenize(std::string_view text) const {
  const std::string norm = normalize(text);
  const std::string_view s = norm;
  TokenizeResult out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t longest = std::min(max_token_bytes_, s.size() - pos);
    bool matched = false;
    for (std::size_t len = longest; len >= 1; --len) {
      if (auto it = lookup_.find(std::string(s.substr(pos, len))); it != lookup_.end()) {
        out.ids.push_back(it->second);
        pos += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      pos += std::min(utf8_length(static_cast<unsigned char>(s[pos])), s.size() - pos);
      ++out.dropped;
    }
  }
  return out;
}

std::optional<int> Tokenizer::id_of(std::string_view token) const {
  if (token == kBlankToken) return kBlankId;
  if (auto it = lookup_.find(std::string(token)); it != lookup_.end()) return it->second;
  return std::nullopt;
}

Tokenizer parse_tokenizer(std::string_view text) {
  using K = NormalizationRule::Kind;
  std::map<long long, std::string> by_id;
  std::vector<NormalizationRule> rules;
  bool has_rules = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.starts_with("#!")) {
      has_rules = true;
      auto body = line.substr(2);
      const auto sp = body.find(' ');
      const auto name = body.substr(0, sp);
      if (name == "lowercase") rules.push_back({K::Lowercase, {}});
      else if (name == "strip_bracketed") rules.push_back({K::StripBracketed, {}});
      else if (name == "collapse_whitespace") rules.push_back({K::CollapseWhitespace, {}});
      else if (name == "strip_punct")
        rules.push_back({K::StripPunctuation, sp == std::string_view::npos ? std::string(kDefaultPunctuation)
                                                                          : std::string(body.substr(sp + 1))});
      else throw Error(ErrorKind::SchemaViolation, "unknown directive '" + std::string(name) + "'", line_no);
      continue;
    }
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) {
      if (line.front() == '#') continue;
      throw Error(ErrorKind::SchemaViolation, "expected token<TAB>id", line_no);
    }
    const std::string id_text(line.substr(tab + 1));
    long long id = -1;
    try {
      std::size_t used = 0;
      id = std::stoll(id_text, &used);
      if (used != id_text.size()) id = -1;
    } catch (const std::exception&) {
      id = -1;
    }
    if (id < 0) throw Error(ErrorKind::SchemaViolation, "bad token id '" + id_text + "'", line_no);
    if (!by_id.emplace(id, std::string(line.substr(0, tab))).second)
      throw Error(ErrorKind::SchemaViolation, "duplicate id " + id_text, line_no);
  }
  if (by_id.empty() || by_id.begin()->first != 0 || by_id.begin()->second != Tokenizer::kBlankToken)
    throw Error(ErrorKind::SchemaViolation, "missing mandatory <blank>\t0 line");
  std::vector<std::string> tokens;
  tokens.reserve(by_id.size());
  for (const auto& [id, tok] : by_id) {
    if (id != static_cast<long long>(tokens.size()))
      throw Error(ErrorKind::SchemaViolation, "token ids are not dense: gap before " + std::to_string(id));
    tokens.push_back(tok);
  }
  try {
    return Tokenizer(std::move(tokens), has_rules ? std::move(rules) : Tokenizer::default_rules());
  } catch (const Error& e) {
    throw Error(ErrorKind::SchemaViolation, e.what());
  }
}

Tokenizer load_tokenizer(const std::filesystem::path& path) {
  const auto data = detail::read_file(path);
  return parse_tokenizer(std::string_view(data.data(), data.size()));
}

std::string format_tokenizer(const Tokenizer& tokenizer) {
  using K = NormalizationRule::Kind;
  std::string out;
  if (tokenizer.rules() != Tokenizer::default_rules()) {
    for (const auto& rule : tokenizer.rules()) {
      switch (rule.kind) {
        case K::Lowercase: out += "#!lowercase\n"; break;
        case K::StripBracketed: out += "#!strip_bracketed\n"; break;
        case K::CollapseWhitespace: out += "#!collapse_whitespace\n"; break;
        case K::StripPunctuation: out += "#!strip_punct " + rule.chars + "\n"; break;
      }
    }
  }
  for (std::size_t id = 0; id < tokenizer.vocab_size(); ++id)
    out += tokenizer.tokens()[id] + "\t" + std::to_string(id) + "\n";
  return out;
}

void write_tokenizer(const std::filesystem::path& path, const Tokenizer& tokenizer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  out << format_tokenizer(tokenizer);
}

// ---------------------------------------------------------------------------

std::filesystem::path resolve_posterior_path(const LongFormRecording& recording,
                                             const std::filesystem::path& manifest_dir) {
  std::filesystem::path p(recording.posterior_path);
  return p.is_absolute() ? p : manifest_dir / p;
}

namespace {

const nlohmann::json& require(const nlohmann::json& obj, const char* key, std::size_t line,
                              bool (nlohmann::json::*check)() const noexcept, const char* what) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorKind::SchemaViolation, std::string("missing field '") + key + "'", line);
  if (!((*it).*check)())
    throw Error(ErrorKind::SchemaViolation, std::string("field '") + key + "' must be " + what, line);
  return *it;
}

}  // namespace

std::vector<LongFormRecording> parse_manifest(std::string_view text, const LanguageTable& languages) {
  using nlohmann::json;
  std::vector<LongFormRecording> out;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::SchemaViolation, std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw Error(ErrorKind::SchemaViolation, "record is not an object", line_no);

    LongFormRecording rec;
    rec.recording_id = require(obj, "recording_id", line_no, &json::is_string, "a string").get<std::string>();
    const auto lang = require(obj, "language", line_no, &json::is_string, "a string").get<std::string>();
    rec.posterior_path = require(obj, "posterior_path", line_no, &json::is_string, "a string").get<std::string>();
    const auto& caps = require(obj, "captions", line_no, &json::is_array, "an array");
    if (rec.recording_id.empty()) throw Error(ErrorKind::SchemaViolation, "empty recording_id", line_no);

    if (!languages.is_known(lang))
      throw Error(ErrorKind::UnknownLanguageCode, "unknown language '" + lang + "'", line_no);
    rec.declared_language = languages.canonicalize(lang);
    if (!seen.insert(rec.recording_id).second)
      throw Error(ErrorKind::DuplicateRecordingId, "duplicate recording_id '" + rec.recording_id + "'", line_no);

    for (const auto& c : caps) {
      if (!c.is_object()) throw Error(ErrorKind::SchemaViolation, "caption is not an object", line_no);
      RawCaption cap;
      cap.text = require(c, "text", line_no, &json::is_string, "a string").get<std::string>();
      cap.start = require(c, "start", line_no, &json::is_number, "a number").get<double>();
      cap.end = require(c, "end", line_no, &json::is_number, "a number").get<double>();
      if (cap.start < 0.0) throw Error(ErrorKind::SchemaViolation, "caption start is negative", line_no);
      rec.captions.push_back(std::move(cap));
    }
    std::stable_sort(rec.captions.begin(), rec.captions.end(),
                     [](const RawCaption& a, const RawCaption& b) { return a.start < b.start; });
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<LongFormRecording> load_manifest(const std::filesystem::path& path, const LanguageTable& languages) {
  const auto data = detail::read_file(path);
  return parse_manifest(std::string_view(data.data(), data.size()), languages);
}

std::string format_manifest(std::span<const LongFormRecording> recordings) {
  std::string out;
  for (const auto& rec : recordings) {
    nlohmann::ordered_json obj;
    obj["recording_id"] = rec.recording_id;
    obj["language"] = rec.declared_language;
    obj["posterior_path"] = rec.posterior_path;
    auto caps = nlohmann::ordered_json::array();
    for (const auto& c : rec.captions) {
      nlohmann::ordered_json cj;
      cj["text"] = c.text;
      cj["start"] = c.start;
      cj["end"] = c.end;
      caps.push_back(std::move(cj));
    }
    obj["captions"] = std::move(caps);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const LongFormRecording> recordings) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  out << format_manifest(recordings);
}

}  // namespace clean
