#include "clean/lid.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "clean/error.hpp"
#include "clean/hash.hpp"

namespace clean {

namespace {

bool is_ascii_punct_or_digit(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && (std::ispunct(u) || std::isdigit(u));
}

std::vector<double> class_scores(const TextLidModel& model,
                                 std::span<const std::pair<std::uint32_t, double>> features) {
  std::vector<double> scores(model.num_labels());
  for (std::size_t l = 0; l < model.num_labels(); ++l) {
    double z = model.bias[l];
    for (const auto& [bucket, value] : features) z += static_cast<double>(model.weight(l, bucket)) * value;
    scores[l] = z;
  }
  return scores;
}

void softmax_inplace(std::vector<double>& z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace

std::string normalize_lid_text(std::string_view text) {
  std::string out;
  bool pending = false;
  for (char c : text) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || is_ascii_punct_or_digit(c);
    if (space) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::vector<std::pair<std::uint32_t, double>> ngram_features(std::string_view text, std::span<const int> orders,
                                                             std::uint32_t buckets) {
  const std::string norm = normalize_lid_text(text);
  std::vector<std::pair<std::uint32_t, double>> out;
  if (norm.empty()) return out;
  const std::string padded = " " + norm + " ";
  std::vector<std::size_t> starts;  // code point boundaries
  for (std::size_t i = 0; i < padded.size();) {
    starts.push_back(i);
    i += std::min(utf8_length(static_cast<unsigned char>(padded[i])), padded.size() - i);
  }
  starts.push_back(padded.size());
  const std::size_t cps = starts.size() - 1;

  std::map<std::uint32_t, double> counts;
  for (int n : orders) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "n-gram order must be >= 1");
    const char tag = static_cast<char>(n);
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cps; ++i) {
      const auto gram = std::string_view(padded).substr(starts[i], starts[i + static_cast<std::size_t>(n)] - starts[i]);
      const auto h = Fnv1a{}.update(std::string_view(&tag, 1)).update(gram).digest();
      counts[static_cast<std::uint32_t>(h & (buckets - 1))] += 1.0;
    }
  }
  // Unit L2 norm: one SGD step moves the document's own score by lr * g.
  double norm2 = 0.0;
  for (const auto& [bucket, c] : counts) norm2 += c * c;
  const double inv = 1.0 / std::sqrt(norm2);
  out.reserve(counts.size());
  for (const auto& [bucket, c] : counts) out.emplace_back(bucket, c * inv);
  return out;
}

TextLidModel train_text_lid(std::span<const LabeledText> corpus, const TextLidConfig& config) {
  if (config.buckets == 0 || !std::has_single_bit(config.buckets))
    throw Error(ErrorKind::InvalidArgument, "bucket count must be a power of two");
  if (config.epochs < 1 || !(config.learning_rate > 0.0))
    throw Error(ErrorKind::InvalidArgument, "epochs and learning rate must be positive");
  std::set<std::string> label_set;
  for (const auto& doc : corpus) label_set.insert(doc.label);
  if (label_set.size() < 2)
    throw Error(ErrorKind::SingleClassCorpus, "need at least two distinct labels, got " +
                                                  std::to_string(label_set.size()));

  TextLidModel model;
  model.ngram_orders = config.orders;
  model.buckets = config.buckets;
  model.labels.assign(label_set.begin(), label_set.end());
  const std::size_t L = model.labels.size();
  model.bias.assign(L, 0.0f);
  model.weights.assign(L * config.buckets, 0.0f);

  std::vector<std::vector<std::pair<std::uint32_t, double>>> features;
  std::vector<std::size_t> targets;
  features.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto f = ngram_features(corpus[i].text, config.orders, config.buckets);
    if (f.empty())
      throw Error(ErrorKind::EmptyDocument, "document " + std::to_string(i) + " is empty after normalization");
    features.push_back(std::move(f));
    targets.push_back(static_cast<std::size_t>(
        std::lower_bound(model.labels.begin(), model.labels.end(), corpus[i].label) - model.labels.begin()));
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  const double steps = static_cast<double>(config.epochs) * static_cast<double>(corpus.size());
  double step = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t idx : order) {
      const double lr = config.learning_rate * (1.0 - step / steps);
      step += 1.0;
      auto p = class_scores(model, features[idx]);
      softmax_inplace(p);
      for (std::size_t l = 0; l < L; ++l) {
        const double g = p[l] - (l == targets[idx] ? 1.0 : 0.0);
        model.bias[l] = static_cast<float>(model.bias[l] - lr * g);
        float* row = model.weights.data() + l * config.buckets;
        for (const auto& [bucket, value] : features[idx])
          row[bucket] = static_cast<float>(row[bucket] - lr * g * value);
      }
    }
  }
  return model;
}

LanguagePrediction predict_text_lid(const TextLidModel& model, std::string_view text) {
  const auto features = ngram_features(text, model.ngram_orders, model.buckets);
  if (features.empty() || model.num_labels() == 0) return {std::string(kUndeterminedLanguage), 0.0};
  auto p = class_scores(model, features);
  std::size_t best = 0;
  for (std::size_t l = 1; l < p.size(); ++l)
    if (p[l] > p[best] || (p[l] == p[best] && model.labels[l] < model.labels[best])) best = l;
  softmax_inplace(p);
  return {model.labels[best], p[best]};
}

// ---------------------------------------------------------------------------

std::vector<char> encode_text_lid(const TextLidModel& model) {
  if (model.ngram_orders != std::vector<int>{1, 2, 3})
    throw Error(ErrorKind::InvalidArgument, "the TLID v1 format stores only models with n-gram orders {1,2,3}");
  const std::size_t L = model.num_labels();
  if (model.bias.size() != L || model.weights.size() != L * model.buckets)
    throw Error(ErrorKind::InvalidArgument, "model arrays do not match L x D");
  detail::ByteWriter w;
  w.bytes(kTextLidMagic);
  w.u32(kTextLidVersion);
  w.u32(static_cast<std::uint32_t>(L));
  w.u32(model.buckets);
  for (const auto& label : model.labels) {
    w.u32(static_cast<std::uint32_t>(label.size()));
    w.bytes(label);
  }
  w.f32s(model.bias);
  w.f32s(model.weights);
  return w.data();
}

TextLidModel decode_text_lid(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  std::string magic;
  std::uint32_t version = 0, L = 0, D = 0;
  if (!r.bytes(4, magic) || magic != kTextLidMagic) throw Error(ErrorKind::MalformedHeader, "bad TLID magic");
  if (!r.u32(version) || version != kTextLidVersion)
    throw Error(ErrorKind::MalformedHeader, "unsupported TLID version " + std::to_string(version));
  if (!r.u32(L) || !r.u32(D)) throw Error(ErrorKind::MalformedHeader, "truncated TLID header");
  if (L == 0 || D == 0 || !std::has_single_bit(D))
    throw Error(ErrorKind::MalformedHeader, "label count must be > 0 and D a power of two");
  TextLidModel model;
  model.buckets = D;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < L; ++i) {
    std::uint32_t len = 0;
    std::string label;
    if (!r.u32(len) || !r.bytes(len, label)) throw Error(ErrorKind::TruncatedPayload, "truncated label table");
    if (!seen.insert(label).second) throw Error(ErrorKind::MalformedHeader, "duplicate label '" + label + "'");
    model.labels.push_back(std::move(label));
  }
  if (r.remaining() != (static_cast<std::size_t>(L) + static_cast<std::size_t>(L) * D) * sizeof(float))
    throw Error(ErrorKind::TruncatedPayload, "TLID payload size mismatch");
  model.bias.resize(L);
  model.weights.resize(static_cast<std::size_t>(L) * D);
  r.f32s(model.bias);
  r.f32s(model.weights);
  for (float v : model.weights)
    if (!std::isfinite(v)) throw Error(ErrorKind::MalformedHeader, "non-finite weight");
  return model;
}

void save_text_lid(const std::filesystem::path& path, const TextLidModel& model) {
  const auto bytes = encode_text_lid(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TextLidModel load_text_lid(const std::filesystem::path& path) { return decode_text_lid(detail::read_file(path)); }

std::vector<LabeledText> load_lid_corpus(const std::filesystem::path& path, const LanguageTable& languages) {
  const auto data = detail::read_file(path);
  std::string_view text(data.data(), data.size());
  std::vector<LabeledText> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0)
      throw Error(ErrorKind::SchemaViolation, "expected label<TAB>text", line_no);
    out.push_back({std::string(line.substr(tab + 1)), languages.canonicalize(line.substr(0, tab))});
  }
  return out;
}

// ---------------------------------------------------------------------------

AudioLidMap parse_audio_lid(std::string_view text) {
  using nlohmann::json;
  AudioLidMap out;
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
    auto field = [&](const char* key) -> const json& {
      if (!obj.is_object() || !obj.contains(key))
        throw Error(ErrorKind::SchemaViolation, std::string("missing field '") + key + "'", line_no);
      return obj.at(key);
    };
    const auto& id = field("utterance_id");
    const auto& lang = field("language");
    const auto& prob = field("prob");
    if (!id.is_string() || !lang.is_string() || !prob.is_number())
      throw Error(ErrorKind::SchemaViolation, "utterance_id/language must be strings and prob a number", line_no);
    const double p = prob.get<double>();
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::SchemaViolation, "prob outside [0,1]", line_no);
    auto [it, inserted] = out.emplace(id.get<std::string>(), LanguagePrediction{lang.get<std::string>(), p});
    if (!inserted)
      throw Error(ErrorKind::DuplicateUtteranceId, "duplicate utterance_id '" + it->first + "'", line_no);
  }
  return out;
}

AudioLidMap load_audio_lid(const std::filesystem::path& path) {
  const auto data = detail::read_file(path);
  return parse_audio_lid(std::string_view(data.data(), data.size()));
}

std::string format_audio_lid(const AudioLidMap& predictions) {
  std::string out;
  for (const auto& [id, pred] : predictions) {
    nlohmann::ordered_json obj;
    obj["utterance_id"] = id;
    obj["language"] = pred.code;
    obj["prob"] = pred.prob;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

LidFilterResult lid_agreement_filter(std::span<const AlignedUtterance> utterances, const TextLidModel& text_model,
                                     const AudioLidMap& audio_predictions, const LanguageTable& languages) {
  std::vector<std::string> missing;
  for (const auto& utt : utterances)
    if (!audio_predictions.contains(utt.utterance_id)) missing.push_back(utt.utterance_id);
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " utterance(s) lack an audio prediction:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
    if (missing.size() > 10) msg += " ...";
    throw Error(ErrorKind::MissingAudioPrediction, msg, 0, std::move(missing));
  }

  LidFilterResult out;
  out.verdicts.reserve(utterances.size());
  for (const auto& utt : utterances) {
    LidVerdict v;
    v.utterance_id = utt.utterance_id;
    v.declared = languages.canonicalize(utt.language);
    v.text_pred = predict_text_lid(text_model, utt.text);
    v.text_pred.code = languages.canonicalize(v.text_pred.code);
    v.audio_pred = audio_predictions.find(utt.utterance_id)->second;
    v.audio_pred.code = languages.canonicalize(v.audio_pred.code);
    v.keep = v.declared == v.text_pred.code && v.declared == v.audio_pred.code;
    if (v.keep) out.kept.push_back(utt);
    out.verdicts.push_back(std::move(v));
  }
  return out;
}

}  // namespace clean
