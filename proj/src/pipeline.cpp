#include "clean/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "binary_io.hpp"
#include "clean/error.hpp"
#include "clean/hash.hpp"

namespace clean {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text, std::size_t line) {
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw Error(ErrorKind::Config, "'" + std::string(key) + "' expects a number, got '" + std::string(text) + "'",
                line);
  return value;
}

bool parse_bool(std::string_view key, std::string_view text, std::size_t line) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error(ErrorKind::Config, "'" + std::string(key) + "' expects true/false", line);
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig parse_config(std::string_view text, const fs::path& base_dir) {
  PipelineConfig cfg;
  std::set<std::string> seen;
  auto path_of = [&](std::string_view v) {
    fs::path p{std::string(v)};
    return p.is_absolute() ? p : base_dir / p;
  };
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::Config, "expected key = value", line_no);
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw Error(ErrorKind::Config, "key '" + key + "' given twice", line_no);

    if (key == "input_manifest") cfg.input_manifest = path_of(value);
    else if (key == "tokenizer") cfg.tokenizer = path_of(value);
    else if (key == "audio_lid") cfg.audio_lid = path_of(value);
    else if (key == "text_lid_model") cfg.text_lid_model = path_of(value);
    else if (key == "output_dir") cfg.output_dir = path_of(value);
    else if (key == "alias_table") cfg.alias_table = value.empty() ? fs::path{} : path_of(value);
    else if (key == "theta_ctc") cfg.theta_ctc = parse_number<double>(key, value, line_no);
    else if (key == "max_duration") cfg.max_duration = parse_number<double>(key, value, line_no);
    else if (key == "confidence_window") cfg.confidence_window = parse_number<int>(key, value, line_no);
    else if (key == "nonspeech_floor") cfg.nonspeech_floor = parse_number<double>(key, value, line_no);
    else if (key == "band_frames") cfg.band_frames = parse_number<std::size_t>(key, value, line_no);
    else if (key == "trellis_budget_mb") cfg.trellis_budget_mb = parse_number<std::uint64_t>(key, value, line_no);
    else if (key == "workers") cfg.workers = parse_number<int>(key, value, line_no);
    else if (key == "skip_bad") cfg.skip_bad = parse_bool(key, value, line_no);
    else if (key == "cache") cfg.cache = parse_bool(key, value, line_no);
    else throw Error(ErrorKind::Config, "unknown key '" + key + "'", line_no);
  }
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::vector<char> data;
  try {
    data = detail::read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  return parse_config(std::string_view(data.data(), data.size()), path.parent_path());
}

void validate_config(const PipelineConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, msg); };
  if (c.input_manifest.empty()) fail("input_manifest is required");
  if (c.tokenizer.empty()) fail("tokenizer is required");
  if (c.audio_lid.empty()) fail("audio_lid is required");
  if (c.text_lid_model.empty()) fail("text_lid_model is required");
  if (c.output_dir.empty()) fail("output_dir is required");
  if (!(c.theta_ctc >= 0.0 && c.theta_ctc <= 1.0)) fail("theta_ctc must lie in [0, 1]");
  if (!(c.max_duration > 0.0) || !std::isfinite(c.max_duration)) fail("max_duration must be positive");
  if (c.confidence_window < 1) fail("confidence_window must be >= 1");
  if (!std::isfinite(c.nonspeech_floor) || c.nonspeech_floor > 0.0) fail("nonspeech_floor must be a finite value <= 0");
  if (c.band_frames < 1) fail("band_frames must be >= 1");
  if (c.trellis_budget_mb < 1) fail("trellis_budget_mb must be >= 1");
  if (c.workers < 1 || c.workers > 1024) fail("workers must lie in [1, 1024]");
}

std::vector<std::pair<std::string, std::string>> config_echo(const PipelineConfig& c) {
  return {
      {"input_manifest", c.input_manifest.string()},
      {"tokenizer", c.tokenizer.string()},
      {"audio_lid", c.audio_lid.string()},
      {"text_lid_model", c.text_lid_model.string()},
      {"alias_table", c.alias_table.string()},
      {"theta_ctc", format_double(c.theta_ctc)},
      {"max_duration", format_double(c.max_duration)},
      {"confidence_window", std::to_string(c.confidence_window)},
      {"nonspeech_floor", format_double(c.nonspeech_floor)},
      {"band_frames", std::to_string(c.band_frames)},
      {"trellis_budget_mb", std::to_string(c.trellis_budget_mb)},
      {"skip_bad", c.skip_bad ? "true" : "false"},
  };
}

std::string format_config(const PipelineConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_echo(c)) {
    if (k == "alias_table" && v.empty()) continue;
    out += k + " = " + v + "\n";
  }
  out += "output_dir = " + c.output_dir.string() + "\n";
  out += "workers = " + std::to_string(c.workers) + "\n";
  out += std::string("cache = ") + (c.cache ? "true" : "false") + "\n";
  return out;
}

std::string config_hash(const PipelineConfig& config) {
  Fnv1a h;
  h.update(kPipelineVersion).update("\n");
  for (const auto& [k, v] : config_echo(config)) h.update(k).update("=").update(v).update("\n");
  return h.hex();
}

// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (threads <= 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(body);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// JSON codecs for manifests and the stage cache

namespace {

ojson utterance_json(const AlignedUtterance& u, bool full) {
  ojson j;
  j["utterance_id"] = u.utterance_id;
  j["recording_id"] = u.recording_id;
  j["language"] = u.language;
  j["start_frame"] = u.start_frame;
  j["end_frame"] = u.end_frame;
  j["duration_s"] = u.duration;
  j["text"] = u.text;
  j["confidence"] = u.confidence.value;
  if (full) {
    j["window_frames"] = u.confidence.window_frames;
    j["caption_indices"] = u.caption_indices;
  }
  return j;
}

AlignedUtterance utterance_from(const nlohmann::json& j) {
  AlignedUtterance u;
  u.utterance_id = j.at("utterance_id").get<std::string>();
  u.recording_id = j.at("recording_id").get<std::string>();
  u.language = j.at("language").get<std::string>();
  u.start_frame = j.at("start_frame").get<std::size_t>();
  u.end_frame = j.at("end_frame").get<std::size_t>();
  u.duration = j.at("duration_s").get<double>();
  u.text = j.at("text").get<std::string>();
  u.confidence.value = j.at("confidence").get<double>();
  u.confidence.window_frames = j.value("window_frames", 0);
  if (j.contains("caption_indices")) u.caption_indices = j.at("caption_indices").get<std::vector<std::size_t>>();
  return u;
}

ojson prediction_json(const LanguagePrediction& p) {
  ojson j;
  j["code"] = p.code;
  j["prob"] = p.prob;
  return j;
}

LanguagePrediction prediction_from(const nlohmann::json& j) {
  return {j.at("code").get<std::string>(), j.at("prob").get<double>()};
}

std::string encode_corpus(const AlignedCorpus& corpus) {
  ojson root;
  root["cache_key"] = corpus.cache_key;
  auto recs = ojson::array();
  for (const auto& r : corpus.recordings) {
    ojson j;
    j["recording_id"] = r.recording_id;
    j["language"] = r.language;
    j["rejection_reason"] = r.rejection_reason;
    j["num_captions"] = r.num_captions;
    j["nonspeech_dropped"] = r.nonspeech_dropped;
    j["oversize_rejected"] = r.oversize_rejected;
    j["band_bound"] = r.band_bound;
    j["drift_sum_s"] = r.drift_sum_s;
    j["drift_count"] = r.drift_count;
    auto utts = ojson::array();
    for (const auto& u : r.utterances) utts.push_back(utterance_json(u, true));
    j["utterances"] = std::move(utts);
    recs.push_back(std::move(j));
  }
  root["recordings"] = std::move(recs);
  auto verdicts = ojson::array();
  for (const auto& v : corpus.verdicts) {
    ojson j;
    j["utterance_id"] = v.utterance_id;
    j["declared"] = v.declared;
    j["text_pred"] = prediction_json(v.text_pred);
    j["audio_pred"] = prediction_json(v.audio_pred);
    j["keep"] = v.keep;
    verdicts.push_back(std::move(j));
  }
  root["verdicts"] = std::move(verdicts);
  return root.dump();
}

AlignedCorpus decode_corpus(std::string_view text) {
  const auto root = nlohmann::json::parse(text);
  AlignedCorpus corpus;
  corpus.cache_key = root.at("cache_key").get<std::string>();
  for (const auto& j : root.at("recordings")) {
    RecordingOutcome r;
    r.recording_id = j.at("recording_id").get<std::string>();
    r.language = j.at("language").get<std::string>();
    r.rejection_reason = j.at("rejection_reason").get<std::string>();
    r.num_captions = j.at("num_captions").get<std::size_t>();
    r.nonspeech_dropped = j.at("nonspeech_dropped").get<std::size_t>();
    r.oversize_rejected = j.at("oversize_rejected").get<std::size_t>();
    r.band_bound = j.at("band_bound").get<bool>();
    r.drift_sum_s = j.at("drift_sum_s").get<double>();
    r.drift_count = j.at("drift_count").get<std::size_t>();
    for (const auto& u : j.at("utterances")) r.utterances.push_back(utterance_from(u));
    corpus.recordings.push_back(std::move(r));
  }
  for (const auto& j : root.at("verdicts")) {
    LidVerdict v;
    v.utterance_id = j.at("utterance_id").get<std::string>();
    v.declared = j.at("declared").get<std::string>();
    v.text_pred = prediction_from(j.at("text_pred"));
    v.audio_pred = prediction_from(j.at("audio_pred"));
    v.keep = j.at("keep").get<bool>();
    corpus.verdicts.push_back(std::move(v));
  }
  std::size_t vi = 0;
  for (const auto& r : corpus.recordings)
    for (const auto& u : r.utterances) {
      if (vi >= corpus.verdicts.size() || corpus.verdicts[vi].utterance_id != u.utterance_id)
        throw Error(ErrorKind::SchemaViolation, "cache verdicts do not match utterances");
      if (corpus.verdicts[vi++].keep) corpus.lid_kept.push_back(u);
    }
  return corpus;
}

std::string verdicts_jsonl(std::span<const LidVerdict> verdicts) {
  std::string out;
  for (const auto& v : verdicts) {
    ojson j;
    j["utterance_id"] = v.utterance_id;
    j["declared"] = v.declared;
    j["text_language"] = v.text_pred.code;
    j["text_prob"] = v.text_pred.prob;
    j["audio_language"] = v.audio_pred.code;
    j["audio_prob"] = v.audio_pred.prob;
    j["keep"] = v.keep;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace

std::string format_utterance_manifest(std::span<const AlignedUtterance> utterances) {
  std::string out;
  for (const auto& u : utterances) {
    out += utterance_json(u, false).dump();
    out += '\n';
  }
  return out;
}

std::vector<AlignedUtterance> parse_utterance_manifest(std::string_view text) {
  std::vector<AlignedUtterance> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(utterance_from(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, e.what(), line_no);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

struct Inputs {
  fs::path manifest_dir;
  std::vector<LongFormRecording> recordings;  // sorted by recording_id
  Tokenizer tokenizer{{std::string(Tokenizer::kBlankToken), "a"}};
  TextLidModel text_lid;
  AudioLidMap audio_lid;
  LanguageTable languages;
};

Inputs load_inputs(const PipelineConfig& config) {
  Inputs in;
  in.languages = config.alias_table.empty() ? LanguageTable::builtin() : LanguageTable::load(config.alias_table);
  in.manifest_dir = config.input_manifest.parent_path();
  in.recordings = load_manifest(config.input_manifest, in.languages);
  std::sort(in.recordings.begin(), in.recordings.end(),
            [](const auto& a, const auto& b) { return a.recording_id < b.recording_id; });
  in.tokenizer = load_tokenizer(config.tokenizer);
  in.text_lid = load_text_lid(config.text_lid_model);
  in.audio_lid = load_audio_lid(config.audio_lid);
  return in;
}

bool is_posterior_error(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io:
    case ErrorKind::MalformedHeader:
    case ErrorKind::TruncatedPayload:
    case ErrorKind::DimensionOverflow:
    case ErrorKind::UnnormalizedRow:
    case ErrorKind::SchemaViolation: return true;
    default: return false;
  }
}

[[noreturn]] void rethrow_for(const LongFormRecording& rec, const Error& e) {
  throw Error(e.kind(), "recording '" + rec.recording_id + "': " + e.what(), 0, {rec.recording_id});
}

RecordingOutcome process_recording(const LongFormRecording& rec, const Inputs& in, const PipelineConfig& config) {
  RecordingOutcome out;
  out.recording_id = rec.recording_id;
  out.language = rec.declared_language;
  out.num_captions = rec.captions.size();

  FrameLogPosteriors posteriors;
  try {
    posteriors = load_posteriors(resolve_posterior_path(rec, in.manifest_dir));
    if (posteriors.vocab_size() != in.tokenizer.vocab_size())
      throw Error(ErrorKind::SchemaViolation, "posterior vocabulary " + std::to_string(posteriors.vocab_size()) +
                                                  " does not match tokenizer " +
                                                  std::to_string(in.tokenizer.vocab_size()));
  } catch (const Error& e) {
    if (!config.skip_bad || !is_posterior_error(e.kind())) rethrow_for(rec, e);
    out.rejection_reason = std::string(to_string(e.kind()));
    return out;
  }

  AlignConfig align;
  align.confidence_window = config.confidence_window;
  align.band_frames = config.band_frames;
  align.trellis_budget_bytes = config.trellis_budget_mb << 20;
  RecordingAlignment alignment;
  try {
    alignment = align_captions(rec, posteriors, in.tokenizer, align);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InfeasibleLength && e.kind() != ErrorKind::NoFeasiblePath) rethrow_for(rec, e);
    out.rejection_reason = std::string(to_string(e.kind()));
    return out;
  }
  out.band_bound = alignment.band_bound;

  const auto captions = to_aligned_captions(rec, alignment);
  for (const auto& cap : alignment.captions) {
    if (cap.nonspeech) continue;
    out.drift_sum_s += cap.start_drift_s;
    ++out.drift_count;
  }
  const auto speech = drop_nonspeech(captions, config.nonspeech_floor);
  out.nonspeech_dropped = speech.dropped_count();
  auto packed = pack_utterances(rec.recording_id, rec.declared_language, speech.kept, posteriors.frame_shift(),
                                config.max_duration);
  out.oversize_rejected = packed.oversize.size();
  out.utterances = std::move(packed.utterances);
  if (out.utterances.empty()) out.rejection_reason = out.oversize_rejected > 0 ? "OversizeCaption" : "NoSpeech";
  return out;
}

std::string stage_cache_key(const PipelineConfig& config, const Inputs& in) {
  Fnv1a h;
  h.update(kPipelineVersion).update("\n");
  for (const auto& [k, v] : config_echo(config)) {
    if (k == "theta_ctc") continue;
    h.update(k).update("=").update(v).update("\n");
  }
  auto add_file = [&](const fs::path& p) {
    h.update(p.string()).update("\n");
    try {
      const auto data = detail::read_file(p);
      h.update(std::string_view(data.data(), data.size()));
    } catch (const Error&) {
      h.update("<unreadable>");
    }
  };
  add_file(config.input_manifest);
  add_file(config.tokenizer);
  add_file(config.text_lid_model);
  add_file(config.audio_lid);
  if (!config.alias_table.empty()) add_file(config.alias_table);
  for (const auto& rec : in.recordings) add_file(resolve_posterior_path(rec, in.manifest_dir));
  return h.hex();
}

AlignedCorpus compute_corpus(const PipelineConfig& config, const Inputs& in, std::string cache_key) {
  AlignedCorpus corpus;
  corpus.cache_key = std::move(cache_key);
  auto t0 = std::chrono::steady_clock::now();
  corpus.recordings.resize(in.recordings.size());
  parallel_for(in.recordings.size(), config.workers,
               [&](std::size_t i) { corpus.recordings[i] = process_recording(in.recordings[i], in, config); });
  corpus.stage_seconds[0] = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  std::vector<AlignedUtterance> all;
  for (const auto& r : corpus.recordings) all.insert(all.end(), r.utterances.begin(), r.utterances.end());
  auto lid = lid_agreement_filter(all, in.text_lid, in.audio_lid, in.languages);
  corpus.verdicts = std::move(lid.verdicts);
  corpus.lid_kept = std::move(lid.kept);
  corpus.stage_seconds[1] = seconds_since(t0);
  return corpus;
}

fs::path cache_path(const PipelineConfig& config, const std::string& key) {
  return config.output_dir / "cache" / ("stages12-" + key + ".json");
}

RunResult partial_result(const PipelineConfig& config, const std::string& message) {
  RunResult res;
  res.report.config = config_echo(config);
  res.report.config_hash = config_hash(config);
  res.report.theta_ctc = config.theta_ctc;
  res.report.error = message;
  return res;
}

std::string theta_tag(double theta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", theta);
  return buf;
}

std::string timings_json(const RunResult& r) {
  ojson j;
  j["resegmentation_s"] = r.stage_seconds[0];
  j["lid_filter_s"] = r.stage_seconds[1];
  j["ctc_filter_s"] = r.stage_seconds[2];
  j["stages_1_2_from_cache"] = r.from_cache;
  return j.dump(2) + "\n";
}

}  // namespace

AlignedCorpus prepare_corpus(const PipelineConfig& config, bool* from_cache) {
  const Inputs in = load_inputs(config);
  const std::string key = stage_cache_key(config, in);
  if (from_cache) *from_cache = false;
  if (config.cache) {
    const auto path = cache_path(config, key);
    if (fs::exists(path)) {
      try {
        const auto data = detail::read_file(path);
        auto corpus = decode_corpus(std::string_view(data.data(), data.size()));
        if (corpus.cache_key == key) {
          if (from_cache) *from_cache = true;
          return corpus;
        }
      } catch (const std::exception&) {
        // unreadable cache entries are recomputed
      }
    }
  }
  auto corpus = compute_corpus(config, in, key);
  if (config.cache) {
    fs::create_directories(cache_path(config, key).parent_path());
    write_text(cache_path(config, key), encode_corpus(corpus));
  }
  return corpus;
}

RunResult finish_run(const PipelineConfig& config, const AlignedCorpus& corpus, double theta) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  auto& rep = res.report;
  rep.config = config_echo(config);
  rep.theta_ctc = theta;
  for (auto& [k, v] : rep.config)
    if (k == "theta_ctc") v = format_double(theta);
  PipelineConfig effective = config;
  effective.theta_ctc = theta;
  rep.config_hash = config_hash(effective);

  std::map<std::string, std::pair<double, std::size_t>> drift;
  std::map<std::string, std::size_t> kept_per_recording;
  for (const auto& r : corpus.recordings) {
    for (const auto& u : r.utterances) rep.stage(Stage::Resegmentation).add(u.language, u.duration);
    for (Stage s : kStages) rep.stage(s).per_language.try_emplace(r.language);
    if (r.drift_count > 0) {
      auto& d = drift[r.language];
      d.first += r.drift_sum_s;
      d.second += r.drift_count;
    }
    if (r.band_bound) rep.band_bound_recordings.push_back(r.recording_id);
  }
  for (const auto& [lang, d] : drift) rep.mean_start_drift_s[lang] = d.first / static_cast<double>(d.second);
  for (const auto& u : corpus.lid_kept) {
    rep.stage(Stage::LidFilter).add(u.language, u.duration);
    ++kept_per_recording[u.recording_id];
  }

  rep.thresholds = compute_thresholds(corpus.lid_kept, FilterConfig{theta});
  auto filtered = filter_longforms(corpus.lid_kept, rep.thresholds);
  for (const auto& u : filtered.kept) rep.stage(Stage::CtcFilter).add(u.language, u.duration);
  for (Stage s : kStages) rep.stage(s).finalize();

  const std::set<std::string> discarded(filtered.discarded_recordings.begin(), filtered.discarded_recordings.end());
  for (const auto& r : corpus.recordings) {
    if (!r.rejection_reason.empty())
      rep.rejections.push_back({r.recording_id, r.rejection_reason, std::string(stage_name(Stage::Resegmentation))});
    else if (!kept_per_recording.contains(r.recording_id))
      rep.rejections.push_back({r.recording_id, "LidMismatch", std::string(stage_name(Stage::LidFilter))});
    else if (discarded.contains(r.recording_id))
      rep.rejections.push_back({r.recording_id, "LowConfidence", std::string(stage_name(Stage::CtcFilter))});
  }
  res.utterances = std::move(filtered.kept);
  res.stage_seconds[0] = corpus.stage_seconds[0];
  res.stage_seconds[1] = corpus.stage_seconds[1];
  res.stage_seconds[2] = seconds_since(t0);
  return res;
}

RunResult run_pipeline(const PipelineConfig& config) {
  validate_config(config);
  fs::create_directories(config.output_dir);
  const auto report_path = config.output_dir / "report.jsonl";
  AlignedCorpus corpus;
  bool from_cache = false;
  try {
    corpus = prepare_corpus(config, &from_cache);
  } catch (const Error& e) {
    write_text(report_path, format_machine_report(partial_result(config, e.what()).report));
    throw;
  }
  RunResult res = finish_run(config, corpus, config.theta_ctc);
  res.from_cache = from_cache;
  res.manifest_path = config.output_dir / "manifest.jsonl";
  res.report_path = report_path;
  write_text(res.manifest_path, format_utterance_manifest(res.utterances));
  write_text(res.report_path, format_machine_report(res.report));
  write_text(config.output_dir / "report.txt", format_text_table(std::span(&res.report, 1)));
  write_text(config.output_dir / "lid_verdicts.jsonl", verdicts_jsonl(corpus.verdicts));
  write_text(config.output_dir / "timings.json", timings_json(res));
  return res;
}

std::vector<RunResult> sweep_thresholds(const PipelineConfig& config, std::vector<double> thetas,
                                        const std::function<void(const std::string&)>& warn) {
  validate_config(config);
  if (thetas.empty()) throw Error(ErrorKind::Config, "sweep needs at least one theta");
  for (double t : thetas)
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::Config, "theta " + format_double(t) + " outside [0, 1]");
  std::sort(thetas.begin(), thetas.end());
  const auto last = std::unique(thetas.begin(), thetas.end());
  if (last != thetas.end() && warn)
    warn("ignoring " + std::to_string(thetas.end() - last) + " duplicate theta value(s)");
  thetas.erase(last, thetas.end());

  fs::create_directories(config.output_dir);
  AlignedCorpus corpus;
  bool from_cache = false;
  try {
    corpus = prepare_corpus(config, &from_cache);
  } catch (const Error& e) {
    write_text(config.output_dir / "report.jsonl", format_machine_report(partial_result(config, e.what()).report));
    throw;
  }
  std::vector<RunResult> results;
  std::vector<CleaningReport> reports;
  for (double theta : thetas) {
    RunResult res = finish_run(config, corpus, theta);
    res.from_cache = from_cache;
    const auto tag = theta_tag(theta);
    res.manifest_path = config.output_dir / ("manifest_theta_" + tag + ".jsonl");
    res.report_path = config.output_dir / ("report_theta_" + tag + ".jsonl");
    write_text(res.manifest_path, format_utterance_manifest(res.utterances));
    write_text(res.report_path, format_machine_report(res.report));
    reports.push_back(res.report);
    results.push_back(std::move(res));
  }
  write_text(config.output_dir / "sweep.txt", format_text_table(reports));
  write_text(config.output_dir / "lid_verdicts.jsonl", verdicts_jsonl(corpus.verdicts));
  return results;
}

}  // namespace clean
