#include "clean/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "clean/error.hpp"

namespace clean {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kCodes[] = {"eng", "fra", "deu", "spa", "ita", "por", "nld", "swe", "pol", "fin"};

// Latin, Greek (no final sigma), Cyrillic and Armenian lowercase letters.
std::vector<std::string> letter_pool() {
  std::vector<std::string> pool;
  auto add_range = [&](char32_t lo, char32_t hi, char32_t skip) {
    for (char32_t c = lo; c <= hi; ++c) {
      if (c == skip) continue;
      std::string s;
      if (c < 0x80) {
        s.push_back(static_cast<char>(c));
      } else {
        s.push_back(static_cast<char>(0xC0 | (c >> 6)));
        s.push_back(static_cast<char>(0x80 | (c & 0x3F)));
      }
      pool.push_back(std::move(s));
    }
  };
  add_range(U'a', U'z', 0);
  add_range(U'α', U'ω', U'ς');
  add_range(U'а', U'я', 0);
  add_range(U'ա', U'ֆ', 0);
  return pool;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_num(std::string_view key, std::string_view v, std::size_t line) {
  T out{};
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw Error(ErrorKind::Config, "'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'",
                line);
  return out;
}

IntRange parse_range(std::string_view key, std::string_view v, std::size_t line) {
  const auto dash = v.find('-', 1);
  if (dash == std::string_view::npos) {
    const int x = parse_num<int>(key, v, line);
    return {x, x};
  }
  return {parse_num<int>(key, trim(v.substr(0, dash)), line), parse_num<int>(key, trim(v.substr(dash + 1)), line)};
}

std::string format_range(IntRange r) { return std::to_string(r.lo) + "-" + std::to_string(r.hi); }

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

int draw(std::mt19937_64& rng, IntRange r) { return std::uniform_int_distribution<int>(r.lo, r.hi)(rng); }

std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

void fisher_yates(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_index(rng, i)]);
}

std::set<std::size_t> choose(std::size_t n, double fraction, std::mt19937_64& rng) {
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  fisher_yates(idx, rng);
  return {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(k, n))};
}

std::vector<std::size_t> derangement(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  while (true) {
    fisher_yates(p, rng);
    bool fixed = false;
    for (std::size_t i = 0; i < n; ++i) fixed = fixed || p[i] == i;
    if (!fixed) return p;
  }
}

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace

std::span<const std::string_view> synth_language_codes() { return kCodes; }

// ---------------------------------------------------------------------------
// Spec

SyntheticSpec parse_synth_spec(std::string_view text) {
  SyntheticSpec spec;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::Config, "expected key = value", line_no);
    const std::string key(trim(line.substr(0, eq)));
    const auto v = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw Error(ErrorKind::Config, "key '" + key + "' given twice", line_no);
    if (key == "seed") spec.seed = parse_num<std::uint64_t>(key, v, line_no);
    else if (key == "num_recordings") spec.num_recordings = parse_num<int>(key, v, line_no);
    else if (key == "captions_per_recording") spec.captions_per_recording = parse_range(key, v, line_no);
    else if (key == "vocab_size") spec.vocab_size = parse_num<int>(key, v, line_no);
    else if (key == "frames_per_token") spec.frames_per_token = parse_range(key, v, line_no);
    else if (key == "noise_temperature") spec.noise_temperature = parse_num<double>(key, v, line_no);
    else if (key == "logit_noise") spec.logit_noise = parse_num<double>(key, v, line_no);
    else if (key == "timestamp_shift_s") spec.corruption.timestamp_shift_s = parse_num<double>(key, v, line_no);
    else if (key == "misaligned_fraction") spec.corruption.misaligned_fraction = parse_num<double>(key, v, line_no);
    else if (key == "wrong_label_fraction") spec.corruption.wrong_label_fraction = parse_num<double>(key, v, line_no);
    else if (key == "num_languages") spec.num_languages = parse_num<int>(key, v, line_no);
    else if (key == "words_per_caption") spec.words_per_caption = parse_range(key, v, line_no);
    else if (key == "letters_per_word") spec.letters_per_word = parse_range(key, v, line_no);
    else if (key == "silence_frames") spec.silence_frames = parse_range(key, v, line_no);
    else if (key == "frame_shift") spec.frame_shift = parse_num<double>(key, v, line_no);
    else throw Error(ErrorKind::Config, "unknown key '" + key + "'", line_no);
  }
  validate_synth_spec(spec);
  return spec;
}

SyntheticSpec load_synth_spec(const fs::path& path) {
  std::vector<char> data;
  try {
    data = detail::read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  return parse_synth_spec(std::string_view(data.data(), data.size()));
}

void validate_synth_spec(const SyntheticSpec& s) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  auto check_range = [&](IntRange r, int min, const char* name) {
    if (r.lo < min || r.hi < r.lo) fail(std::string(name) + " must be a range lo-hi with lo >= " + std::to_string(min));
  };
  if (s.num_recordings < 0) fail("num_recordings must be >= 0");
  check_range(s.captions_per_recording, 1, "captions_per_recording");
  check_range(s.frames_per_token, 1, "frames_per_token");
  check_range(s.words_per_caption, 1, "words_per_caption");
  check_range(s.letters_per_word, 1, "letters_per_word");
  check_range(s.silence_frames, 0, "silence_frames");
  if (s.num_languages < 2 || s.num_languages > static_cast<int>(std::size(kCodes)))
    fail("num_languages must lie in [2, " + std::to_string(std::size(kCodes)) + "]");
  if (s.vocab_size < 2) fail("vocab_size must be >= 2");
  if (static_cast<std::size_t>(s.vocab_size) * static_cast<std::size_t>(s.num_languages) > letter_pool().size())
    fail("vocab_size x num_languages exceeds the " + std::to_string(letter_pool().size()) + "-letter pool");
  if (!(s.noise_temperature >= 0.0) || !std::isfinite(s.noise_temperature)) fail("noise_temperature must be >= 0");
  if (!(s.logit_noise >= 0.0) || !std::isfinite(s.logit_noise)) fail("logit_noise must be >= 0");
  if (!std::isfinite(s.corruption.timestamp_shift_s)) fail("timestamp_shift_s must be finite");
  for (double f : {s.corruption.misaligned_fraction, s.corruption.wrong_label_fraction})
    if (!(f >= 0.0 && f <= 1.0)) fail("corruption fractions must lie in [0, 1]");
  if (s.corruption.misaligned_fraction > 0.0 && s.captions_per_recording.lo < 2)
    fail("misaligned recordings need at least 2 captions");
  if (!(s.frame_shift > 0.0) || !std::isfinite(s.frame_shift)) fail("frame_shift must be positive");
}

std::string format_synth_spec(const SyntheticSpec& s) {
  std::string out;
  auto kv = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  kv("seed", std::to_string(s.seed));
  kv("num_recordings", std::to_string(s.num_recordings));
  kv("captions_per_recording", format_range(s.captions_per_recording));
  kv("vocab_size", std::to_string(s.vocab_size));
  kv("frames_per_token", format_range(s.frames_per_token));
  kv("noise_temperature", format_double(s.noise_temperature));
  kv("logit_noise", format_double(s.logit_noise));
  kv("timestamp_shift_s", format_double(s.corruption.timestamp_shift_s));
  kv("misaligned_fraction", format_double(s.corruption.misaligned_fraction));
  kv("wrong_label_fraction", format_double(s.corruption.wrong_label_fraction));
  kv("num_languages", std::to_string(s.num_languages));
  kv("words_per_caption", format_range(s.words_per_caption));
  kv("letters_per_word", format_range(s.letters_per_word));
  kv("silence_frames", format_range(s.silence_frames));
  kv("frame_shift", format_double(s.frame_shift));
  return out;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

FrameLogPosteriors make_posteriors(const std::vector<int>& labels, std::size_t V, double tau, double sigma, double shift,
                                   std::mt19937_64& rng) {
  const std::size_t T = labels.size();
  std::vector<float> values(T * V, -std::numeric_limits<float>::infinity());
  if (tau == 0.0) {
    for (std::size_t t = 0; t < T; ++t) values[t * V + static_cast<std::size_t>(labels[t])] = 0.0f;
    return {T, V, std::move(values), shift};
  }
  // The log(V-1) offset makes the noise-free true-label probability
  // e^(1/tau) / (e^(1/tau) + 1) whatever the vocabulary size.
  const double margin = std::log(static_cast<double>(V - 1)) + 1.0 / tau;
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> logits(V);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) {
      logits[v] = (static_cast<int>(v) == labels[t] ? margin : 0.0) + noise(rng);
      mx = std::max(mx, logits[v]);
    }
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t v = 0; v < V; ++v) values[t * V + v] = static_cast<float>(logits[v] - lse);
  }
  return {T, V, std::move(values), shift};
}

}  // namespace

SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
  validate_synth_spec(spec);
  const auto pool = letter_pool();
  const auto L = static_cast<std::size_t>(spec.num_languages);
  const auto A = static_cast<std::size_t>(spec.vocab_size);

  SyntheticCorpus corpus;
  corpus.spec = spec;
  std::vector<std::string> tokens{std::string(Tokenizer::kBlankToken)};
  tokens.insert(tokens.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(L * A));
  corpus.tokenizer = Tokenizer(tokens);
  for (std::size_t l = 0; l < L; ++l) corpus.languages.emplace_back(kCodes[l]);
  const std::size_t V = tokens.size();

  const auto n = static_cast<std::size_t>(spec.num_recordings);
  std::mt19937_64 top(spec.seed);
  const auto misaligned = choose(n, spec.corruption.misaligned_fraction, top);
  const auto wrong_label = choose(n, spec.corruption.wrong_label_fraction, top);

  for (std::size_t r = 0; r < n; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    SyntheticRecording rec;
    auto& truth = rec.truth;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%05zu", r);
    truth.recording_id = id;
    const std::size_t lang = draw_index(rng, L);
    truth.true_language = corpus.languages[lang];
    truth.declared_language = truth.true_language;
    if (wrong_label.contains(r)) {
      truth.wrong_label = true;
      const std::size_t other = (lang + 1 + draw_index(rng, L - 1)) % L;
      truth.declared_language = corpus.languages[other];
    }
    truth.timestamp_shift_s = spec.corruption.timestamp_shift_s;

    std::vector<int> labels;
    auto silence = [&] { labels.insert(labels.end(), static_cast<std::size_t>(draw(rng, spec.silence_frames)), 0); };
    silence();
    const int num_caps = draw(rng, spec.captions_per_recording);
    for (int c = 0; c < num_caps; ++c) {
      if (c > 0) silence();
      TrueCaption cap;
      const int words = draw(rng, spec.words_per_caption);
      std::vector<int> ids;
      for (int w = 0; w < words; ++w) {
        if (w > 0) cap.text += ' ';
        const int letters = draw(rng, spec.letters_per_word);
        for (int k = 0; k < letters; ++k) {
          const std::size_t letter = lang * A + draw_index(rng, A);
          cap.text += pool[letter];
          ids.push_back(static_cast<int>(letter) + 1);
        }
      }
      cap.start_frame = labels.size();
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (k > 0) {
          int gap = std::uniform_int_distribution<int>(0, 2)(rng);
          if (ids[k] == ids[k - 1]) gap = std::max(gap, 1);
          labels.insert(labels.end(), static_cast<std::size_t>(gap), 0);
        }
        const std::size_t begin = labels.size();
        labels.insert(labels.end(), static_cast<std::size_t>(draw(rng, spec.frames_per_token)), ids[k]);
        cap.tokens.push_back({ids[k], begin, labels.size()});
      }
      cap.end_frame = labels.size();
      truth.captions.push_back(std::move(cap));
    }
    silence();
    truth.num_frames = labels.size();

    truth.text_source.resize(truth.captions.size());
    for (std::size_t i = 0; i < truth.text_source.size(); ++i) truth.text_source[i] = i;
    if (misaligned.contains(r) && truth.captions.size() >= 2) {
      truth.misaligned = true;
      truth.text_source = derangement(truth.captions.size(), rng);
    }

    rec.posteriors = make_posteriors(labels, V, spec.noise_temperature, spec.logit_noise, spec.frame_shift, rng);

    rec.entry.recording_id = truth.recording_id;
    rec.entry.declared_language = truth.declared_language;
    rec.entry.posterior_path = "posteriors/" + truth.recording_id + ".ctcp";
    for (std::size_t i = 0; i < truth.captions.size(); ++i) {
      const auto& cap = truth.captions[i];
      RawCaption raw;
      raw.text = truth.captions[truth.text_source[i]].text;
      raw.start = std::max(0.0, static_cast<double>(cap.start_frame) * spec.frame_shift + truth.timestamp_shift_s);
      raw.end = std::max(0.0, static_cast<double>(cap.end_frame) * spec.frame_shift + truth.timestamp_shift_s);
      rec.entry.captions.push_back(std::move(raw));
    }

    for (std::size_t i = 0; i < truth.captions.size(); ++i) {
      corpus.audio_lid[make_utterance_id(truth.recording_id, i)] = {truth.true_language, 1.0};
      corpus.lid_corpus.push_back({truth.captions[i].text, truth.true_language});
    }
    corpus.recordings.push_back(std::move(rec));
  }
  return corpus;
}

std::string format_truth(const SyntheticCorpus& corpus) {
  std::string out;
  for (const auto& rec : corpus.recordings) {
    const auto& t = rec.truth;
    ojson j;
    j["recording_id"] = t.recording_id;
    j["true_language"] = t.true_language;
    j["declared_language"] = t.declared_language;
    j["misaligned"] = t.misaligned;
    j["wrong_label"] = t.wrong_label;
    j["timestamp_shift_s"] = t.timestamp_shift_s;
    j["num_frames"] = t.num_frames;
    j["text_source"] = t.text_source;
    auto caps = ojson::array();
    for (const auto& c : t.captions) {
      ojson cj;
      cj["text"] = c.text;
      cj["start_frame"] = c.start_frame;
      cj["end_frame"] = c.end_frame;
      auto toks = ojson::array();
      for (const auto& iv : c.tokens) toks.push_back({iv.token_id, iv.start_frame, iv.end_frame});
      cj["tokens"] = std::move(toks);
      caps.push_back(std::move(cj));
    }
    j["captions"] = std::move(caps);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const SyntheticCorpus& corpus, const fs::path& dir, const TextLidConfig& lid_config) {
  fs::create_directories(dir / "posteriors");
  std::vector<LongFormRecording> entries;
  for (const auto& rec : corpus.recordings) {
    write_posteriors(dir / rec.entry.posterior_path, rec.posteriors);
    entries.push_back(rec.entry);
  }
  write_manifest(dir / "manifest.jsonl", entries);
  write_tokenizer(dir / "tokenizer.tsv", corpus.tokenizer);
  write_file(dir / "audio_lid.jsonl", format_audio_lid(corpus.audio_lid));
  write_file(dir / "truth.jsonl", format_truth(corpus));

  // An empty corpus still needs a loadable model.
  std::vector<LabeledText> lid = corpus.lid_corpus;
  std::set<std::string> labels;
  for (const auto& s : lid) labels.insert(s.label);
  if (labels.size() < 2) {
    const auto pool = letter_pool();
    const auto A = static_cast<std::size_t>(corpus.spec.vocab_size);
    for (std::size_t l = 0; l < corpus.languages.size(); ++l) {
      std::string text;
      for (std::size_t k = 0; k < A; ++k) text += pool[l * A + k];
      lid.push_back({text, corpus.languages[l]});
    }
  }
  save_text_lid(dir / "text_lid.bin", train_text_lid(lid, lid_config));

  write_file(dir / "pipeline.conf",
             "input_manifest = manifest.jsonl\n"
             "tokenizer = tokenizer.tsv\n"
             "audio_lid = audio_lid.jsonl\n"
             "text_lid_model = text_lid.bin\n"
             "output_dir = out\n");
  write_file(dir / "synth.spec", format_synth_spec(corpus.spec));
}

// ---------------------------------------------------------------------------
// Brute-force oracle

namespace {

struct Candidate {
  double score = -std::numeric_limits<double>::infinity();
  std::size_t first = 0;
  std::vector<std::size_t> states;
  std::vector<int> steps_backward;  // step preference ranks from the end cell back
};

int step_rank(Step s) {
  switch (s) {
    case Step::Advance2: return 3;
    case Step::Advance1: return 2;
    case Step::Self: return 1;
    case Step::Start: return 0;
  }
  return 0;
}

// True when `a` should win over `b` (scores already equal).
bool preferred(const Candidate& a, const Candidate& b) {
  const std::size_t a_end = a.first + a.states.size(), b_end = b.first + b.states.size();
  if (a_end != b_end) return a_end > b_end;
  if (a.states.back() != b.states.back()) return a.states.back() > b.states.back();
  return std::lexicographical_compare(b.steps_backward.begin(), b.steps_backward.end(), a.steps_backward.begin(),
                                      a.steps_backward.end());
}

}  // namespace

AlignmentPath brute_force_align(const FrameLogPosteriors& posteriors, std::span<const int> tokens) {
  const std::size_t T = posteriors.num_frames();
  if (T > kBruteForceMaxFrames)
    throw Error(ErrorKind::InstanceTooLarge,
                std::to_string(T) + " frames exceed the brute-force limit of " + std::to_string(kBruteForceMaxFrames));
  if (tokens.empty()) throw Error(ErrorKind::InvalidArgument, "cannot align an empty token sequence");
  for (int id : tokens)
    if (id <= kBlankId || static_cast<std::size_t>(id) >= posteriors.vocab_size())
      throw Error(ErrorKind::InvalidArgument, "token id " + std::to_string(id) + " outside (0, V)");
  if (T < min_frames_required(tokens)) throw Error(ErrorKind::InfeasibleLength, "too few frames");

  const std::size_t S = 2 * tokens.size() + 1;
  auto label = [&](std::size_t s) { return s % 2 == 0 ? kBlankId : tokens[(s - 1) / 2]; };
  auto lp = [&](std::size_t t, std::size_t s) {
    return static_cast<double>(posteriors.at(t, static_cast<std::size_t>(label(s))));
  };

  Candidate best;
  bool found = false;
  std::vector<std::size_t> states;
  std::vector<Step> steps;

  auto consider = [&](std::size_t first) {
    double score = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) score += lp(first + i, states[i]);
    if (score == -std::numeric_limits<double>::infinity()) return;
    Candidate c;
    c.score = score;
    c.first = first;
    c.states = states;
    c.steps_backward.reserve(steps.size());
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) c.steps_backward.push_back(step_rank(*it));
    if (!found || c.score > best.score || (c.score == best.score && preferred(c, best))) {
      best = std::move(c);
      found = true;
    }
  };

  auto extend = [&](auto&& self, std::size_t first, std::size_t t) -> void {
    const std::size_t s = states.back();
    if (s >= S - 2) consider(first);
    if (t + 1 >= T) return;
    const int options[] = {0, 1, 2};
    for (int d : options) {
      const std::size_t ns = s + static_cast<std::size_t>(d);
      if (ns >= S) continue;
      if (d == 2 && (ns % 2 == 0 || ns < 3 || tokens[(ns - 1) / 2] == tokens[(ns - 3) / 2])) continue;
      states.push_back(ns);
      steps.push_back(static_cast<Step>(d));
      self(self, first, t + 1);
      states.pop_back();
      steps.pop_back();
    }
  };

  for (std::size_t t0 = 0; t0 < T; ++t0) {
    for (std::size_t s0 : {std::size_t{0}, std::size_t{1}}) {
      states.assign(1, s0);
      steps.assign(1, Step::Start);
      extend(extend, t0, t0);
    }
  }
  if (!found) throw Error(ErrorKind::NoFeasiblePath, "every complete path has -inf score");

  AlignmentPath path;
  path.path_log_prob = best.score;
  path.first_frame = best.first;
  path.end_frame = best.first + best.states.size();
  path.states = best.states;
  path.per_frame_log_prob.resize(T);
  for (std::size_t f = 0; f < T; ++f)
    path.per_frame_log_prob[f] = f >= path.first_frame && f < path.end_frame
                                     ? lp(f, path.states[f - path.first_frame])
                                     : static_cast<double>(posteriors.at(f, kBlankId));
  for (std::size_t i = 0; i < path.states.size(); ++i) {
    const std::size_t st = path.states[i];
    if (st % 2 == 0) continue;
    const std::size_t frame = path.first_frame + i;
    if (i > 0 && path.states[i - 1] == st)
      path.token_intervals.back().end_frame = frame + 1;
    else
      path.token_intervals.push_back({tokens[(st - 1) / 2], frame, frame + 1});
  }
  return path;
}

}  // namespace clean
