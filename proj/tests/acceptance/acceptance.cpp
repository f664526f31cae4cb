// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "clean/pipeline.hpp"
#include "clean/synth.hpp"

using namespace clean;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("clean-accept-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

FrameLogPosteriors random_posteriors(std::size_t T, std::size_t V, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<float> v(T * V);
  for (std::size_t t = 0; t < T; ++t) {
    double z = 0.0;
    std::vector<double> p(V);
    for (auto& x : p) z += (x = u(rng));
    for (std::size_t k = 0; k < V; ++k) v[t * V + k] = static_cast<float>(std::log(p[k] / z));
  }
  return {T, V, std::move(v)};
}

AlignmentPath dp_align(const FrameLogPosteriors& p, const std::vector<int>& tokens) {
  return backtrack(build_trellis(p, tokens), p, tokens);
}

AlignedUtterance scored(const std::string& rec, std::size_t idx, double conf, const std::string& lang = "eng") {
  AlignedUtterance u;
  u.recording_id = rec;
  u.utterance_id = make_utterance_id(rec, idx);
  u.language = lang;
  u.confidence = {conf, 30};
  u.duration = 1.0;
  return u;
}

std::set<std::string> ids_of(const std::vector<AlignedUtterance>& utts) {
  std::set<std::string> s;
  for (const auto& u : utts) s.insert(u.utterance_id);
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t peak_rss_kib() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line))
    if (line.rfind("VmHWM:", 0) == 0) return std::stoul(line.substr(6));
  return 0;
}

double auc(const std::vector<double>& low_group, const std::vector<double>& high_group) {
  double s = 0.0;
  for (double a : low_group)
    for (double b : high_group) s += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
  return s / static_cast<double>(low_group.size() * high_group.size());
}

PipelineConfig corpus_config(const fs::path& dir, const std::string& out) {
  auto cfg = load_config(dir / "pipeline.conf");
  cfg.output_dir = dir / out;
  cfg.cache = false;
  return cfg;
}

// ---------------------------------------------------------------------------

Outcome ac1_oracle_equivalence() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  int checked = 0;
  double worst = 0.0;
  while (checked < 600) {
    const std::size_t T = 1 + rng() % 8;
    const std::size_t V = 2 + rng() % 3;  // blank plus up to 3 labels
    const std::size_t N = 1 + rng() % 3;
    std::vector<int> tokens;
    for (std::size_t k = 0; k < N; ++k) tokens.push_back(1 + static_cast<int>(rng() % (V - 1)));
    if (T < min_frames_required(tokens)) continue;
    const auto p = random_posteriors(T, V, rng);
    const auto fast = dp_align(p, tokens);
    const auto slow = brute_force_align(p, tokens);
    worst = std::max(worst, std::abs(fast.path_log_prob - slow.path_log_prob));
    o.require(std::abs(fast.path_log_prob - slow.path_log_prob) <= 1e-9, fmt("score mismatch at instance %d", checked));
    o.require(fast.token_intervals == slow.token_intervals, fmt("interval mismatch at instance %d", checked));
    ++checked;
  }
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, fmt("took %.2f s", secs));
  if (o.pass) o.detail = fmt("%d instances, max |dscore| %.2e, %.2f s", checked, worst, secs);
  return o;
}

Outcome ac2_one_hot_recovery() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec spec;
  spec.seed = 2;
  spec.num_recordings = 50;
  spec.noise_temperature = 0.0;
  spec.corruption.timestamp_shift_s = 5.0;
  const auto corpus = generate_corpus(spec);
  std::size_t captions = 0, errors = 0;
  double drift = 0.0;
  for (const auto& rec : corpus.recordings) {
    const auto al = align_captions(rec.entry, rec.posteriors, corpus.tokenizer);
    for (std::size_t i = 0; i < rec.truth.captions.size(); ++i) {
      const auto& truth = rec.truth.captions[i];
      const auto& got = al.captions[i];
      errors += (got.start_frame != truth.start_frame) + (got.end_frame != truth.end_frame);
      drift += got.start_drift_s;
      ++captions;
    }
  }
  const double secs = seconds_since(t0);
  const double mean_drift = drift / static_cast<double>(captions);
  o.require(errors == 0, fmt("%zu boundary errors", errors));
  o.require(std::abs(mean_drift - 5.0) < 1e-6, fmt("raw timestamps were not shifted: mean drift %.3f", mean_drift));
  o.require(secs < 30.0, fmt("took %.2f s", secs));
  if (o.pass) o.detail = fmt("%zu captions, 0 frame error, raw drift %.2f s, %.2f s", captions, mean_drift, secs);
  return o;
}

Outcome ac3_quantile_law() {
  Outcome o;
  std::mt19937_64 rng(33);
  const std::vector<double> grid{0.0, 0.10, 0.15, 0.20, 0.30};
  int cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<double> scores(n);
    std::iota(scores.begin(), scores.end(), 0.0);
    std::shuffle(scores.begin(), scores.end(), rng);
    std::vector<AlignedUtterance> utts;
    for (std::size_t i = 0; i < n; ++i) utts.push_back(scored("r" + std::to_string(i), 0, -scores[i] / 7.0));
    for (double theta : {0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.7, 1.0}) {
      const auto th = compute_thresholds(utts, {theta}).at("eng");
      std::size_t low = 0;
      for (const auto& u : utts) low += th.is_low(u.confidence.value, u.utterance_id);
      const auto expect = static_cast<std::size_t>(std::ceil(theta * static_cast<double>(n) - 1e-9));
      o.require(low == expect && th.low_count == expect,
                fmt("n=%zu theta=%.2f: %zu low, expected %zu", n, theta, low, expect));
      if (theta == 0.0) o.require(filter_longforms(utts, compute_thresholds(utts, {0.0})).kept == utts, "theta 0 filtered");
      ++cases;
    }
  }

  // Sweep through the pipeline; kept sets must shrink under inclusion.
  ScratchDir dir("ac3");
  SyntheticSpec spec;
  spec.seed = 3;
  spec.num_recordings = 60;
  spec.noise_temperature = 0.5;
  spec.corruption.misaligned_fraction = 0.2;
  const auto corpus = generate_corpus(spec);
  write_corpus(corpus, dir.path());
  const auto results = sweep_thresholds(corpus_config(dir.path(), "sweep"), grid);
  o.require(results.size() == grid.size(), "sweep returned the wrong number of runs");
  std::size_t lid_kept = 0;
  for (std::size_t i = 0; i < results.size() && o.pass; ++i) {
    const auto kept = ids_of(results[i].utterances);
    if (i == 0) {
      lid_kept = results[0].report.stage(Stage::LidFilter).total.utterance_count;
      o.require(kept.size() == lid_kept, "theta 0 dropped utterances in stage 3");
    } else {
      const auto prev = ids_of(results[i - 1].utterances);
      o.require(std::includes(prev.begin(), prev.end(), kept.begin(), kept.end()),
                fmt("kept set at theta %.2f is not a subset of theta %.2f", grid[i], grid[i - 1]));
    }
  }
  if (o.pass) {
    std::string chain;
    for (const auto& r : results) chain += (chain.empty() ? "" : " >= ") + std::to_string(r.utterances.size());
    o.detail = fmt("%d threshold cases exact; sweep kept %s utterances", cases, chain.c_str());
  }
  return o;
}

Outcome ac4_longform_discard() {
  Outcome o;
  // Eight eng utterances over four recordings; theta 0.25 marks ceil(2) = 2 low.
  {
    const std::vector<AlignedUtterance> utts{
        scored("A", 0, -0.10), scored("A", 1, -3.00), scored("B", 0, -0.20), scored("B", 1, -0.30),
        scored("C", 0, -0.50), scored("D", 0, -0.05), scored("D", 1, -0.15), scored("D", 2, -0.25)};
    const auto r = filter_longforms(utts, compute_thresholds(utts, {0.25}));
    o.require(r.discarded_recordings == std::vector<std::string>{"A", "C"}, "case 1: wrong discarded set");
    std::set<std::string> recs;
    for (const auto& u : r.kept) recs.insert(u.recording_id);
    o.require(recs == std::set<std::string>{"B", "D"} && r.kept.size() == 5, "case 1: wrong kept set");
  }
  // Two languages ranked separately: spa's worst is better than eng's best.
  {
    const std::vector<AlignedUtterance> utts{
        scored("E1", 0, -5.0), scored("E1", 1, -9.0), scored("E2", 0, -6.0), scored("E3", 0, -7.0),
        scored("S1", 0, -0.1, "spa"), scored("S2", 0, -0.2, "spa"), scored("S2", 1, -0.4, "spa"),
        scored("S3", 0, -0.3, "spa")};
    const auto r = filter_longforms(utts, compute_thresholds(utts, {0.2}));
    // eng: ceil(0.8) = 1 low (-9.0 in E1); spa: ceil(0.8) = 1 low (-0.4 in S2)
    o.require(r.discarded_recordings == std::vector<std::string>{"E1", "S2"}, "case 2: wrong discarded set");
    o.require(ids_of(r.kept) == std::set<std::string>{"E2-00000", "E3-00000", "S1-00000", "S3-00000"},
              "case 2: wrong kept set");
  }
  // Random layouts against the rule stated directly.
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 200 && o.pass; ++trial) {
    std::vector<AlignedUtterance> utts;
    const std::size_t recs = 1 + rng() % 12;
    for (std::size_t r = 0; r < recs; ++r) {
      const std::size_t k = 1 + rng() % 4;
      for (std::size_t i = 0; i < k; ++i)
        utts.push_back(scored("R" + std::to_string(r), i, -static_cast<double>(rng() % 1000) / 100.0,
                              (rng() & 1) ? "eng" : "spa"));
    }
    const double theta = static_cast<double>(rng() % 50) / 100.0;
    const auto th = compute_thresholds(utts, {theta});
    std::set<std::string> bad;
    for (const auto& u : utts)
      if (th.at(u.language).is_low(u.confidence.value, u.utterance_id)) bad.insert(u.recording_id);
    std::vector<AlignedUtterance> expect;
    for (const auto& u : utts)
      if (!bad.contains(u.recording_id)) expect.push_back(u);
    o.require(filter_longforms(utts, th).kept == expect, fmt("random trial %d", trial));
  }
  if (o.pass) o.detail = "2 hand-computed corpora and 200 random layouts";
  return o;
}

Outcome ac5_lid_agreement() {
  Outcome o;
  {
    ScratchDir dir("ac5");
    SyntheticSpec spec;
    spec.seed = 5;
    spec.num_recordings = 100;
    spec.noise_temperature = 0.5;
    spec.corruption.wrong_label_fraction = 0.1;
    const auto corpus = generate_corpus(spec);
    write_corpus(corpus, dir.path());
    const auto cfg = corpus_config(dir.path(), "out");
    const auto prepared = prepare_corpus(cfg);
    std::set<std::string> corrupted;
    for (const auto& r : corpus.recordings)
      if (r.truth.wrong_label) corrupted.insert(r.entry.recording_id);
    std::size_t tp = 0, fp = 0, fn = 0;
    std::map<std::string, std::string> rec_of;
    for (const auto& rec : prepared.recordings)
      for (const auto& u : rec.utterances) rec_of[u.utterance_id] = u.recording_id;
    for (const auto& v : prepared.verdicts) {
      const bool bad = corrupted.contains(rec_of.at(v.utterance_id));
      if (!v.keep && bad) ++tp;
      if (!v.keep && !bad) ++fp;
      if (v.keep && bad) ++fn;
    }
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    o.require(corrupted.size() == 10, fmt("%zu corrupted recordings", corrupted.size()));
    o.require(precision == 1.0 && recall == 1.0, fmt("precision %.3f recall %.3f", precision, recall));
    o.detail = fmt("stage 2 dropped %zu utterances, precision %.2f recall %.2f", tp + fp, precision, recall);
  }
  // Latin vs Cyrillic random words; 20 held-out documents.
  std::mt19937_64 rng(55);
  auto word = [&](bool cyrillic) {
    std::string w;
    const std::size_t len = 2 + rng() % 6;
    for (std::size_t i = 0; i < len; ++i) {
      const auto k = static_cast<unsigned>(rng() % 26);
      if (cyrillic) {
        const unsigned cp = 0x430 + k;  // а..щ
        w += static_cast<char>(0xC0 | (cp >> 6));
        w += static_cast<char>(0x80 | (cp & 0x3F));
      } else {
        w += static_cast<char>('a' + k);
      }
    }
    return w;
  };
  auto doc = [&](bool cyrillic) {
    std::string d;
    const std::size_t n = 1 + rng() % 5;
    for (std::size_t i = 0; i < n; ++i) d += (i ? " " : "") + word(cyrillic);
    return d;
  };
  std::vector<LabeledText> train, test;
  for (int i = 0; i < 200; ++i) train.push_back({doc(i % 2), i % 2 ? "rus" : "eng"});
  for (int i = 0; i < 20; ++i) test.push_back({doc(i % 2), i % 2 ? "rus" : "eng"});
  TextLidConfig lid;
  lid.buckets = 1u << 14;
  const auto model = train_text_lid(train, lid);
  int correct = 0;
  for (const auto& t : test) correct += predict_text_lid(model, t.text).code == t.label;
  o.require(correct == 20, fmt("held-out accuracy %d/20", correct));
  if (o.pass) o.detail += fmt("; held-out text LID %d/20", correct);
  return o;
}

Outcome ac6_misalignment_auc() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec spec;
  spec.seed = 6;
  spec.num_recordings = 200;
  spec.noise_temperature = 0.5;
  spec.corruption.misaligned_fraction = 0.5;
  const auto corpus = generate_corpus(spec);
  // Recording score: the minimum caption confidence, which is what the
  // long-form rule acts on, and the mean as a second view.
  std::vector<double> mis_min, clean_min, mis_mean, clean_mean;
  for (const auto& rec : corpus.recordings) {
    const auto al = align_captions(rec.entry, rec.posteriors, corpus.tokenizer);
    double lo = 0.0, sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : al.captions) {
      if (c.nonspeech) continue;
      lo = std::min(lo, c.confidence.value);
      sum += c.confidence.value;
      ++n;
    }
    (rec.truth.misaligned ? mis_min : clean_min).push_back(lo);
    (rec.truth.misaligned ? mis_mean : clean_mean).push_back(sum / static_cast<double>(n));
  }
  const double secs = seconds_since(t0);
  const double a_min = auc(mis_min, clean_min);
  const double a_mean = auc(mis_mean, clean_mean);
  o.require(mis_min.size() == 100 && clean_min.size() == 100, "wrong group sizes");
  o.require(a_min > 0.9, fmt("AUC(min) = %.4f", a_min));
  o.require(secs < 120.0, fmt("took %.1f s", secs));
  if (o.pass) o.detail = fmt("AUC %.4f (min confidence), %.4f (mean), 100+100 recordings, %.2f s", a_min, a_mean, secs);
  return o;
}

Outcome ac7_determinism_conservation() {
  Outcome o;
  ScratchDir dir("ac7");
  SyntheticSpec spec;
  spec.seed = 7;
  spec.num_recordings = 40;
  spec.noise_temperature = 0.5;
  spec.corruption.misaligned_fraction = 0.15;
  spec.corruption.wrong_label_fraction = 0.1;
  spec.corruption.timestamp_shift_s = 1.0;
  spec.num_languages = 3;
  const auto corpus = generate_corpus(spec);
  write_corpus(corpus, dir.path());
  auto c1 = corpus_config(dir.path(), "w1");
  auto c8 = corpus_config(dir.path(), "w8");
  c1.workers = 1;
  c8.workers = 8;
  const auto r1 = run_pipeline(c1);
  const auto r8 = run_pipeline(c8);
  o.require(slurp(r1.manifest_path) == slurp(r8.manifest_path), "manifests differ");
  o.require(slurp(r1.report_path) == slurp(r8.report_path), "machine reports differ");

  std::map<std::string, int> seen;
  std::set<std::string> in_manifest;
  for (const auto& u : r1.utterances) in_manifest.insert(u.recording_id);
  for (const auto& id : in_manifest) ++seen[id];
  for (const auto& rej : r1.report.rejections) ++seen[rej.recording_id];
  for (const auto& rec : corpus.recordings)
    o.require(seen[rec.entry.recording_id] == 1,
              fmt("%s appears %d times", rec.entry.recording_id.c_str(), seen[rec.entry.recording_id]));
  o.require(seen.size() == corpus.recordings.size(), "unknown recording in outputs");

  for (std::size_t s = 1; s < kStages.size(); ++s)
    for (const auto& [lang, st] : r1.report.stages[s].per_language) {
      const auto& before = r1.report.stages[s - 1].per_language;
      const double prev = before.contains(lang) ? before.at(lang).hours : 0.0;
      o.require(st.hours <= prev + 1e-12, fmt("%s hours grew at stage %zu", lang.c_str(), s));
    }
  if (o.pass)
    o.detail = fmt("workers 1 vs 8 byte-identical; %zu kept + %zu rejected = %zu recordings", in_manifest.size(),
                   r1.report.rejections.size(), corpus.recordings.size());
  return o;
}

Outcome ac8_scale() {
  Outcome o;
  SyntheticSpec spec;
  spec.seed = 8;
  spec.num_recordings = 1;
  spec.noise_temperature = 0.5;
  spec.captions_per_recording = {500, 500};
  spec.words_per_caption = {2, 2};
  spec.letters_per_word = {5, 5};
  spec.frames_per_token = {4, 8};
  spec.silence_frames = {15, 25};
  const auto corpus = generate_corpus(spec);
  const auto& rec = corpus.recordings[0];
  const std::size_t target = 45000;
  const std::size_t T0 = rec.posteriors.num_frames();
  o.require(T0 <= target, fmt("generated %zu frames", T0));
  if (!o.pass) return o;
  // Pad with trailing blank frames to exactly one hour.
  const std::size_t V = rec.posteriors.vocab_size();
  std::vector<float> values(rec.posteriors.values().begin(), rec.posteriors.values().end());
  values.resize(target * V, -std::numeric_limits<float>::infinity());
  for (std::size_t t = T0; t < target; ++t) values[t * V + kBlankId] = 0.0f;
  const FrameLogPosteriors padded(target, V, std::move(values), rec.posteriors.frame_shift());
  std::size_t tokens = 0;
  for (const auto& c : rec.truth.captions) tokens += c.tokens.size();
  o.require(tokens == 5000, fmt("%zu tokens", tokens));

  const auto t0 = std::chrono::steady_clock::now();
  const auto al = align_captions(rec.entry, padded, corpus.tokenizer);
  const double secs = seconds_since(t0);
  const double rss_mib = static_cast<double>(peak_rss_kib()) / 1024.0;
  o.require(al.banded, "did not use the banded DP");
  o.require(secs < 60.0, fmt("took %.1f s", secs));
  o.require(rss_mib < 4096.0, fmt("peak RSS %.0f MiB", rss_mib));
  if (o.pass) o.detail = fmt("T=%zu, N=%zu, banded, %.2f s, peak RSS %.0f MiB", target, tokens, secs, rss_mib);
  return o;
}

Outcome ac9_round_trips() {
  Outcome o;
  ScratchDir dir("ac9");
  SyntheticSpec spec;
  spec.seed = 9;
  spec.num_recordings = 12;
  spec.noise_temperature = 0.5;
  spec.corruption.wrong_label_fraction = 0.2;
  spec.corruption.misaligned_fraction = 0.2;
  const auto corpus = generate_corpus(spec);
  write_corpus(corpus, dir.path());

  int files = 0;
  for (const auto& rec : corpus.recordings) {
    const auto bytes = encode_posteriors(rec.posteriors);
    const auto back = decode_posteriors(bytes);
    o.require(back == rec.posteriors && encode_posteriors(back) == bytes, "posterior round trip");
    const auto path = resolve_posterior_path(rec.entry, dir.path());
    const auto on_disk = slurp(path);
    o.require(on_disk == std::string(bytes.begin(), bytes.end()), "posterior file bytes");
    write_posteriors(dir.path() / "copy.ctcp", load_posteriors(path));
    o.require(slurp(dir.path() / "copy.ctcp") == on_disk, "posterior file rewrite");
    ++files;
  }

  const auto model_bytes = slurp(dir.path() / "text_lid.bin");
  save_text_lid(dir.path() / "copy.bin", load_text_lid(dir.path() / "text_lid.bin"));
  o.require(slurp(dir.path() / "copy.bin") == model_bytes, "text LID model round trip");

  const auto manifest = slurp(dir.path() / "manifest.jsonl");
  o.require(format_manifest(parse_manifest(manifest)) == manifest, "input manifest round trip");

  const auto run = run_pipeline(corpus_config(dir.path(), "out"));
  const auto utt_text = slurp(run.manifest_path);
  o.require(format_utterance_manifest(parse_utterance_manifest(utt_text)) == utt_text, "utterance manifest round trip");
  const auto report_text = slurp(run.report_path);
  const auto report = parse_machine_report(report_text);
  o.require(format_machine_report(report) == report_text && report == run.report, "machine report round trip");
  if (o.pass)
    o.detail = fmt("%d posterior files, text LID model, input and utterance manifests, machine report (%zu bytes)",
                   files, report_text.size());
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks{
      {"AC1 oracle equivalence", ac1_oracle_equivalence},
      {"AC2 one-hot boundary recovery", ac2_one_hot_recovery},
      {"AC3 quantile law", ac3_quantile_law},
      {"AC4 long-form discard", ac4_longform_discard},
      {"AC5 LID agreement", ac5_lid_agreement},
      {"AC6 misalignment AUC", ac6_misalignment_auc},
      {"AC7 determinism and conservation", ac7_determinism_conservation},
      {"AC8 scale", ac8_scale},
      {"AC9 format round trips", ac9_round_trips},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
