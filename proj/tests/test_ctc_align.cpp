#include <doctest.h>

#include <cmath>
#include <random>

#include "clean/ctc_align.hpp"
#include "clean/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace clean;
using testutil::one_hot;

namespace {

AlignmentPath align(const FrameLogPosteriors& p, const std::vector<int>& tokens, const TrellisOptions& opts = {}) {
  return backtrack(build_trellis(p, tokens, opts), p, tokens);
}

// Path with only per-frame values set, for the confidence examples.
AlignmentPath path_with(const std::vector<double>& lp) {
  AlignmentPath path;
  path.per_frame_log_prob = lp;
  path.end_frame = lp.size();
  return path;
}

LongFormRecording recording(std::vector<RawCaption> caps) {
  LongFormRecording r;
  r.recording_id = "r";
  r.declared_language = "eng";
  r.captions = std::move(caps);
  return r;
}

}  // namespace

TEST_CASE("one-hot identity case") {
  const auto p = one_hot({1, 1, 2, 2}, 3);
  const auto path = align(p, {1, 2});
  CHECK(path.path_log_prob == 0.0);
  CHECK(path.token_intervals == std::vector<TokenInterval>{{1, 0, 2}, {2, 2, 4}});
  CHECK(path.per_frame_log_prob.size() == 4);
}

TEST_CASE("adjacent duplicates need a separating frame") {
  const auto p = one_hot({1, 1}, 2);
  CHECK_ERROR_KIND(build_trellis(p, std::vector<int>{1, 1}), ErrorKind::InfeasibleLength);
  CHECK(min_frames_required(std::vector<int>{1, 1}) == 3);
  CHECK(min_frames_required(std::vector<int>{1, 2, 2, 2}) == 6);
  const auto q = one_hot({1, 0, 1}, 2);
  CHECK(align(q, {1, 1}).token_intervals == std::vector<TokenInterval>{{1, 0, 1}, {1, 2, 3}});
}

TEST_CASE("single frame single token") {
  const auto p = one_hot({1}, 2);
  const auto path = align(p, {1});
  CHECK(path.token_intervals == std::vector<TokenInterval>{{1, 0, 1}});
  CHECK(path.first_frame == 0);
  CHECK(path.end_frame == 1);
}

TEST_CASE("symmetric posteriors resolve the same way every time") {
  const auto p = testutil::from_probs({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
  const auto first = align(p, {1});
  CHECK(first.token_intervals == std::vector<TokenInterval>{{1, 2, 3}});
  for (int i = 0; i < 100; ++i) {
    const auto again = align(p, {1});
    CHECK(again.token_intervals == first.token_intervals);
    CHECK(again.path_log_prob == first.path_log_prob);
    CHECK(again.states == first.states);
  }
}

TEST_CASE("leading and trailing audio stays unaligned") {
  const auto p = one_hot({0, 0, 1, 2, 0, 0}, 3);
  const auto path = align(p, {1, 2});
  CHECK(path.token_intervals == std::vector<TokenInterval>{{1, 2, 3}, {2, 3, 4}});
  CHECK(path.path_log_prob == 0.0);
}

TEST_CASE("unreachable paths raise NoFeasiblePath") {
  // the token never appears
  const auto p = one_hot({0, 0, 0}, 3);
  CHECK_ERROR_KIND(align(p, {1}), ErrorKind::NoFeasiblePath);
}

TEST_CASE("bad token ids are rejected") {
  const auto p = one_hot({0, 1}, 2);
  CHECK_ERROR_KIND(build_trellis(p, std::vector<int>{}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(build_trellis(p, std::vector<int>{0}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(build_trellis(p, std::vector<int>{2}), ErrorKind::InvalidArgument);
}

TEST_CASE("DP matches the brute-force oracle on random instances") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t T = 1 + rng() % 8;
    const std::size_t V = 2 + rng() % 3;
    const std::size_t N = 1 + rng() % 3;
    std::vector<int> tokens;
    for (std::size_t k = 0; k < N; ++k) tokens.push_back(1 + static_cast<int>(rng() % (V - 1)));
    const auto p = testutil::random_posteriors(T, V, rng);
    if (T < min_frames_required(tokens)) {
      CHECK_ERROR_KIND(brute_force_align(p, tokens), ErrorKind::InfeasibleLength);
      CHECK_ERROR_KIND(build_trellis(p, tokens), ErrorKind::InfeasibleLength);
      continue;
    }
    const auto fast = align(p, tokens);
    const auto slow = brute_force_align(p, tokens);
    CHECK(std::abs(fast.path_log_prob - slow.path_log_prob) <= 1e-9);
    CHECK(fast.token_intervals == slow.token_intervals);
    CHECK(fast.states == slow.states);
    CHECK(fast.first_frame == slow.first_frame);
    CHECK(fast.per_frame_log_prob == slow.per_frame_log_prob);
    ++checked;
  }
  CHECK(checked > 200);
}

TEST_CASE("brute force refuses large instances") {
  const auto p = one_hot(std::vector<int>(11, 1), 2);
  CHECK_ERROR_KIND(brute_force_align(p, std::vector<int>{1}), ErrorKind::InstanceTooLarge);
  const auto q = one_hot({1, 1, 1, 0}, 2);
  CHECK(brute_force_align(q, std::vector<int>{1}).token_intervals == align(q, {1}).token_intervals);
}

TEST_CASE("banded DP equals full DP when the band is wide and is restricted otherwise") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 6 + rng() % 20;
    const auto p = testutil::random_posteriors(T, 4, rng);
    std::vector<int> tokens{1, 2, 3};
    Band wide;
    wide.lo.assign(7, 0);
    wide.hi.assign(7, T - 1);
    TrellisOptions opts;
    opts.band = &wide;
    const auto full = align(p, tokens);
    const auto banded = align(p, tokens, opts);
    CHECK(full.path_log_prob == banded.path_log_prob);
    CHECK(full.token_intervals == banded.token_intervals);
  }
  // tight band forces the single token into frames [0, 1]
  const auto p = one_hot({0, 0, 0, 1}, 2);
  Band tight;
  tight.lo = {0, 0, 0};
  tight.hi = {1, 1, 1};
  TrellisOptions opts;
  opts.band = &tight;
  const Trellis tr = build_trellis(p, std::vector<int>{1}, opts);
  CHECK(tr.banded());
  CHECK_FALSE(tr.in_band(3, 1));
  CHECK_ERROR_KIND(backtrack(tr, p, std::vector<int>{1}), ErrorKind::NoFeasiblePath);
}

TEST_CASE("trellis scores hold no NaN and -inf propagates") {
  const auto p = one_hot({1, 0, 2, 0}, 3);
  TrellisOptions opts;
  opts.keep_scores = true;
  const Trellis tr = build_trellis(p, std::vector<int>{1, 2}, opts);
  REQUIRE(tr.scores().has_value());
  for (double v : *tr.scores()) CHECK_FALSE(std::isnan(v));
  CHECK(tr.score(0, 3) == -std::numeric_limits<double>::infinity());
  CHECK(tr.score(2, 3) == 0.0);

  testutil::TempDir dir;
  write_trellis_dump(dir / "t.ctct", tr, 0.08);
  const auto bytes = testutil::read_text(dir / "t.ctct");
  CHECK(bytes.substr(0, 4) == "CTCT");
  CHECK(bytes.size() == 32 + 4 * 5 * 4);
}

// ---------------------------------------------------------------------------

TEST_CASE("confidence examples") {
  const auto p = one_hot({0, 0, 0, 0}, 2);
  CHECK(segment_confidence(p, path_with({-1, -1, -3, -1}), {0, 4}, 2).value == -2.0);
  CHECK(segment_confidence(p, path_with({-2, -4, 0, 0}), {0, 2}, 30).value == -3.0);
  CHECK(segment_confidence(p, path_with({0, 0, 0, 0}), {0, 4}, 2).value == 0.0);
  CHECK(segment_confidence(p, path_with({0, 0, 0, 0}), {1, 3}, 2).window_frames == 2);
  CHECK_ERROR_KIND(segment_confidence(p, path_with({0, 0, 0, 0}), {2, 2}, 2), ErrorKind::EmptySegment);
  CHECK_ERROR_KIND(segment_confidence(p, path_with({0, 0, 0, 0}), {0, 2}, 0), ErrorKind::InvalidArgument);
}

TEST_CASE("confidence agrees with direct enumeration") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-6.0, 0.0);
  const auto p = one_hot(std::vector<int>(40, 0), 2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> lp(40);
    for (auto& x : lp) x = u(rng);
    const std::size_t b = rng() % 39, e = b + 1 + rng() % (40 - b - 1 + 1);
    const int w = 1 + static_cast<int>(rng() % 12);
    if (e > 40) continue;
    CHECK(segment_confidence(p, path_with(lp), {b, e}, w).value ==
          doctest::Approx(oracle::window_confidence(lp, b, e, w)).epsilon(1e-12));
  }
}

TEST_CASE("raising path posteriors never lowers confidence") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 12;
    auto p = testutil::random_posteriors(T, 3, rng);
    const std::vector<int> tokens{1, 2};
    const auto path = align(p, tokens);
    const FrameRange seg{path.first_frame, path.end_frame};
    const auto before = segment_confidence(p, path, seg, 3).value;

    // Boost each on-path label and renormalize the row.
    std::vector<float> v(p.values().begin(), p.values().end());
    for (std::size_t i = 0; i < path.states.size(); ++i) {
      const std::size_t t = path.first_frame + i, s = path.states[i];
      const std::size_t label = s % 2 == 0 ? 0 : static_cast<std::size_t>(tokens[(s - 1) / 2]);
      std::vector<double> prob(3);
      for (std::size_t k = 0; k < 3; ++k) prob[k] = std::exp(static_cast<double>(v[t * 3 + k]));
      prob[label] *= 2.0;
      double sum = prob[0] + prob[1] + prob[2];
      for (std::size_t k = 0; k < 3; ++k) v[t * 3 + k] = static_cast<float>(std::log(prob[k] / sum));
    }
    const FrameLogPosteriors boosted(T, 3, v);
    // Score the same path under the boosted posteriors.
    AlignmentPath same = path;
    for (std::size_t i = 0; i < path.states.size(); ++i) {
      const std::size_t t = path.first_frame + i, s = path.states[i];
      const std::size_t label = s % 2 == 0 ? 0 : static_cast<std::size_t>(tokens[(s - 1) / 2]);
      same.per_frame_log_prob[t] = boosted.at(t, label);
    }
    CHECK(segment_confidence(boosted, same, seg, 3).value >= before);
  }
}

// ---------------------------------------------------------------------------

TEST_CASE("joint alignment partitions captions at the true boundary") {
  Tokenizer tok({"<blank>", "a", "b", "c"});
  // audio: a a _ b | _ _ | c c
  const auto p = one_hot({1, 1, 0, 2, 0, 0, 3, 3}, 4);
  const auto rec = recording({{"ab", 0.0, 0.3}, {"c", 0.5, 0.6}});
  const auto al = align_captions(rec, p, tok);
  REQUIRE(al.captions.size() == 2);
  CHECK(al.captions[0].start_frame == 0);
  CHECK(al.captions[0].end_frame == 4);
  CHECK(al.captions[1].start_frame == 6);
  CHECK(al.captions[1].end_frame == 8);
  CHECK(al.captions[0].confidence.value == 0.0);
  CHECK_FALSE(al.banded);
}

TEST_CASE("joint split equals per-caption intervals reported") {
  std::mt19937_64 rng(41);
  Tokenizer tok({"<blank>", "a", "b", "c"});
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = testutil::random_posteriors(30, 4, rng);
    const auto rec = recording({{"ab", 0.0, 0.5}, {"ca", 1.0, 1.5}, {"b", 2.0, 2.2}});
    const auto al = align_captions(rec, p, tok);
    std::vector<TokenInterval> concat;
    for (const auto& c : al.captions) concat.insert(concat.end(), c.tokens.begin(), c.tokens.end());
    CHECK(concat == al.path.token_intervals);
    const std::vector<int> joint{1, 2, 3, 1, 2};
    CHECK(align(p, joint).token_intervals == concat);
  }
}

TEST_CASE("captions empty after normalization are non-speech") {
  Tokenizer tok({"<blank>", "a", "b"});
  const auto p = one_hot({1, 0, 2}, 3);
  const auto rec = recording({{"a", 0.0, 0.1}, {"[Music]", 0.1, 0.2}, {"b", 0.2, 0.3}});
  const auto al = align_captions(rec, p, tok);
  CHECK_FALSE(al.captions[0].nonspeech);
  CHECK(al.captions[1].nonspeech);
  CHECK(al.captions[1].tokens.empty());
  CHECK(al.captions[2].tokens == std::vector<TokenInterval>{{2, 2, 3}});
}

TEST_CASE("raw timestamps do not move the alignment") {
  Tokenizer tok({"<blank>", "a", "b"});
  const auto p = one_hot({0, 0, 1, 1, 0, 2, 0}, 3);
  const auto a = align_captions(recording({{"a", 0.16, 0.32}, {"b", 0.40, 0.48}}), p, tok);
  const auto b = align_captions(recording({{"a", 5.16, 5.32}, {"b", 5.40, 5.48}}), p, tok);
  CHECK(a.path.token_intervals == b.path.token_intervals);
  CHECK(b.captions[0].start_frame == 2);
  CHECK(b.captions[0].start_drift_s == doctest::Approx(5.0));
}

TEST_CASE("vocabulary mismatch is rejected") {
  Tokenizer tok({"<blank>", "a"});
  CHECK_ERROR_KIND(align_captions(recording({{"a", 0, 1}}), one_hot({1}, 3), tok), ErrorKind::InvalidArgument);
}

TEST_CASE("forced band over a long recording matches the unbanded run") {
  Tokenizer tok({"<blank>", "a", "b", "c"});
  std::vector<int> labels;
  std::vector<RawCaption> caps;
  for (int c = 0; c < 20; ++c) {
    const std::size_t start = labels.size();
    for (int k : {1, 2, 3}) {
      labels.push_back(k);
      labels.push_back(0);
    }
    caps.push_back({"abc", static_cast<double>(start) * 0.08, static_cast<double>(labels.size()) * 0.08});
    labels.insert(labels.end(), 4, 0);
  }
  const auto p = one_hot(labels, 4);
  AlignConfig forced;
  forced.force_band = true;
  forced.band_frames = 8;
  const auto banded = align_captions(recording(caps), p, tok, forced);
  const auto full = align_captions(recording(caps), p, tok);
  CHECK(banded.banded);
  CHECK(banded.path.token_intervals == full.path.token_intervals);

  const auto band = make_caption_band(caps, std::vector<std::size_t>(20, 3), p.num_frames(), 0.08, 8);
  for (std::size_t s = 1; s < band.lo.size(); ++s) {
    CHECK(band.lo[s] >= band.lo[s - 1]);
    CHECK(band.hi[s] >= band.hi[s - 1]);
    CHECK(band.hi[s] >= band.lo[s]);
  }
}
