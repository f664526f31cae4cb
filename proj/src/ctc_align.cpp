#include "clean/ctc_align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "clean/error.hpp"

namespace clean {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int state_label(std::span<const int> tokens, std::size_t state) {
  return state % 2 == 0 ? kBlankId : tokens[(state - 1) / 2];
}

// Advance-by-two into token state s skips the blank between two tokens; it
// is illegal when both tokens are identical.
bool can_skip_into(std::span<const int> tokens, std::size_t state) {
  if (state % 2 == 0 || state < 3) return false;
  const std::size_t k = (state - 1) / 2;
  return tokens[k] != tokens[k - 1];
}

}  // namespace

std::size_t min_frames_required(std::span<const int> tokens) {
  std::size_t n = tokens.size();
  for (std::size_t i = 1; i < tokens.size(); ++i)
    if (tokens[i] == tokens[i - 1]) ++n;
  return n;
}

double Trellis::terminal_score(std::size_t frame, std::size_t state) const {
  if (state == num_states_ - 2) return final_token_[frame];
  if (state == num_states_ - 1) return final_blank_[frame];
  throw Error(ErrorKind::InvalidArgument, "state " + std::to_string(state) + " is not terminal");
}

Trellis build_trellis(const FrameLogPosteriors& posteriors, std::span<const int> tokens,
                      const TrellisOptions& options) {
  if (tokens.empty()) throw Error(ErrorKind::InvalidArgument, "cannot align an empty token sequence");
  const std::size_t T = posteriors.num_frames();
  const std::size_t V = posteriors.vocab_size();
  for (int id : tokens)
    if (id <= kBlankId || static_cast<std::size_t>(id) >= V)
      throw Error(ErrorKind::InvalidArgument, "token id " + std::to_string(id) + " outside (0, V)");
  const std::size_t needed = min_frames_required(tokens);
  if (T < needed)
    throw Error(ErrorKind::InfeasibleLength,
                std::to_string(tokens.size()) + " tokens need " + std::to_string(needed) + " frames, have " +
                    std::to_string(T));

  const std::size_t S = 2 * tokens.size() + 1;
  Trellis tr;
  tr.num_frames_ = T;
  tr.num_states_ = S;
  tr.banded_ = options.band != nullptr;
  if (options.band) {
    if (options.band->lo.size() != S || options.band->hi.size() != S)
      throw Error(ErrorKind::InvalidArgument, "band does not match the state count");
    tr.state_lo_ = options.band->lo;
    tr.state_hi_ = options.band->hi;
    for (std::size_t s = 0; s < S; ++s) {
      if (tr.state_hi_[s] >= T) tr.state_hi_[s] = T - 1;
      if (tr.state_lo_[s] > tr.state_hi_[s] || (s > 0 && (tr.state_lo_[s] < tr.state_lo_[s - 1] ||
                                                          tr.state_hi_[s] < tr.state_hi_[s - 1])))
        throw Error(ErrorKind::InvalidArgument, "band bounds must be non-decreasing with lo <= hi");
    }
  } else {
    tr.state_lo_.assign(S, 0);
    tr.state_hi_.assign(S, T - 1);
  }

  // Active states per frame: lo[s] <= t <= hi[s]; contiguous by monotonicity.
  tr.first_state_.resize(T);
  tr.end_state_.resize(T);
  tr.offset_.resize(T);
  std::size_t a = 0, b = 0, total = 0;
  for (std::size_t t = 0; t < T; ++t) {
    while (a < S && tr.state_hi_[a] < t) ++a;
    while (b < S && tr.state_lo_[b] <= t) ++b;
    tr.first_state_[t] = a;
    tr.end_state_[t] = std::max(a, b);
    tr.offset_[t] = total;
    total += tr.end_state_[t] - tr.first_state_[t];
  }
  tr.backptr_.assign(total, static_cast<std::uint8_t>(Step::Self));
  tr.final_token_.assign(T, kNegInf);
  tr.final_blank_.assign(T, kNegInf);
  if (options.keep_scores) tr.scores_.emplace(T * S, kNegInf);

  std::vector<double> prev(S, kNegInf), cur(S, kNegInf);
  std::size_t stale_first = 0, stale_end = 0;  // range written two frames back, still in `cur`
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(cur.begin() + static_cast<std::ptrdiff_t>(stale_first),
              cur.begin() + static_cast<std::ptrdiff_t>(stale_end), kNegInf);
    const auto row = posteriors.row(t);
    const std::size_t first = tr.first_state_[t], end = tr.end_state_[t];
    std::uint8_t* bp = tr.backptr_.data() + tr.offset_[t];
    for (std::size_t s = first; s < end; ++s) {
      double best = kNegInf;
      Step step = Step::Self;
      if (can_skip_into(tokens, s) && prev[s - 2] > best) {
        best = prev[s - 2];
        step = Step::Advance2;
      }
      if (s >= 1 && prev[s - 1] > best) {
        best = prev[s - 1];
        step = Step::Advance1;
      }
      if (prev[s] > best) {
        best = prev[s];
        step = Step::Self;
      }
      if (s <= 1 && 0.0 > best) {
        best = 0.0;
        step = Step::Start;
      }
      bp[s - first] = static_cast<std::uint8_t>(step);
      cur[s] = best + static_cast<double>(row[static_cast<std::size_t>(state_label(tokens, s))]);
    }
    if (S - 2 >= first && S - 2 < end) tr.final_token_[t] = cur[S - 2];
    if (S - 1 >= first && S - 1 < end) tr.final_blank_[t] = cur[S - 1];
    if (tr.scores_)
      std::copy(cur.begin() + static_cast<std::ptrdiff_t>(first), cur.begin() + static_cast<std::ptrdiff_t>(end),
                tr.scores_->begin() + static_cast<std::ptrdiff_t>(t * S + first));
    stale_first = t == 0 ? 0 : tr.first_state_[t - 1];
    stale_end = t == 0 ? 0 : tr.end_state_[t - 1];
    std::swap(prev, cur);
  }
  return tr;
}

AlignmentPath backtrack(const Trellis& trellis, const FrameLogPosteriors& posteriors,
                        std::span<const int> tokens) {
  const std::size_t T = trellis.num_frames();
  const std::size_t S = trellis.num_states();
  if (S != 2 * tokens.size() + 1 || T != posteriors.num_frames())
    throw Error(ErrorKind::InvalidArgument, "trellis does not match tokens/posteriors");

  double best = kNegInf;
  std::size_t end_t = 0, end_s = 0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s : {S - 2, S - 1}) {
      const double v = trellis.terminal_score(t, s);
      if (v > kNegInf && v >= best) {
        best = v;
        end_t = t;
        end_s = s;
      }
    }
  }
  if (best == kNegInf) throw Error(ErrorKind::NoFeasiblePath, "every terminal cell is -inf");

  AlignmentPath path;
  path.path_log_prob = best;
  path.end_frame = end_t + 1;
  std::vector<std::size_t> states;
  std::size_t t = end_t, s = end_s;
  while (true) {
    states.push_back(s);
    const Step step = trellis.step(t, s);
    if (step == Step::Start) break;
    if (t == 0) throw Error(ErrorKind::NoFeasiblePath, "backpointer chain leaves frame 0");
    s -= static_cast<std::size_t>(step);
    --t;
  }
  path.first_frame = t;
  std::reverse(states.begin(), states.end());
  path.states = std::move(states);

  path.per_frame_log_prob.resize(T);
  for (std::size_t f = 0; f < T; ++f) {
    if (f >= path.first_frame && f < path.end_frame) {
      const std::size_t st = path.states[f - path.first_frame];
      path.per_frame_log_prob[f] = posteriors.at(f, static_cast<std::size_t>(state_label(tokens, st)));
    } else {
      path.per_frame_log_prob[f] = posteriors.at(f, kBlankId);
    }
  }

  for (std::size_t i = 0; i < path.states.size(); ++i) {
    const std::size_t st = path.states[i];
    if (st % 2 == 0) continue;
    const std::size_t frame = path.first_frame + i;
    if (i > 0 && path.states[i - 1] == st) {
      path.token_intervals.back().end_frame = frame + 1;
    } else {
      path.token_intervals.push_back({tokens[(st - 1) / 2], frame, frame + 1});
    }
  }
  return path;
}

bool band_binds(const Trellis& trellis, const AlignmentPath& path) {
  if (!trellis.banded()) return false;
  const std::size_t last = trellis.num_frames() - 1;
  for (std::size_t i = 0; i < path.states.size(); ++i) {
    const std::size_t t = path.first_frame + i, s = path.states[i];
    if ((t == trellis.state_lo(s) && t > 0) || (t == trellis.state_hi(s) && t < last)) return true;
  }
  return false;
}

void write_trellis_dump(const std::filesystem::path& path, const Trellis& trellis, double frame_shift) {
  if (!trellis.scores()) throw Error(ErrorKind::InvalidArgument, "trellis was built without keep_scores");
  detail::ByteWriter w;
  w.bytes(kTrellisMagic);
  w.u32(kPosteriorVersion);
  w.u64(trellis.num_frames());
  w.u64(trellis.num_states());
  w.f64(frame_shift);
  for (double v : *trellis.scores()) w.f32(static_cast<float>(v));
  w.write_to(path);
}

ConfidenceScore segment_confidence(const FrameLogPosteriors& posteriors, const AlignmentPath& path,
                                   FrameRange segment, int window_frames) {
  if (window_frames < 1) throw Error(ErrorKind::InvalidArgument, "window_frames must be >= 1");
  if (segment.begin >= segment.end) throw Error(ErrorKind::EmptySegment, "segment has no frames");
  if (segment.end > posteriors.num_frames() || segment.end > path.per_frame_log_prob.size())
    throw Error(ErrorKind::InvalidArgument, "segment exceeds the frame axis");

  const auto& lp = path.per_frame_log_prob;
  const std::size_t len = segment.end - segment.begin;
  const std::size_t w = static_cast<std::size_t>(window_frames);
  auto mean = [&](std::size_t from, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = from; i < from + n; ++i) sum += lp[i];
    return sum / static_cast<double>(n);
  };
  if (len <= w) return {mean(segment.begin, len), window_frames};
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t from = segment.begin; from + w <= segment.end; ++from) worst = std::min(worst, mean(from, w));
  return {worst, window_frames};
}

// ---------------------------------------------------------------------------

Band make_caption_band(std::span<const RawCaption> captions, std::span<const std::size_t> token_counts,
                       std::size_t num_frames, double frame_shift, std::size_t band_frames) {
  if (captions.size() != token_counts.size())
    throw Error(ErrorKind::InvalidArgument, "one token count per caption required");
  std::vector<double> centers;
  for (std::size_t c = 0; c < captions.size(); ++c) {
    const std::size_t m = token_counts[c];
    const double start = captions[c].start;
    const double end = std::max(captions[c].end, start);
    for (std::size_t j = 0; j < m; ++j)
      centers.push_back((start + (end - start) * (static_cast<double>(j) + 0.5) / static_cast<double>(m)) /
                        frame_shift);
  }
  const std::size_t n = centers.size();
  const std::size_t S = 2 * n + 1;
  Band band;
  band.lo.resize(S);
  band.hi.resize(S);
  const double last = static_cast<double>(num_frames - 1);
  const double width = static_cast<double>(band_frames);
  for (std::size_t s = 0; s < S; ++s) {
    double center;
    if (s % 2 == 1) center = centers[(s - 1) / 2];
    else if (s == 0) center = centers.front();
    else if (s == S - 1) center = centers.back();
    else center = 0.5 * (centers[s / 2 - 1] + centers[s / 2]);
    const double lo = std::clamp(std::floor(center - width), 0.0, last);
    const double hi = std::clamp(std::ceil(center + width), 0.0, last);
    band.lo[s] = static_cast<std::size_t>(lo);
    band.hi[s] = static_cast<std::size_t>(hi);
    if (s > 0) {
      band.lo[s] = std::max(band.lo[s], band.lo[s - 1]);
      band.hi[s] = std::max(band.hi[s], band.hi[s - 1]);
    }
    band.hi[s] = std::max(band.hi[s], band.lo[s]);
  }
  return band;
}

RecordingAlignment align_captions(const LongFormRecording& recording, const FrameLogPosteriors& posteriors,
                                  const Tokenizer& tokenizer, const AlignConfig& config) {
  if (tokenizer.vocab_size() != posteriors.vocab_size())
    throw Error(ErrorKind::InvalidArgument, "tokenizer has " + std::to_string(tokenizer.vocab_size()) +
                                                " tokens, posteriors " + std::to_string(posteriors.vocab_size()));
  RecordingAlignment out;
  std::vector<int> joint;
  std::vector<std::size_t> counts;
  std::vector<RawCaption> spoken;
  out.captions.resize(recording.captions.size());
  for (std::size_t i = 0; i < recording.captions.size(); ++i) {
    auto tok = tokenizer.tokenize(recording.captions[i].text);
    out.dropped_chars += tok.dropped;
    out.captions[i].caption_index = i;
    out.captions[i].nonspeech = tok.ids.empty();
    if (tok.ids.empty()) continue;
    counts.push_back(tok.ids.size());
    spoken.push_back(recording.captions[i]);
    joint.insert(joint.end(), tok.ids.begin(), tok.ids.end());
  }
  if (joint.empty()) return out;

  const std::uint64_t full_bytes =
      static_cast<std::uint64_t>(posteriors.num_frames()) * (2 * joint.size() + 1);
  std::optional<Band> band;
  if (config.force_band || full_bytes > config.trellis_budget_bytes)
    band = make_caption_band(spoken, counts, posteriors.num_frames(), posteriors.frame_shift(), config.band_frames);

  TrellisOptions opts;
  opts.band = band ? &*band : nullptr;
  const Trellis trellis = build_trellis(posteriors, joint, opts);
  out.path = backtrack(trellis, posteriors, joint);
  out.banded = trellis.banded();
  out.band_bound = band_binds(trellis, out.path);

  std::size_t token_pos = 0, spoken_idx = 0;
  for (auto& cap : out.captions) {
    if (cap.nonspeech) continue;
    const std::size_t m = counts[spoken_idx++];
    cap.tokens.assign(out.path.token_intervals.begin() + static_cast<std::ptrdiff_t>(token_pos),
                      out.path.token_intervals.begin() + static_cast<std::ptrdiff_t>(token_pos + m));
    token_pos += m;
    cap.start_frame = cap.tokens.front().start_frame;
    cap.end_frame = cap.tokens.back().end_frame;
    cap.confidence = segment_confidence(posteriors, out.path, {cap.start_frame, cap.end_frame},
                                        config.confidence_window);
    cap.start_drift_s = std::abs(recording.captions[cap.caption_index].start -
                                 static_cast<double>(cap.start_frame) * posteriors.frame_shift());
  }
  return out;
}

}  // namespace clean
