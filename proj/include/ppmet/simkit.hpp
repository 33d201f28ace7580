#pragma once

// Deterministic synthetic sessions: turn-taking diarizations with controlled
// overlap, speaker prototypes on the unit sphere, window embeddings with
// angular noise, an activity oracle standing in for a neural TS-VAD, and
// transcripts with injected character errors.
//
// All randomness goes through ppmet::Rng (see rng.hpp); every generator is a
// pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ppmet/error.hpp"
#include "ppmet/rng.hpp"
#include "ppmet/score.hpp"
#include "ppmet/timeline.hpp"
#include "ppmet/tsvad_post.hpp"
#include "ppmet/types.hpp"
#include "ppmet/windowing.hpp"

namespace ppmet::sim {

inline constexpr double kMinTurn = 1.0;
inline constexpr double kMeanPause = 0.5;
// Turn boundaries land on the default activity frame grid, so a frame-level
// oracle can reproduce the reference exactly.
inline constexpr double kTimeGrid = 0.08;

inline double snap_to_grid(double t) { return static_cast<double>(std::llround(t / kTimeGrid)) * kTimeGrid; }

struct SessionSpec {
  std::string session = "sim";
  int n_speakers = 3;
  double duration = 300.0;
  double overlap_ratio = 0.15;
  double mean_turn = 10.0;
  std::size_t dim = 16;
  double separation_deg = 60.0;
  double noise_deg = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_speakers < 1) throw Error(ErrorKind::kInvalidArgument, "n_speakers must be >= 1");
    if (!(overlap_ratio >= 0.0 && overlap_ratio < 1.0)) {
      throw Error(ErrorKind::kInvalidArgument, "overlap_ratio must be in [0, 1)");
    }
    if (!(mean_turn > 0.0)) throw Error(ErrorKind::kInvalidArgument, "mean_turn must be positive");
    if (dim < 1) throw Error(ErrorKind::kInvalidArgument, "dim must be >= 1");
    if (!(separation_deg >= 0.0) || !(noise_deg >= 0.0)) {
      throw Error(ErrorKind::kInvalidArgument, "angles must be non-negative");
    }
    if (!(duration >= n_speakers * kMinTurn)) {
      throw Error(ErrorKind::kInvalidArgument, "infeasible spec: duration < n_speakers * min turn");
    }
  }
};

inline std::string speaker_name(int i) { return "spk" + std::to_string(i); }

// Fraction of speech time (union over speakers) with two or more speakers.
inline double overlap_fraction(const Diarization& d) {
  double speech = 0.0, overlapped = 0.0;
  for (const auto& r : homogeneous_regions({d})) {
    speech += r.segment.duration();
    if (r.active[0].size() >= 2) overlapped += r.segment.duration();
  }
  return speech > 0.0 ? overlapped / speech : 0.0;
}

namespace detail {

struct Turn {
  int speaker;
  double length;
  double pause;
  double overlap_share;  // in [0.25, 1]
};

// Lays the turns out with overlap intensity alpha in [0, 1]: each transition
// either pauses (scaled by 1 - alpha) or pulls the next onset back into the
// current turn by alpha * share * min(len, next len) / 2.
inline Diarization place_turns(const std::vector<Turn>& turns, double alpha, double duration,
                               const std::string& session) {
  Diarization d{session, {}};
  double onset = 0.0;
  for (std::size_t i = 0; i < turns.size() && onset < duration - kMinTurn * 0.5; ++i) {
    const double offset = std::min(onset + turns[i].length, duration);
    if (offset - onset > kTimeTol) {
      d.segments.push_back({{onset, offset}, speaker_name(turns[i].speaker)});
    }
    if (i + 1 == turns.size()) break;
    const double shortest = std::min(turns[i].length, turns[i + 1].length);
    const double pull = alpha * turns[i].overlap_share * 0.5 * shortest;
    onset = offset + (1.0 - alpha) * turns[i].pause - pull;
    onset = snap_to_grid(onset);
  }
  for (auto& s : d.segments) {
    s.segment.onset = snap_to_grid(s.segment.onset);
    s.segment.offset = snap_to_grid(s.segment.offset);
  }
  return normalize(d);
}

}  // namespace detail

// Alternating turns with exponential lengths; the overlap intensity is found
// by bisection so the realized overlap fraction approaches overlap_ratio.
// Times are on the kTimeGrid frame grid.
inline Diarization gen_diarization(const SessionSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "diarization"));

  std::vector<int> first(static_cast<std::size_t>(spec.n_speakers));
  for (int i = 0; i < spec.n_speakers; ++i) first[static_cast<std::size_t>(i)] = i;
  rng.shuffle(first);

  std::vector<detail::Turn> turns;
  double budget = 0.0;
  int current = -1;
  while (budget < 2.0 * spec.duration + 10.0 * spec.mean_turn) {
    int speaker;
    if (turns.size() < first.size()) {
      speaker = first[turns.size()];
    } else if (spec.n_speakers == 1) {
      speaker = 0;
    } else {
      speaker = static_cast<int>(rng.below(static_cast<std::size_t>(spec.n_speakers - 1)));
      if (speaker >= current) ++speaker;
    }
    detail::Turn t{speaker, kMinTurn + rng.exponential(std::max(spec.mean_turn - kMinTurn, 1e-3)),
                   rng.exponential(kMeanPause), 0.25 + 0.75 * rng.uniform()};
    if (spec.n_speakers == 1) t.overlap_share = 0.0;
    budget += t.length;
    turns.push_back(t);
    current = speaker;
  }

  if (spec.overlap_ratio == 0.0 || spec.n_speakers == 1) {
    return detail::place_turns(turns, 0.0, spec.duration, spec.session);
  }
  double lo = 0.0, hi = 1.0;
  Diarization best = detail::place_turns(turns, hi, spec.duration, spec.session);
  double best_err = std::abs(overlap_fraction(best) - spec.overlap_ratio);
  for (int iter = 0; iter < 30 && best_err > 1e-3; ++iter) {
    const double mid = 0.5 * (lo + hi);
    Diarization d = detail::place_turns(turns, mid, spec.duration, spec.session);
    const double realized = overlap_fraction(d);
    const double err = std::abs(realized - spec.overlap_ratio);
    if (err < best_err) {
      best_err = err;
      best = std::move(d);
    }
    if (realized < spec.overlap_ratio) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return best;
}

inline std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

inline double angle_deg(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double c = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

// Unit vectors with pairwise angle >= separation_deg. For n <= dim and
// separation <= 90 degrees this is a random orthonormal set; otherwise
// bounded rejection sampling.
inline std::vector<std::vector<double>> gen_prototypes(int n, std::size_t dim, double separation_deg,
                                                       std::uint64_t seed) {
  if (n < 1 || dim < 1) throw Error(ErrorKind::kInvalidArgument, "gen_prototypes: n and dim must be >= 1");
  Rng rng(derive_seed(seed, "prototypes"));
  std::vector<std::vector<double>> out;

  if (static_cast<std::size_t>(n) <= dim && separation_deg <= 90.0) {
    while (out.size() < static_cast<std::size_t>(n)) {
      auto v = random_unit(dim, rng);
      for (const auto& u : out) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += u[k] * v[k];
        for (std::size_t k = 0; k < dim; ++k) v[k] -= dot * u[k];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (auto& x : v) x /= norm;
      out.push_back(std::move(v));
    }
    return out;
  }

  constexpr int kMaxAttempts = 100000;
  for (int attempt = 0; attempt < kMaxAttempts && out.size() < static_cast<std::size_t>(n); ++attempt) {
    auto v = random_unit(dim, rng);
    bool ok = true;
    for (const auto& u : out) ok = ok && angle_deg(u, v) >= separation_deg;
    if (ok) out.push_back(std::move(v));
  }
  if (out.size() < static_cast<std::size_t>(n)) {
    throw Error(ErrorKind::kInvalidArgument, "gen_prototypes: infeasible packing of " + std::to_string(n) +
                                                 " vectors at " + std::to_string(separation_deg) + " degrees");
  }
  return out;
}

using Prototypes = std::map<std::string, std::vector<double>>;

inline Prototypes name_prototypes(const std::vector<std::vector<double>>& vectors) {
  Prototypes out;
  for (std::size_t i = 0; i < vectors.size(); ++i) out[speaker_name(static_cast<int>(i))] = vectors[i];
  return out;
}

// Rotates `base` (unit) by a random tangent displacement whose RMS geodesic
// angle is noise_deg.
inline std::vector<double> perturb(const std::vector<double>& base, double noise_deg, Rng& rng) {
  const std::size_t dim = base.size();
  if (noise_deg <= 0.0 || dim < 2) return base;
  const double sigma = noise_deg * std::numbers::pi / 180.0 / std::sqrt(static_cast<double>(dim - 1));
  std::vector<double> t(dim);
  double dot = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    t[k] = sigma * rng.normal();
    dot += t[k] * base[k];
  }
  double theta = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    t[k] -= dot * base[k];
    theta += t[k] * t[k];
  }
  theta = std::sqrt(theta);
  if (theta == 0.0) return base;
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    out[k] = std::cos(theta) * base[k] + std::sin(theta) * t[k] / theta;
  }
  return out;
}

// One embedding per window over the union of speech. A window's clean vector
// is the duration-weighted mixture of the prototypes active in it.
inline EmbeddingSequence gen_embeddings(const Diarization& d, const Prototypes& prototypes,
                                        const WindowingPolicy& policy, double noise_deg,
                                        std::uint64_t seed) {
  const auto speakers = d.speakers();
  std::size_t dim = 0;
  for (const auto& s : speakers) {
    auto it = prototypes.find(s);
    if (it == prototypes.end()) throw Error(ErrorKind::kInvalidArgument, "gen_embeddings: no prototype for '" + s + "'");
    dim = it->second.size();
  }
  if (dim == 0 && !prototypes.empty()) dim = prototypes.begin()->second.size();

  Rng rng(derive_seed(seed, "embeddings"));
  EmbeddingSequence seq{d.session, dim, {}};
  for (const auto& w : subsegment(speech_union(d), policy)) {
    std::vector<double> mix(dim, 0.0);
    for (const auto& s : d.segments) {
      const double share = overlap_length(w, s.segment);
      if (share <= 0.0) continue;
      const auto& p = prototypes.at(s.speaker);
      for (std::size_t k = 0; k < dim; ++k) mix[k] += share * p[k];
    }
    double norm = 0.0;
    for (double x : mix) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (auto& x : mix) x /= norm;
    const auto v = perturb(mix, noise_deg, rng);
    EmbeddingRecord r{w, std::vector<float>(dim)};
    for (std::size_t k = 0; k < dim; ++k) r.vector[k] = static_cast<float>(v[k]);
    seq.records.push_back(std::move(r));
  }
  return seq;
}

// Stand-in for a TS-VAD forward pass: each non-padding prompt is matched to
// its nearest prototype by cosine and receives that speaker's true activity;
// then every cell flips with probability confusion_noise. The noise stream
// is reseeded on every call, so identical prompts give identical output.
inline ActivityOracle gen_oracle(const Diarization& d_true, const Prototypes& prototypes,
                                 double confusion_noise, std::uint64_t seed, double frame_shift = 0.08) {
  double end = 0.0;
  for (const auto& s : d_true.segments) end = std::max(end, s.segment.offset);
  const std::size_t frames = frames_for(end, frame_shift);
  const auto truth = segments_to_activity(d_true, frame_shift, d_true.speakers(), frames);

  return [truth, prototypes, confusion_noise, seed, frames](const std::string& session,
                                                            std::span<const Prompt> prompts) {
    ActivityMatrix m;
    m.session = session;
    m.frame_shift = truth.frame_shift;
    m.frames = frames;
    for (const auto& p : prompts) m.speakers.push_back(p.speaker);
    m.probs.assign(frames * prompts.size(), 0.0f);

    for (std::size_t c = 0; c < prompts.size(); ++c) {
      const auto& p = prompts[c];
      if (p.is_padding()) continue;
      double best = -2.0;
      std::string match;
      for (const auto& [name, proto] : prototypes) {
        double dot = 0.0;
        for (std::size_t k = 0; k < proto.size() && k < p.vector.size(); ++k) dot += proto[k] * p.vector[k];
        if (dot > best) {
          best = dot;
          match = name;
        }
      }
      auto it = std::find(truth.speakers.begin(), truth.speakers.end(), match);
      if (it == truth.speakers.end()) continue;
      const auto src = static_cast<std::size_t>(it - truth.speakers.begin());
      for (std::size_t t = 0; t < frames; ++t) m.at(t, c) = truth.at(t, src);
    }

    if (confusion_noise > 0.0) {
      Rng rng(derive_seed(seed, "oracle"));
      for (auto& x : m.probs) {
        if (rng.uniform() < confusion_noise) x = 1.0f - x;
      }
    }
    return m;
  };
}

// Default alphabet for synthetic Mandarin-like text.
inline std::u32string default_alphabet() {
  return U"的一是在不了有和人这中大为上个国我以要他时来用们生到作地于出就分对成会可主发年动同工也能下过子说产种面而方后多定行学法所民得经十三之进着等部度家电力里如水化高自二理起小物现实加量都两体制机当使点从业本去把性好应开它合还因由其些然前外天政四日那社义事平形相全表间样与关各重新线内数正心反你明看原又么利比或但质气第向道命此变条只没结解问意建月公无系军很情者最立代想已通并提直题党程展五果料象员革位入常文总次品式活设及管特件长求老头基资边流路级少图山统接知较将组见计别她手角期根论运农指几九区强放决西被干做必战先回则任取据处理";
}

// Roughly chars_per_second characters of random alphabet text per segment.
inline AttributedTranscript gen_transcript(const Diarization& d, const std::u32string& alphabet,
                                           double chars_per_second, std::uint64_t seed) {
  if (alphabet.empty()) throw Error(ErrorKind::kInvalidArgument, "gen_transcript: empty alphabet");
  Rng rng(derive_seed(seed, "transcript"));
  AttributedTranscript t{d.session, {}};
  for (const auto& s : d.segments) {
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s.segment.duration() * chars_per_second)));
    std::u32string text;
    for (std::size_t i = 0; i < n; ++i) text.push_back(alphabet[rng.below(alphabet.size())]);
    t.utterances.push_back({s.speaker, s.segment, u32_to_utf8(text)});
  }
  return t;
}

// Applies round(target_cer * N) edits at distinct character positions of the
// session (N = total reference characters), cycling substitution, deletion
// and insertion in a shuffled order.
inline AttributedTranscript corrupt_transcript(const AttributedTranscript& ref, double target_cer,
                                               const std::u32string& alphabet, std::uint64_t seed) {
  if (!(target_cer >= 0.0 && target_cer < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "target_cer must be in [0, 1)");
  }
  if (target_cer == 0.0) return ref;
  if (alphabet.size() < 2) throw Error(ErrorKind::kInvalidArgument, "corrupt_transcript: alphabet needs >= 2 symbols");

  Rng rng(derive_seed(seed, "corrupt"));
  std::vector<std::u32string> texts;
  std::vector<std::pair<std::size_t, std::size_t>> positions;
  for (std::size_t u = 0; u < ref.utterances.size(); ++u) {
    texts.push_back(utf8_to_u32(ref.utterances[u].text));
    for (std::size_t c = 0; c < texts.back().size(); ++c) positions.emplace_back(u, c);
  }
  const auto edits = static_cast<std::size_t>(std::llround(target_cer * static_cast<double>(positions.size())));
  rng.shuffle(positions);
  positions.resize(std::min(edits, positions.size()));

  // 0 substitute, 1 delete, 2 insert-after
  std::vector<int> kinds(positions.size());
  for (std::size_t i = 0; i < kinds.size(); ++i) kinds[i] = static_cast<int>(i % 3);
  rng.shuffle(kinds);

  std::vector<std::map<std::size_t, int>> plan(texts.size());
  for (std::size_t i = 0; i < positions.size(); ++i) plan[positions[i].first][positions[i].second] = kinds[i];

  auto other = [&](char32_t c) {
    char32_t x = c;
    while (x == c) x = alphabet[rng.below(alphabet.size())];
    return x;
  };

  AttributedTranscript out = ref;
  for (std::size_t u = 0; u < texts.size(); ++u) {
    std::u32string text;
    for (std::size_t c = 0; c < texts[u].size(); ++c) {
      auto it = plan[u].find(c);
      const int kind = it == plan[u].end() ? -1 : it->second;
      if (kind == 0) {
        text.push_back(other(texts[u][c]));
      } else if (kind == 1) {
        continue;
      } else {
        text.push_back(texts[u][c]);
        if (kind == 2) text.push_back(alphabet[rng.below(alphabet.size())]);
      }
    }
    out.utterances[u].text = u32_to_utf8(text);
  }
  return out;
}

}  // namespace ppmet::sim
