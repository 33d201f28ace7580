#pragma once

// Sub-segmentation of speech into embedding windows, and pooling of window
// embeddings into per-speaker prompts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ppmet/error.hpp"
#include "ppmet/timeline.hpp"
#include "ppmet/types.hpp"

namespace ppmet {

struct WindowingPolicy {
  double window = 3.0;
  double shift = 1.5;
  double min_window = 1.5;

  void validate() const {
    if (!(window > 0.0)) throw Error(ErrorKind::kInvalidArgument, "window must be positive");
    if (!(shift > 0.0)) throw Error(ErrorKind::kInvalidArgument, "shift must be positive");
    if (shift > window) throw Error(ErrorKind::kInvalidArgument, "shift > window");
    if (!(min_window > 0.0) || min_window > window) {
      throw Error(ErrorKind::kInvalidArgument, "min_window must be in (0, window]");
    }
  }
};

struct Prompt {
  std::string speaker;
  std::vector<double> vector;
  double support = 0.0;  // seconds of pooled speech; 0 iff padding

  bool is_padding() const { return support == 0.0; }

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

// Windows shorter than min_window come from VAD segments too short for a
// regular window; they are kept but callers may treat them as low-confidence.
inline bool is_short_window(const Segment& w, const WindowingPolicy& policy) {
  return w.duration() < policy.min_window - kTimeTol;
}

inline std::vector<Segment> subsegment(const std::vector<Segment>& vad,
                                       const WindowingPolicy& policy) {
  policy.validate();
  std::vector<Segment> out;
  for (const auto& seg : vad) {
    const double length = seg.duration();
    if (length < policy.window - kTimeTol) {
      out.push_back(seg);
      continue;
    }
    double last_end = seg.onset;
    for (std::size_t k = 0;; ++k) {
      const double start = seg.onset + static_cast<double>(k) * policy.shift;
      if (start + policy.window > seg.offset + kTimeTol) break;
      last_end = start + policy.window;
      out.push_back({start, std::min(last_end, seg.offset)});
    }
    if (last_end < seg.offset - kTimeTol) out.push_back({seg.offset - policy.window, seg.offset});
  }
  std::stable_sort(out.begin(), out.end(), [](const Segment& a, const Segment& b) {
    return a.onset < b.onset;
  });
  return out;
}

// L2-normalizes every input, averages, and normalizes the mean.
template <typename Vectors>
std::vector<double> pool(const Vectors& vectors) {
  if (std::begin(vectors) == std::end(vectors)) {
    throw Error(ErrorKind::kEmpty, "pool: no vectors");
  }
  std::vector<double> mean;
  std::size_t count = 0;
  for (const auto& v : vectors) {
    if (mean.empty()) mean.assign(std::size(v), 0.0);
    if (std::size(v) != mean.size()) throw Error(ErrorKind::kDimMismatch, "pool: dim mismatch");
    double norm = 0.0;
    for (auto x : v) {
      if (!std::isfinite(static_cast<double>(x))) throw Error(ErrorKind::kNonFinite, "pool: non-finite component");
      norm += static_cast<double>(x) * static_cast<double>(x);
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error(ErrorKind::kDegenerate, "pool: zero vector");
    std::size_t k = 0;
    for (auto x : v) mean[k++] += static_cast<double>(x) / norm;
    ++count;
  }
  double norm = 0.0;
  for (auto& x : mean) {
    x /= static_cast<double>(count);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm < 1e-9) throw Error(ErrorKind::kDegenerate, "pool: degenerate mean (norm < 1e-9)");
  for (auto& x : mean) x /= norm;
  return mean;
}

inline Prompt padding_prompt(std::string label, std::size_t dim) {
  return {std::move(label), std::vector<double>(dim, 0.0), 0.0};
}

// Overlap of `w` with a sorted disjoint interval list, as a fraction of |w|.
inline double covered_fraction(const Segment& w, const std::vector<Segment>& regions) {
  double covered = 0.0;
  for (const auto& r : regions) {
    if (r.onset >= w.offset) break;
    covered += overlap_length(w, r);
  }
  return w.duration() > 0.0 ? covered / w.duration() : 0.0;
}

// One prompt per speaker of `d`, in label order. Windows are selected by the
// fraction of their span lying in the speaker's solo speech: first at
// `min_inside`, then at 0.5, then any window touching the speaker at all.
// A speaker with no qualifying window gets a zero padding prompt.
inline std::vector<Prompt> extract_prompts(const Diarization& d, const EmbeddingSequence& emb,
                                           double min_inside = 1.0) {
  const auto speakers = d.speakers();
  if (speakers.empty()) throw Error(ErrorKind::kEmpty, "extract_prompts: no speakers");

  std::vector<Prompt> prompts;
  for (const auto& speaker : speakers) {
    const auto solo = single_speaker_regions(d, speaker);
    const auto all = speaker_segments(d, speaker);

    auto select = [&](auto&& accept) {
      std::vector<const EmbeddingRecord*> chosen;
      for (const auto& r : emb.records) {
        if (r.segment.duration() > 0.0 && accept(r.segment)) chosen.push_back(&r);
      }
      return chosen;
    };
    constexpr double eps = 1e-9;
    auto chosen = select([&](const Segment& w) { return covered_fraction(w, solo) >= min_inside - eps; });
    if (chosen.empty() && min_inside > 0.5) {
      chosen = select([&](const Segment& w) { return covered_fraction(w, solo) >= 0.5 - eps; });
    }
    if (chosen.empty()) {
      chosen = select([&](const Segment& w) { return covered_fraction(w, all) > 0.0; });
    }
    if (chosen.empty()) {
      prompts.push_back(padding_prompt(speaker, emb.dim));
      continue;
    }

    std::vector<std::vector<float>> vectors;
    double support = 0.0;
    for (const auto* r : chosen) {
      vectors.push_back(r->vector);
      support += r->segment.duration();
    }
    prompts.push_back({speaker, pool(vectors), support});
  }
  return prompts;
}

inline std::vector<Prompt> pad_prompts(std::vector<Prompt> prompts, std::size_t target_count) {
  if (target_count < prompts.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "pad_prompts: " + std::to_string(prompts.size()) + " prompts exceed target " +
                    std::to_string(target_count));
  }
  const std::size_t dim = prompts.empty() ? 0 : prompts.front().vector.size();
  for (std::size_t i = prompts.size(), pad = 1; i < target_count; ++i, ++pad) {
    prompts.push_back(padding_prompt(padding_label(pad), dim));
  }
  return prompts;
}

// Prompts travel as PPEMB1 records with zero-length spans at t = 0.
inline EmbeddingSequence prompts_to_embeddings(const std::string& session,
                                               const std::vector<Prompt>& prompts,
                                               std::size_t dim) {
  EmbeddingSequence seq{session, dim, {}};
  for (const auto& p : prompts) {
    EmbeddingRecord r{{0.0, 0.0}, std::vector<float>(dim, 0.0f)};
    for (std::size_t k = 0; k < dim && k < p.vector.size(); ++k) {
      r.vector[k] = static_cast<float>(p.vector[k]);
    }
    seq.records.push_back(std::move(r));
  }
  return seq;
}

}  // namespace ppmet
