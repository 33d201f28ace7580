#pragma once

// Post-processing of target-speaker VAD posteriors into segments, and the
// decode-time prompt refinement loop around a pluggable activity oracle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppmet/error.hpp"
#include "ppmet/ingest.hpp"
#include "ppmet/timeline.hpp"
#include "ppmet/types.hpp"
#include "ppmet/windowing.hpp"

namespace ppmet {

struct PostPolicy {
  int median_width = 11;
  double threshold = 0.5;
  double min_on = 0.2;
  double min_off = 0.3;

  void validate() const {
    if (median_width < 1 || median_width % 2 == 0) {
      throw Error(ErrorKind::kInvalidArgument, "median width must be odd and >= 1");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
      throw Error(ErrorKind::kInvalidArgument, "threshold must be in (0, 1)");
    }
    if (min_on < 0.0 || min_off < 0.0) {
      throw Error(ErrorKind::kInvalidArgument, "min_on/min_off must be non-negative");
    }
  }
};

// Given the session and the prompts, returns posteriors whose columns follow
// the prompt order. Must be deterministic for identical inputs.
using ActivityOracle =
    std::function<ActivityMatrix(const std::string& session, std::span<const Prompt> prompts)>;

// Per-column running median with edge replication.
inline ActivityMatrix smooth(const ActivityMatrix& m, int width) {
  if (width < 1 || width % 2 == 0) {
    throw Error(ErrorKind::kInvalidArgument, "median width must be odd and >= 1");
  }
  if (width == 1) return m;
  ActivityMatrix out = m;
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  const auto frames = static_cast<std::ptrdiff_t>(m.frames);
  std::vector<float> window(static_cast<std::size_t>(width));
  for (std::size_t s = 0; s < m.num_speakers(); ++s) {
    for (std::ptrdiff_t t = 0; t < frames; ++t) {
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const auto src = std::clamp<std::ptrdiff_t>(t + k, 0, frames - 1);
        window[static_cast<std::size_t>(k + half)] = m.at(static_cast<std::size_t>(src), s);
      }
      std::nth_element(window.begin(), window.begin() + half, window.end());
      out.at(static_cast<std::size_t>(t), s) = window[static_cast<std::size_t>(half)];
    }
  }
  return out;
}

inline Diarization binarize(const ActivityMatrix& m, const PostPolicy& policy = {}) {
  policy.validate();
  Diarization d{m.session, {}};
  const double shift = m.frame_shift;
  for (std::size_t s = 0; s < m.num_speakers(); ++s) {
    if (is_padding_label(m.speakers[s])) continue;
    std::vector<Segment> runs;
    std::size_t t = 0;
    while (t < m.frames) {
      if (m.at(t, s) < policy.threshold) {
        ++t;
        continue;
      }
      const std::size_t start = t;
      while (t < m.frames && m.at(t, s) >= policy.threshold) ++t;
      Segment seg{static_cast<double>(start) * shift, static_cast<double>(t) * shift};
      if (!runs.empty() && seg.onset - runs.back().offset < policy.min_off - kTimeTol) {
        runs.back().offset = seg.offset;
      } else {
        runs.push_back(seg);
      }
    }
    for (const auto& r : runs) {
      if (r.duration() >= policy.min_on - kTimeTol) d.segments.push_back({r, m.speakers[s]});
    }
  }
  return normalize(d);
}

inline std::size_t frames_for(double duration, double frame_shift) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(duration / frame_shift - 1e-9)));
}

// Frame t is on for a speaker when its center (t + 0.5) * shift lies inside
// one of the speaker's segments. `frames` defaults to covering the last offset.
inline ActivityMatrix segments_to_activity(const Diarization& d, double frame_shift,
                                           const std::vector<std::string>& speakers,
                                           std::optional<std::size_t> frames = {}) {
  if (!(frame_shift > 0.0)) throw Error(ErrorKind::kInvalidArgument, "frame_shift must be positive");
  double end = 0.0;
  for (const auto& s : d.segments) end = std::max(end, s.segment.offset);

  ActivityMatrix m;
  m.session = d.session;
  m.frame_shift = frame_shift;
  m.speakers = speakers;
  m.frames = frames.value_or(frames_for(end, frame_shift));
  m.probs.assign(m.frames * speakers.size(), 0.0f);
  for (const auto& s : d.segments) {
    auto it = std::find(speakers.begin(), speakers.end(), s.speaker);
    if (it == speakers.end()) {
      throw Error(ErrorKind::kInvalidArgument, "segments_to_activity: unknown speaker '" + s.speaker + "'");
    }
    const auto col = static_cast<std::size_t>(it - speakers.begin());
    // First frame whose center is >= onset, last whose center is < offset.
    const double first = std::ceil(s.segment.onset / frame_shift - 0.5) - 1.0;
    for (auto t = static_cast<std::size_t>(std::max(0.0, first)); t < m.frames; ++t) {
      const double center = (static_cast<double>(t) + 0.5) * frame_shift;
      if (center >= s.segment.offset) break;
      if (center >= s.segment.onset) m.at(t, col) = 1.0f;
    }
  }
  return m;
}

struct RefineResult {
  Diarization diarization;
  std::vector<Prompt> prompts;
  std::vector<Diarization> iterations;  // [0] is the initial diarization
};

struct RefineOptions {
  PostPolicy policy;
  int iterations = 1;
  std::size_t max_speakers = 4;
  double min_inside = 1.0;
};

// Prompts for every speaker of `d`, capped at max_speakers (lowest support
// dropped first) and zero-padded up to it.
inline std::vector<Prompt> session_prompts(const Diarization& d, const EmbeddingSequence& emb,
                                           std::size_t max_speakers, double min_inside = 1.0) {
  auto prompts = extract_prompts(d, emb, min_inside);
  if (prompts.size() > max_speakers) {
    std::stable_sort(prompts.begin(), prompts.end(),
                     [](const Prompt& a, const Prompt& b) { return a.support > b.support; });
    prompts.resize(max_speakers);
    std::sort(prompts.begin(), prompts.end(),
              [](const Prompt& a, const Prompt& b) { return a.speaker < b.speaker; });
  }
  return pad_prompts(std::move(prompts), max_speakers);
}

inline RefineResult refine(const Diarization& d0, const EmbeddingSequence& emb,
                           const ActivityOracle& oracle, const RefineOptions& options = {}) {
  if (options.iterations < 0) throw Error(ErrorKind::kInvalidArgument, "iterations must be >= 0");
  options.policy.validate();

  RefineResult result;
  result.diarization = normalize(d0);
  result.iterations.push_back(result.diarization);
  result.prompts = session_prompts(result.diarization, emb, options.max_speakers, options.min_inside);

  for (int iter = 1; iter <= options.iterations; ++iter) {
    ActivityMatrix m;
    try {
      m = oracle(d0.session, result.prompts);
      if (m.speakers.size() != result.prompts.size()) {
        throw Error(ErrorKind::kDimMismatch, "oracle returned " + std::to_string(m.speakers.size()) +
                                                 " columns for " +
                                                 std::to_string(result.prompts.size()) + " prompts");
      }
      validate_activity(m);
    } catch (const std::exception& e) {
      throw OracleError("oracle failed at iteration " + std::to_string(iter) + ": " + e.what(), iter);
    }
    for (std::size_t s = 0; s < result.prompts.size(); ++s) m.speakers[s] = result.prompts[s].speaker;
    m.session = d0.session;

    Diarization d = binarize(smooth(m, options.policy.median_width), options.policy);
    if (d.segments.empty()) {
      throw OracleError("oracle output at iteration " + std::to_string(iter) + " has no speech", iter);
    }
    result.diarization = d;
    result.iterations.push_back(d);
    result.prompts = session_prompts(d, emb, options.max_speakers, options.min_inside);
  }
  return result;
}

}  // namespace ppmet
