#pragma once

// Interval algebra over speaker-labelled segments.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ppmet/error.hpp"

namespace ppmet {

// Absolute tolerance, in seconds, for every time comparison.
inline constexpr double kTimeTol = 1e-6;

struct Segment {
  double onset = 0.0;
  double offset = 0.0;

  double duration() const { return offset - onset; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct SpeakerSegment {
  Segment segment;
  std::string speaker;

  friend bool operator==(const SpeakerSegment&, const SpeakerSegment&) = default;
};

struct Diarization {
  std::string session;
  std::vector<SpeakerSegment> segments;

  std::vector<std::string> speakers() const {
    std::set<std::string> labels;
    for (const auto& s : segments) labels.insert(s.speaker);
    return {labels.begin(), labels.end()};
  }

  friend bool operator==(const Diarization&, const Diarization&) = default;
};

inline bool is_valid(const Segment& s) {
  return std::isfinite(s.onset) && std::isfinite(s.offset) && s.onset >= 0.0 &&
         s.offset - s.onset > kTimeTol;
}

inline double overlap_length(const Segment& a, const Segment& b) {
  return std::max(0.0, std::min(a.offset, b.offset) - std::max(a.onset, b.onset));
}

inline bool segment_order(const SpeakerSegment& a, const SpeakerSegment& b) {
  if (a.segment.onset != b.segment.onset) return a.segment.onset < b.segment.onset;
  if (a.speaker != b.speaker) return a.speaker < b.speaker;
  return a.segment.offset < b.segment.offset;
}

inline void validate(const Diarization& d) {
  for (std::size_t i = 0; i < d.segments.size(); ++i) {
    const auto& s = d.segments[i];
    if (!is_valid(s.segment)) {
      throw RecordError(ErrorKind::kInvalidSegment,
                        "invalid segment at index " + std::to_string(i) + " (onset " +
                            std::to_string(s.segment.onset) + ", offset " +
                            std::to_string(s.segment.offset) + ")",
                        i);
    }
    if (s.speaker.empty()) {
      throw RecordError(ErrorKind::kInvalidSegment,
                        "empty speaker label at index " + std::to_string(i), i);
    }
  }
}

// Merges a sorted-by-onset list of intervals; touching intervals merge too.
inline std::vector<Segment> merge_intervals(std::vector<Segment> xs) {
  std::sort(xs.begin(), xs.end(), [](const Segment& a, const Segment& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.offset < b.offset;
  });
  std::vector<Segment> out;
  for (const auto& s : xs) {
    if (!out.empty() && s.onset <= out.back().offset + kTimeTol) {
      out.back().offset = std::max(out.back().offset, s.offset);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

inline Diarization normalize(const Diarization& d) {
  validate(d);
  std::map<std::string, std::vector<Segment>> by_speaker;
  for (const auto& s : d.segments) by_speaker[s.speaker].push_back(s.segment);

  Diarization out{d.session, {}};
  for (auto& [speaker, segs] : by_speaker) {
    for (const auto& s : merge_intervals(std::move(segs))) {
      out.segments.push_back({s, speaker});
    }
  }
  std::sort(out.segments.begin(), out.segments.end(), segment_order);
  return out;
}

inline std::vector<Segment> speaker_segments(const Diarization& d, const std::string& speaker) {
  std::vector<Segment> out;
  for (const auto& s : d.segments) {
    if (s.speaker == speaker) out.push_back(s.segment);
  }
  return out;
}

// Union of all speech in the diarization, regardless of speaker.
inline std::vector<Segment> speech_union(const Diarization& d) {
  std::vector<Segment> all;
  all.reserve(d.segments.size());
  for (const auto& s : d.segments) all.push_back(s.segment);
  return merge_intervals(std::move(all));
}

struct Region {
  Segment segment;
  // active[i] is the sorted set of speakers active in input i.
  std::vector<std::vector<std::string>> active;
};

// Partitions the union of speech across all inputs into maximal pieces over
// which every input's active-speaker set is constant. Inputs must be
// normalized; event times closer than kTimeTol are snapped together.
inline std::vector<Region> homogeneous_regions(const std::vector<Diarization>& ds) {
  if (ds.empty()) throw Error(ErrorKind::kEmpty, "homogeneous_regions: no inputs");

  struct Event {
    double time;
    int delta;  // -1 end, +1 start
    std::size_t input;
    const std::string* speaker;
  };
  std::vector<Event> events;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (const auto& s : ds[i].segments) {
      events.push_back({s.segment.onset, +1, i, &s.speaker});
      events.push_back({s.segment.offset, -1, i, &s.speaker});
    }
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.time < b.time;
  });

  std::vector<std::multiset<std::string>> active(ds.size());
  std::vector<Region> regions;
  std::size_t e = 0;
  while (e < events.size()) {
    const double t = events[e].time;
    while (e < events.size() && events[e].time <= t + kTimeTol) {
      auto& set = active[events[e].input];
      if (events[e].delta > 0) {
        set.insert(*events[e].speaker);
      } else {
        auto it = set.find(*events[e].speaker);
        if (it != set.end()) set.erase(it);
      }
      ++e;
    }
    if (e == events.size()) break;
    const double next = events[e].time;
    bool any = false;
    for (const auto& set : active) any = any || !set.empty();
    if (!any) continue;

    Region r{{t, next}, {}};
    r.active.reserve(ds.size());
    for (const auto& set : active) {
      std::vector<std::string> labels;
      for (const auto& l : set) {
        if (labels.empty() || labels.back() != l) labels.push_back(l);
      }
      r.active.push_back(std::move(labels));
    }
    regions.push_back(std::move(r));
  }
  return regions;
}

inline std::vector<Segment> single_speaker_regions(const Diarization& d,
                                                   const std::string& speaker) {
  std::vector<Segment> out;
  for (const auto& r : homogeneous_regions({d})) {
    const auto& set = r.active[0];
    if (set.size() == 1 && set[0] == speaker) {
      if (!out.empty() && r.segment.onset <= out.back().offset + kTimeTol) {
        out.back().offset = r.segment.offset;
      } else {
        out.push_back(r.segment);
      }
    }
  }
  return out;
}

inline double total_speech(const Diarization& d) {
  double total = 0.0;
  for (const auto& s : d.segments) total += s.segment.duration();
  return total;
}

// Total time during which both speakers' segment lists are active. Both lists
// must be sorted and internally disjoint.
inline double co_occurrence(const std::vector<Segment>& a, const std::vector<Segment>& b) {
  double total = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    total += overlap_length(a[i], b[j]);
    if (a[i].offset < b[j].offset) {
      ++i;
    } else {
      ++j;
    }
  }
  return total;
}

inline Diarization relabel(const Diarization& d, const std::map<std::string, std::string>& names) {
  Diarization out{d.session, {}};
  out.segments.reserve(d.segments.size());
  for (const auto& s : d.segments) {
    auto it = names.find(s.speaker);
    out.segments.push_back({s.segment, it == names.end() ? s.speaker : it->second});
  }
  return normalize(out);
}

}  // namespace ppmet
