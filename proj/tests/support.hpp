#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "ppmet/ppmet.hpp"

namespace testing_support {

using ppmet::Diarization;
using ppmet::Segment;

struct Seg {
  std::string speaker;
  double onset;
  double offset;
};

inline Diarization make_d(std::vector<Seg> segs, std::string session = "S1") {
  Diarization d{std::move(session), {}};
  for (auto& s : segs) d.segments.push_back({{s.onset, s.offset}, s.speaker});
  return d;
}

// Random diarization with times on the millisecond grid.
inline Diarization random_d(std::mt19937_64& rng, int max_speakers, int max_segments, double span,
                            const std::string& prefix = "s") {
  std::uniform_int_distribution<int> n_spk(1, max_speakers), n_seg(1, max_segments);
  std::uniform_int_distribution<int> ms(0, static_cast<int>(span * 1000));
  std::uniform_int_distribution<int> len(50, 4000);
  const int speakers = n_spk(rng);
  const int segments = n_seg(rng);
  Diarization d{"S", {}};
  std::uniform_int_distribution<int> who(0, speakers - 1);
  for (int i = 0; i < segments; ++i) {
    const int start = ms(rng);
    const double on = start / 1000.0;
    const double off = (start + len(rng)) / 1000.0;
    d.segments.push_back({{on, off}, prefix + std::to_string(who(rng))});
  }
  return ppmet::normalize(d);
}

inline std::vector<std::string> active_at(const Diarization& d, double t) {
  std::set<std::string> s;
  for (const auto& x : d.segments) {
    if (x.segment.onset <= t && t < x.segment.offset) s.insert(x.speaker);
  }
  return {s.begin(), s.end()};
}

struct DerComponents {
  double miss = 0, fa = 0, confusion = 0, total = 0;
};

// Brute-force DER: elementary intervals between every boundary, activity
// probed at interval midpoints, minimum error over every partial injective
// hyp -> ref mapping.
inline DerComponents brute_force_der(const Diarization& ref_in, const Diarization& hyp_in, double collar = 0.0,
                                     bool score_overlap = true) {
  const auto ref = ppmet::normalize(ref_in);
  const auto hyp = ppmet::normalize(hyp_in);
  std::vector<double> cuts;
  std::vector<double> ref_bounds;
  for (const auto& s : ref.segments) {
    cuts.push_back(s.segment.onset);
    cuts.push_back(s.segment.offset);
    ref_bounds.push_back(s.segment.onset);
    ref_bounds.push_back(s.segment.offset);
    if (collar > 0) {
      for (double b : {s.segment.onset, s.segment.offset}) {
        cuts.push_back(std::max(0.0, b - collar));
        cuts.push_back(b + collar);
      }
    }
  }
  for (const auto& s : hyp.segments) {
    cuts.push_back(s.segment.onset);
    cuts.push_back(s.segment.offset);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  struct Piece {
    double dur;
    std::vector<std::string> r, h;
  };
  std::vector<Piece> pieces;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
    bool in_collar = false;
    for (double b : ref_bounds) in_collar = in_collar || std::abs(mid - b) < collar;
    if (in_collar) continue;
    auto r = active_at(ref, mid);
    if (!score_overlap && r.size() > 1) continue;
    pieces.push_back({cuts[i + 1] - cuts[i], r, active_at(hyp, mid)});
  }

  const auto rl = ref.speakers();
  const auto hl = hyp.speakers();
  // mapping[h] = index into rl or -1
  std::vector<int> mapping(hl.size(), -1);
  DerComponents best;
  double best_err = std::numeric_limits<double>::infinity();
  std::vector<bool> used(rl.size(), false);

  auto evaluate = [&] {
    DerComponents c;
    for (const auto& p : pieces) {
      const double nr = static_cast<double>(p.r.size()), nh = static_cast<double>(p.h.size());
      double correct = 0;
      for (const auto& h : p.h) {
        const int m = mapping[std::lower_bound(hl.begin(), hl.end(), h) - hl.begin()];
        if (m >= 0 && std::find(p.r.begin(), p.r.end(), rl[m]) != p.r.end()) correct += 1;
      }
      c.total += nr * p.dur;
      c.miss += std::max(0.0, nr - nh) * p.dur;
      c.fa += std::max(0.0, nh - nr) * p.dur;
      c.confusion += (std::min(nr, nh) - correct) * p.dur;
    }
    const double err = c.miss + c.fa + c.confusion;
    if (err < best_err - 1e-12) {
      best_err = err;
      best = c;
    }
  };
  auto rec = [&](auto&& self, std::size_t h) -> void {
    if (h == hl.size()) {
      evaluate();
      return;
    }
    mapping[h] = -1;
    self(self, h + 1);
    for (std::size_t r = 0; r < rl.size(); ++r) {
      if (used[r]) continue;
      used[r] = true;
      mapping[h] = static_cast<int>(r);
      self(self, h + 1);
      used[r] = false;
    }
    mapping[h] = -1;
  };
  rec(rec, 0);
  return best;
}

// Plain Levenshtein distance, no tie-breaking concerns.
inline long plain_levenshtein(const std::u32string& a, const std::u32string& b) {
  std::vector<long> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::u32string random_u32(std::mt19937_64& rng, std::size_t max_len, const std::u32string& alphabet) {
  std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, alphabet.size() - 1);
  std::u32string s;
  for (std::size_t i = len(rng); i > 0; --i) s.push_back(alphabet[pick(rng)]);
  return s;
}

}  // namespace testing_support
