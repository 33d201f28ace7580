#pragma once

// Overlap-aware fusion of diarization hypotheses: label mapping onto a common
// speaker space followed by weighted per-region voting.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ppmet/assignment.hpp"
#include "ppmet/error.hpp"
#include "ppmet/timeline.hpp"

namespace ppmet {

struct FusionPolicy {
  std::vector<double> weights;  // empty: uniform
  bool rank_weighting = false;  // input order is rank order, best first
};

// Per-hypothesis weights summing to one.
inline std::vector<double> fusion_weights(const FusionPolicy& policy, std::size_t m) {
  std::vector<double> w(m, 1.0);
  if (policy.rank_weighting) {
    for (std::size_t r = 0; r < m; ++r) w[r] = static_cast<double>(m - r);
  } else if (!policy.weights.empty()) {
    if (policy.weights.size() != m) {
      throw Error(ErrorKind::kInvalidArgument, "fusion: " + std::to_string(policy.weights.size()) +
                                                   " weights for " + std::to_string(m) +
                                                   " hypotheses");
    }
    for (double x : policy.weights) {
      if (!(x > 0.0) || !std::isfinite(x)) {
        throw Error(ErrorKind::kInvalidArgument, "fusion: weights must be positive");
      }
    }
    w = policy.weights;
  }
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

// Hypothesis 0 keeps its labels. Every later hypothesis is matched against the
// weighted union of the already-mapped ones by maximum total overlap;
// speakers left unmatched get fresh labels.
inline std::vector<Diarization> map_labels(const std::vector<Diarization>& ds,
                                           const FusionPolicy& policy = {}) {
  if (ds.empty()) throw Error(ErrorKind::kEmpty, "map_labels: no hypotheses");
  const auto weights = fusion_weights(policy, ds.size());

  std::vector<Diarization> mapped;
  mapped.push_back(normalize(ds[0]));
  std::set<std::string> used;
  for (const auto& l : mapped[0].speakers()) used.insert(l);

  for (std::size_t h = 1; h < ds.size(); ++h) {
    const Diarization hyp = normalize(ds[h]);
    const std::vector<std::string> common(used.begin(), used.end());
    const auto hyp_labels = hyp.speakers();

    CostMatrix<double> overlap(hyp_labels.size(), std::vector<double>(common.size(), 0.0));
    for (std::size_t i = 0; i < hyp_labels.size(); ++i) {
      const auto segs = speaker_segments(hyp, hyp_labels[i]);
      for (std::size_t j = 0; j < common.size(); ++j) {
        for (std::size_t prev = 0; prev < mapped.size(); ++prev) {
          overlap[i][j] += weights[prev] * co_occurrence(speaker_segments(mapped[prev], common[j]), segs);
        }
      }
    }
    const auto match = max_weight_assignment(overlap);

    std::map<std::string, std::string> names;
    std::set<std::string> taken;
    for (std::size_t i = 0; i < hyp_labels.size(); ++i) {
      if (match[i]) {
        names[hyp_labels[i]] = common[*match[i]];
        taken.insert(common[*match[i]]);
      }
    }
    for (std::size_t i = 0; i < hyp_labels.size(); ++i) {
      if (match[i]) continue;
      std::string fresh = hyp_labels[i];
      for (int suffix = 1; used.count(fresh) || taken.count(fresh); ++suffix) {
        fresh = hyp_labels[i] + "_" + std::to_string(h) + (suffix > 1 ? "_" + std::to_string(suffix) : "");
      }
      names[hyp_labels[i]] = fresh;
      taken.insert(fresh);
    }
    for (const auto& l : taken) used.insert(l);
    mapped.push_back(relabel(hyp, names));
  }
  return mapped;
}

// Weighted-mean speaker count, rounded half up.
inline std::size_t voted_speaker_count(const std::vector<std::vector<std::string>>& active,
                                       const std::vector<double>& weights) {
  double mean = 0.0;
  for (std::size_t h = 0; h < active.size(); ++h) mean += weights[h] * static_cast<double>(active[h].size());
  return static_cast<std::size_t>(std::floor(mean + 0.5 + 1e-9));
}

inline Diarization vote(const std::vector<Diarization>& ds, const FusionPolicy& policy = {}) {
  if (ds.empty()) throw Error(ErrorKind::kEmpty, "vote: no hypotheses");
  const auto weights = fusion_weights(policy, ds.size());

  Diarization out{ds[0].session, {}};
  for (const auto& region : homogeneous_regions(ds)) {
    const std::size_t n = voted_speaker_count(region.active, weights);
    if (n == 0) continue;
    std::map<std::string, double> score;
    for (std::size_t h = 0; h < ds.size(); ++h) {
      for (const auto& l : region.active[h]) score[l] += weights[h];
    }
    std::vector<std::pair<std::string, double>> ranked(score.begin(), score.end());
    // Scores are compared on a 1e-9 grid so that equal vote totals reached by
    // different summation orders tie; ties stay in label order.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return std::llround(a.second * 1e9) > std::llround(b.second * 1e9);
    });
    for (std::size_t i = 0; i < n && i < ranked.size(); ++i) {
      out.segments.push_back({region.segment, ranked[i].first});
    }
  }
  return normalize(out);
}

inline Diarization dover_lap(const std::vector<Diarization>& ds, const FusionPolicy& policy = {}) {
  return vote(map_labels(ds, policy), policy);
}

}  // namespace ppmet
