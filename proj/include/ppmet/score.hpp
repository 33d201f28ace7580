#pragma once

// Evaluation: diarization error rate under the optimal speaker mapping,
// character edit distance, concatenated minimum-permutation CER, and ROVER
// voting over aligned recognizer outputs.

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ppmet/assignment.hpp"
#include "ppmet/error.hpp"
#include "ppmet/timeline.hpp"
#include "ppmet/types.hpp"

namespace ppmet {

// ---------------------------------------------------------------------------
// DER

struct DerReport {
  double miss = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  double total_ref = 0.0;
  double der = 0.0;  // +inf when total_ref = 0 but errors exist
  std::map<std::string, std::string> mapping;  // hyp -> ref

  double errors() const { return miss + false_alarm + confusion; }
};

struct DerOptions {
  double collar = 0.0;
  bool score_overlap = true;
};

inline DerReport der(const Diarization& ref_in, const Diarization& hyp_in,
                     const DerOptions& options = {}) {
  if (options.collar < 0.0) throw Error(ErrorKind::kInvalidArgument, "collar must be >= 0");
  const Diarization ref = normalize(ref_in);
  const Diarization hyp = normalize(hyp_in);

  std::vector<Diarization> inputs{ref, hyp};
  if (options.collar > 0.0) {
    Diarization zones{ref.session, {}};
    for (const auto& s : ref.segments) {
      for (double b : {s.segment.onset, s.segment.offset}) {
        zones.segments.push_back({{std::max(0.0, b - options.collar), b + options.collar}, "collar"});
      }
    }
    inputs.push_back(normalize(zones));
  }

  std::vector<const Region*> scored;
  const auto regions = homogeneous_regions(inputs);
  for (const auto& r : regions) {
    if (inputs.size() == 3 && !r.active[2].empty()) continue;
    if (!options.score_overlap && r.active[0].size() > 1) continue;
    scored.push_back(&r);
  }

  const auto ref_labels = ref.speakers();
  const auto hyp_labels = hyp.speakers();
  auto index_of = [](const std::vector<std::string>& labels, const std::string& l) {
    return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), l) - labels.begin());
  };

  CostMatrix<double> together(hyp_labels.size(), std::vector<double>(ref_labels.size(), 0.0));
  for (const auto* r : scored) {
    const double dur = r->segment.duration();
    for (const auto& h : r->active[1]) {
      for (const auto& x : r->active[0]) together[index_of(hyp_labels, h)][index_of(ref_labels, x)] += dur;
    }
  }
  const auto match = max_weight_assignment(together);

  DerReport report;
  std::vector<std::optional<std::size_t>> hyp_to_ref(hyp_labels.size());
  for (std::size_t h = 0; h < match.size(); ++h) {
    if (match[h]) {
      hyp_to_ref[h] = match[h];
      report.mapping[hyp_labels[h]] = ref_labels[*match[h]];
    }
  }

  for (const auto* r : scored) {
    const double dur = r->segment.duration();
    const auto n_ref = static_cast<double>(r->active[0].size());
    const auto n_hyp = static_cast<double>(r->active[1].size());
    double correct = 0.0;
    for (const auto& h : r->active[1]) {
      const auto& m = hyp_to_ref[index_of(hyp_labels, h)];
      if (m && std::binary_search(r->active[0].begin(), r->active[0].end(), ref_labels[*m])) {
        correct += 1.0;
      }
    }
    report.total_ref += n_ref * dur;
    report.miss += std::max(0.0, n_ref - n_hyp) * dur;
    report.false_alarm += std::max(0.0, n_hyp - n_ref) * dur;
    report.confusion += (std::min(n_ref, n_hyp) - correct) * dur;
  }
  if (report.total_ref > 0.0) {
    report.der = report.errors() / report.total_ref;
  } else {
    report.der = report.errors() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Text

struct TextNormPolicy {
  bool strip_whitespace = true;
  bool strip_punctuation = true;
  bool compose = true;  // NFC
};

inline std::u32string utf8_to_u32(const std::string& s) {
  std::u32string out;
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  const auto length = static_cast<std::int32_t>(s.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c = 0;
    U8_NEXT(p, i, length, c);
    out.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
  }
  return out;
}

inline std::string u32_to_utf8(std::u32string_view s) {
  std::string out;
  for (char32_t c : s) {
    std::uint8_t buf[4];
    std::int32_t n = 0;
    UBool error = false;
    U8_APPEND(buf, n, 4, static_cast<UChar32>(c), error);
    if (!error) out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
  }
  return out;
}

// Drops whitespace and punctuation, then applies canonical composition.
inline std::string normalize_text(const std::string& s, const TextNormPolicy& policy = {}) {
  std::u32string kept;
  for (char32_t c : utf8_to_u32(s)) {
    const auto cp = static_cast<UChar32>(c);
    if (policy.strip_whitespace && (u_isUWhiteSpace(cp) || u_isspace(cp))) continue;
    if (policy.strip_punctuation && u_ispunct(cp)) continue;
    kept.push_back(c);
  }
  std::string out = u32_to_utf8(kept);
  if (!policy.compose) return out;

  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::kNumerical, "ICU NFC normalizer unavailable");
  icu::UnicodeString composed = nfc->normalize(icu::UnicodeString::fromUTF8(out), status);
  if (U_FAILURE(status)) throw Error(ErrorKind::kNumerical, "ICU normalization failed");
  out.clear();
  composed.toUTF8String(out);
  return out;
}

struct EditOps {
  std::int64_t substitutions = 0;
  std::int64_t insertions = 0;
  std::int64_t deletions = 0;

  std::int64_t total() const { return substitutions + insertions + deletions; }
  EditOps& operator+=(const EditOps& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    return *this;
  }
  friend bool operator==(const EditOps&, const EditOps&) = default;
};

// Unit-cost Levenshtein alignment of hyp against ref. Among minimum-cost
// alignments, the one with the fewest substitutions, then fewest insertions.
template <typename Seq>
EditOps edit_distance(const Seq& ref, const Seq& hyp) {
  struct Cell {
    std::int64_t cost, subs, ins;
    bool operator<(const Cell& o) const {
      if (cost != o.cost) return cost < o.cost;
      if (subs != o.subs) return subs < o.subs;
      return ins < o.ins;
    }
  };
  const std::size_t m = hyp.size();
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) {
    prev[j] = {static_cast<std::int64_t>(j), 0, static_cast<std::int64_t>(j)};
  }
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = {static_cast<std::int64_t>(i), 0, 0};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = ref[i - 1] == hyp[j - 1];
      Cell best{prev[j - 1].cost + (same ? 0 : 1), prev[j - 1].subs + (same ? 0 : 1), prev[j - 1].ins};
      const Cell ins{cur[j - 1].cost + 1, cur[j - 1].subs, cur[j - 1].ins + 1};
      const Cell del{prev[j].cost + 1, prev[j].subs, prev[j].ins};
      if (ins < best) best = ins;
      if (del < best) best = del;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& c = prev[m];
  return {c.subs, c.ins, c.cost - c.subs - c.ins};
}

inline EditOps edit_distance(const std::string& ref, const std::string& hyp) {
  return edit_distance(utf8_to_u32(ref), utf8_to_u32(hyp));
}

// ---------------------------------------------------------------------------
// cp-CER

struct CpCerReport {
  EditOps ops;
  std::int64_t ref_chars = 0;
  double cp_cer = 0.0;  // +inf when ref_chars = 0 but errors exist
  std::map<std::string, std::string> mapping;  // hyp -> ref

  std::int64_t errors() const { return ops.total(); }
};

inline double error_rate(std::int64_t errors, std::int64_t ref_chars) {
  if (ref_chars > 0) return static_cast<double>(errors) / static_cast<double>(ref_chars);
  return errors > 0 ? std::numeric_limits<double>::infinity() : 0.0;
}

// Per speaker, normalized utterance texts joined in onset order (ties keep
// input order), as code points.
inline std::map<std::string, std::u32string> speaker_streams(const AttributedTranscript& t,
                                                             const TextNormPolicy& norm) {
  std::vector<const Utterance*> order;
  for (const auto& u : t.utterances) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(), [](const Utterance* a, const Utterance* b) {
    return a->segment.onset < b->segment.onset;
  });
  std::map<std::string, std::u32string> out;
  for (const auto* u : order) out[u->speaker] += utf8_to_u32(normalize_text(u->text, norm));
  return out;
}

namespace detail {

struct PairTable {
  std::vector<std::string> ref_speakers, hyp_speakers;
  std::vector<std::int64_t> ref_len, hyp_len;
  std::vector<std::vector<EditOps>> ops;  // [ref][hyp]
};

inline PairTable pair_table(const AttributedTranscript& ref, const AttributedTranscript& hyp,
                            const TextNormPolicy& norm) {
  PairTable t;
  const auto r = speaker_streams(ref, norm);
  const auto h = speaker_streams(hyp, norm);
  for (const auto& [spk, text] : r) {
    t.ref_speakers.push_back(spk);
    t.ref_len.push_back(static_cast<std::int64_t>(text.size()));
  }
  for (const auto& [spk, text] : h) {
    t.hyp_speakers.push_back(spk);
    t.hyp_len.push_back(static_cast<std::int64_t>(text.size()));
  }
  for (const auto& [_, rt] : r) {
    auto& row = t.ops.emplace_back();
    for (const auto& [__, ht] : h) row.push_back(edit_distance(rt, ht));
  }
  return t;
}

inline CpCerReport finish(const PairTable& t, const std::vector<std::optional<std::size_t>>& ref_to_hyp) {
  CpCerReport report;
  std::vector<char> hyp_used(t.hyp_speakers.size(), 0);
  for (std::size_t i = 0; i < t.ref_speakers.size(); ++i) {
    report.ref_chars += t.ref_len[i];
    if (ref_to_hyp[i]) {
      const std::size_t j = *ref_to_hyp[i];
      report.ops += t.ops[i][j];
      hyp_used[j] = 1;
      report.mapping[t.hyp_speakers[j]] = t.ref_speakers[i];
    } else {
      report.ops.deletions += t.ref_len[i];
    }
  }
  for (std::size_t j = 0; j < t.hyp_speakers.size(); ++j) {
    if (!hyp_used[j]) report.ops.insertions += t.hyp_len[j];
  }
  report.cp_cer = error_rate(report.errors(), report.ref_chars);
  return report;
}

}  // namespace detail

// Minimum total errors over injective speaker matchings, solved as an
// assignment on the square matrix padded with "unmatched" rows and columns.
inline CpCerReport cp_cer(const AttributedTranscript& ref, const AttributedTranscript& hyp,
                          const TextNormPolicy& norm = {}) {
  const auto t = detail::pair_table(ref, hyp, norm);
  const std::size_t r = t.ref_speakers.size(), h = t.hyp_speakers.size();
  const std::size_t n = r + h;
  CostMatrix<std::int64_t> cost(n, std::vector<std::int64_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i < r && j < h) {
        cost[i][j] = t.ops[i][j].total();
      } else if (i < r) {
        cost[i][j] = t.ref_len[i];  // ref speaker left unmatched
      } else if (j < h) {
        cost[i][j] = t.hyp_len[j];  // hyp speaker left unmatched
      }
    }
  }
  const auto match = min_cost_assignment(cost);
  std::vector<std::optional<std::size_t>> ref_to_hyp(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (match[i] && *match[i] < h) ref_to_hyp[i] = match[i];
  }
  return detail::finish(t, ref_to_hyp);
}

inline constexpr std::size_t kBruteForceMaxSpeakers = 8;

// Exhaustive minimum over every injective matching (including leaving
// speakers unmatched). Reference implementation for cp_cer.
inline CpCerReport cp_cer_bruteforce(const AttributedTranscript& ref, const AttributedTranscript& hyp,
                                     const TextNormPolicy& norm = {}) {
  const auto t = detail::pair_table(ref, hyp, norm);
  const std::size_t r = t.ref_speakers.size(), h = t.hyp_speakers.size();
  if (std::max(r, h) > kBruteForceMaxSpeakers) {
    throw Error(ErrorKind::kInvalidArgument, "cp_cer_bruteforce: more than 8 speakers");
  }
  std::vector<std::optional<std::size_t>> current(r), best(r);
  std::int64_t best_cost = std::numeric_limits<std::int64_t>::max();
  std::vector<char> used(h, 0);

  auto recurse = [&](auto&& self, std::size_t i, std::int64_t cost) -> void {
    if (i == r) {
      for (std::size_t j = 0; j < h; ++j) {
        if (!used[j]) cost += t.hyp_len[j];
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = current;
      }
      return;
    }
    current[i].reset();
    self(self, i + 1, cost + t.ref_len[i]);
    for (std::size_t j = 0; j < h; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      current[i] = j;
      self(self, i + 1, cost + t.ops[i][j].total());
      current[i].reset();
      used[j] = 0;
    }
  };
  recurse(recurse, 0, 0);
  return detail::finish(t, best);
}

// ---------------------------------------------------------------------------
// ROVER

using Token = std::string;

namespace detail {

struct Slot {
  std::vector<std::optional<Token>> entries;  // one per hypothesis aligned so far

  bool has(const Token& tok) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const auto& e) { return e && *e == tok; });
  }
  bool has_null() const {
    return std::any_of(entries.begin(), entries.end(), [](const auto& e) { return !e; });
  }
};

inline void align_into(std::vector<Slot>& net, const std::vector<Token>& hyp, std::size_t index) {
  const std::size_t s = net.size(), m = hyp.size();
  // cost[i][j]: first i slots against first j tokens
  std::vector<std::vector<int>> cost(s + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 1; i <= s; ++i) cost[i][0] = cost[i - 1][0] + (net[i - 1].has_null() ? 0 : 1);
  for (std::size_t j = 1; j <= m; ++j) cost[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= s; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = cost[i - 1][j - 1] + (net[i - 1].has(hyp[j - 1]) ? 0 : 1);
      const int skip = cost[i - 1][j] + (net[i - 1].has_null() ? 0 : 1);
      const int ins = cost[i][j - 1] + 1;
      cost[i][j] = std::min({diag, skip, ins});
    }
  }

  enum class Op { kPlace, kSkip, kInsert };
  std::vector<Op> ops;
  for (std::size_t i = s, j = m; i > 0 || j > 0;) {
    if (i > 0 && j > 0 &&
        cost[i][j] == cost[i - 1][j - 1] + (net[i - 1].has(hyp[j - 1]) ? 0 : 1)) {
      ops.push_back(Op::kPlace);
      --i;
      --j;
    } else if (i > 0 && cost[i][j] == cost[i - 1][j] + (net[i - 1].has_null() ? 0 : 1)) {
      ops.push_back(Op::kSkip);
      --i;
    } else {
      ops.push_back(Op::kInsert);
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());

  std::vector<Slot> rebuilt;
  std::size_t i = 0, j = 0;
  for (Op op : ops) {
    if (op == Op::kInsert) {
      Slot slot;
      slot.entries.assign(index, std::nullopt);
      slot.entries.emplace_back(hyp[j++]);
      rebuilt.push_back(std::move(slot));
      continue;
    }
    Slot slot = std::move(net[i++]);
    if (op == Op::kPlace) {
      slot.entries.emplace_back(hyp[j++]);
    } else {
      slot.entries.emplace_back(std::nullopt);
    }
    rebuilt.push_back(std::move(slot));
  }
  net = std::move(rebuilt);
}

}  // namespace detail

struct RoverResult {
  std::vector<Token> tokens;
  std::size_t slots = 0;
};

// Builds a transition network by aligning every hypothesis onto it in input
// order, then emits the weighted-majority token of each slot (NULL votes
// count; NULL winners emit nothing). Ties go to the token placed by the
// earliest hypothesis.
inline RoverResult rover_network(const std::vector<std::vector<Token>>& hyps,
                                 const std::vector<double>& weights_in = {}) {
  if (hyps.empty()) throw Error(ErrorKind::kEmpty, "rover: no hypotheses");
  std::vector<double> weights = weights_in.empty() ? std::vector<double>(hyps.size(), 1.0) : weights_in;
  if (weights.size() != hyps.size()) {
    throw Error(ErrorKind::kInvalidArgument, "rover: weight count does not match hypotheses");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorKind::kInvalidArgument, "rover: weights must be positive");
  }

  std::vector<detail::Slot> net;
  for (const auto& tok : hyps[0]) net.push_back({{tok}});
  for (std::size_t h = 1; h < hyps.size(); ++h) detail::align_into(net, hyps[h], h);

  RoverResult result;
  result.slots = net.size();
  for (const auto& slot : net) {
    struct Candidate {
      std::optional<Token> token;
      double score = 0.0;
      std::size_t first = 0;
    };
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < slot.entries.size(); ++h) {
      const auto& e = slot.entries[h];
      auto it = std::find_if(candidates.begin(), candidates.end(),
                             [&](const Candidate& c) { return c.token == e; });
      if (it == candidates.end()) {
        candidates.push_back({e, weights[h], h});
      } else {
        it->score += weights[h];
      }
    }
    const Candidate* best = &candidates.front();
    for (const auto& c : candidates) {
      const auto cs = std::llround(c.score * 1e9), bs = std::llround(best->score * 1e9);
      if (cs > bs || (cs == bs && c.first < best->first)) best = &c;
    }
    if (best->token) result.tokens.push_back(*best->token);
  }
  return result;
}

inline std::vector<Token> rover(const std::vector<std::vector<Token>>& hyps,
                                const std::vector<double>& weights = {}) {
  return rover_network(hyps, weights).tokens;
}

inline std::vector<Token> char_tokens(const std::string& text, const TextNormPolicy& norm = {}) {
  std::vector<Token> out;
  for (char32_t c : utf8_to_u32(normalize_text(text, norm))) out.push_back(u32_to_utf8({&c, 1}));
  return out;
}

inline std::string rover_text(const std::vector<std::string>& texts, const std::vector<double>& weights = {},
                              const TextNormPolicy& norm = {}) {
  std::vector<std::vector<Token>> hyps;
  for (const auto& t : texts) hyps.push_back(char_tokens(t, norm));
  std::string out;
  for (const auto& tok : rover(hyps, weights)) out += tok;
  return out;
}

}  // namespace ppmet
