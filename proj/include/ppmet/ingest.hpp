#pragma once

// Readers and writers for every file the pipeline touches:
//   RTTM            SPEAKER <file-id> 1 <tbeg> <tdur> <NA> <NA> <speaker> <NA> <NA>
//   PPEMB1          "PPEMB1\n" + "dim=D count=N session=ID\n" + N x [f64 onset][f64 offset][D x f32]
//   PPMAT1          "PPMAT1\n" + "frames=T speakers=S frame_shift=X session=ID\n" + T*S f32 row-major
//   transcript TSV  session \t speaker \t start \t end \t text
// All binary scalars are little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ppmet/error.hpp"
#include "ppmet/timeline.hpp"
#include "ppmet/types.hpp"

namespace ppmet {

namespace detail {

struct ParsedNumber {
  double value = 0.0;
  int decimals = 0;
};

inline std::optional<ParsedNumber> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  int decimals = 0;
  if (auto dot = s.find('.'); dot != std::string_view::npos) {
    std::size_t end = s.find_first_of("eE", dot);
    if (end != std::string_view::npos) return ParsedNumber{v, 17};
    decimals = static_cast<int>(s.size() - dot - 1);
  }
  return ParsedNumber{v, decimals};
}

inline std::optional<std::uint64_t> parse_count(std::string_view s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Sum of two decimal literals, snapped back onto their common decimal grid so
// that "0.100" + "0.200" yields exactly 0.3.
inline double add_on_grid(const ParsedNumber& a, const ParsedNumber& b) {
  const int decimals = std::max(a.decimals, b.decimals);
  const double sum = a.value + b.value;
  if (decimals > 9) return sum;
  const double scale = std::pow(10.0, decimals);
  return std::round(sum * scale) / scale;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string fixed3(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", x);
  return buf;
}

inline std::string shortest(double x) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) return false;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  value = std::bit_cast<T>(bits);
  return true;
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) throw Error(ErrorKind::kBadMagic, "bad magic");
}

// Parses "k1=v1 k2=v2 ... session=<rest of line>" with keys in the given order.
inline std::map<std::string, std::string> parse_header(std::istream& in,
                                                       const std::vector<std::string>& keys) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kBadHeader, "missing header line");
  std::map<std::string, std::string> out;
  std::string_view rest = line;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const std::string prefix = keys[k] + "=";
    if (rest.substr(0, prefix.size()) != prefix) {
      throw Error(ErrorKind::kBadHeader, "header: expected '" + prefix + "'");
    }
    rest.remove_prefix(prefix.size());
    if (k + 1 == keys.size()) {
      out[keys[k]] = std::string(rest);
    } else {
      auto space = rest.find(' ');
      if (space == std::string_view::npos) {
        throw Error(ErrorKind::kBadHeader, "header: truncated after '" + prefix + "'");
      }
      out[keys[k]] = std::string(rest.substr(0, space));
      rest.remove_prefix(space + 1);
    }
  }
  return out;
}

inline std::uint64_t header_count(const std::map<std::string, std::string>& h,
                                  const std::string& key) {
  auto v = parse_count(h.at(key));
  if (!v) throw Error(ErrorKind::kBadHeader, "header: bad value for '" + key + "'");
  return *v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// RTTM

struct RttmFile {
  std::map<std::string, Diarization> sessions;
  std::size_t skipped = 0;  // non-SPEAKER records
};

inline RttmFile parse_rttm(std::istream& in) {
  RttmFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields[0] != "SPEAKER") {
      ++out.skipped;
      continue;
    }
    auto fail = [&](const std::string& why) {
      throw RecordError(ErrorKind::kParse, why + ", line " + std::to_string(line_no), line_no);
    };
    if (fields.size() < 8) fail("too few fields");
    auto tbeg = detail::parse_number(fields[3]);
    auto tdur = detail::parse_number(fields[4]);
    if (!tbeg || !tdur) fail("unparsable time");
    if (tbeg->value < 0.0) fail("negative onset");
    if (tdur->value <= 0.0) fail("non-positive duration");
    Segment seg{tbeg->value, detail::add_on_grid(*tbeg, *tdur)};
    if (!is_valid(seg)) fail("non-positive duration");

    std::string session(fields[1]);
    auto& d = out.sessions[session];
    d.session = session;
    d.segments.push_back({seg, std::string(fields[7])});
  }
  for (auto& [_, d] : out.sessions) {
    std::stable_sort(d.segments.begin(), d.segments.end(), segment_order);
  }
  return out;
}

inline RttmFile parse_rttm(const std::string& text) {
  std::istringstream in(text);
  return parse_rttm(in);
}

inline std::string rttm_line(const std::string& session, const SpeakerSegment& s) {
  return "SPEAKER " + session + " 1 " + detail::fixed3(s.segment.onset) + " " +
         detail::fixed3(s.segment.duration()) + " <NA> <NA> " + s.speaker + " <NA> <NA>\n";
}

inline std::string write_rttm(const std::map<std::string, Diarization>& sessions) {
  std::string out;
  for (const auto& [session, d] : sessions) {
    auto segs = d.segments;
    std::stable_sort(segs.begin(), segs.end(), segment_order);
    for (const auto& s : segs) out += rttm_line(session, s);
  }
  return out;
}

inline std::string write_rttm(const Diarization& d) { return write_rttm({{d.session, d}}); }

// ---------------------------------------------------------------------------
// PPEMB1

inline constexpr std::string_view kEmbeddingMagic = "PPEMB1\n";

inline std::string write_embeddings(const EmbeddingSequence& seq) {
  if (seq.dim == 0) throw Error(ErrorKind::kDimMismatch, "dim must be positive");
  std::string out(kEmbeddingMagic);
  out += "dim=" + std::to_string(seq.dim) + " count=" + std::to_string(seq.records.size()) +
         " session=" + seq.session + "\n";
  for (std::size_t i = 0; i < seq.records.size(); ++i) {
    const auto& r = seq.records[i];
    if (r.vector.size() != seq.dim) {
      throw RecordError(ErrorKind::kDimMismatch,
                        "dim mismatch at record " + std::to_string(i), i);
    }
    for (float x : r.vector) {
      if (!std::isfinite(x)) {
        throw RecordError(ErrorKind::kNonFinite,
                          "non-finite component at record " + std::to_string(i), i);
      }
    }
    detail::put_le(out, r.segment.onset);
    detail::put_le(out, r.segment.offset);
    for (float x : r.vector) detail::put_le(out, x);
  }
  return out;
}

inline EmbeddingSequence read_embeddings(std::istream& in) {
  detail::expect_magic(in, kEmbeddingMagic);
  auto header = detail::parse_header(in, {"dim", "count", "session"});
  EmbeddingSequence seq;
  seq.dim = detail::header_count(header, "dim");
  const auto count = detail::header_count(header, "count");
  seq.session = header.at("session");
  if (seq.dim == 0) throw Error(ErrorKind::kDimMismatch, "dim must be positive");

  seq.records.reserve(std::min<std::uint64_t>(count, 1u << 20));
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    r.vector.resize(seq.dim);
    bool ok = detail::get_le(in, r.segment.onset) && detail::get_le(in, r.segment.offset);
    for (std::size_t k = 0; ok && k < seq.dim; ++k) ok = detail::get_le(in, r.vector[k]);
    if (!ok) {
      throw RecordError(ErrorKind::kTruncated, "truncated at record " + std::to_string(i), i);
    }
    if (!std::isfinite(r.segment.onset) || !std::isfinite(r.segment.offset) ||
        std::any_of(r.vector.begin(), r.vector.end(), [](float x) { return !std::isfinite(x); })) {
      throw RecordError(ErrorKind::kNonFinite, "non-finite value at record " + std::to_string(i),
                        i);
    }
    // Zero-duration records are allowed: prompt files carry no time span.
    if (r.segment.onset < 0.0 || r.segment.offset < r.segment.onset) {
      throw RecordError(ErrorKind::kInvalidSegment,
                        "invalid interval at record " + std::to_string(i), i);
    }
    if (!seq.records.empty() && r.segment.onset < seq.records.back().segment.onset) {
      throw RecordError(ErrorKind::kInvalidSegment,
                        "records not sorted by onset at record " + std::to_string(i), i);
    }
    seq.records.push_back(std::move(r));
  }
  return seq;
}

inline EmbeddingSequence read_embeddings(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_embeddings(in);
}

// ---------------------------------------------------------------------------
// PPMAT1

inline constexpr std::string_view kActivityMagic = "PPMAT1\n";

inline void validate_activity(const ActivityMatrix& m) {
  if (m.frames == 0 || m.speakers.empty()) throw Error(ErrorKind::kEmpty, "empty matrix");
  if (m.probs.size() != m.frames * m.speakers.size()) {
    throw Error(ErrorKind::kDimMismatch, "probability count does not match frames x speakers");
  }
  if (!(m.frame_shift > 0.0) || !std::isfinite(m.frame_shift)) {
    throw Error(ErrorKind::kInvalidArgument, "frame_shift must be positive");
  }
  for (std::size_t i = 0; i < m.probs.size(); ++i) {
    const float p = m.probs[i];
    if (!(p >= 0.0f && p <= 1.0f)) {
      throw RecordError(ErrorKind::kOutOfRange, "probability out of range", i);
    }
  }
}

inline std::string write_activity(const ActivityMatrix& m) {
  validate_activity(m);
  std::string out(kActivityMagic);
  out += "frames=" + std::to_string(m.frames) + " speakers=" + std::to_string(m.speakers.size()) +
         " frame_shift=" + detail::shortest(m.frame_shift) + " session=" + m.session + "\n";
  for (float p : m.probs) detail::put_le(out, p);
  return out;
}

inline std::vector<std::string> default_speaker_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("spk" + std::to_string(i));
  return out;
}

// The format carries no speaker labels; they are supplied by the caller (the
// prompt order for oracle output) or default to spk0, spk1, ...
inline ActivityMatrix read_activity(std::istream& in,
                                    std::optional<std::vector<std::string>> labels = {}) {
  detail::expect_magic(in, kActivityMagic);
  auto header = detail::parse_header(in, {"frames", "speakers", "frame_shift", "session"});
  ActivityMatrix m;
  m.frames = detail::header_count(header, "frames");
  const auto speakers = detail::header_count(header, "speakers");
  auto shift = detail::parse_number(header.at("frame_shift"));
  if (!shift || !(shift->value > 0.0)) throw Error(ErrorKind::kBadHeader, "header: bad frame_shift");
  m.frame_shift = shift->value;
  m.session = header.at("session");
  if (m.frames == 0 || speakers == 0) throw Error(ErrorKind::kEmpty, "empty matrix");
  if (labels) {
    if (labels->size() != speakers) {
      throw Error(ErrorKind::kDimMismatch, "matrix has " + std::to_string(speakers) +
                                               " speakers, expected " +
                                               std::to_string(labels->size()));
    }
    m.speakers = std::move(*labels);
  } else {
    m.speakers = default_speaker_labels(speakers);
  }
  m.probs.resize(m.frames * speakers);
  for (std::size_t i = 0; i < m.probs.size(); ++i) {
    if (!detail::get_le(in, m.probs[i])) {
      throw RecordError(ErrorKind::kTruncated,
                        "truncated at frame " + std::to_string(i / speakers), i / speakers);
    }
    const float p = m.probs[i];
    if (!(p >= 0.0f && p <= 1.0f)) {
      throw RecordError(ErrorKind::kOutOfRange, "probability out of range", i / speakers);
    }
  }
  return m;
}

inline ActivityMatrix read_activity(const std::string& bytes,
                                    std::optional<std::vector<std::string>> labels = {}) {
  std::istringstream in(bytes);
  return read_activity(in, std::move(labels));
}

// ---------------------------------------------------------------------------
// Transcript TSV

inline bool utterance_order(const Utterance& a, const Utterance& b) {
  if (a.segment.onset != b.segment.onset) return a.segment.onset < b.segment.onset;
  return a.speaker < b.speaker;
}

inline std::map<std::string, AttributedTranscript> parse_transcript(std::istream& in) {
  std::map<std::string, AttributedTranscript> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw RecordError(ErrorKind::kParse, why + ", line " + std::to_string(line_no), line_no);
    };
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    for (std::size_t pos; (pos = rest.find('\t')) != std::string_view::npos;) {
      fields.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 5) fail("expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) fail("empty session or speaker");
    auto start = detail::parse_number(fields[2]);
    auto end = detail::parse_number(fields[3]);
    if (!start || !end) fail("unparsable time");
    Segment seg{start->value, end->value};
    if (!is_valid(seg)) fail("invalid time span");

    auto& t = out[std::string(fields[0])];
    t.session = std::string(fields[0]);
    t.utterances.push_back({std::string(fields[1]), seg, std::string(fields[4])});
  }
  for (auto& [_, t] : out) {
    std::stable_sort(t.utterances.begin(), t.utterances.end(), utterance_order);
  }
  return out;
}

inline std::map<std::string, AttributedTranscript> parse_transcript(const std::string& text) {
  std::istringstream in(text);
  return parse_transcript(in);
}

inline std::string write_transcript(const std::map<std::string, AttributedTranscript>& sessions) {
  std::string out;
  for (const auto& [session, t] : sessions) {
    auto utts = t.utterances;
    std::stable_sort(utts.begin(), utts.end(), utterance_order);
    for (const auto& u : utts) {
      out += session + "\t" + u.speaker + "\t" + detail::fixed3(u.segment.onset) + "\t" +
             detail::fixed3(u.segment.offset) + "\t" + u.text + "\n";
    }
  }
  return out;
}

inline std::string write_transcript(const AttributedTranscript& t) {
  return write_transcript({{t.session, t}});
}

}  // namespace ppmet
