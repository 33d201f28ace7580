#include <gtest/gtest.h>

#include <cstring>

#include "support.hpp"

using namespace ppmet;
using testing_support::make_d;

namespace {

template <typename Fn>
std::string error_message(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "<no error>";
}

template <typename Fn>
ErrorKind error_kind(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

EmbeddingSequence sample_embeddings() {
  EmbeddingSequence e{"S1", 4, {}};
  e.records.push_back({{0.0, 3.0}, {0.1f, -0.2f, 0.3f, 1e-7f}});
  e.records.push_back({{1.5, 4.5}, {1.0f, 0.0f, -0.0f, 3.25f}});
  e.records.push_back({{3.0, 6.0}, {-1.5f, 2.0f, 0.125f, 7.0f}});
  return e;
}

ActivityMatrix sample_activity(std::size_t frames, std::size_t speakers) {
  ActivityMatrix m;
  m.session = "S1";
  m.frame_shift = 0.08;
  m.frames = frames;
  m.speakers = default_speaker_labels(speakers);
  for (std::size_t i = 0; i < frames * speakers; ++i) m.probs.push_back(static_cast<float>((i * 37 % 101) / 100.0));
  return m;
}

}  // namespace

TEST(Rttm, ParsesSingleRecord) {
  const auto f = parse_rttm("SPEAKER S1 1 0.000 2.500 <NA> <NA> spkA <NA> <NA>\n");
  ASSERT_EQ(f.sessions.size(), 1u);
  EXPECT_EQ(f.sessions.at("S1"), make_d({{"spkA", 0.0, 2.5}}));
}

TEST(Rttm, KeepsDuplicateLines) {
  const std::string line = "SPEAKER S1 1 0.000 2.500 <NA> <NA> A <NA> <NA>\n";
  const auto f = parse_rttm(line + line);
  EXPECT_EQ(f.sessions.at("S1").segments.size(), 2u);
  EXPECT_EQ(normalize(f.sessions.at("S1")).segments.size(), 1u);
}

TEST(Rttm, NegativeDurationReportsLine) {
  EXPECT_EQ(error_message([] { parse_rttm("SPEAKER S1 1 0.0 -1.0 <NA> <NA> A <NA> <NA>\n"); }),
            "non-positive duration, line 1");
}

TEST(Rttm, MalformedLineCarriesLineNumber) {
  try {
    parse_rttm("SPEAKER S1 1 0.0 1.0 <NA> <NA> A <NA> <NA>\nSPEAKER S1 1 x 1.0 <NA> <NA> A <NA> <NA>\n");
    FAIL();
  } catch (const RecordError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(Rttm, SkipsOtherRecordTypes) {
  const auto f = parse_rttm("SPKR-INFO S1 1 <NA> <NA> <NA> unknown A <NA> <NA>\nSPEAKER S1 1 0 1 <NA> <NA> A <NA> <NA>\n");
  EXPECT_EQ(f.skipped, 1u);
  EXPECT_EQ(f.sessions.at("S1").segments.size(), 1u);
}

TEST(Rttm, ExactLineFormat) {
  EXPECT_EQ(write_rttm(make_d({{"A", 0, 2.5}})), "SPEAKER S1 1 0.000 2.500 <NA> <NA> A <NA> <NA>\n");
}

TEST(Rttm, EmptyMapWritesNothing) { EXPECT_EQ(write_rttm(std::map<std::string, Diarization>{}), ""); }

TEST(Rttm, SessionsInLexicographicOrder) {
  std::map<std::string, Diarization> m{{"b", make_d({{"A", 0, 1}}, "b")}, {"a", make_d({{"A", 0, 1}}, "a")}};
  const auto text = write_rttm(m);
  EXPECT_LT(text.find("SPEAKER a"), text.find("SPEAKER b"));
}

TEST(Rttm, RoundTripOnMillisecondGrid) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    auto d = testing_support::random_d(rng, 4, 20, 600);
    d.session = "sess" + std::to_string(i % 7);
    const auto text = write_rttm(d);
    const auto back = parse_rttm(text).sessions.at(d.session);
    EXPECT_EQ(back, d);
    EXPECT_EQ(write_rttm(back), text);
  }
}

TEST(Embeddings, RoundTrip) {
  const auto e = sample_embeddings();
  const auto bytes = write_embeddings(e);
  EXPECT_EQ(bytes.substr(0, 7), "PPEMB1\n");
  EXPECT_EQ(read_embeddings(bytes), e);
  EXPECT_EQ(write_embeddings(read_embeddings(bytes)), bytes);
}

TEST(Embeddings, LayoutIsLittleEndian) {
  EmbeddingSequence e{"S", 1, {{{1.0, 2.0}, {1.0f}}}};
  const auto bytes = write_embeddings(e);
  const std::string header = "PPEMB1\ndim=1 count=1 session=S\n";
  ASSERT_EQ(bytes.size(), header.size() + 8 + 8 + 4);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  double onset;
  std::memcpy(&onset, bytes.data() + header.size(), 8);
  EXPECT_EQ(onset, 1.0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 16 + 3]), 0x3fu);  // 1.0f = 0x3f800000
}

TEST(Embeddings, BadMagic) {
  EXPECT_EQ(error_message([] { read_embeddings(std::string("XXXX\ndim=1 count=0 session=S\n")); }), "bad magic");
  EXPECT_EQ(error_kind([] { read_embeddings(std::string("XXXX")); }), ErrorKind::kBadMagic);
}

TEST(Embeddings, Truncated) {
  auto e = sample_embeddings();
  e.records.push_back({{4.5, 7.5}, {0, 0, 0, 1}});
  e.records.push_back({{6.0, 9.0}, {0, 0, 1, 0}});
  auto bytes = write_embeddings(e);
  // declared count 5, only 4 records present
  bytes.resize(bytes.size() - (16 + 4 * 4));
  EXPECT_EQ(error_message([&] { read_embeddings(bytes); }), "truncated at record 4");
  EXPECT_EQ(error_kind([&] { read_embeddings(bytes); }), ErrorKind::kTruncated);
}

TEST(Embeddings, NonFiniteComponent) {
  auto bytes = write_embeddings(sample_embeddings());
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
  EXPECT_EQ(error_kind([&] { read_embeddings(bytes); }), ErrorKind::kNonFinite);
}

TEST(Embeddings, DimMismatchOnWrite) {
  auto e = sample_embeddings();
  e.records[1].vector.pop_back();
  EXPECT_EQ(error_kind([&] { write_embeddings(e); }), ErrorKind::kDimMismatch);
}

TEST(Embeddings, BadHeader) {
  EXPECT_EQ(error_kind([] { read_embeddings(std::string("PPEMB1\ndim=x count=0 session=S\n")); }),
            ErrorKind::kBadHeader);
}

TEST(Activity, RoundTrip10x4) {
  const auto m = sample_activity(10, 4);
  const auto bytes = write_activity(m);
  EXPECT_EQ(bytes.substr(0, 7), "PPMAT1\n");
  EXPECT_EQ(read_activity(bytes), m);
  EXPECT_EQ(write_activity(read_activity(bytes)), bytes);
}

TEST(Activity, CustomLabels) {
  const auto m = sample_activity(3, 2);
  const auto back = read_activity(write_activity(m), std::vector<std::string>{"x", "y"});
  EXPECT_EQ(back.speakers, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(back.probs, m.probs);
}

TEST(Activity, ProbabilityOutOfRange) {
  auto m = sample_activity(2, 2);
  auto bytes = write_activity(m);
  const float bad = 1.5f;
  std::memcpy(bytes.data() + bytes.size() - 4, &bad, 4);
  EXPECT_EQ(error_message([&] { read_activity(bytes); }), "probability out of range");
}

TEST(Activity, ZeroFramesIsEmpty) {
  EXPECT_EQ(error_message([] { read_activity(std::string("PPMAT1\nframes=0 speakers=2 frame_shift=0.08 session=S\n")); }),
            "empty matrix");
}

TEST(Transcript, ParsesOneUtterance) {
  const auto t = parse_transcript("S1\tA\t0.0\t1.2\t你好\n");
  ASSERT_EQ(t.at("S1").utterances.size(), 1u);
  const auto& u = t.at("S1").utterances[0];
  EXPECT_EQ(u.speaker, "A");
  EXPECT_EQ(u.segment, (Segment{0.0, 1.2}));
  EXPECT_EQ(u.text, "你好");
}

TEST(Transcript, PreservesSpacesInText) {
  const auto t = parse_transcript("S1\tA\t0.0\t1.2\t a  b \n");
  EXPECT_EQ(t.at("S1").utterances[0].text, " a  b ");
}

TEST(Transcript, WrongFieldCount) {
  try {
    parse_transcript("S1\tA\t0.0\t1.2\tok\nS1\tA\t0.0\t1.2\n");
    FAIL();
  } catch (const RecordError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(Transcript, UnparsableTime) {
  EXPECT_EQ(error_kind([] { parse_transcript("S1\tA\tzero\t1.2\tx\n"); }), ErrorKind::kParse);
}

TEST(Transcript, RoundTrip) {
  std::mt19937_64 rng(9);
  const std::u32string alphabet = U"你好世界abc 。，";
  for (int i = 0; i < 200; ++i) {
    AttributedTranscript t{"S" + std::to_string(i % 3), {}};
    std::uniform_int_distribution<int> ms(0, 100000), len(1, 5000), spk(0, 3);
    for (int k = 0; k < 8; ++k) {
      const int start = ms(rng);
      t.utterances.push_back({"spk" + std::to_string(spk(rng)), {start / 1000.0, (start + len(rng)) / 1000.0},
                              u32_to_utf8(testing_support::random_u32(rng, 12, alphabet))});
    }
    std::stable_sort(t.utterances.begin(), t.utterances.end(), utterance_order);
    const auto text = write_transcript(t);
    const auto back = parse_transcript(text).at(t.session);
    EXPECT_EQ(back.utterances.size(), t.utterances.size());
    EXPECT_EQ(back, t);
    EXPECT_EQ(write_transcript(back), text);
  }
}
