#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace ppmet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::string tmpl = (fs::temp_directory_path() / "ppmet_cli_XXXXXX").string();
    ASSERT_NE(mkdtemp(tmpl.data()), nullptr);
    dir_ = tmpl;
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream(path(name), std::ios::binary) << content;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(path(name), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  Outcome run(const std::string& args, const std::string& env = "") const {
    const auto out = path(".stdout"), err = path(".stderr");
    const std::string cmd = env + " " + std::string(PPMET_BIN) + " " + args + " >" + out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read(".stdout"), read(".stderr")};
  }

  // A simulated bundle in <dir>/<name>.
  void simulate(const std::string& name, const std::string& spec_json, int seed = 1, int sessions = 1) {
    write(name + ".json", spec_json);
    const auto r = run("simulate --spec " + path(name + ".json") + " --seed " + std::to_string(seed) +
                       " --sessions " + std::to_string(sessions) + " --out-dir " + path(name));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

const char* kSmallSpec = R"({"session": "sim", "n_speakers": 3, "duration": 120, "overlap_ratio": 0.0})";

}  // namespace

TEST_F(Cli, SegmentFourWindows) {
  write("v.rttm", "SPEAKER S1 1 0.000 7.500 <NA> <NA> speech <NA> <NA>\n");
  const auto r = run("segment --vad " + path("v.rttm") + " --window 3 --shift 1.5");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out,
            "session\tonset\toffset\n"
            "S1\t0.000\t3.000\nS1\t1.500\t4.500\nS1\t3.000\t6.000\nS1\t4.500\t7.500\n");
}

TEST_F(Cli, MissingFileIsUsageError) {
  const auto r = run("segment --vad " + path("nope.rttm"));
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
  EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, ShiftLongerThanWindow) {
  write("v.rttm", "SPEAKER S1 1 0.000 7.500 <NA> <NA> speech <NA> <NA>\n");
  const auto r = run("segment --vad " + path("v.rttm") + " --shift 4 --window 3");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("shift > window"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownSubcommandAndMalformedInput) {
  EXPECT_EQ(run("frobnicate").code, 2);
  write("bad.rttm", "SPEAKER S1 1 zero 1.0 <NA> <NA> A <NA> <NA>\n");
  EXPECT_EQ(run("segment --vad " + path("bad.rttm")).code, 2);
}

TEST_F(Cli, ClusterRecoversSpeakerCountAndIsDeterministic) {
  simulate("b", kSmallSpec, 3);
  const std::string args = "cluster --emb " + path("b/sim.ppemb") + " --method nme-sc --seed 7";
  const auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto hyp = parse_rttm(a.out).sessions.at("sim");
  EXPECT_EQ(hyp.speakers().size(), 3u);
}

TEST_F(Cli, ClusterNmeScNeedsSeed) {
  simulate("b", kSmallSpec);
  EXPECT_EQ(run("cluster --emb " + path("b/sim.ppemb") + " --method nme-sc").code, 2);
}

TEST_F(Cli, ClusterAhcAndDiagnostics) {
  simulate("b", kSmallSpec);
  const auto r = run("cluster --emb " + path("b/sim.ppemb") + " --method ahc --threshold 0.5");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(parse_rttm(r.out).sessions.at("sim").segments.empty());
  const auto n = run("cluster --emb " + path("b/sim.ppemb") + " --method nme-sc --seed 1 --diagnostics " +
                     path("diag.tsv") + " --out " + path("h.rttm"));
  ASSERT_EQ(n.code, 0) << n.err;
  EXPECT_EQ(read("diag.tsv").rfind("session\tp\tr\tbest_k\tgap_1", 0), 0u);
}

TEST_F(Cli, FuseMajorityAndPassthrough) {
  write("a.rttm", "SPEAKER S1 1 0.000 1.000 <NA> <NA> A <NA> <NA>\n");
  write("b.rttm", "SPEAKER S1 1 0.000 1.000 <NA> <NA> B <NA> <NA>\n");
  const auto r = run("fuse " + path("a.rttm") + " " + path("a.rttm") + " " + path("b.rttm"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, read("a.rttm"));
  EXPECT_EQ(run("fuse " + path("b.rttm")).out, read("b.rttm"));
  EXPECT_EQ(run("fuse " + path("a.rttm") + " " + path("a.rttm")).out, read("a.rttm"));
  EXPECT_EQ(run("fuse " + path("a.rttm") + " " + path("b.rttm") + " --weights 1").code, 2);
}

TEST_F(Cli, PromptsArePaddedUnitVectors) {
  simulate("b", kSmallSpec);
  const auto r = run("prompts --rttm " + path("b/ref.rttm") + " --emb " + path("b/sim.ppemb") +
                     " --max-speakers 4 --out " + path("p.ppemb") + " --labels-out " + path("p.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path("p.ppemb"), std::ios::binary);
  const auto p = read_embeddings(in);
  ASSERT_EQ(p.records.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    double n = 0;
    for (float x : p.records[i].vector) n += static_cast<double>(x) * x;
    EXPECT_NEAR(n, i < 3 ? 1.0 : 0.0, 1e-5);
  }
  const auto labels = read("p.txt");
  EXPECT_EQ(labels.substr(0, 15), "spk0\nspk1\nspk2\n");
  EXPECT_TRUE(is_padding_label(labels.substr(15, labels.size() - 16))) << labels;
}

TEST_F(Cli, TsvadPostRoundTrip) {
  simulate("b", R"({"n_speakers": 2, "duration": 60})");
  const auto r = run("tsvad-post --mat " + path("b/sim.ppmat"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ref = parse_rttm(read("b/ref.rttm")).sessions.at("sim");
  EXPECT_EQ(der(ref, parse_rttm(r.out).sessions.at("sim")).der, 0.0);
}

TEST_F(Cli, RefineWithSimulatedOracleReachesTruth) {
  simulate("b", kSmallSpec, 5);
  const auto c = run("cluster --emb " + path("b/sim.ppemb") + " --method nme-sc --seed 1 --out " + path("c.rttm"));
  ASSERT_EQ(c.code, 0) << c.err;
  const std::string oracle = std::string(PPMET_BIN) + " sim-oracle --truth " + path("b/ref.rttm") +
                             " --prototypes " + path("b/sim.protos.ppemb") + " --prompts {prompts} --out {out}";
  const auto r = run("refine --rttm " + path("c.rttm") + " --emb " + path("b/sim.ppemb") + " --oracle-cmd '" +
                     oracle + "' --iterations 1 --out " + path("r.rttm"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = run("score-der --ref " + path("b/ref.rttm") + " --hyp " + path("r.rttm"));
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("ALL\t0.000\t0.000\t0.000\t0.000000"), std::string::npos) << s.out;
}

TEST_F(Cli, RefineOracleFailureIsExit3WithIteration) {
  simulate("b", kSmallSpec);
  const auto r = run("refine --rttm " + path("b/ref.rttm") + " --emb " + path("b/sim.ppemb") +
                     " --oracle-cmd 'false {prompts} {out}'");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("iteration 1"), std::string::npos) << r.err;
  const auto bad = run("refine --rttm " + path("b/ref.rttm") + " --emb " + path("b/sim.ppemb") +
                       " --oracle-cmd 'echo junk > {out}; true {prompts}'");
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.err.find("iteration 1"), std::string::npos) << bad.err;
  EXPECT_EQ(run("refine --rttm " + path("b/ref.rttm") + " --emb " + path("b/sim.ppemb") + " --oracle-cmd true").code,
            2);
}

TEST_F(Cli, ScoreDerIdenticalIsZero) {
  write("r.rttm", "SPEAKER S1 1 0.000 10.000 <NA> <NA> A <NA> <NA>\n");
  const auto r = run("score-der --ref " + path("r.rttm") + " --hyp " + path("r.rttm"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out,
            "session\tmiss\tfa\tconfusion\tder\n"
            "S1\t0.000\t0.000\t0.000\t0.000000\n"
            "ALL\t0.000\t0.000\t0.000\t0.000000\n");
}

TEST_F(Cli, ScoreDerConfusionExample) {
  write("r.rttm", "SPEAKER S1 1 0.000 10.000 <NA> <NA> A <NA> <NA>\n");
  write("h.rttm",
        "SPEAKER S1 1 0.000 8.000 <NA> <NA> A <NA> <NA>\nSPEAKER S1 1 8.000 2.000 <NA> <NA> B <NA> <NA>\n");
  const auto r = run("score-der --ref " + path("r.rttm") + " --hyp " + path("h.rttm"));
  EXPECT_NE(r.out.find("S1\t0.000\t0.000\t2.000\t0.200000"), std::string::npos) << r.out;
}

TEST_F(Cli, ScoreCpCerExample) {
  write("ref.tsv", "S1\t1\t0.0\t1.0\tabc\nS1\t2\t1.0\t2.0\tdef\n");
  write("hyp.tsv", "S1\tX\t0.0\t1.0\tabd\nS1\tY\t1.0\t2.0\tdef\n");
  const auto r = run("score-cpcer --ref " + path("ref.tsv") + " --hyp " + path("hyp.tsv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out,
            "session\tS\tI\tD\tref_chars\tcp_cer\n"
            "S1\t1\t0\t0\t6\t0.166667\n"
            "ALL\t1\t0\t0\t6\t0.166667\n");
}

TEST_F(Cli, RoverUnanimity) {
  write("a.tsv", "S1\tA\t0.0\t1.0\t你好\n");
  const auto r = run("rover " + path("a.tsv") + " " + path("a.tsv") + " " + path("a.tsv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, read("a.tsv").replace(read("a.tsv").find("0.0\t1.0"), 7, "0.000\t1.000"));
}

TEST_F(Cli, SimulateDeterministicAndConsistent) {
  simulate("one", kSmallSpec, 9, 2);
  simulate("two", kSmallSpec, 9, 2);
  for (const auto& f : {"ref.rttm", "ref.tsv", "sim_000.ppemb", "sim_001.ppmat", "sim_001.protos.ppemb"}) {
    EXPECT_EQ(read(std::string("one/") + f), read(std::string("two/") + f)) << f;
  }
  const auto r = run("tsvad-post --mat " + path("one/sim_000.ppmat") + " --mat " + path("one/sim_001.ppmat") +
                     " --out " + path("post.rttm"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = run("score-der --ref " + path("one/ref.rttm") + " --hyp " + path("post.rttm"));
  EXPECT_NE(s.out.find("ALL\t0.000\t0.000\t0.000\t0.000000"), std::string::npos) << s.out;
}

TEST_F(Cli, SimulateRejectsInvalidSpec) {
  write("bad.json", R"({"n_speakers": 0})");
  EXPECT_EQ(run("simulate --spec " + path("bad.json") + " --seed 1 --out-dir " + path("x")).code, 2);
  write("typo.json", R"({"n_speaker": 3})");
  EXPECT_EQ(run("simulate --spec " + path("typo.json") + " --seed 1 --out-dir " + path("x")).code, 2);
  write("ok.json", kSmallSpec);
  EXPECT_EQ(run("simulate --spec " + path("ok.json") + " --out-dir " + path("x")).code, 2);
}

TEST_F(Cli, FlagsFromFile) {
  write("v.rttm", "SPEAKER S1 1 0.000 7.500 <NA> <NA> speech <NA> <NA>\n");
  write("flags.txt", "# windowing\n--window 3\n--shift 1.5\n");
  const auto a = run("segment --vad " + path("v.rttm") + " --flags-from " + path("flags.txt"));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, run("segment --vad " + path("v.rttm") + " --window 3 --shift 1.5").out);
  EXPECT_EQ(run("segment --vad " + path("v.rttm") + " --flags-from " + path("missing.txt")).code, 2);
}

TEST_F(Cli, JobsDoNotChangeOutput) {
  simulate("b", kSmallSpec, 2, 3);
  std::string embs;
  for (int i = 0; i < 3; ++i) embs += " --emb " + path("b/sim_00" + std::to_string(i) + ".ppemb");
  const auto one = run("--jobs 1 cluster" + embs + " --method nme-sc --seed 3");
  const auto many = run("--jobs 4 cluster" + embs + " --method nme-sc --seed 3");
  ASSERT_EQ(one.code, 0) << one.err;
  EXPECT_EQ(one.out, many.out);
}

TEST_F(Cli, LogLevelControlsStderr) {
  write("r.rttm", "SPEAKER S1 1 0.000 10.000 <NA> <NA> A <NA> <NA>\n");
  const auto quiet = run("score-der --ref " + path("r.rttm") + " --hyp " + path("r.rttm"));
  EXPECT_TRUE(quiet.err.empty()) << quiet.err;
  const auto loud = run("score-der --ref " + path("r.rttm") + " --hyp " + path("r.rttm"), "PPMET_LOG=debug");
  EXPECT_NE(loud.err.find("debug"), std::string::npos) << loud.err;
  EXPECT_EQ(loud.out, quiet.out);
}
