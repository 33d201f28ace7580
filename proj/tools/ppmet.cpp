// ppmet: command-line front end for the diarization / scoring toolkit.
//
// Exit codes: 0 ok, 2 usage or input error, 3 runtime or oracle failure.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ppmet/file_oracle.hpp"
#include "ppmet/parallel.hpp"
#include "ppmet/ppmet.hpp"

namespace fs = std::filesystem;
using namespace ppmet;

namespace {

// Bad command line or unreadable input: exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Anything that went wrong after the inputs were accepted: exit 3.
struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::shared_ptr<spdlog::logger> g_log;

void init_logging() {
  g_log = spdlog::stderr_logger_mt("ppmet");
  g_log->set_pattern("ppmet: %l: %v");
  g_log->set_level(spdlog::level::warn);
  if (const char* env = std::getenv("PPMET_LOG")) {
    const std::string v = env;
    if (v == "debug") g_log->set_level(spdlog::level::debug);
    else if (v == "info") g_log->set_level(spdlog::level::info);
    else if (v == "warn") g_log->set_level(spdlog::level::warn);
    else g_log->warn("ignoring PPMET_LOG={} (expected debug, info or warn)", v);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "-" or empty means stdout.
void write_output(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") {
    std::cout << bytes;
    std::cout.flush();
    if (!std::cout) throw RuntimeError("write to stdout failed");
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out) throw RuntimeError("cannot write " + path);
}

// Prefixes parse errors with the file they came from.
template <typename Fn>
auto parse_input(const std::string& path, Fn fn) {
  const std::string bytes = read_file(path);
  try {
    return fn(bytes);
  } catch (const Error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

RttmFile load_rttm(const std::string& path) {
  auto f = parse_input(path, [](const std::string& b) { return parse_rttm(b); });
  if (f.skipped > 0) g_log->warn("{}: skipped {} non-SPEAKER lines", path, f.skipped);
  return f;
}

EmbeddingSequence load_embeddings(const std::string& path) {
  return parse_input(path, [](const std::string& b) { return read_embeddings(b); });
}

std::map<std::string, AttributedTranscript> load_transcript(const std::string& path) {
  return parse_input(path, [](const std::string& b) { return parse_transcript(b); });
}

std::vector<EmbeddingSequence> load_sessions(const std::vector<std::string>& paths) {
  std::vector<EmbeddingSequence> out;
  std::set<std::string> seen;
  for (const auto& p : paths) {
    out.push_back(load_embeddings(p));
    if (!seen.insert(out.back().session).second) {
      throw UsageError("session '" + out.back().session + "' given twice");
    }
  }
  return out;
}

Diarization session_or_empty(const RttmFile& f, const std::string& session) {
  auto it = f.sessions.find(session);
  return it == f.sessions.end() ? Diarization{session, {}} : it->second;
}

std::string fmt_time(double x) { return detail::fixed3(x); }

std::string fmt_rate(double x) {
  if (std::isinf(x)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::size_t g_jobs = 1;

template <typename Fn>
auto per_session(std::size_t n, Fn fn) {
  return parallel_map(n, g_jobs, fn);
}

// --flags-from FILE is replaced in place by the flags listed in FILE. Each
// non-blank line not starting with '#' holds one flag, optionally followed by
// whitespace and its value (the rest of the line, spaces kept).
std::vector<std::string> expand_flag_files(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string file;
    if (args[i] == "--flags-from") {
      if (i + 1 >= args.size()) throw UsageError("--flags-from needs a file");
      file = args[++i];
    } else if (args[i].rfind("--flags-from=", 0) == 0) {
      file = args[i].substr(13);
    } else {
      out.push_back(args[i]);
      continue;
    }
    std::istringstream in(read_file(file));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      line = line.substr(first, line.find_last_not_of(" \t") - first + 1);
      const auto gap = line.find_first_of(" \t");
      if (gap == std::string::npos) {
        out.push_back(line);
      } else {
        out.push_back(line.substr(0, gap));
        out.push_back(line.substr(line.find_first_not_of(" \t", gap)));
      }
    }
  }
  return out;
}

void add_post_flags(CLI::App* cmd, PostPolicy& p) {
  cmd->add_option("--median-width", p.median_width, "Median filter width in frames (odd)")->capture_default_str();
  cmd->add_option("--threshold", p.threshold, "Speech probability threshold")->capture_default_str();
  cmd->add_option("--min-on", p.min_on, "Drop segments shorter than this (s)")->capture_default_str();
  cmd->add_option("--min-off", p.min_off, "Bridge gaps shorter than this (s)")->capture_default_str();
}

// ---------------------------------------------------------------------------

struct SegmentArgs {
  std::string vad, out;
  WindowingPolicy policy;
};

void run_segment(const SegmentArgs& a) {
  a.policy.validate();
  const auto f = load_rttm(a.vad);
  std::vector<Diarization> sessions;
  for (const auto& [_, d] : f.sessions) sessions.push_back(d);
  auto parts = per_session(sessions.size(), [&](std::size_t i) {
    std::string s;
    for (const auto& w : subsegment(speech_union(sessions[i]), a.policy)) {
      s += sessions[i].session + "\t" + fmt_time(w.onset) + "\t" + fmt_time(w.offset) + "\n";
    }
    return s;
  });
  std::string out = "session\tonset\toffset\n";
  for (const auto& p : parts) out += p;
  write_output(a.out, out);
}

struct ClusterArgs {
  std::vector<std::string> emb;
  std::string method = "nme-sc", out, diagnostics;
  std::optional<std::uint64_t> seed;
  double threshold = 0.5;
  int k_max = 8;
  int p_max = 0;
};

void run_cluster(const ClusterArgs& a) {
  if (a.method == "nme-sc" && !a.seed) throw UsageError("cluster --method nme-sc requires --seed");
  if (a.k_max < 1) throw UsageError("--k-max must be >= 1");
  const auto sessions = load_sessions(a.emb);
  auto results = per_session(sessions.size(), [&](std::size_t i) {
    const auto& emb = sessions[i];
    const auto aff = cosine_affinity(emb);
    if (a.method == "ahc") return ahc(aff, a.threshold);
    NmeScOptions o;
    o.seed = *a.seed;
    o.k_max = a.k_max;
    for (int p = 1; p <= a.p_max && p < static_cast<int>(emb.size()); ++p) o.p_candidates.push_back(p);
    return nme_sc(aff, o);
  });
  std::map<std::string, Diarization> all;
  std::size_t width = 0;
  std::string rows;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& emb = sessions[i];
    g_log->info("{}: {} windows, k={}", emb.session, emb.size(), results[i].k);
    std::vector<Segment> windows;
    for (const auto& rec : emb.records) windows.push_back(rec.segment);
    all[emb.session] = labels_to_diarization(results[i], windows, emb.session);
    for (const auto& t : results[i].diagnostics) width = std::max(width, t.eigengaps.size());
    std::istringstream lines(diagnostics_tsv(results[i]));
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) rows += emb.session + "\t" + line + "\n";
  }
  write_output(a.out, write_rttm(all));
  if (!a.diagnostics.empty()) {
    std::string header = "session\tp\tr\tbest_k";
    for (std::size_t k = 1; k <= width; ++k) header += "\tgap_" + std::to_string(k);
    write_output(a.diagnostics, header + "\n" + rows);
  }
}

struct FuseArgs {
  std::vector<std::string> inputs;
  std::vector<double> weights;
  bool rank_weighting = false;
  std::string out;
};

void run_fuse(const FuseArgs& a) {
  std::vector<RttmFile> files;
  std::set<std::string> names;
  for (const auto& p : a.inputs) {
    files.push_back(load_rttm(p));
    for (const auto& [s, _] : files.back().sessions) names.insert(s);
  }
  const FusionPolicy policy{a.weights, a.rank_weighting};
  fusion_weights(policy, files.size());  // reject bad weights before any work
  const std::vector<std::string> order(names.begin(), names.end());
  auto fused = per_session(order.size(), [&](std::size_t i) {
    std::vector<Diarization> hyps;
    for (const auto& f : files) hyps.push_back(session_or_empty(f, order[i]));
    return dover_lap(hyps, policy);
  });
  std::map<std::string, Diarization> all;
  for (auto& d : fused) all[d.session] = d;
  write_output(a.out, write_rttm(all));
}

struct PromptsArgs {
  std::string rttm, emb, out, labels_out;
  std::size_t max_speakers = 4;
  double min_inside = 1.0;
};

void run_prompts(const PromptsArgs& a) {
  const auto f = load_rttm(a.rttm);
  const auto emb = load_embeddings(a.emb);
  const auto d = normalize(session_or_empty(f, emb.session));
  if (d.segments.empty()) throw UsageError("no segments for session '" + emb.session + "' in " + a.rttm);
  const auto prompts = session_prompts(d, emb, a.max_speakers, a.min_inside);
  write_output(a.out, write_embeddings(prompts_to_embeddings(emb.session, prompts, emb.dim)));
  if (!a.labels_out.empty()) {
    std::string labels;
    for (const auto& p : prompts) labels += p.speaker + "\n";
    write_output(a.labels_out, labels);
  }
}

struct PostArgs {
  std::vector<std::string> mats;
  std::vector<std::string> speakers;
  std::string out;
  PostPolicy policy;
};

void run_tsvad_post(const PostArgs& a) {
  a.policy.validate();
  if (!a.speakers.empty() && a.mats.size() != 1) throw UsageError("--speakers needs exactly one --mat");
  std::vector<ActivityMatrix> mats;
  for (const auto& p : a.mats) {
    std::optional<std::vector<std::string>> labels;
    if (!a.speakers.empty()) labels = a.speakers;
    mats.push_back(parse_input(p, [&](const std::string& b) { return read_activity(b, labels); }));
  }
  auto ds = per_session(mats.size(), [&](std::size_t i) {
    return binarize(smooth(mats[i], a.policy.median_width), a.policy);
  });
  std::map<std::string, Diarization> all;
  for (auto& d : ds) {
    if (all.count(d.session)) throw UsageError("session '" + d.session + "' given twice");
    all[d.session] = d;
  }
  write_output(a.out, write_rttm(all));
}

struct RefineArgs {
  std::string rttm, oracle_cmd, workdir, out;
  std::vector<std::string> emb;
  RefineOptions options;
  bool keep_workdir = false;
};

void run_refine(const RefineArgs& a) {
  a.options.policy.validate();
  if (a.options.iterations < 0) throw UsageError("--iterations must be >= 0");
  if (a.oracle_cmd.find("{prompts}") == std::string::npos || a.oracle_cmd.find("{out}") == std::string::npos) {
    throw UsageError("--oracle-cmd must contain {prompts} and {out}");
  }
  const auto f = load_rttm(a.rttm);
  const auto sessions = load_sessions(a.emb);

  fs::path workdir = a.workdir;
  bool remove_after = false;
  if (workdir.empty()) {
    std::string tmpl = (fs::temp_directory_path() / "ppmet-refine-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw RuntimeError("cannot create a work directory");
    workdir = tmpl;
    remove_after = !a.keep_workdir;
  } else {
    fs::create_directories(workdir);
  }
  g_log->debug("refine work directory {}", workdir.string());

  struct Cleanup {
    fs::path dir;
    bool active;
    ~Cleanup() {
      std::error_code ec;
      if (active) fs::remove_all(dir, ec);
    }
  } cleanup{workdir, remove_after};

  auto results = per_session(sessions.size(), [&](std::size_t i) {
    const auto& emb = sessions[i];
    const auto d0 = session_or_empty(f, emb.session);
    if (d0.segments.empty()) throw UsageError("no initial segments for session '" + emb.session + "'");
    const auto oracle = file_oracle(a.oracle_cmd, workdir, emb.dim);
    auto r = refine(d0, emb, oracle, a.options);
    g_log->info("{}: {} speakers after {} iteration(s)", emb.session, r.diarization.speakers().size(),
                a.options.iterations);
    return r.diarization;
  });
  std::map<std::string, Diarization> all;
  for (auto& d : results) all[d.session] = d;
  write_output(a.out, write_rttm(all));
}

struct DerArgs {
  std::string ref, hyp, out;
  double collar = 0.0;
  bool no_score_overlap = false;
};

void run_score_der(const DerArgs& a) {
  if (a.collar < 0.0) throw UsageError("--collar must be >= 0");
  const auto ref = load_rttm(a.ref);
  const auto hyp = load_rttm(a.hyp);
  std::set<std::string> names;
  for (const auto& [s, _] : ref.sessions) names.insert(s);
  for (const auto& [s, _] : hyp.sessions) names.insert(s);
  const std::vector<std::string> order(names.begin(), names.end());
  const DerOptions options{a.collar, !a.no_score_overlap};
  auto reports = per_session(order.size(), [&](std::size_t i) {
    return der(session_or_empty(ref, order[i]), session_or_empty(hyp, order[i]), options);
  });
  std::string out = "session\tmiss\tfa\tconfusion\tder\n";
  double miss = 0, fa = 0, conf = 0, total = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = reports[i];
    out += order[i] + "\t" + fmt_time(r.miss) + "\t" + fmt_time(r.false_alarm) + "\t" + fmt_time(r.confusion) +
           "\t" + fmt_rate(r.der) + "\n";
    miss += r.miss;
    fa += r.false_alarm;
    conf += r.confusion;
    total += r.total_ref;
  }
  const double errors = miss + fa + conf;
  const double rate = total > 0.0 ? errors / total : (errors > 0.0 ? INFINITY : 0.0);
  out += "ALL\t" + fmt_time(miss) + "\t" + fmt_time(fa) + "\t" + fmt_time(conf) + "\t" + fmt_rate(rate) + "\n";
  write_output(a.out, out);
}

struct CpCerArgs {
  std::string ref, hyp, out;
  bool keep_whitespace = false, keep_punctuation = false, no_compose = false;
};

TextNormPolicy norm_from(bool keep_ws, bool keep_punct, bool no_compose) {
  return TextNormPolicy{!keep_ws, !keep_punct, !no_compose};
}

void run_score_cpcer(const CpCerArgs& a) {
  const auto ref = load_transcript(a.ref);
  const auto hyp = load_transcript(a.hyp);
  std::set<std::string> names;
  for (const auto& [s, _] : ref) names.insert(s);
  for (const auto& [s, _] : hyp) names.insert(s);
  const std::vector<std::string> order(names.begin(), names.end());
  const auto norm = norm_from(a.keep_whitespace, a.keep_punctuation, a.no_compose);
  auto get = [](const auto& m, const std::string& s) {
    auto it = m.find(s);
    return it == m.end() ? AttributedTranscript{s, {}} : it->second;
  };
  auto reports = per_session(order.size(), [&](std::size_t i) {
    return cp_cer(get(ref, order[i]), get(hyp, order[i]), norm);
  });
  std::string out = "session\tS\tI\tD\tref_chars\tcp_cer\n";
  EditOps total;
  std::int64_t chars = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = reports[i];
    out += order[i] + "\t" + std::to_string(r.ops.substitutions) + "\t" + std::to_string(r.ops.insertions) +
           "\t" + std::to_string(r.ops.deletions) + "\t" + std::to_string(r.ref_chars) + "\t" +
           fmt_rate(r.cp_cer) + "\n";
    total += r.ops;
    chars += r.ref_chars;
  }
  out += "ALL\t" + std::to_string(total.substitutions) + "\t" + std::to_string(total.insertions) + "\t" +
         std::to_string(total.deletions) + "\t" + std::to_string(chars) + "\t" +
         fmt_rate(error_rate(total.total(), chars)) + "\n";
  write_output(a.out, out);
}

struct RoverArgs {
  std::vector<std::string> inputs;
  std::vector<double> weights;
  std::string out;
  bool keep_whitespace = false, keep_punctuation = false, no_compose = false;
};

// Utterances are matched across inputs by (session, speaker, onset, offset);
// an input lacking an utterance contributes an empty hypothesis for it.
void run_rover(const RoverArgs& a) {
  if (!a.weights.empty() && a.weights.size() != a.inputs.size()) {
    throw UsageError("--weights needs one value per input");
  }
  std::vector<std::map<std::string, AttributedTranscript>> files;
  std::set<std::string> names;
  for (const auto& p : a.inputs) {
    files.push_back(load_transcript(p));
    for (const auto& [s, _] : files.back()) names.insert(s);
  }
  const auto norm = norm_from(a.keep_whitespace, a.keep_punctuation, a.no_compose);
  const std::vector<std::string> order(names.begin(), names.end());
  auto fused = per_session(order.size(), [&](std::size_t i) {
    using Key = std::tuple<double, std::string, double>;
    std::map<Key, std::vector<std::string>> texts;
    for (std::size_t h = 0; h < files.size(); ++h) {
      auto it = files[h].find(order[i]);
      if (it == files[h].end()) continue;
      for (const auto& u : it->second.utterances) {
        auto& slot = texts[{u.segment.onset, u.speaker, u.segment.offset}];
        slot.resize(files.size());
        if (!slot[h].empty()) slot[h] += " ";
        slot[h] += u.text;
      }
    }
    AttributedTranscript t{order[i], {}};
    for (auto& [key, hyps] : texts) {
      const auto& [onset, speaker, offset] = key;
      t.utterances.push_back({speaker, {onset, offset}, rover_text(hyps, a.weights, norm)});
    }
    std::stable_sort(t.utterances.begin(), t.utterances.end(), utterance_order);
    return t;
  });
  std::map<std::string, AttributedTranscript> all;
  for (auto& t : fused) all[t.session] = t;
  write_output(a.out, write_transcript(all));
}

struct SimulateArgs {
  std::string spec, out_dir;
  std::optional<std::uint64_t> seed;
  int sessions = 1;
};

sim::SessionSpec load_spec(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError(path + ": expected a JSON object");
  sim::SessionSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "session") s.session = value.get<std::string>();
      else if (key == "n_speakers") s.n_speakers = value.get<int>();
      else if (key == "duration") s.duration = value.get<double>();
      else if (key == "overlap_ratio") s.overlap_ratio = value.get<double>();
      else if (key == "mean_turn") s.mean_turn = value.get<double>();
      else if (key == "dim") s.dim = value.get<std::size_t>();
      else if (key == "separation_deg") s.separation_deg = value.get<double>();
      else if (key == "noise_deg") s.noise_deg = value.get<double>();
      else throw UsageError(path + ": unknown field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  return s;
}

// Writes ref.rttm, ref.tsv, and per session <id>.ppemb (window embeddings),
// <id>.ppmat (true activity), <id>.protos.ppemb (speaker prototypes).
void run_simulate(const SimulateArgs& a) {
  if (!a.seed) throw UsageError("simulate requires --seed");
  if (a.sessions < 1) throw UsageError("--sessions must be >= 1");
  const auto base = load_spec(a.spec);
  try {
    base.validate();
  } catch (const Error& e) {
    throw UsageError(a.spec + ": " + e.what());
  }
  fs::create_directories(a.out_dir);
  const fs::path dir = a.out_dir;

  struct Bundle {
    Diarization d;
    AttributedTranscript t;
  };
  auto bundles = per_session(static_cast<std::size_t>(a.sessions), [&](std::size_t i) {
    auto spec = base;
    spec.seed = *a.seed + i;
    if (a.sessions > 1) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "_%03zu", i);
      spec.session += buf;
    }
    const auto d = sim::gen_diarization(spec);
    const auto vectors = sim::gen_prototypes(spec.n_speakers, spec.dim, spec.separation_deg, spec.seed);
    const auto emb = sim::gen_embeddings(d, sim::name_prototypes(vectors), WindowingPolicy{}, spec.noise_deg, spec.seed);

    std::vector<std::string> labels;
    EmbeddingSequence protos{spec.session, spec.dim, {}};
    for (std::size_t k = 0; k < vectors.size(); ++k) {
      labels.push_back(sim::speaker_name(static_cast<int>(k)));
      protos.records.push_back({{0.0, 0.0}, std::vector<float>(vectors[k].begin(), vectors[k].end())});
    }
    const auto activity = segments_to_activity(d, sim::kTimeGrid, labels);

    write_output((dir / (spec.session + ".ppemb")).string(), write_embeddings(emb));
    write_output((dir / (spec.session + ".ppmat")).string(), write_activity(activity));
    write_output((dir / (spec.session + ".protos.ppemb")).string(), write_embeddings(protos));
    return Bundle{d, sim::gen_transcript(d, sim::default_alphabet(), 4.0, spec.seed)};
  });
  std::map<std::string, Diarization> ds;
  std::map<std::string, AttributedTranscript> ts;
  for (auto& b : bundles) {
    ds[b.d.session] = b.d;
    ts[b.t.session] = b.t;
  }
  write_output((dir / "ref.rttm").string(), write_rttm(ds));
  write_output((dir / "ref.tsv").string(), write_transcript(ts));
}

struct SimOracleArgs {
  std::string truth, prototypes, prompts, out;
  double confusion = 0.0;
  std::optional<std::uint64_t> seed;
};

// A file oracle for refine backed by the simulator: columns follow the prompt
// records; zero-vector prompts are padding.
void run_sim_oracle(const SimOracleArgs& a) {
  if (a.confusion > 0.0 && !a.seed) throw UsageError("sim-oracle --confusion > 0 requires --seed");
  if (!(a.confusion >= 0.0 && a.confusion <= 1.0)) throw UsageError("--confusion must be in [0, 1]");
  const auto prompts_file = load_embeddings(a.prompts);
  const auto protos = load_embeddings(a.prototypes);
  const auto truth = normalize(session_or_empty(load_rttm(a.truth), prompts_file.session));

  sim::Prototypes named;
  for (std::size_t k = 0; k < protos.size(); ++k) {
    const auto& v = protos.records[k].vector;
    named[sim::speaker_name(static_cast<int>(k))] = std::vector<double>(v.begin(), v.end());
  }
  std::vector<Prompt> prompts;
  for (std::size_t k = 0; k < prompts_file.size(); ++k) {
    const auto& v = prompts_file.records[k].vector;
    Prompt p{"p" + std::to_string(k), std::vector<double>(v.begin(), v.end()), 0.0};
    for (double x : p.vector) {
      if (x != 0.0) p.support = 1.0;
    }
    prompts.push_back(std::move(p));
  }
  const auto oracle = sim::gen_oracle(truth, named, a.confusion, a.seed.value_or(0), sim::kTimeGrid);
  write_output(a.out, write_activity(oracle(prompts_file.session, prompts)));
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kOracle:
    case ErrorKind::kNumerical:
    case ErrorKind::kDegenerate:
    case ErrorKind::kIo:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();

  std::vector<std::string> args;
  try {
    args = expand_flag_files(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const std::exception& e) {
    g_log->error("{}", e.what());
    return 2;
  }

  CLI::App app{"ppmet: meeting diarization and speaker-attributed scoring toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--jobs", g_jobs, "Sessions processed in parallel")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--flags-from", "Read further flags from a file, one per line");

  SegmentArgs seg;
  auto* c_seg = app.add_subcommand("segment", "Cut VAD regions into embedding windows (TSV)");
  c_seg->add_option("--vad", seg.vad, "VAD/diarization RTTM")->required();
  c_seg->add_option("--window", seg.policy.window, "Window length (s)")->capture_default_str();
  c_seg->add_option("--shift", seg.policy.shift, "Window shift (s)")->capture_default_str();
  c_seg->add_option("--min-window", seg.policy.min_window, "Shortest regular window (s)")->capture_default_str();
  c_seg->add_option("--out", seg.out, "Output file (default stdout)");

  ClusterArgs cl;
  auto* c_cl = app.add_subcommand("cluster", "Cluster window embeddings into speakers (RTTM)");
  c_cl->add_option("--emb", cl.emb, "PPEMB1 file, one per session")->required();
  c_cl->add_option("--method", cl.method, "nme-sc or ahc")
      ->check(CLI::IsMember({"nme-sc", "ahc"}))
      ->capture_default_str();
  c_cl->add_option("--seed", cl.seed, "k-means seed (required for nme-sc)");
  c_cl->add_option("--threshold", cl.threshold, "AHC distance threshold")->capture_default_str();
  c_cl->add_option("--k-max", cl.k_max, "Largest speaker count considered by nme-sc")->capture_default_str();
  c_cl->add_option("--p-max", cl.p_max, "Largest p tried by nme-sc (0: automatic)")->capture_default_str();
  c_cl->add_option("--out", cl.out, "Output RTTM (default stdout)");
  c_cl->add_option("--diagnostics", cl.diagnostics, "Write the nme-sc tuning trace (TSV)");

  FuseArgs fu;
  auto* c_fu = app.add_subcommand("fuse", "Fuse diarization hypotheses (RTTM)");
  c_fu->add_option("inputs", fu.inputs, "Hypothesis RTTMs, best first when rank weighting")->required();
  c_fu->add_option("--weights", fu.weights, "Per-input weights")->delimiter(',');
  c_fu->add_flag("--rank-weighting", fu.rank_weighting, "Weight inputs by rank (input order)");
  c_fu->add_option("--out", fu.out, "Output RTTM (default stdout)");

  PromptsArgs pr;
  auto* c_pr = app.add_subcommand("prompts", "Pool per-speaker prompts (PPEMB1)");
  c_pr->add_option("--rttm", pr.rttm, "Diarization RTTM")->required();
  c_pr->add_option("--emb", pr.emb, "Window embeddings (PPEMB1)")->required();
  c_pr->add_option("--max-speakers", pr.max_speakers, "Prompt count after padding")->capture_default_str();
  c_pr->add_option("--min-inside", pr.min_inside, "Required single-speaker fraction of a window")
      ->capture_default_str();
  c_pr->add_option("--out", pr.out, "Output PPEMB1 (default stdout)");
  c_pr->add_option("--labels-out", pr.labels_out, "Write the prompt speaker labels, one per line");

  PostArgs po;
  auto* c_po = app.add_subcommand("tsvad-post", "Turn activity posteriors into RTTM");
  c_po->add_option("--mat", po.mats, "PPMAT1 file, one per session")->required();
  c_po->add_option("--speakers", po.speakers, "Column labels (default spk0,spk1,...)")->delimiter(',');
  add_post_flags(c_po, po.policy);
  c_po->add_option("--out", po.out, "Output RTTM (default stdout)");

  RefineArgs rf;
  auto* c_rf = app.add_subcommand("refine", "Iterate prompts through an external activity oracle");
  c_rf->add_option("--rttm", rf.rttm, "Initial diarization RTTM")->required();
  c_rf->add_option("--emb", rf.emb, "Window embeddings, one PPEMB1 per session")->required();
  c_rf->add_option("--oracle-cmd", rf.oracle_cmd,
                   "Shell command template with {prompts}, {out} and optionally {session}")
      ->required();
  c_rf->add_option("--iterations", rf.options.iterations, "Refinement iterations")->capture_default_str();
  c_rf->add_option("--max-speakers", rf.options.max_speakers, "Prompt count after padding")->capture_default_str();
  c_rf->add_option("--min-inside", rf.options.min_inside, "Required single-speaker fraction of a window")
      ->capture_default_str();
  add_post_flags(c_rf, rf.options.policy);
  c_rf->add_option("--workdir", rf.workdir, "Directory for oracle exchange files (default: temporary)");
  c_rf->add_flag("--keep-workdir", rf.keep_workdir, "Keep the temporary directory");
  c_rf->add_option("--out", rf.out, "Output RTTM (default stdout)");

  DerArgs de;
  auto* c_de = app.add_subcommand("score-der", "Diarization error rate (TSV)");
  c_de->add_option("--ref", de.ref, "Reference RTTM")->required();
  c_de->add_option("--hyp", de.hyp, "Hypothesis RTTM")->required();
  c_de->add_option("--collar", de.collar, "No-score collar around reference boundaries (s)")->capture_default_str();
  c_de->add_flag("--no-score-overlap", de.no_score_overlap, "Skip regions with overlapping reference speech");
  c_de->add_option("--out", de.out, "Output TSV (default stdout)");

  CpCerArgs cc;
  auto* c_cc = app.add_subcommand("score-cpcer", "Concatenated minimum-permutation CER (TSV)");
  c_cc->add_option("--ref", cc.ref, "Reference transcript TSV")->required();
  c_cc->add_option("--hyp", cc.hyp, "Hypothesis transcript TSV")->required();
  c_cc->add_flag("--keep-whitespace", cc.keep_whitespace, "Do not strip whitespace before scoring");
  c_cc->add_flag("--keep-punctuation", cc.keep_punctuation, "Do not strip punctuation before scoring");
  c_cc->add_flag("--no-compose", cc.no_compose, "Skip NFC composition");
  c_cc->add_option("--out", cc.out, "Output TSV (default stdout)");

  RoverArgs ro;
  auto* c_ro = app.add_subcommand("rover", "Character-level ROVER over transcript TSVs");
  c_ro->add_option("inputs", ro.inputs, "Transcript TSVs")->required();
  c_ro->add_option("--weights", ro.weights, "Per-input weights")->delimiter(',');
  c_ro->add_flag("--keep-whitespace", ro.keep_whitespace, "Do not strip whitespace before scoring");
  c_ro->add_flag("--keep-punctuation", ro.keep_punctuation, "Do not strip punctuation before scoring");
  c_ro->add_flag("--no-compose", ro.no_compose, "Skip NFC composition");
  c_ro->add_option("--out", ro.out, "Output TSV (default stdout)");

  SimulateArgs si;
  auto* c_si = app.add_subcommand("simulate", "Generate synthetic sessions");
  c_si->add_option("--spec", si.spec, "Session spec (JSON)")->required();
  c_si->add_option("--seed", si.seed, "Seed (session i uses seed + i)");
  c_si->add_option("--sessions", si.sessions, "Number of sessions")->capture_default_str();
  c_si->add_option("--out-dir", si.out_dir, "Bundle directory")->required();

  SimOracleArgs so;
  auto* c_so = app.add_subcommand("sim-oracle", "Simulated activity oracle for refine --oracle-cmd");
  c_so->add_option("--truth", so.truth, "True RTTM")->required();
  c_so->add_option("--prototypes", so.prototypes, "Speaker prototypes (PPEMB1)")->required();
  c_so->add_option("--prompts", so.prompts, "Prompts (PPEMB1)")->required();
  c_so->add_option("--out", so.out, "Output PPMAT1")->required();
  c_so->add_option("--confusion", so.confusion, "Per-cell flip probability")->capture_default_str();
  c_so->add_option("--seed", so.seed, "Flip noise seed (required when --confusion > 0)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto* sub : app.get_subcommands()) g_log->debug("{} with --jobs {}", sub->get_name(), g_jobs);

  try {
    if (*c_seg) run_segment(seg);
    else if (*c_cl) run_cluster(cl);
    else if (*c_fu) run_fuse(fu);
    else if (*c_pr) run_prompts(pr);
    else if (*c_po) run_tsvad_post(po);
    else if (*c_rf) run_refine(rf);
    else if (*c_de) run_score_der(de);
    else if (*c_cc) run_score_cpcer(cc);
    else if (*c_ro) run_rover(ro);
    else if (*c_si) run_simulate(si);
    else if (*c_so) run_sim_oracle(so);
  } catch (const UsageError& e) {
    g_log->error("{}", e.what());
    return 2;
  } catch (const OracleError& e) {
    g_log->error("{}", e.what());
    return 3;
  } catch (const Error& e) {
    g_log->error("{}", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    g_log->error("{}", e.what());
    return 3;
  }
  return 0;
}
