#pragma once

// Bridges an external TS-VAD process into refine(): prompts are written as a
// PPEMB1 file, a shell command template is run, and the PPMAT1 file it
// writes is read back with columns labelled in prompt order.
//
// Placeholders in the template: {prompts} {out} {session}.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>

#include "ppmet/error.hpp"
#include "ppmet/ingest.hpp"
#include "ppmet/tsvad_post.hpp"
#include "ppmet/windowing.hpp"

namespace ppmet {

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

inline std::string shell_quote(const std::string& s) {
  return "'" + replace_all(s, "'", "'\\''") + "'";
}

// `workdir` must exist; each call uses a fresh numbered file pair inside it.
inline ActivityOracle file_oracle(std::string command_template, std::filesystem::path workdir,
                                  std::size_t dim) {
  auto counter = std::make_shared<int>(0);
  return [command_template = std::move(command_template), workdir = std::move(workdir), dim,
          counter](const std::string& session, std::span<const Prompt> prompts) {
    const int call = ++*counter;
    const auto stem = workdir / (session + ".call" + std::to_string(call));
    const auto prompts_path = stem.string() + ".prompts.ppemb";
    const auto out_path = stem.string() + ".activity.ppmat";

    {
      std::vector<Prompt> copy(prompts.begin(), prompts.end());
      std::ofstream f(prompts_path, std::ios::binary);
      f << write_embeddings(prompts_to_embeddings(session, copy, dim));
      if (!f) throw Error(ErrorKind::kIo, "cannot write " + prompts_path);
    }
    std::filesystem::remove(out_path);

    std::string cmd = replace_all(command_template, "{prompts}", shell_quote(prompts_path));
    cmd = replace_all(cmd, "{out}", shell_quote(out_path));
    cmd = replace_all(cmd, "{session}", shell_quote(session));
    const int status = std::system(cmd.c_str());
    if (status != 0) {
      throw Error(ErrorKind::kOracle, "oracle command exited with status " + std::to_string(status));
    }

    std::ifstream in(out_path, std::ios::binary);
    if (!in) throw Error(ErrorKind::kIo, "oracle produced no output at " + out_path);
    std::vector<std::string> labels;
    for (const auto& p : prompts) labels.push_back(p.speaker);
    return read_activity(in, labels);
  };
}

}  // namespace ppmet
