#pragma once

// Value types shared between the file formats and the pipeline stages.

#include <cstddef>
#include <string>
#include <vector>

#include "ppmet/timeline.hpp"

namespace ppmet {

struct EmbeddingRecord {
  Segment segment;
  std::vector<float> vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

struct EmbeddingSequence {
  std::string session;
  std::size_t dim = 0;
  std::vector<EmbeddingRecord> records;

  std::size_t size() const { return records.size(); }
  friend bool operator==(const EmbeddingSequence&, const EmbeddingSequence&) = default;
};

struct Utterance {
  std::string speaker;
  Segment segment;
  std::string text;  // UTF-8

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct AttributedTranscript {
  std::string session;
  std::vector<Utterance> utterances;

  friend bool operator==(const AttributedTranscript&, const AttributedTranscript&) = default;
};

// Frames x speakers posteriors, row-major.
struct ActivityMatrix {
  std::string session;
  double frame_shift = 0.08;
  std::vector<std::string> speakers;
  std::size_t frames = 0;
  std::vector<float> probs;

  std::size_t num_speakers() const { return speakers.size(); }
  float at(std::size_t t, std::size_t s) const { return probs[t * speakers.size() + s]; }
  float& at(std::size_t t, std::size_t s) { return probs[t * speakers.size() + s]; }

  friend bool operator==(const ActivityMatrix&, const ActivityMatrix&) = default;
};

// Labels reserved for zero-vector padding prompts and their activity columns.
inline bool is_padding_label(const std::string& label) {
  return label.rfind("<pad", 0) == 0;
}

inline std::string padding_label(std::size_t index) {
  return "<pad" + std::to_string(index) + ">";
}

}  // namespace ppmet
