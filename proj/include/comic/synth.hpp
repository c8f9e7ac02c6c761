#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "comic/corpus.hpp"
#include "comic/vocab.hpp"

namespace comic {

// Compositional scene on a 4x4 grid: 1-3 colored shapes, no shared cells.
// The caption is a fixed template realization, so it is an exact function
// of the object list.
struct SynthScene {
  struct Object {
    int shape = 0;  // index into synth_shapes()
    int color = 0;  // index into synth_colors()
    int cell = 0;   // 0..15, row-major
  };
  std::vector<Object> objects;  // sorted by cell
};

const std::vector<std::string>& synth_shapes();  // 5 entries
const std::vector<std::string>& synth_colors();  // 6 entries

inline constexpr int kSynthGridSide = 4;
inline constexpr int kSynthLocations = 16;
inline constexpr int kSynthMinVocab = 300;

std::string synth_caption(const SynthScene& scene);

// Per-(shape, color) unit signature vectors, mutually orthogonal, fixed by
// the table seed (independent of the dataset seed).
struct SignatureTable {
  std::size_t channels = 0;
  std::vector<float> data;  // [shapes*colors, channels]

  const float* at(int shape, int color) const {
    return data.data() + (static_cast<std::size_t>(shape) * synth_colors().size() + color) * channels;
  }

  static SignatureTable make(std::size_t channels, std::uint64_t table_seed = 0x510);

  // nearest-signature readout of one cell; returns false for empty cells
  bool decode_cell(const float* cell, int* shape, int* color) const;
};

struct SynthRecord {
  SynthScene scene;
  FeatureMap features;
  std::string caption;
  std::string id;
};

struct SynthResult {
  std::vector<SynthRecord> records;
  Vocabulary vocab;  // template words + distractor padding, >= 300 entries
};

// Deterministic given seed. Feature maps have 16 locations; an occupied cell
// carries its (shape, color) signature plus N(0, noise_sd) noise, empty cells
// are pure noise.
SynthResult synth_generate(std::uint64_t seed, std::size_t count, std::size_t feature_channels,
                           double noise_sd);

// Writes dataset.jsonl, vocab.tsv, scenes.jsonl and features/*.fmap into dir.
void synth_write(const SynthResult& result, const std::string& dir);

// scenes.jsonl reader (ground truth for attention-locality checks)
std::vector<SynthScene> read_scenes(const std::string& path);

}  // namespace comic
