#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "comic/tensor.hpp"
#include "comic/vocab.hpp"

namespace comic {

// |F| x r grid of spatial feature vectors, row-major by location.
struct FeatureMap {
  std::size_t locations = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  float& at(std::size_t loc, std::size_t ch) { return data[loc * channels + ch]; }
  float at(std::size_t loc, std::size_t ch) const { return data[loc * channels + ch]; }

  Tensor<float> tensor() const { return Tensor<float>({locations, channels}, data); }

  // mean over locations; stands in for a global image embedding (z = r)
  std::vector<float> mean_embedding() const;
};

// binary format: magic "FMAP", u32 LE locations, u32 LE channels,
// then locations*channels f32 LE values, row-major by location
void write_feature_map(const FeatureMap& fm, const std::string& path);
FeatureMap read_feature_map(const std::string& path);

// One image with its reference captions (raw strings as found in the
// dataset file plus their indexed forms).
struct CaptionRecord {
  std::string id;
  std::string feature_path;  // resolved, absolute or cwd-relative
  std::vector<std::string> captions;
  std::vector<std::vector<int>> caption_ids;  // word indices, no specials
};

struct Dataset {
  std::vector<CaptionRecord> records;

  static constexpr const char* kDatasetFile = "dataset.jsonl";
  static constexpr const char* kVocabFile = "vocab.tsv";
};

// JSON-lines: {"id": str, "features": str, "captions": [str, ...]} per line.
// Feature paths are resolved relative to the jsonl file's directory.
// caption_ids are filled from `vocab` when provided (tokenize + truncate).
Dataset read_dataset(const std::string& jsonl_path, const Vocabulary* vocab = nullptr,
                     std::size_t max_caption_words = 20);

void write_dataset(const Dataset& ds, const std::string& jsonl_path);

// Convenience: directory with dataset.jsonl + vocab.tsv + features/.
struct LoadedData {
  Dataset dataset;
  Vocabulary vocab;
};
LoadedData load_data_dir(const std::string& dir, std::size_t max_caption_words = 20);

}  // namespace comic
