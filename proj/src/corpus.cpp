#include "comic/corpus.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "comic/errors.hpp"

namespace comic {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<float> FeatureMap::mean_embedding() const {
  std::vector<float> out(channels, 0.0f);
  for (std::size_t j = 0; j < locations; ++j)
    for (std::size_t c = 0; c < channels; ++c) out[c] += at(j, c);
  for (auto& v : out) v /= static_cast<float>(locations);
  return out;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature_map(const FeatureMap& fm, const std::string& path) {
  if (fm.locations == 0 || fm.channels == 0)
    throw std::invalid_argument("feature map must be non-empty");
  if (fm.data.size() != fm.locations * fm.channels)
    throw std::invalid_argument("feature map payload size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot open feature map for writing: " + path);
  out.write("FMAP", 4);
  put_u32(out, static_cast<std::uint32_t>(fm.locations));
  put_u32(out, static_cast<std::uint32_t>(fm.channels));
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(fm.data.data()),
            static_cast<std::streamsize>(fm.data.size() * 4));
  if (!out) throw format_error("failed writing feature map: " + path);
}

FeatureMap read_feature_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open feature map: " + path);
  unsigned char header[12];
  in.read(reinterpret_cast<char*>(header), 12);
  if (in.gcount() != 12)
    throw format_error(path + ": truncated header at byte offset " +
                       std::to_string(in.gcount()));
  if (std::memcmp(header, "FMAP", 4) != 0)
    throw format_error(path + ": bad magic at byte offset 0 (expected FMAP)");
  FeatureMap fm;
  fm.locations = get_u32(header + 4);
  fm.channels = get_u32(header + 8);
  if (fm.locations == 0 || fm.channels == 0)
    throw format_error(path + ": zero dimension in header at byte offset 4");
  std::size_t n = fm.locations * fm.channels;
  fm.data.resize(n);
  in.read(reinterpret_cast<char*>(fm.data.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(in.gcount()) != n * 4)
    throw format_error(path + ": truncated payload at byte offset " +
                       std::to_string(12 + in.gcount()) + " (expected " + std::to_string(n * 4) +
                       " payload bytes)");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(fm.data[i]))
      throw format_error(path + ": non-finite value at byte offset " + std::to_string(12 + i * 4) +
                         " (location " + std::to_string(i / fm.channels) + ", channel " +
                         std::to_string(i % fm.channels) + ")");
  return fm;
}

Dataset read_dataset(const std::string& jsonl_path, const Vocabulary* vocab,
                     std::size_t max_caption_words) {
  std::ifstream in(jsonl_path);
  if (!in) throw format_error("cannot open dataset: " + jsonl_path);
  fs::path base = fs::path(jsonl_path).parent_path();
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw format_error(jsonl_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    CaptionRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.feature_path = (base / j.at("features").get<std::string>()).string();
      for (const auto& c : j.at("captions")) rec.captions.push_back(c.get<std::string>());
    } catch (const json::exception& e) {
      throw format_error(jsonl_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (vocab)
      for (const auto& c : rec.captions)
        rec.caption_ids.push_back(truncate_and_index(tokenize(c), *vocab, max_caption_words));
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& jsonl_path) {
  std::ofstream out(jsonl_path, std::ios::binary);
  if (!out) throw format_error("cannot open dataset for writing: " + jsonl_path);
  fs::path base = fs::path(jsonl_path).parent_path();
  for (const auto& rec : ds.records) {
    json j;
    j["id"] = rec.id;
    j["features"] = fs::relative(rec.feature_path, base).string();
    j["captions"] = rec.captions;
    out << j.dump() << '\n';
  }
  if (!out) throw format_error("failed writing dataset: " + jsonl_path);
}

LoadedData load_data_dir(const std::string& dir, std::size_t max_caption_words) {
  LoadedData out{Dataset{}, Vocabulary::load((fs::path(dir) / Dataset::kVocabFile).string())};
  out.dataset =
      read_dataset((fs::path(dir) / Dataset::kDatasetFile).string(), &out.vocab, max_caption_words);
  return out;
}

}  // namespace comic
