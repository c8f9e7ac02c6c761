#include "comic/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "comic/errors.hpp"
#include "comic/rng.hpp"

namespace comic {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& synth_shapes() {
  static const std::vector<std::string> shapes = {"circle", "square", "triangle", "star", "heart"};
  return shapes;
}

const std::vector<std::string>& synth_colors() {
  static const std::vector<std::string> colors = {"red", "blue", "green", "yellow", "purple", "orange"};
  return colors;
}

std::string synth_caption(const SynthScene& scene) {
  auto name = [](const SynthScene::Object& o) {
    return "a " + synth_colors()[o.color] + " " + synth_shapes()[o.shape];
  };
  const auto& obj = scene.objects;
  switch (obj.size()) {
    case 1:
      return name(obj[0]);
    case 2: {
      // objects are sorted by cell, so the first is in an earlier row or to
      // the left within the same row
      bool same_row = obj[0].cell / kSynthGridSide == obj[1].cell / kSynthGridSide;
      return name(obj[0]) + (same_row ? " left of " : " above ") + name(obj[1]);
    }
    case 3:
      return name(obj[0]) + " with " + name(obj[1]) + " and " + name(obj[2]);
    default:
      throw std::invalid_argument("scene must have 1-3 objects, got " +
                                  std::to_string(obj.size()));
  }
}

SignatureTable SignatureTable::make(std::size_t channels, std::uint64_t table_seed) {
  const std::size_t n = synth_shapes().size() * synth_colors().size();
  if (channels < n)
    throw config_error("signature table needs >= " + std::to_string(n) + " channels, got " +
                       std::to_string(channels));
  Rng rng(table_seed);
  // Gram-Schmidt over seeded Gaussian rows, accumulated in double
  std::vector<std::vector<double>> rows(n, std::vector<double>(channels));
  for (auto& row : rows)
    for (auto& v : row) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = std::inner_product(rows[i].begin(), rows[i].end(), rows[j].begin(), 0.0);
      for (std::size_t c = 0; c < channels; ++c) rows[i][c] -= dot * rows[j][c];
    }
    double norm = std::sqrt(std::inner_product(rows[i].begin(), rows[i].end(), rows[i].begin(), 0.0));
    if (norm < 1e-8) throw numeric_error("degenerate signature basis");
    for (auto& v : rows[i]) v /= norm;
  }
  SignatureTable table;
  table.channels = channels;
  table.data.resize(n * channels);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < channels; ++c)
      table.data[i * channels + c] = static_cast<float>(rows[i][c]);
  return table;
}

bool SignatureTable::decode_cell(const float* cell, int* shape, int* color) const {
  const std::size_t n = synth_shapes().size() * synth_colors().size();
  double best = 0.0;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    const float* sig = data.data() + i * channels;
    for (std::size_t c = 0; c < channels; ++c) dot += static_cast<double>(cell[c]) * sig[c];
    if (dot > best) {
      best = dot;
      best_i = i;
    }
  }
  if (best <= 0.5) return false;  // occupied cells score ~1, empty ~N(0, noise_sd)
  *shape = static_cast<int>(best_i / synth_colors().size());
  *color = static_cast<int>(best_i % synth_colors().size());
  return true;
}

namespace {

SynthScene sample_scene(Rng& rng) {
  SynthScene scene;
  double u = rng.next_double();
  std::size_t n_obj = u < 0.35 ? 1 : (u < 0.78 ? 2 : 3);
  // partial Fisher-Yates over the 16 cells
  std::array<int, kSynthLocations> cells;
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = 0; i < n_obj; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next_below(kSynthLocations - i));
    std::swap(cells[i], cells[j]);
  }
  for (std::size_t i = 0; i < n_obj; ++i) {
    SynthScene::Object o;
    o.cell = cells[i];
    o.shape = static_cast<int>(rng.next_below(synth_shapes().size()));
    o.color = static_cast<int>(rng.next_below(synth_colors().size()));
    scene.objects.push_back(o);
  }
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const auto& a, const auto& b) { return a.cell < b.cell; });
  return scene;
}

}  // namespace

SynthResult synth_generate(std::uint64_t seed, std::size_t count, std::size_t feature_channels,
                           double noise_sd) {
  if (count < 1) throw std::out_of_range("synth count must be >= 1");
  if (feature_channels < 32)
    throw std::out_of_range("synth feature channels must be >= 32, got " +
                            std::to_string(feature_channels));
  if (noise_sd < 0) throw std::out_of_range("noise_sd must be >= 0");

  SignatureTable table = SignatureTable::make(feature_channels);
  SynthResult result;
  result.records.reserve(count);
  Rng root(seed);
  char idbuf[32];
  for (std::size_t i = 0; i < count; ++i) {
    Rng rec_rng = root.derive(i);
    SynthRecord rec;
    rec.scene = sample_scene(rec_rng);
    rec.caption = synth_caption(rec.scene);
    rec.features.locations = kSynthLocations;
    rec.features.channels = feature_channels;
    rec.features.data.assign(kSynthLocations * feature_channels, 0.0f);
    for (const auto& o : rec.scene.objects) {
      const float* sig = table.at(o.shape, o.color);
      for (std::size_t c = 0; c < feature_channels; ++c)
        rec.features.at(o.cell, c) += sig[c];
    }
    if (noise_sd > 0)
      for (auto& v : rec.features.data)
        v += static_cast<float>(noise_sd * rec_rng.normal());
    std::snprintf(idbuf, sizeof idbuf, "synth_%06zu", i);
    rec.id = idbuf;
    result.records.push_back(std::move(rec));
  }

  // vocabulary: template words from the generated captions, padded with
  // distractor tokens so the radix path sees a realistically sized table
  std::map<std::string, std::uint64_t> counts;
  for (const auto& rec : result.records)
    for (const auto& tok : tokenize(rec.caption)) ++counts[tok];
  int pads = kSynthMinVocab - 1 - static_cast<int>(counts.size());
  for (int p = 0; p < pads; ++p) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "pad%03d", p);
    counts[buf] = 1;
  }
  std::vector<Vocabulary::Entry> entries;
  for (auto& [tok, n] : counts) entries.push_back({tok, n});
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.freq != b.freq) return a.freq > b.freq;
    return a.token < b.token;
  });
  result.vocab = Vocabulary(std::move(entries));
  return result;
}

void synth_write(const SynthResult& result, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "features");
  Dataset ds;
  for (const auto& rec : result.records) {
    std::string fpath = (fs::path(dir) / "features" / (rec.id + ".fmap")).string();
    write_feature_map(rec.features, fpath);
    CaptionRecord cr;
    cr.id = rec.id;
    cr.feature_path = fpath;
    cr.captions.push_back(rec.caption);
    ds.records.push_back(std::move(cr));
  }
  write_dataset(ds, (fs::path(dir) / Dataset::kDatasetFile).string());
  result.vocab.save((fs::path(dir) / Dataset::kVocabFile).string());

  std::ofstream scenes((fs::path(dir) / "scenes.jsonl").string(), std::ios::binary);
  if (!scenes) throw format_error("cannot write scenes.jsonl in " + dir);
  for (const auto& rec : result.records) {
    json j;
    j["id"] = rec.id;
    json objs = json::array();
    for (const auto& o : rec.scene.objects)
      objs.push_back({{"shape", synth_shapes()[o.shape]},
                      {"color", synth_colors()[o.color]},
                      {"cell", o.cell}});
    j["objects"] = objs;
    scenes << j.dump() << '\n';
  }
}

std::vector<SynthScene> read_scenes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open scenes file: " + path);
  auto shape_index = [](const std::string& s) {
    const auto& v = synth_shapes();
    return static_cast<int>(std::find(v.begin(), v.end(), s) - v.begin());
  };
  auto color_index = [](const std::string& s) {
    const auto& v = synth_colors();
    return static_cast<int>(std::find(v.begin(), v.end(), s) - v.begin());
  };
  std::vector<SynthScene> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    SynthScene scene;
    for (const auto& o : j.at("objects")) {
      SynthScene::Object obj;
      obj.shape = shape_index(o.at("shape").get<std::string>());
      obj.color = color_index(o.at("color").get<std::string>());
      obj.cell = o.at("cell").get<int>();
      scene.objects.push_back(obj);
    }
    out.push_back(std::move(scene));
  }
  return out;
}

}  // namespace comic
