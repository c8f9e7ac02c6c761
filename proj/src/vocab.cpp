#include "comic/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include "comic/errors.hpp"

namespace comic {

Vocabulary::Vocabulary() { index(); }

Vocabulary::Vocabulary(std::vector<Entry> ranked_entries) : entries_(std::move(ranked_entries)) {
  index();
}

void Vocabulary::index() {
  entries_.push_back(Entry{kUnkToken, 0});
  by_token_.clear();
  for (int i = 0; i < static_cast<int>(entries_.size()); ++i) {
    auto [it, inserted] = by_token_.emplace(entries_[i].token, i);
    if (!inserted) throw config_error("duplicate vocabulary token: " + entries_[i].token);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& captions,
                             std::uint64_t min_freq) {
  if (min_freq < 1) throw std::invalid_argument("min_freq must be >= 1");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& cap : captions)
    for (const auto& tok : cap) ++counts[tok];
  std::vector<Entry> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_freq && tok != kUnkToken) kept.push_back(Entry{tok, n});
  std::stable_sort(kept.begin(), kept.end(), [](const Entry& a, const Entry& b) {
    if (a.freq != b.freq) return a.freq > b.freq;
    return a.token < b.token;
  });
  return Vocabulary(std::move(kept));
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = by_token_.find(token);
  return it == by_token_.end() ? unk_id() : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return by_token_.find(token) != by_token_.end();
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("vocab id " + std::to_string(id) + " out of range " +
                            std::to_string(size()));
  return entries_[id].token;
}

std::uint64_t Vocabulary::frequency(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("vocab id " + std::to_string(id) + " out of range " +
                            std::to_string(size()));
  return entries_[id].freq;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot open vocab file for writing: " + path);
  for (const auto& e : entries_) out << e.token << '\t' << e.freq << '\n';
  if (!out) throw format_error("failed writing vocab file: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open vocab file: " + path);
  std::vector<Entry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw format_error(path + ":" + std::to_string(lineno) + ": missing tab separator");
    Entry e;
    e.token = line.substr(0, tab);
    try {
      e.freq = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw format_error(path + ":" + std::to_string(lineno) + ": bad frequency field");
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty() || entries.back().token != kUnkToken)
    throw format_error(path + ": last entry must be the UNK sentinel " +
                       std::string(kUnkToken));
  entries.pop_back();  // constructor re-appends UNK
  return Vocabulary(std::move(entries));
}

std::vector<std::string> tokenize(const std::string& text) {
  // pass 1: lowercase, map punctuation to spaces, keep apostrophes for now
  std::string t;
  t.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80 || c == '\'')
      t.push_back(static_cast<char>(std::tolower(c)));
    else
      t.push_back(' ');
  }
  // pass 2: drop apostrophes not flanked by word characters
  std::string u;
  u.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '\'') {
      bool before = i > 0 && t[i - 1] != ' ' && t[i - 1] != '\'';
      bool after = i + 1 < t.size() && t[i + 1] != ' ' && t[i + 1] != '\'';
      if (before && after) u.push_back('\'');
      // else skip
    } else {
      u.push_back(t[i]);
    }
  }
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < u.size()) {
    while (i < u.size() && u[i] == ' ') ++i;
    std::size_t j = i;
    while (j < u.size() && u[j] != ' ') ++j;
    if (j > i) out.push_back(u.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<int> truncate_and_index(std::span<const std::string> tokens, const Vocabulary& vocab,
                                    std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  std::vector<int> ids;
  ids.reserve(std::min(tokens.size(), max_len));
  for (std::size_t i = 0; i < tokens.size() && i < max_len; ++i)
    ids.push_back(vocab.id_of(tokens[i]));
  return ids;
}

}  // namespace comic
