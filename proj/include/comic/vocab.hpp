#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace comic {

// Frequency-ranked token table. Entries are sorted by corpus frequency
// descending (ties lexicographic ascending); the UNK sentinel is always the
// last entry, so unk_id == size - 1.
class Vocabulary {
 public:
  static constexpr const char* kUnkToken = "<unk>";

  struct Entry {
    std::string token;
    std::uint64_t freq = 0;
  };

  Vocabulary();  // UNK only
  explicit Vocabulary(std::vector<Entry> ranked_entries);  // UNK appended

  static Vocabulary build(const std::vector<std::vector<std::string>>& captions,
                          std::uint64_t min_freq = 5);

  int size() const { return static_cast<int>(entries_.size()); }
  int unk_id() const { return size() - 1; }

  // token -> index, UNK index for out-of-vocabulary tokens
  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const;

  const std::string& token(int id) const;
  std::uint64_t frequency(int id) const;
  std::span<const Entry> entries() const { return entries_; }

  // UTF-8 lines "token<TAB>frequency"; line number = index (UNK included)
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void index();
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> by_token_;
};

// Lowercases, strips punctuation except apostrophes inside words, splits on
// whitespace. ASCII-oriented; bytes >= 0x80 pass through as word characters.
std::vector<std::string> tokenize(const std::string& text);

// OOV tokens map to unk_id; output hard-truncated to max_len tokens.
std::vector<int> truncate_and_index(std::span<const std::string> tokens, const Vocabulary& vocab,
                                    std::size_t max_len);

}  // namespace comic
