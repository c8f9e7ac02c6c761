#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace comic {

class Vocabulary;

// Base-v positional code for word indices. A vocabulary of up to base^digits
// words is represented with base+2 embedding symbols: the digits 0..base-1
// plus single-token GO and EOS delimiters.
struct RadixConfig {
  int base = 256;
  int digits = 2;

  int go_index() const { return base; }
  int eos_index() const { return base + 1; }
  int encoded_vocab_size() const { return base + 2; }

  // capacity in word indices
  std::uint64_t capacity() const {
    std::uint64_t c = 1;
    for (int i = 0; i < digits; ++i) c *= static_cast<std::uint64_t>(base);
    return c;
  }

  void validate() const;

  // word-level identity code: every index is its own single token
  static RadixConfig word(int vocab_size) { return RadixConfig{vocab_size, 1}; }
};

// Token stream in the encoded alphabet [0, base+1].
using DigitSequence = std::vector<int>;

struct DecodedCaption {
  std::vector<int> word_ids;
  bool valid = true;
};

// index -> big-endian digits [i_0 .. i_{d-1}], most significant first
std::vector<int> encode_index(std::uint64_t index, const RadixConfig& cfg);

// exact inverse of encode_index; throws on malformed digits or wrong length
std::uint64_t decode_digits(std::span<const int> digits, const RadixConfig& cfg);

// concatenated digits of each word, no GO/EOS (the dataset layer adds those)
DigitSequence encode_caption(std::span<const int> word_ids, const RadixConfig& cfg);

// Robust inverse for raw model output. Stops at the first EOS, strips one
// leading GO, then groups digits d at a time. Any group containing a special
// token, any trailing partial group, and any decoded index >= vocab_size
// becomes the UNK word id (vocab_size - 1) and flips valid to false.
DecodedCaption decode_caption(std::span<const int> tokens, const RadixConfig& cfg,
                              int vocab_size);

// word_vocab_size / (base + 2), rounded to one decimal for reporting
double reduction_factor(std::uint64_t word_vocab_size, const RadixConfig& cfg);

// Fixed-depth decoding tree: walking `digits` edges from the root lands on
// the word whose index encodes to that digit path.
class DecodeTrie {
 public:
  DecodeTrie(const Vocabulary& vocab, const RadixConfig& cfg);

  // full d-digit path -> word string; nullopt when the path is not a word
  std::optional<std::string> lookup(std::span<const int> digits) const;

  std::size_t leaf_count() const { return leaf_count_; }

 private:
  struct NodeRec {
    std::vector<std::int32_t> child;  // size base, -1 = absent
    std::int32_t word = -1;           // leaf payload: vocabulary index
  };
  int base_;
  int digits_;
  std::vector<NodeRec> nodes_;
  std::vector<std::string> words_;
  std::size_t leaf_count_ = 0;
};

}  // namespace comic
