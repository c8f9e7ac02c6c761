#include "comic/radix.hpp"

#include <cmath>
#include <stdexcept>

#include "comic/errors.hpp"
#include "comic/vocab.hpp"

namespace comic {

void RadixConfig::validate() const {
  if (base < 2) throw config_error("radix base must be >= 2, got " + std::to_string(base));
  if (digits < 1) throw config_error("radix digits must be >= 1, got " + std::to_string(digits));
}

std::vector<int> encode_index(std::uint64_t index, const RadixConfig& cfg) {
  cfg.validate();
  std::uint64_t cap = cfg.capacity();
  if (index >= cap)
    throw std::out_of_range("word index " + std::to_string(index) + " out of range for base " +
                            std::to_string(cfg.base) + "^" + std::to_string(cfg.digits) + " = " +
                            std::to_string(cap));
  std::vector<int> digits(cfg.digits);
  for (int j = cfg.digits - 1; j >= 0; --j) {
    digits[j] = static_cast<int>(index % static_cast<std::uint64_t>(cfg.base));
    index /= static_cast<std::uint64_t>(cfg.base);
  }
  return digits;
}

std::uint64_t decode_digits(std::span<const int> digits, const RadixConfig& cfg) {
  cfg.validate();
  if (digits.size() != static_cast<std::size_t>(cfg.digits))
    throw std::invalid_argument("expected " + std::to_string(cfg.digits) + " digits, got " +
                                std::to_string(digits.size()));
  std::uint64_t index = 0;
  for (int d : digits) {
    if (d < 0 || d >= cfg.base)
      throw std::invalid_argument("malformed digit " + std::to_string(d) + " for base " +
                                  std::to_string(cfg.base));
    index = index * static_cast<std::uint64_t>(cfg.base) + static_cast<std::uint64_t>(d);
  }
  return index;
}

DigitSequence encode_caption(std::span<const int> word_ids, const RadixConfig& cfg) {
  DigitSequence out;
  out.reserve(word_ids.size() * static_cast<std::size_t>(cfg.digits));
  for (std::size_t pos = 0; pos < word_ids.size(); ++pos) {
    if (word_ids[pos] < 0)
      throw std::out_of_range("negative word id at position " + std::to_string(pos));
    std::vector<int> digits;
    try {
      digits = encode_index(static_cast<std::uint64_t>(word_ids[pos]), cfg);
    } catch (const std::out_of_range& e) {
      throw std::out_of_range("word " + std::to_string(pos) + ": " + e.what());
    }
    out.insert(out.end(), digits.begin(), digits.end());
  }
  return out;
}

DecodedCaption decode_caption(std::span<const int> tokens, const RadixConfig& cfg,
                              int vocab_size) {
  cfg.validate();
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  const int unk = vocab_size - 1;
  DecodedCaption out;

  // body = tokens up to the first EOS, minus one leading GO
  std::size_t end = 0;
  while (end < tokens.size() && tokens[end] != cfg.eos_index()) ++end;
  std::size_t begin = 0;
  if (begin < end && tokens[begin] == cfg.go_index()) ++begin;

  std::size_t d = static_cast<std::size_t>(cfg.digits);
  for (std::size_t at = begin; at < end; at += d) {
    if (at + d > end) {  // trailing partial group
      out.word_ids.push_back(unk);
      out.valid = false;
      break;
    }
    bool malformed = false;
    for (std::size_t j = 0; j < d; ++j) {
      int tok = tokens[at + j];
      if (tok < 0 || tok >= cfg.base) {  // special or garbage inside a group
        malformed = true;
        break;
      }
    }
    if (malformed) {
      out.word_ids.push_back(unk);
      out.valid = false;
      continue;
    }
    std::uint64_t id = decode_digits(tokens.subspan(at, d), cfg);
    if (id >= static_cast<std::uint64_t>(vocab_size)) {
      out.word_ids.push_back(unk);
      out.valid = false;
    } else {
      out.word_ids.push_back(static_cast<int>(id));
    }
  }
  return out;
}

double reduction_factor(std::uint64_t word_vocab_size, const RadixConfig& cfg) {
  if (word_vocab_size == 0) throw std::invalid_argument("word vocab size must be positive");
  double ratio = static_cast<double>(word_vocab_size) / static_cast<double>(cfg.encoded_vocab_size());
  return std::round(ratio * 10.0) / 10.0;
}

DecodeTrie::DecodeTrie(const Vocabulary& vocab, const RadixConfig& cfg)
    : base_(cfg.base), digits_(cfg.digits) {
  cfg.validate();
  if (static_cast<std::uint64_t>(vocab.size()) > cfg.capacity())
    throw config_error("vocabulary of " + std::to_string(vocab.size()) +
                       " words exceeds radix capacity " + std::to_string(cfg.capacity()));
  nodes_.push_back(NodeRec{std::vector<std::int32_t>(base_, -1), -1});
  words_.reserve(vocab.size());
  for (int i = 0; i < vocab.size(); ++i) {
    words_.push_back(vocab.token(i));
    auto digits = encode_index(static_cast<std::uint64_t>(i), cfg);
    std::size_t at = 0;
    for (int level = 0; level < digits_; ++level) {
      std::int32_t& slot = nodes_[at].child[digits[level]];
      if (slot < 0) {
        slot = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back(NodeRec{std::vector<std::int32_t>(base_, -1), -1});
      }
      at = static_cast<std::size_t>(slot);
    }
    nodes_[at].word = i;
    ++leaf_count_;
  }
}

std::optional<std::string> DecodeTrie::lookup(std::span<const int> digits) const {
  if (digits.size() != static_cast<std::size_t>(digits_)) return std::nullopt;
  std::size_t at = 0;
  for (int d : digits) {
    if (d < 0 || d >= base_) return std::nullopt;
    std::int32_t next = nodes_[at].child[d];
    if (next < 0) return std::nullopt;
    at = static_cast<std::size_t>(next);
  }
  if (nodes_[at].word < 0) return std::nullopt;
  return words_[nodes_[at].word];
}

}  // namespace comic
