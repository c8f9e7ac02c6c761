#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "comic/errors.hpp"
#include "comic/radix.hpp"
#include "comic/rng.hpp"
#include "comic/vocab.hpp"

using namespace comic;

TEST_CASE("encode_index produces big-endian digits") {
  RadixConfig v128{128, 2};
  CHECK(encode_index(0, v128) == std::vector<int>{0, 0});
  CHECK(encode_index(2118, v128) == std::vector<int>{16, 70});  // 16*128 + 70
  CHECK(encode_index(127, v128) == std::vector<int>{0, 127});
  CHECK_THROWS_AS(encode_index(128 * 128, v128), std::out_of_range);

  // error message names the index and the capacity
  try {
    encode_index(99999, v128);
    FAIL("expected out_of_range");
  } catch (const std::out_of_range& e) {
    std::string msg = e.what();
    CHECK(msg.find("99999") != std::string::npos);
    CHECK(msg.find("16384") != std::string::npos);
  }
}

TEST_CASE("decode_digits inverts encode_index") {
  RadixConfig v128{128, 2};
  CHECK(decode_digits(std::vector<int>{16, 70}, v128) == 2118);
  CHECK(decode_digits(std::vector<int>{0, 0}, v128) == 0);
  RadixConfig v64{64, 2};
  CHECK(decode_digits(std::vector<int>{3, 5}, v64) == 3 * 64 + 5);
  CHECK_THROWS_AS(decode_digits(std::vector<int>{64, 0}, v64), std::invalid_argument);
  CHECK_THROWS_AS(decode_digits(std::vector<int>{1}, v64), std::invalid_argument);
  CHECK_THROWS_AS(decode_digits(std::vector<int>{-1, 0}, v64), std::invalid_argument);
}

TEST_CASE("roundtrip is exhaustive and order preserving") {
  for (int base : {16, 64, 128, 256}) {
    RadixConfig cfg{base, 2};
    std::vector<int> prev;
    for (std::uint64_t i = 0; i < cfg.capacity(); ++i) {
      auto digits = encode_index(i, cfg);
      REQUIRE(digits.size() == 2);
      REQUIRE(decode_digits(digits, cfg) == i);
      if (i > 0) REQUIRE(prev < digits);  // lexicographic order preservation
      prev = std::move(digits);
    }
  }
}

TEST_CASE("encode_caption flattens words in order") {
  RadixConfig v128{128, 2};
  CHECK(encode_caption(std::vector<int>{0, 2118}, v128) == DigitSequence{0, 0, 16, 70});
  CHECK(encode_caption(std::vector<int>{}, v128).empty());
  RadixConfig v256{256, 2};
  CHECK(encode_caption(std::vector<int>{5}, v256) == DigitSequence{0, 5});

  try {
    encode_caption(std::vector<int>{0, 1 << 20}, v128);
    FAIL("expected out_of_range");
  } catch (const std::out_of_range& e) {
    CHECK(std::string(e.what()).find("word 1") != std::string::npos);  // position
  }
}

TEST_CASE("decode_caption handles well formed and malformed output") {
  RadixConfig v128{128, 2};
  int go = v128.go_index(), eos = v128.eos_index();

  auto ok = decode_caption(std::vector<int>{go, 0, 0, 16, 70, eos}, v128, 9964);
  CHECK(ok.valid);
  CHECK(ok.word_ids == std::vector<int>{0, 2118});

  auto empty = decode_caption(std::vector<int>{eos}, v128, 9964);
  CHECK(empty.valid);
  CHECK(empty.word_ids.empty());

  // trailing partial group
  auto partial = decode_caption(std::vector<int>{16, eos}, v128, 9964);
  CHECK_FALSE(partial.valid);
  CHECK(partial.word_ids == std::vector<int>{9963});

  // GO inside the body poisons its group
  auto stray = decode_caption(std::vector<int>{go, 0, 0, go, 3, eos}, v128, 9964);
  CHECK_FALSE(stray.valid);
  CHECK(stray.word_ids == std::vector<int>{0, 9963});

  // decoded id beyond the vocabulary
  auto oov = decode_caption(std::vector<int>{go, 100, 100, eos}, v128, 9964);
  CHECK_FALSE(oov.valid);
  CHECK(oov.word_ids == std::vector<int>{9963});

  // everything after the first EOS is ignored
  auto tail = decode_caption(std::vector<int>{go, 0, 1, eos, 12, 13}, v128, 9964);
  CHECK(tail.valid);
  CHECK(tail.word_ids == std::vector<int>{1});

  // no EOS at all: decode to the end
  auto no_eos = decode_caption(std::vector<int>{go, 0, 1, 0, 2}, v128, 9964);
  CHECK(no_eos.valid);
  CHECK(no_eos.word_ids == std::vector<int>{1, 2});
}

TEST_CASE("decode_caption roundtrips random captions") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    RadixConfig cfg{int(16 << rng.next_below(4)), 2};
    std::vector<int> words;
    std::size_t len = rng.next_below(15);
    for (std::size_t i = 0; i < len; ++i)
      words.push_back(static_cast<int>(rng.next_below(cfg.capacity())));
    DigitSequence tokens;
    tokens.push_back(cfg.go_index());
    auto body = encode_caption(words, cfg);
    tokens.insert(tokens.end(), body.begin(), body.end());
    tokens.push_back(cfg.eos_index());
    auto decoded = decode_caption(tokens, cfg, static_cast<int>(cfg.capacity()));
    REQUIRE(decoded.valid);
    REQUIRE(decoded.word_ids == words);
  }
}

TEST_CASE("reduction factor matches published ratios") {
  RadixConfig v256{256, 2};
  CHECK(reduction_factor(9962, v256) == doctest::Approx(38.6).epsilon(1e-12));
  CHECK(reduction_factor(25598, v256) == doctest::Approx(99.2).epsilon(1e-12));
  CHECK(reduction_factor(258, v256) == doctest::Approx(1.0).epsilon(1e-12));
}

namespace {

Vocabulary vocab_of(std::vector<std::string> tokens) {
  std::vector<Vocabulary::Entry> entries;
  std::uint64_t freq = tokens.size() + 10;
  for (auto& t : tokens) entries.push_back({std::move(t), freq--});
  return Vocabulary(std::move(entries));
}

}  // namespace

TEST_CASE("decode trie mirrors the codec") {
  SUBCASE("single word, base 2, one digit") {
    RadixConfig cfg{2, 1};
    auto vocab = vocab_of({"only"});  // + UNK = 2 entries, capacity 2
    DecodeTrie trie(vocab, cfg);
    CHECK(trie.leaf_count() == 2);
    CHECK(trie.lookup(std::vector<int>{0}).value() == "only");
  }

  SUBCASE("big vocabulary with the documented path") {
    RadixConfig cfg{128, 2};
    std::vector<Vocabulary::Entry> entries;
    for (int i = 0; i < 9963; ++i) {
      std::string name = i == 0 ? "a" : (i == 2118 ? "asphalt" : "w" + std::to_string(i));
      entries.push_back({name, static_cast<std::uint64_t>(20000 - i)});
    }
    Vocabulary vocab(std::move(entries));  // 9,964 with UNK
    DecodeTrie trie(vocab, cfg);
    CHECK(trie.leaf_count() == 9964);
    CHECK(trie.lookup(std::vector<int>{16, 70}).value() == "asphalt");
    CHECK(trie.lookup(std::vector<int>{0, 0}).value() == "a");
    CHECK_FALSE(trie.lookup(std::vector<int>{127, 127}).has_value());

    // trie lookup agrees with decode_digits + vocabulary lookup everywhere
    Rng rng(3);
    for (int t = 0; t < 2000; ++t) {
      int i0 = static_cast<int>(rng.next_below(128)), i1 = static_cast<int>(rng.next_below(128));
      auto via_trie = trie.lookup(std::vector<int>{i0, i1});
      auto id = decode_digits(std::vector<int>{i0, i1}, cfg);
      if (id < 9964)
        CHECK(via_trie.value() == vocab.token(static_cast<int>(id)));
      else
        CHECK_FALSE(via_trie.has_value());
    }
  }

  SUBCASE("capacity error") {
    RadixConfig tiny{2, 2};  // capacity 4
    auto vocab = vocab_of({"a", "b", "c", "d"});  // 5 with UNK
    CHECK_THROWS_AS(DecodeTrie(vocab, tiny), config_error);
  }
}
