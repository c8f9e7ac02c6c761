#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "comic/checkpoint.hpp"
#include "comic/synth.hpp"
#include "comic/trainer.hpp"

using namespace comic;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("comic_trainer_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

DecoderConfig synth_model(int base) {
  DecoderConfig cfg;
  cfg.state_size = 32;
  cfg.word_size = 16;
  cfg.image_embed_size = 64;
  cfg.encoded_vocab_size = base + 2;
  cfg.dropout_rate = 0.0;
  cfg.attention.heads = 2;
  cfg.attention.mlp_size = 16;
  cfg.attention.projection = Projection::Tied;
  cfg.attention.feature_channels = 64;
  cfg.attention.state_size = 32;
  return cfg;
}

std::vector<TrainExample> synth_examples(std::uint64_t seed, std::size_t count,
                                         const RadixConfig& radix) {
  auto result = synth_generate(seed, count, 64, 0.02);
  std::vector<TrainExample> out;
  for (const auto& rec : result.records) {
    TrainExample ex;
    ex.features = rec.features;
    std::vector<int> word_ids;
    for (const auto& tok : tokenize(rec.caption)) word_ids.push_back(result.vocab.id_of(tok));
    ex.sequence.push_back(radix.go_index());
    auto digits = encode_caption(word_ids, radix);
    ex.sequence.insert(ex.sequence.end(), digits.begin(), digits.end());
    ex.sequence.push_back(radix.eos_index());
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("learning rate halves every four epochs down to the floor") {
  TrainConfig cfg;
  CHECK(lr_at(0, cfg) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at(3, cfg) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at(4, cfg) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_at(8, cfg) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(lr_at(12, cfg) == doctest::Approx(2e-4).epsilon(1e-12));  // clamped, not 1.25e-4
  CHECK(lr_at(40, cfg) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(-1, cfg), std::invalid_argument);
}

TEST_CASE("xavier initialization bounds, variance and determinism") {
  Rng rng(1);
  auto t = xavier_init<double>({512, 512}, rng);
  double bound = std::sqrt(6.0 / 1024.0);
  double mx = 0;
  for (double v : t.data) mx = std::max(mx, std::abs(v));
  CHECK(mx <= bound);
  CHECK(mx > 0.95 * bound);  // the bound is actually approached

  Rng rng2(2);
  auto big = xavier_init<double>({1000, 1000}, rng2);
  double var = 0;
  for (double v : big.data) var += v * v;
  var /= big.numel();
  CHECK(var == doctest::Approx(2.0 / 2000.0).epsilon(0.10));

  Rng a(7), b(7);
  auto t1 = xavier_init<float>({33, 17}, a);
  auto t2 = xavier_init<float>({33, 17}, b);
  CHECK(t1.data == t2.data);
}

TEST_CASE("adam takes the textbook first step and respects zero gradients") {
  TrainConfig cfg;
  ParameterSet<double> params;
  params.add("w", Tensor<double>::scalar(1.0));
  auto state = AdamState<double>::init(params);

  params.at("w").grad.data[0] = 1.0;
  adam_step(params, state, 0.1, cfg);
  // bias-corrected first step is lr * g/(|g| + eps-ish) ~= lr
  CHECK(params.at("w").value.data[0] == doctest::Approx(0.9).epsilon(1e-6));

  params.zero_grads();
  ParameterSet<double> frozen;
  frozen.add("w", Tensor<double>::scalar(0.5));
  auto fstate = AdamState<double>::init(frozen);
  adam_step(frozen, fstate, 0.1, cfg);
  CHECK(frozen.at("w").value.data[0] == 0.5);

  params.at("w").grad.data[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(params, state, 0.1, cfg);
    FAIL("expected numeric_error");
  } catch (const numeric_error& e) {
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
}

TEST_CASE("adam minimizes a quadratic bowl") {
  TrainConfig cfg;
  ParameterSet<double> params;
  params.add("x", Tensor<double>({4}, {3.0, -2.0, 5.0, 0.5}));
  std::vector<double> target = {1.0, 1.0, -1.0, 0.0};
  auto state = AdamState<double>::init(params);
  for (int step = 0; step < 2000; ++step) {
    auto& p = params.at("x");
    for (int i = 0; i < 4; ++i) p.grad.data[i] = 2.0 * (p.value.data[i] - target[i]);
    adam_step(params, state, 0.05, cfg);
    params.zero_grads();
  }
  double err = 0;
  for (int i = 0; i < 4; ++i) err += std::abs(params.at("x").value.data[i] - target[i]);
  CHECK(err < 1e-6);
}

TEST_CASE("two-epoch training run produces logs, checkpoints, and is reproducible") {
  RadixConfig radix{32, 2};
  auto model = synth_model(32);
  auto examples = synth_examples(3, 10, radix);
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 4;
  tcfg.dropout = 0.1;
  tcfg.seed = 5;

  auto dir_a = temp_dir("runA");
  auto res_a = train(examples, model, radix, tcfg, dir_a.string());
  REQUIRE(res_a.logs.size() == 2);
  CHECK(res_a.logs[0].epoch == 0);
  CHECK(res_a.logs[1].epoch == 1);
  CHECK(res_a.logs[0].lr == doctest::Approx(1e-3));
  CHECK(fs::exists(dir_a / "ckpt_epoch_0000.ckpt"));
  CHECK(fs::exists(dir_a / "ckpt_epoch_0001.ckpt"));
  CHECK(fs::exists(dir_a / "train_log.jsonl"));

  auto dir_b = temp_dir("runB");
  auto res_b = train(examples, model, radix, tcfg, dir_b.string());
  CHECK(res_a.logs[0].loss_total == res_b.logs[0].loss_total);
  CHECK(res_a.logs[1].loss_total == res_b.logs[1].loss_total);
  CHECK(slurp(dir_a / "ckpt_epoch_0001.ckpt") == slurp(dir_b / "ckpt_epoch_0001.ckpt"));

  // dropout masks differ across epochs: loss trajectory is not frozen
  CHECK(res_a.logs[0].loss_total != res_a.logs[1].loss_total);
}

TEST_CASE("training on the synthetic task cuts the nll substantially") {
  RadixConfig radix{32, 2};
  auto model = synth_model(32);
  auto examples = synth_examples(11, 160, radix);
  TrainConfig tcfg;
  tcfg.epochs = 10;
  tcfg.batch_size = 8;
  tcfg.dropout = 0.0;
  tcfg.seed = 1;

  auto dir = temp_dir("descent");
  auto res = train(examples, model, radix, tcfg, dir.string());
  REQUIRE(res.logs.size() == 10);
  CHECK(res.logs.back().loss_nll < res.logs.front().loss_nll);
  CHECK(res.logs.back().loss_nll < 0.6 * res.logs.front().loss_nll);
  CHECK(res.logs.back().loss_total < res.logs.front().loss_total);
}

TEST_CASE("resuming from a checkpoint continues the run exactly") {
  RadixConfig radix{32, 2};
  auto model = synth_model(32);
  auto examples = synth_examples(7, 12, radix);
  TrainConfig tcfg;
  tcfg.epochs = 4;
  tcfg.batch_size = 4;
  tcfg.dropout = 0.2;  // exercises the (seed, epoch, batch) mask streams
  tcfg.seed = 9;

  auto full_dir = temp_dir("full");
  auto full = train(examples, model, radix, tcfg, full_dir.string());

  TrainConfig half = tcfg;
  half.epochs = 2;
  auto half_dir = temp_dir("half");
  train(examples, model, radix, half, half_dir.string());

  auto resumed_dir = temp_dir("resumed");
  auto resumed = train(examples, model, radix, tcfg, resumed_dir.string(),
                       (half_dir / "ckpt_epoch_0001.ckpt").string());
  REQUIRE(resumed.logs.size() == 2);  // epochs 2 and 3 only
  CHECK(resumed.logs[0].epoch == 2);
  CHECK(resumed.logs[0].loss_total == full.logs[2].loss_total);
  CHECK(resumed.logs[1].loss_total == full.logs[3].loss_total);
  CHECK(slurp(full_dir / "ckpt_epoch_0003.ckpt") == slurp(resumed_dir / "ckpt_epoch_0003.ckpt"));
}

TEST_CASE("empty dataset is rejected") {
  RadixConfig radix{32, 2};
  TrainConfig tcfg;
  auto dir = temp_dir("empty");
  CHECK_THROWS_AS(train({}, synth_model(32), radix, tcfg, dir.string()), std::invalid_argument);
}
