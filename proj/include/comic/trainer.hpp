#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "comic/corpus.hpp"
#include "comic/decoder.hpp"
#include "comic/errors.hpp"
#include "comic/init.hpp"
#include "comic/radix.hpp"
#include "comic/tape.hpp"

namespace comic {

struct TrainConfig {
  double lr0 = 1e-3;
  int halve_every_epochs = 4;
  double lr_min = 2e-4;
  int epochs = 20;
  int batch_size = 32;
  double dropout = 0.35;
  double weight_decay = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (lr_min > lr0) throw config_error("lr_min must be <= lr0");
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (halve_every_epochs < 1) throw config_error("halve_every_epochs must be >= 1");
  }
};

// Halving schedule with a floor: lr0 * 0.5^floor(epoch / halve_every), never
// below lr_min. Epochs are 0-based.
inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("epoch must be >= 0");
  double lr = cfg.lr0 * std::pow(0.5, epoch / cfg.halve_every_epochs);
  return std::max(cfg.lr_min, lr);
}

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  static AdamState init(const ParameterSet<T>& params) {
    AdamState s;
    for (const auto& p : params.items) {
      s.m.push_back(Tensor<T>::zeros(p.value.shape));
      s.v.push_back(Tensor<T>::zeros(p.value.shape));
    }
    return s;
  }
};

// Standard Adam with bias correction; consumes param.grad.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr, const TrainConfig& cfg) {
  if (state.m.size() != params.items.size())
    throw std::logic_error("adam state does not match parameter set");
  state.step += 1;
  double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  std::size_t pi = 0;
  for (auto& p : params.items) {
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      double g = static_cast<double>(p.grad.data[i]);
      if (!std::isfinite(g))
        throw numeric_error("non-finite gradient in parameter " + p.name + " at element " +
                            std::to_string(i));
      double mi = b1 * static_cast<double>(m.data[i]) + (1.0 - b1) * g;
      double vi = b2 * static_cast<double>(v.data[i]) + (1.0 - b2) * g * g;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      double update = lr * (mi / corr1) / (std::sqrt(vi / corr2) + cfg.adam_eps);
      p.value.data[i] = static_cast<T>(static_cast<double>(p.value.data[i]) - update);
    }
    ++pi;
  }
}

// One training example: feature map plus its encoded target sequence
// (GO digits... EOS).
struct TrainExample {
  FeatureMap features;
  std::vector<int> sequence;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss_total = 0;
  double loss_nll = 0;
  double loss_attn = 0;
  double loss_l2 = 0;
  double wall_s = 0;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  std::string final_checkpoint;
};

// Full optimization loop: seed-deterministic shuffling, teacher-forced
// batches, Adam updates, one checkpoint (with optimizer moments) per epoch,
// and a JSON-lines log. Resumes from `resume_from` when given; aborts on
// divergence keeping the last finished epoch's checkpoint on disk.
TrainResult train(const std::vector<TrainExample>& data, const DecoderConfig& model_cfg,
                  const RadixConfig& radix, const TrainConfig& train_cfg,
                  const std::string& out_dir,
                  const std::optional<std::string>& resume_from = std::nullopt);

// Encode dataset records for training: radix-encode each caption's word ids
// and wrap in GO/EOS. Uses the first caption of each record.
std::vector<TrainExample> prepare_examples(const Dataset& dataset, const RadixConfig& radix);

}  // namespace comic
