#include "comic/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "comic/checkpoint.hpp"
#include "comic/config.hpp"

namespace comic {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<TrainExample> prepare_examples(const Dataset& dataset, const RadixConfig& radix) {
  std::vector<TrainExample> out;
  out.reserve(dataset.records.size());
  for (const auto& rec : dataset.records) {
    if (rec.caption_ids.empty())
      throw std::invalid_argument("record " + rec.id + " has no indexed captions");
    TrainExample ex;
    ex.features = read_feature_map(rec.feature_path);
    ex.sequence.push_back(radix.go_index());
    auto digits = encode_caption(rec.caption_ids.front(), radix);
    ex.sequence.insert(ex.sequence.end(), digits.begin(), digits.end());
    ex.sequence.push_back(radix.eos_index());
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

DecoderBatch<float> make_batch(const std::vector<TrainExample>& data,
                               const std::vector<std::size_t>& idx, std::size_t begin,
                               std::size_t end, const DecoderConfig& cfg) {
  std::size_t B = end - begin;
  std::size_t F = data[idx[begin]].features.locations;
  std::size_t r = data[idx[begin]].features.channels;
  DecoderBatch<float> batch;
  batch.locations = F;
  batch.features = Tensor<float>({B * F, r});
  batch.image_embed = Tensor<float>({B, r});
  for (std::size_t b = 0; b < B; ++b) {
    const auto& ex = data[idx[begin + b]];
    if (ex.features.locations != F || ex.features.channels != r)
      throw std::invalid_argument("feature maps in one dataset must share a shape");
    std::copy(ex.features.data.begin(), ex.features.data.end(),
              batch.features.data.begin() + b * F * r);
    auto mean = ex.features.mean_embedding();
    std::copy(mean.begin(), mean.end(), batch.image_embed.data.begin() + b * r);
    batch.sequences.push_back(ex.sequence);
  }
  return batch;
}

void append_log_line(const std::string& path, const EpochLog& log) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  json j;
  j["epoch"] = log.epoch;
  j["lr"] = log.lr;
  j["loss_total"] = log.loss_total;
  j["loss_nll"] = log.loss_nll;
  j["loss_attn"] = log.loss_attn;
  j["loss_l2"] = log.loss_l2;
  j["wall_s"] = log.wall_s;
  out << j.dump() << '\n';
}

std::string ckpt_path(const std::string& dir, int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_epoch_%04d.ckpt", epoch);
  return (fs::path(dir) / buf).string();
}

}  // namespace

TrainResult train(const std::vector<TrainExample>& data, const DecoderConfig& model_cfg,
                  const RadixConfig& radix, const TrainConfig& train_cfg,
                  const std::string& out_dir, const std::optional<std::string>& resume_from) {
  model_cfg.validate();
  train_cfg.validate();
  if (data.empty()) throw std::invalid_argument("training dataset is empty");
  fs::create_directories(out_dir);

  DecoderConfig cfg = model_cfg;
  cfg.dropout_rate = train_cfg.dropout;

  ParameterSet<float> params = build_decoder_params<float>(cfg, Rng(train_cfg.seed));
  AdamState<float> adam = AdamState<float>::init(params);
  int start_epoch = 0;

  if (resume_from) {
    Checkpoint ckpt = load_checkpoint(*resume_from);
    restore_params(params, ckpt);
    std::size_t pi = 0;
    for (auto& p : params.items) {
      const Tensor<float>* m = ckpt.find("adam/m/" + p.name);
      const Tensor<float>* v = ckpt.find("adam/v/" + p.name);
      if (!m || !v) throw format_error("checkpoint lacks optimizer state for " + p.name);
      adam.m[pi] = *m;
      adam.v[pi] = *v;
      ++pi;
    }
    adam.step = ckpt.sidecar.at("adam_step").get<std::int64_t>();
    start_epoch = ckpt.sidecar.at("epoch").get<int>() + 1;
  }

  Rng root(train_cfg.seed);
  TrainResult result;
  std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();

  for (int epoch = start_epoch; epoch < train_cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = lr_at(epoch, train_cfg);

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = root.derive(0x5affe100 + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = shuffle_rng.next_below(i);
      std::swap(order[i - 1], order[j]);
    }

    double sum_total = 0, sum_nll = 0, sum_attn = 0, sum_l2 = 0;
    std::size_t seen = 0, batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += train_cfg.batch_size) {
      std::size_t end = std::min(order.size(), begin + train_cfg.batch_size);
      auto batch = make_batch(data, order, begin, end, cfg);
      Rng drop_rng = root.derive(0xd5000000 + static_cast<std::uint64_t>(epoch))
                         .derive(batch_index);
      DropoutStream drop{drop_rng};
      Tape<float> tape;
      auto loss = teacher_forced_loss(tape, batch, params, cfg,
                                      static_cast<float>(train_cfg.weight_decay), true, drop);
      double total = tape.value(loss.total).item();
      if (!std::isfinite(total))
        throw numeric_error("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                            "; last good checkpoint is from the previous epoch");
      params.zero_grads();
      tape.backward(loss.total);
      adam_step(params, adam, lr, train_cfg);

      std::size_t B = end - begin;
      sum_total += total * B;
      sum_nll += tape.value(loss.nll).item() * static_cast<double>(B);
      sum_attn += tape.value(loss.attn_reg).item() * static_cast<double>(B);
      sum_l2 += tape.value(loss.l2).item() * static_cast<double>(B);
      seen += B;
      ++batch_index;
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.loss_total = sum_total / seen;
    log.loss_nll = sum_nll / seen;
    log.loss_attn = sum_attn / seen;
    log.loss_l2 = sum_l2 / seen;
    log.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    append_log_line(log_path, log);
    result.logs.push_back(log);

    json sidecar;
    sidecar["epoch"] = epoch;
    sidecar["adam_step"] = adam.step;
    sidecar["model"] = decoder_config_to_json(cfg);
    sidecar["radix"] = radix_config_to_json(radix);
    sidecar["train"] = train_config_to_json(train_cfg);
    Checkpoint ckpt = checkpoint_from_params(params, std::move(sidecar));
    std::size_t pi = 0;
    for (const auto& p : params.items) {
      ckpt.tensors.emplace_back("adam/m/" + p.name, adam.m[pi]);
      ckpt.tensors.emplace_back("adam/v/" + p.name, adam.v[pi]);
      ++pi;
    }
    result.final_checkpoint = ckpt_path(out_dir, epoch);
    save_checkpoint(result.final_checkpoint, ckpt);
  }
  return result;
}

}  // namespace comic
