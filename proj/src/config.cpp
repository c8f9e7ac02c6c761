#include "comic/config.hpp"

#include <fstream>

#include "comic/errors.hpp"

namespace comic {

using nlohmann::json;

void RunConfig::validate(int vocab_size) const {
  if (encoding != "radix" && encoding != "word")
    throw config_error("encoding must be \"radix\" or \"word\", got " + encoding);
  radix.validate();
  model.validate();
  train.validate();
  inference.validate();
  if (encoding == "radix" && model.encoded_vocab_size != radix.encoded_vocab_size())
    throw config_error("radix run needs model vocab == base + 2, got " +
                       std::to_string(model.encoded_vocab_size) + " vs " +
                       std::to_string(radix.encoded_vocab_size()));
  if (encoding == "word" && radix.digits != 1)
    throw config_error("word encoding must use digits = 1");
  if (vocab_size >= 0) {
    if (static_cast<std::uint64_t>(vocab_size) > radix.capacity())
      throw config_error("vocabulary of " + std::to_string(vocab_size) +
                         " words exceeds radix capacity " + std::to_string(radix.capacity()));
    if (encoding == "word" && radix.base != vocab_size)
      throw config_error("word run needs base == vocabulary size " + std::to_string(vocab_size) +
                         ", got " + std::to_string(radix.base));
  }
}

json radix_config_to_json(const RadixConfig& cfg) {
  return json{{"base", cfg.base}, {"digits", cfg.digits}};
}

RadixConfig radix_config_from_json(const json& j) {
  RadixConfig cfg;
  cfg.base = j.value("base", cfg.base);
  cfg.digits = j.value("digits", cfg.digits);
  return cfg;
}

namespace {

Projection projection_from_string(const std::string& s) {
  if (s == "none") return Projection::None;
  if (s == "untied") return Projection::Untied;
  if (s == "tied") return Projection::Tied;
  throw config_error("projection must be none|untied|tied, got " + s);
}

}  // namespace

json decoder_config_to_json(const DecoderConfig& cfg) {
  return json{{"state_size", cfg.state_size},
              {"word_size", cfg.word_size},
              {"image_embed_size", cfg.image_embed_size},
              {"encoded_vocab_size", cfg.encoded_vocab_size},
              {"dropout", cfg.dropout_rate},
              {"tie_embeddings", cfg.tie_embeddings},
              {"attention",
               {{"heads", cfg.attention.heads},
                {"mlp_size", cfg.attention.mlp_size},
                {"projection", projection_name(cfg.attention.projection)},
                {"projection_size", cfg.attention.projection_size},
                {"temperature", cfg.attention.temperature},
                {"feature_channels", cfg.attention.feature_channels}}}};
}

DecoderConfig decoder_config_from_json(const json& j) {
  DecoderConfig cfg;
  cfg.state_size = j.value("state_size", cfg.state_size);
  cfg.word_size = j.value("word_size", cfg.word_size);
  cfg.image_embed_size = j.value("image_embed_size", cfg.image_embed_size);
  cfg.encoded_vocab_size = j.value("encoded_vocab_size", cfg.encoded_vocab_size);
  cfg.dropout_rate = j.value("dropout", cfg.dropout_rate);
  cfg.tie_embeddings = j.value("tie_embeddings", cfg.tie_embeddings);
  if (j.contains("attention")) {
    const auto& a = j.at("attention");
    cfg.attention.heads = a.value("heads", cfg.attention.heads);
    cfg.attention.mlp_size = a.value("mlp_size", cfg.attention.mlp_size);
    if (a.contains("projection"))
      cfg.attention.projection = projection_from_string(a.at("projection").get<std::string>());
    cfg.attention.projection_size = a.value("projection_size", cfg.attention.projection_size);
    cfg.attention.temperature = a.value("temperature", cfg.attention.temperature);
    cfg.attention.feature_channels = a.value("feature_channels", cfg.attention.feature_channels);
  }
  cfg.attention.state_size = cfg.state_size;
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"lr0", cfg.lr0},
              {"halve_every_epochs", cfg.halve_every_epochs},
              {"lr_min", cfg.lr_min},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"dropout", cfg.dropout},
              {"weight_decay", cfg.weight_decay},
              {"adam_beta1", cfg.adam_beta1},
              {"adam_beta2", cfg.adam_beta2},
              {"adam_eps", cfg.adam_eps},
              {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.lr0 = j.value("lr0", cfg.lr0);
  cfg.halve_every_epochs = j.value("halve_every_epochs", cfg.halve_every_epochs);
  cfg.lr_min = j.value("lr_min", cfg.lr_min);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

json inference_config_to_json(const InferenceConfig& cfg) {
  return json{{"beam_size", cfg.beam_size}, {"max_tokens", cfg.max_tokens}};
}

InferenceConfig inference_config_from_json(const json& j) {
  InferenceConfig cfg;
  cfg.beam_size = j.value("beam_size", cfg.beam_size);
  cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["encoding"] = cfg.encoding;
  j["radix"] = radix_config_to_json(cfg.radix);
  j["model"] = decoder_config_to_json(cfg.model);
  j["train"] = train_config_to_json(cfg.train);
  j["inference"] = inference_config_to_json(cfg.inference);
  j["max_caption_words"] = cfg.max_caption_words;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.encoding = j.value("encoding", cfg.encoding);
  if (j.contains("radix")) cfg.radix = radix_config_from_json(j.at("radix"));
  if (j.contains("model")) cfg.model = decoder_config_from_json(j.at("model"));
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  if (j.contains("inference")) cfg.inference = inference_config_from_json(j.at("inference"));
  cfg.max_caption_words = j.value("max_caption_words", cfg.max_caption_words);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw format_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw format_error(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace comic
