#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "comic/decoder.hpp"
#include "comic/inference.hpp"
#include "comic/radix.hpp"
#include "comic/trainer.hpp"

namespace comic {

// One JSON document describing a full run; CLI flags override file values.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string encoding = "radix";  // "radix" or "word"
  RadixConfig radix{32, 2};
  DecoderConfig model;
  TrainConfig train;
  InferenceConfig inference;
  std::size_t max_caption_words = 20;

  // Cross-field checks; vocab_size < 0 skips data-dependent checks.
  void validate(int vocab_size = -1) const;
};

nlohmann::json radix_config_to_json(const RadixConfig& cfg);
RadixConfig radix_config_from_json(const nlohmann::json& j);

nlohmann::json decoder_config_to_json(const DecoderConfig& cfg);
DecoderConfig decoder_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json inference_config_to_json(const InferenceConfig& cfg);
InferenceConfig inference_config_from_json(const nlohmann::json& j);

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace comic
