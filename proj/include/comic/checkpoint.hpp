#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "comic/tape.hpp"
#include "comic/tensor.hpp"

namespace comic {

// Checkpoint container: named float32 tensors plus a JSON sidecar
// (written to <path>.json) holding the full run configuration.
//
// Binary layout, all little-endian:
//   magic "CKPT", u32 tensor count, then per tensor:
//   u16 name length, UTF-8 name, u8 rank, rank x u32 dims, f32 payload.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  nlohmann::json sidecar;

  const Tensor<float>* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Parameter-set helpers (values only; optimizer state travels as extra
// tensors named adam/m/<param> and adam/v/<param>).
Checkpoint checkpoint_from_params(const ParameterSet<float>& params, nlohmann::json sidecar);
void restore_params(ParameterSet<float>& params, const Checkpoint& ckpt);

}  // namespace comic
