#pragma once

#include <cmath>

#include "comic/rng.hpp"
#include "comic/tensor.hpp"

namespace comic {

// Xavier/Glorot uniform: +-sqrt(6 / (fan_in + fan_out)). First dim is
// fan-out, the flattened trailing dims are fan-in (rank-1 gets fan_in = 1).
template <typename T>
Tensor<T> xavier_init(const Shape& shape, Rng& rng) {
  std::size_t fan_out = shape.empty() ? 1 : shape[0];
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t(shape);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace comic
