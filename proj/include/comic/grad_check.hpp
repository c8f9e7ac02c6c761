#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "comic/errors.hpp"
#include "comic/rng.hpp"
#include "comic/tape.hpp"

namespace comic {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares analytic gradients against central differences. `loss_fn(accumulate)`
// must rebuild the forward pass from the current parameter values, return the
// scalar loss, and when accumulate=true also run backward into param.grad.
// Requires a deterministic loss (dropout off); the check runs the function
// twice and rejects it if the two values differ.
// For tensors above sample_cap elements, a seeded random subset of at least
// sample_cap elements is checked instead of every element.
inline GradCheckReport grad_check(const std::function<double(bool)>& loss_fn,
                                  ParameterSet<double>& params, double eps = 1e-5,
                                  std::size_t sample_cap = 200, std::uint64_t seed = 7) {
  double l0 = loss_fn(false);
  double l1 = loss_fn(false);
  if (!std::isfinite(l0)) throw numeric_error("grad_check: loss is not finite");
  if (l0 != l1)
    throw std::logic_error(
        "grad_check: loss function is stochastic (dropout or other randomness active); "
        "disable it for gradient checking");

  params.zero_grads();
  loss_fn(true);
  std::vector<Tensor<double>> analytic;
  for (auto& p : params.items) analytic.push_back(p.grad);

  GradCheckReport rep;
  Rng rng(seed);
  std::size_t pi = 0;
  for (auto& p : params.items) {
    std::size_t n = p.value.numel();
    std::vector<std::size_t> idx;
    if (n <= sample_cap || sample_cap == 0) {
      idx.resize(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    } else {
      for (std::size_t i = 0; i < sample_cap; ++i) idx.push_back(rng.next_below(n));
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    }
    for (std::size_t i : idx) {
      double saved = p.value.data[i];
      p.value.data[i] = saved + eps;
      double fp = loss_fn(false);
      p.value.data[i] = saved - eps;
      double fm = loss_fn(false);
      p.value.data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw numeric_error("grad_check: non-finite loss while perturbing " + p.name);
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi].data[i];
      double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name;
        rep.worst_index = i;
      }
    }
    ++pi;
  }
  return rep;
}

}  // namespace comic
