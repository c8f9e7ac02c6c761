#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "comic/errors.hpp"
#include "comic/tape.hpp"

namespace comic {

enum class Projection { None, Untied, Tied };

inline const char* projection_name(Projection p) {
  switch (p) {
    case Projection::None: return "none";
    case Projection::Untied: return "untied";
    case Projection::Tied: return "tied";
  }
  return "?";
}

// Additive attention over a feature map, g heads realized as one
// block-structured MLP. Head h owns rows [h*k/g, (h+1)*k/g) of the scoring
// weights and the matching contiguous slice of the context channels.
struct AttentionConfig {
  int heads = 1;             // g
  int mlp_size = 512;        // k
  Projection projection = Projection::Tied;
  int projection_size = 512;  // q, used by Untied only
  double temperature = 1.0;   // softmax temperature
  int feature_channels = 832;  // r
  int state_size = 512;        // n

  int context_dim() const {
    switch (projection) {
      case Projection::None: return feature_channels;
      case Projection::Untied: return projection_size;
      case Projection::Tied: return mlp_size;
    }
    return 0;
  }

  void validate() const {
    if (heads < 1) throw config_error("attention heads must be >= 1");
    if (mlp_size < 1 || feature_channels < 1 || state_size < 1)
      throw config_error("attention sizes must be >= 1");
    if (temperature <= 0) throw config_error("softmax temperature must be > 0");
    if (mlp_size % heads != 0)
      throw config_error("heads " + std::to_string(heads) + " must divide mlp size " +
                         std::to_string(mlp_size));
    if (context_dim() % heads != 0)
      throw config_error("heads " + std::to_string(heads) + " must divide context dim " +
                         std::to_string(context_dim()) + " (" +
                         projection_name(projection) + " projection)");
  }
};

struct NamedShape {
  std::string name;
  Shape shape;
};

inline std::vector<NamedShape> attention_param_shapes(const AttentionConfig& cfg,
                                                      const std::string& prefix = "attention/") {
  cfg.validate();
  std::size_t k = cfg.mlp_size, r = cfg.feature_channels, n = cfg.state_size;
  std::vector<NamedShape> shapes = {
      {prefix + "W_M0", {k, r}},
      {prefix + "W_M1", {k, n}},
      {prefix + "W_M2", {k}},
      {prefix + "ln_gain", {k}},
      {prefix + "ln_bias", {k}},
  };
  if (cfg.projection == Projection::Untied)
    shapes.push_back({prefix + "W_f", {static_cast<std::size_t>(cfg.projection_size), r}});
  return shapes;
}

inline std::size_t attention_param_count(const AttentionConfig& cfg) {
  std::size_t total = 0;
  for (const auto& s : attention_param_shapes(cfg)) total += Tensor<float>::product(s.shape);
  return total;
}

// Feature projections shared across all decoding steps of one image.
// scoring: [B*F, k] (W_M0 f_j); values: [B, F, context_dim].
template <typename T>
struct ProjectedFeatures {
  typename Tape<T>::Id scoring = -1;
  typename Tape<T>::Id values = -1;
  std::size_t batch = 0;
  std::size_t locations = 0;
};

template <typename T>
ProjectedFeatures<T> precompute_projection(Tape<T>& tape, typename Tape<T>::Id features,
                                           std::size_t batch, std::size_t locations,
                                           ParameterSet<T>& params, const AttentionConfig& cfg,
                                           const std::string& prefix = "attention/") {
  cfg.validate();
  const auto& F = tape.value(features);
  if (F.rank() != 2 || F.dim(0) != batch * locations ||
      F.dim(1) != static_cast<std::size_t>(cfg.feature_channels))
    throw std::invalid_argument("features must be [batch*locations, " +
                                std::to_string(cfg.feature_channels) + "], got " +
                                shape_str(F.shape));
  ProjectedFeatures<T> out;
  out.batch = batch;
  out.locations = locations;
  auto w_m0 = tape.param(params.at(prefix + "W_M0"));
  out.scoring = tape.matmul(features, w_m0, false, true);  // [B*F, k]
  std::size_t C = static_cast<std::size_t>(cfg.context_dim());
  switch (cfg.projection) {
    case Projection::None:
      out.values = tape.reshape(features, {batch, locations, C});
      break;
    case Projection::Untied: {
      auto w_f = tape.param(params.at(prefix + "W_f"));
      out.values = tape.reshape(tape.matmul(features, w_f, false, true), {batch, locations, C});
      break;
    }
    case Projection::Tied:
      out.values = tape.reshape(out.scoring, {batch, locations, C});
      break;
  }
  return out;
}

template <typename T>
struct AttendIds {
  typename Tape<T>::Id context = -1;  // [B, context_dim]
  typename Tape<T>::Id alpha = -1;    // [B, g, F]
};

// One attention read: e_j per head from the block MLP, softmax over
// locations at the configured temperature, per-head weighted sum of the
// context value slices.
template <typename T>
AttendIds<T> attend(Tape<T>& tape, const ProjectedFeatures<T>& proj,
                    typename Tape<T>::Id h_prev, ParameterSet<T>& params,
                    const AttentionConfig& cfg, const std::string& prefix = "attention/") {
  cfg.validate();
  std::size_t B = proj.batch, F = proj.locations;
  const auto& H = tape.value(h_prev);
  if (H.rank() != 2 || H.dim(0) != B || H.dim(1) != static_cast<std::size_t>(cfg.state_size))
    throw std::invalid_argument("h_prev must be [batch, " + std::to_string(cfg.state_size) +
                                "], got " + shape_str(H.shape));
  auto w_m1 = tape.param(params.at(prefix + "W_M1"));
  auto w_m2 = tape.param(params.at(prefix + "W_M2"));
  auto ln_gain = tape.param(params.at(prefix + "ln_gain"));
  auto ln_bias = tape.param(params.at(prefix + "ln_bias"));

  auto query = tape.matmul(h_prev, w_m1, false, true);       // [B, k]
  auto query_rep = tape.repeat_rows(query, F);               // [B*F, k]
  auto pre = tape.add(proj.scoring, query_rep);              // [B*F, k]
  auto normed = tape.layer_norm(pre, ln_gain, ln_bias, T(1e-6), cfg.heads);
  auto act = tape.tanh_op(normed);
  auto scores = tape.grouped_inner(act, w_m2, cfg.heads);    // [B*F, g]
  auto scores3 =
      tape.reshape(scores, {B, F, static_cast<std::size_t>(cfg.heads)});
  auto scores_hf = tape.swap_middle_last(scores3);           // [B, g, F]
  if (!tape.value(scores_hf).all_finite())
    throw numeric_error("non-finite attention scores");
  AttendIds<T> out;
  out.alpha = tape.softmax(scores_hf, static_cast<T>(cfg.temperature));
  out.context = tape.attention_context(out.alpha, proj.values);
  return out;
}

// Plain-value convenience for a single feature map (used by tests and the
// inference path): context vector plus the g x |F| weight matrix.
template <typename T>
struct AttentionOutput {
  Tensor<T> context;  // [context_dim]
  Tensor<T> weights;  // [g, F]
};

template <typename T>
AttentionOutput<T> attend_single(const Tensor<T>& features /* [F, r] */,
                                 const Tensor<T>& h_prev /* [n] */, ParameterSet<T>& params,
                                 const AttentionConfig& cfg,
                                 const std::string& prefix = "attention/") {
  if (features.rank() != 2) throw std::invalid_argument("features must be [locations, channels]");
  std::size_t F = features.dim(0);
  Tape<T> tape;
  auto f = tape.input(features);
  auto h = tape.input(Tensor<T>({1, h_prev.numel()}, h_prev.data));
  auto proj = precompute_projection(tape, f, 1, F, params, cfg, prefix);
  auto ids = attend(tape, proj, h, params, cfg, prefix);
  AttentionOutput<T> out;
  out.context = tape.value(ids.context);
  out.context.shape = {out.context.numel()};
  out.weights = tape.value(ids.alpha);
  out.weights.shape = {static_cast<std::size_t>(cfg.heads), F};
  return out;
}

}  // namespace comic
