#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "comic/attention.hpp"
#include "comic/errors.hpp"
#include "comic/init.hpp"
#include "comic/tape.hpp"

namespace comic {

// LSTM caption decoder over the encoded token alphabet (digits + GO/EOS for
// radix runs, word ids + GO/EOS for word runs).
struct DecoderConfig {
  int state_size = 512;        // n
  int word_size = 256;         // m
  int image_embed_size = 1024;  // z
  int encoded_vocab_size = 258;  // V_e
  AttentionConfig attention;
  double dropout_rate = 0.35;
  bool tie_embeddings = false;

  int context_dim() const { return attention.context_dim(); }

  void validate() const {
    if (state_size < 1 || word_size < 1 || image_embed_size < 1 || encoded_vocab_size < 1)
      throw config_error("decoder sizes must be >= 1");
    if (attention.state_size != state_size)
      throw config_error("attention.state_size " + std::to_string(attention.state_size) +
                         " must equal decoder state_size " + std::to_string(state_size));
    attention.validate();
  }
};

// Parameter names are stable strings; the checkpoint format stores them.
//   decoder/E_w           [V_e, m]   input embedding (row per token)
//   decoder/E_o           [V_e, n]   output projection (absent when tied)
//   decoder/E_o_bias      [V_e]
//   decoder/E_o_adapter   [n, m]     tied mode with m != n only
//   decoder/W_I           [n, z]
//   decoder/input_ln_gain [z], decoder/input_ln_bias [z]
//   decoder/lstm_kernel   [4n, m + context_dim + n]   gate order i, f, g, o
//   decoder/lstm_bias     [4n]       forget segment initialized to 1
// plus attention/* from attention_param_shapes.
template <typename T>
ParameterSet<T> build_decoder_params(const DecoderConfig& cfg, Rng rng) {
  cfg.validate();
  std::size_t n = cfg.state_size, m = cfg.word_size, z = cfg.image_embed_size;
  std::size_t V = cfg.encoded_vocab_size, C = cfg.context_dim();
  ParameterSet<T> params;
  params.add("decoder/E_w", xavier_init<T>({V, m}, rng));
  if (cfg.tie_embeddings) {
    if (m != n) params.add("decoder/E_o_adapter", xavier_init<T>({n, m}, rng));
  } else {
    params.add("decoder/E_o", xavier_init<T>({V, n}, rng));
  }
  params.add("decoder/E_o_bias", Tensor<T>::zeros({V}), false);
  params.add("decoder/W_I", xavier_init<T>({n, z}, rng));
  params.add("decoder/input_ln_gain", Tensor<T>::full({z}, T(1)), false);
  params.add("decoder/input_ln_bias", Tensor<T>::zeros({z}), false);
  params.add("decoder/lstm_kernel", xavier_init<T>({4 * n, m + C + n}, rng));
  Tensor<T> lstm_bias = Tensor<T>::zeros({4 * n});
  for (std::size_t i = n; i < 2 * n; ++i) lstm_bias.data[i] = T(1);  // forget gate
  params.add("decoder/lstm_bias", std::move(lstm_bias), false);
  for (const auto& s : attention_param_shapes(cfg.attention)) {
    if (s.name == "attention/ln_gain")
      params.add(s.name, Tensor<T>::full(s.shape, T(1)), false);
    else if (s.name == "attention/ln_bias")
      params.add(s.name, Tensor<T>::zeros(s.shape), false);
    else
      params.add(s.name, xavier_init<T>(s.shape, rng));
  }
  return params;
}

// Named size breakdown of the allocation above (kept next to it so the two
// cannot drift; the accountant recomputes these independently).
struct ParamBreakdown {
  std::size_t embeddings = 0;
  std::size_t recurrent = 0;
  std::size_t attention = 0;
  std::size_t init = 0;
  std::size_t total = 0;
};

inline ParamBreakdown count_decoder_params(const DecoderConfig& cfg) {
  cfg.validate();
  std::size_t n = cfg.state_size, m = cfg.word_size, z = cfg.image_embed_size;
  std::size_t V = cfg.encoded_vocab_size, C = cfg.context_dim();
  ParamBreakdown b;
  b.embeddings = V * m + V;  // E_w + output bias
  if (cfg.tie_embeddings) {
    if (m != n) b.embeddings += n * m;  // adapter
  } else {
    b.embeddings += V * n;  // E_o
  }
  b.recurrent = 4 * n * (m + C + n) + 4 * n;
  b.attention = attention_param_count(cfg.attention);
  b.init = n * z + 2 * z;  // W_I + input layer norm
  b.total = b.embeddings + b.recurrent + b.attention + b.init;
  return b;
}

template <typename T>
struct DecoderStateIds {
  typename Tape<T>::Id h = -1;  // [B, n]
  typename Tape<T>::Id c = -1;  // [B, n]
};

// h_-1 = W_I tanh(LN(image_embed)), memory cell starts at zero.
template <typename T>
DecoderStateIds<T> init_state(Tape<T>& tape, typename Tape<T>::Id image_embed,
                              ParameterSet<T>& params, const DecoderConfig& cfg) {
  const auto& E = tape.value(image_embed);
  if (E.rank() != 2 || E.dim(1) != static_cast<std::size_t>(cfg.image_embed_size))
    throw std::invalid_argument("image embedding must be [batch, " +
                                std::to_string(cfg.image_embed_size) + "], got " +
                                shape_str(E.shape));
  std::size_t batch = E.dim(0);  // taken now: node storage may move as ops append
  auto ln = tape.layer_norm(image_embed, tape.param(params.at("decoder/input_ln_gain")),
                            tape.param(params.at("decoder/input_ln_bias")));
  auto act = tape.tanh_op(ln);
  DecoderStateIds<T> st;
  st.h = tape.matmul(act, tape.param(params.at("decoder/W_I")), false, true);
  st.c = tape.input(Tensor<T>::zeros({batch, static_cast<std::size_t>(cfg.state_size)}));
  return st;
}

// Derives one dropout mask stream per op instance so runs are reproducible
// from (seed, epoch, batch).
struct DropoutStream {
  Rng base;
  std::uint64_t counter = 0;
  explicit DropoutStream(Rng b) : base(b) {}
  Rng next() { return base.derive(counter++); }
};

template <typename T>
struct StepIds {
  typename Tape<T>::Id logits = -1;  // [B, V_e]
  DecoderStateIds<T> state;
  typename Tape<T>::Id alpha = -1;  // [B, g, F]
};

// One decoding step: attention read with h_{t-1}, LSTM update on
// [E_w S_{t-1}, c_t], logits from the (possibly tied) output projection.
template <typename T>
StepIds<T> decoder_step(Tape<T>& tape, const DecoderStateIds<T>& state,
                        const std::vector<int>& prev_tokens, const ProjectedFeatures<T>& proj,
                        ParameterSet<T>& params, const DecoderConfig& cfg, bool train,
                        DropoutStream& drop) {
  for (int t : prev_tokens)
    if (t < 0 || t >= cfg.encoded_vocab_size)
      throw std::out_of_range("token " + std::to_string(t) + " out of range for vocab " +
                              std::to_string(cfg.encoded_vocab_size));
  std::size_t n = cfg.state_size;
  auto att = attend(tape, proj, state.h, params, cfg.attention);
  auto emb = tape.embedding_lookup(tape.param(params.at("decoder/E_w")), prev_tokens);
  auto x = tape.concat_cols({emb, att.context});
  x = tape.dropout(x, static_cast<T>(cfg.dropout_rate), train, drop.next());
  auto xh = tape.concat_cols({x, state.h});
  auto gates = tape.add(tape.matmul(xh, tape.param(params.at("decoder/lstm_kernel")), false, true),
                        tape.param(params.at("decoder/lstm_bias")));
  auto parts = tape.split_cols(gates, {n, n, n, n});
  auto gate_i = tape.sigmoid_op(parts[0]);
  auto gate_f = tape.sigmoid_op(parts[1]);
  auto cand = tape.tanh_op(parts[2]);
  auto gate_o = tape.sigmoid_op(parts[3]);
  StepIds<T> out;
  out.state.c = tape.add(tape.mul(gate_f, state.c), tape.mul(gate_i, cand));
  out.state.h = tape.mul(gate_o, tape.tanh_op(out.state.c));
  out.alpha = att.alpha;
  auto h_dropped = tape.dropout(out.state.h, static_cast<T>(cfg.dropout_rate), train, drop.next());
  typename Tape<T>::Id proj_h = h_dropped;
  if (cfg.tie_embeddings) {
    if (cfg.word_size != cfg.state_size)
      proj_h = tape.matmul(h_dropped, tape.param(params.at("decoder/E_o_adapter")), false, false);
    out.logits = tape.matmul(proj_h, tape.param(params.at("decoder/E_w")), false, true);
  } else {
    out.logits = tape.matmul(proj_h, tape.param(params.at("decoder/E_o")), false, true);
  }
  out.logits = tape.add(out.logits, tape.param(params.at("decoder/E_o_bias")));
  return out;
}

// One training batch: flattened feature maps, image embeddings, and encoded
// sequences GO ... EOS (unpadded; the loss pads and masks internally).
template <typename T>
struct DecoderBatch {
  Tensor<T> features;     // [B * locations, r]
  Tensor<T> image_embed;  // [B, z]
  std::vector<std::vector<int>> sequences;
  std::size_t locations = 0;

  std::size_t batch() const { return sequences.size(); }
};

template <typename T>
struct LossIds {
  typename Tape<T>::Id total = -1;
  typename Tape<T>::Id nll = -1;
  typename Tape<T>::Id attn_reg = -1;
  typename Tape<T>::Id l2 = -1;
};

template <typename T>
struct LossBreakdown {
  T total = 0, nll = 0, attn_reg = 0, l2 = 0;
};

// Teacher-forced loss: masked negative log likelihood averaged over the
// batch, the doubly stochastic attention penalty (1 - sum_t alpha_tj)^2
// averaged over heads and batch, and the L2 penalty over decaying weights.
template <typename T>
LossIds<T> teacher_forced_loss(Tape<T>& tape, const DecoderBatch<T>& batch,
                               ParameterSet<T>& params, const DecoderConfig& cfg, T weight_decay,
                               bool train, DropoutStream& drop) {
  cfg.validate();
  std::size_t B = batch.batch();
  if (B == 0) throw std::invalid_argument("empty batch");
  std::size_t F = batch.locations;
  const int eos = cfg.encoded_vocab_size - 1;
  // a step is live while its target position is at or before the first EOS;
  // anything after that is padding
  std::vector<std::size_t> last_target(B);
  std::size_t steps = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& seq = batch.sequences[b];
    if (seq.size() < 2)
      throw std::invalid_argument("sequence must contain at least GO and EOS");
    std::size_t eos_pos = seq.size() - 1;
    for (std::size_t i = 1; i < seq.size(); ++i)
      if (seq[i] == eos) {
        eos_pos = i;
        break;
      }
    last_target[b] = eos_pos;
    steps = std::max(steps, eos_pos);
  }

  auto features = tape.input(batch.features);
  auto embed = tape.input(batch.image_embed);
  auto proj = precompute_projection(tape, features, B, F, params, cfg.attention);
  auto state = init_state(tape, embed, params, cfg);

  typename Tape<T>::Id nll_sum = tape.input(Tensor<T>::scalar(T(0)));
  typename Tape<T>::Id alpha_sum = -1;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<int> prev(B), target(B);
    Tensor<T> mask({B});
    for (std::size_t b = 0; b < B; ++b) {
      const auto& seq = batch.sequences[b];
      bool live = t + 1 <= last_target[b];
      prev[b] = live ? seq[t] : eos;  // padding token, masked below
      target[b] = live ? seq[t + 1] : eos;
      mask.data[b] = live ? T(1) : T(0);
    }
    auto step = decoder_step(tape, state, prev, proj, params, cfg, train, drop);
    state = step.state;
    auto mask_id = tape.input(mask);
    auto logp = tape.log_softmax(step.logits);
    auto picked = tape.pick(logp, target);                      // [B]
    nll_sum = tape.add(nll_sum, tape.sum_all(tape.row_scale(picked, mask_id)));
    auto alpha_masked = tape.row_scale(step.alpha, mask_id);    // [B, g, F]
    alpha_sum = t == 0 ? alpha_masked : tape.add(alpha_sum, alpha_masked);
  }

  LossIds<T> out;
  out.nll = tape.affine(nll_sum, T(-1) / T(B), T(0));
  auto deficit = tape.affine(alpha_sum, T(-1), T(1));  // 1 - sum_t alpha
  out.attn_reg = tape.affine(tape.sum_all(tape.mul(deficit, deficit)),
                             T(1) / T(cfg.attention.heads * B), T(0));
  typename Tape<T>::Id sq_sum = tape.input(Tensor<T>::scalar(T(0)));
  for (auto& p : params.items)
    if (p.decay) sq_sum = tape.add(sq_sum, tape.sum_squares(tape.param(p)));
  out.l2 = tape.affine(sq_sum, weight_decay, T(0));
  out.total = tape.add(tape.add(out.nll, out.attn_reg), out.l2);
  return out;
}

// Forward-only convenience: fresh tape, dropout off.
template <typename T>
LossBreakdown<T> evaluate_loss(const DecoderBatch<T>& batch, ParameterSet<T>& params,
                               const DecoderConfig& cfg, T weight_decay) {
  Tape<T> tape;
  DropoutStream drop{Rng(0)};
  auto ids = teacher_forced_loss(tape, batch, params, cfg, weight_decay, false, drop);
  return LossBreakdown<T>{tape.value(ids.total).item(), tape.value(ids.nll).item(),
                          tape.value(ids.attn_reg).item(), tape.value(ids.l2).item()};
}

}  // namespace comic
