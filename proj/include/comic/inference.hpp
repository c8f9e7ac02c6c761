#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "comic/corpus.hpp"
#include "comic/decoder.hpp"
#include "comic/radix.hpp"
#include "comic/vocab.hpp"

namespace comic {

struct InferenceConfig {
  int beam_size = 3;
  int max_tokens = 42;  // total sequence length including GO and EOS

  void validate() const {
    if (beam_size < 1) throw config_error("beam size must be >= 1");
    if (max_tokens < 2) throw config_error("max_tokens must be >= 2");
  }

  // corpus truncation length -> token budget (doubled digits for radix, +2 specials)
  static int default_max_tokens(std::size_t max_words, const RadixConfig& radix) {
    return static_cast<int>(max_words) * radix.digits + 2;
  }
};

struct Hypothesis {
  std::vector<int> tokens;  // starts with GO; finished iff last token is EOS
  double log_prob = 0.0;
  bool finished = false;
  std::vector<Tensor<float>> attention_trace;  // one [g, F] matrix per generated token
};

// Candidate ranking: higher log-probability first, ties broken by
// lexicographically smaller token sequence (hence lower token id).
inline bool hypothesis_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

// Breadth-limited search over any step model. StepFn maps
// (state, prev_token) to a StepOut with log-probabilities over the whole
// vocabulary, the successor state, and an optional attention matrix.
template <typename State>
struct StepOut {
  std::vector<double> log_probs;
  State state;
  Tensor<float> alpha;  // may be empty
};

template <typename State, typename StepFn>
std::vector<Hypothesis> beam_search_core(State init_state, int go_token, int eos_token,
                                         int vocab_size, const InferenceConfig& cfg,
                                         StepFn&& step) {
  cfg.validate();
  struct Item {
    Hypothesis hyp;
    State state;
  };
  std::vector<Item> beams;
  beams.push_back(Item{Hypothesis{{go_token}, 0.0, false, {}}, std::move(init_state)});

  while (true) {
    bool any_live = false;
    for (const auto& it : beams)
      if (!it.hyp.finished && static_cast<int>(it.hyp.tokens.size()) < cfg.max_tokens)
        any_live = true;
    if (!any_live) break;

    std::vector<Item> candidates;
    for (auto& it : beams) {
      if (it.hyp.finished || static_cast<int>(it.hyp.tokens.size()) >= cfg.max_tokens) {
        candidates.push_back(std::move(it));
        continue;
      }
      StepOut<State> out = step(it.state, it.hyp.tokens.back());
      if (static_cast<int>(out.log_probs.size()) != vocab_size)
        throw std::logic_error("step model returned " + std::to_string(out.log_probs.size()) +
                               " log-probs for vocab " + std::to_string(vocab_size));
      for (int tok = 0; tok < vocab_size; ++tok) {
        Item cand;
        cand.hyp = it.hyp;
        cand.hyp.tokens.push_back(tok);
        cand.hyp.log_prob += out.log_probs[tok];
        cand.hyp.finished = tok == eos_token;
        cand.hyp.attention_trace.push_back(out.alpha);
        cand.state = out.state;
        candidates.push_back(std::move(cand));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Item& a, const Item& b) { return hypothesis_before(a.hyp, b.hyp); });
    if (static_cast<int>(candidates.size()) > cfg.beam_size)
      candidates.resize(cfg.beam_size);
    beams = std::move(candidates);
  }

  std::vector<Hypothesis> out;
  out.reserve(beams.size());
  for (auto& it : beams) out.push_back(std::move(it.hyp));
  std::sort(out.begin(), out.end(), hypothesis_before);
  return out;
}

// Step adapter for the trained decoder: one small tape per step over frozen
// parameters; feature projections are computed once per image.
template <typename T>
class DecoderStepper {
 public:
  struct State {
    Tensor<T> h;  // [1, n]
    Tensor<T> c;  // [1, n]
  };

  DecoderStepper(ParameterSet<T>& params, const DecoderConfig& cfg, const FeatureMap& features)
      : params_(params), cfg_(cfg) {
    cfg_.validate();
    if (features.channels != static_cast<std::size_t>(cfg.attention.feature_channels))
      throw std::invalid_argument("feature map has " + std::to_string(features.channels) +
                                  " channels, model expects " +
                                  std::to_string(cfg.attention.feature_channels));
    locations_ = features.locations;
    Tape<T> tape;
    auto f = tape.input(features.tensor().template cast<T>());
    auto proj = precompute_projection(tape, f, 1, locations_, params_, cfg_.attention);
    scoring_ = tape.value(proj.scoring);
    values_ = tape.value(proj.values);

    auto mean = features.mean_embedding();
    if (mean.size() != static_cast<std::size_t>(cfg.image_embed_size))
      throw std::invalid_argument("image embed size " + std::to_string(cfg.image_embed_size) +
                                  " must match feature channels " + std::to_string(mean.size()) +
                                  " (mean-pooled embedding)");
    Tape<T> tape2;
    Tensor<T> embed({1, mean.size()});
    for (std::size_t i = 0; i < mean.size(); ++i) embed.data[i] = static_cast<T>(mean[i]);
    auto st = init_state(tape2, tape2.input(embed), params_, cfg_);
    init_.h = tape2.value(st.h);
    init_.c = tape2.value(st.c);
  }

  State start() const { return init_; }
  std::size_t locations() const { return locations_; }

  StepOut<State> operator()(const State& state, int prev_token) {
    Tape<T> tape;
    ProjectedFeatures<T> proj;
    proj.scoring = tape.input(scoring_);
    proj.values = tape.input(values_);
    proj.batch = 1;
    proj.locations = locations_;
    DecoderStateIds<T> st{tape.input(state.h), tape.input(state.c)};
    DropoutStream drop{Rng(0)};
    auto step = decoder_step(tape, st, {prev_token}, proj, params_, cfg_, false, drop);

    const auto& logits = tape.value(step.logits);
    StepOut<State> out;
    out.log_probs = stable_log_softmax(logits);
    out.state.h = tape.value(step.state.h);
    out.state.c = tape.value(step.state.c);
    out.alpha = tape.value(step.alpha).template cast<float>();
    out.alpha.shape = {static_cast<std::size_t>(cfg_.attention.heads), locations_};
    return out;
  }

 private:
  static std::vector<double> stable_log_softmax(const Tensor<T>& logits) {
    std::vector<double> lp(logits.numel());
    double mx = -1e300;
    for (std::size_t i = 0; i < logits.numel(); ++i)
      mx = std::max(mx, static_cast<double>(logits.data[i]));
    double sum = 0;
    for (std::size_t i = 0; i < logits.numel(); ++i)
      sum += std::exp(static_cast<double>(logits.data[i]) - mx);
    double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < logits.numel(); ++i)
      lp[i] = static_cast<double>(logits.data[i]) - lse;
    return lp;
  }

  ParameterSet<T>& params_;
  DecoderConfig cfg_;
  std::size_t locations_ = 0;
  Tensor<T> scoring_;
  Tensor<T> values_;
  State init_;
};

template <typename T>
std::vector<Hypothesis> beam_search(ParameterSet<T>& params, const DecoderConfig& cfg,
                                    const FeatureMap& features, const InferenceConfig& inf) {
  DecoderStepper<T> stepper(params, cfg, features);
  auto go = cfg.encoded_vocab_size - 2, eos = cfg.encoded_vocab_size - 1;
  return beam_search_core(stepper.start(), go, eos, cfg.encoded_vocab_size, inf,
                          [&](const typename DecoderStepper<T>::State& s, int tok) {
                            return stepper(s, tok);
                          });
}

struct CaptionResult {
  std::string text;
  bool valid = true;
  double log_prob = 0.0;
  std::vector<int> tokens;
};

// Token stream -> space-joined words via the radix codec and vocabulary.
inline CaptionResult render_caption(const std::vector<int>& tokens, const RadixConfig& radix,
                                    const Vocabulary& vocab) {
  auto decoded = decode_caption(tokens, radix, vocab.size());
  CaptionResult out;
  out.tokens = tokens;
  out.valid = decoded.valid;
  for (std::size_t i = 0; i < decoded.word_ids.size(); ++i) {
    if (i) out.text += ' ';
    out.text += vocab.token(decoded.word_ids[i]);
  }
  return out;
}

// Top-beam hypothesis decoded through the radix codec and vocabulary.
// GO/EOS indices must line up: encoded_vocab_size == base + 2.
template <typename T>
CaptionResult caption(ParameterSet<T>& params, const DecoderConfig& cfg,
                      const FeatureMap& features, const RadixConfig& radix,
                      const Vocabulary& vocab, const InferenceConfig& inf) {
  if (cfg.encoded_vocab_size != radix.encoded_vocab_size())
    throw config_error("model vocab " + std::to_string(cfg.encoded_vocab_size) +
                       " does not match radix base+2 = " +
                       std::to_string(radix.encoded_vocab_size()));
  auto hyps = beam_search(params, cfg, features, inf);
  const auto& best = hyps.front();
  CaptionResult out = render_caption(best.tokens, radix, vocab);
  out.log_prob = best.log_prob;
  return out;
}

// Re-runs the decoder with forced tokens and records every head's attention
// weights: one [g, F] matrix per step (the step that consumed tokens[t] and
// produced tokens[t+1]).
template <typename T>
std::vector<Tensor<float>> dump_attention(ParameterSet<T>& params, const DecoderConfig& cfg,
                                          const FeatureMap& features,
                                          const std::vector<int>& tokens) {
  if (tokens.size() < 2 || tokens.front() != cfg.encoded_vocab_size - 2)
    throw std::invalid_argument("token sequence must start with GO and contain at least one step");
  for (int t : tokens)
    if (t < 0 || t >= cfg.encoded_vocab_size)
      throw std::invalid_argument("token " + std::to_string(t) + " out of range for vocab " +
                                  std::to_string(cfg.encoded_vocab_size));
  DecoderStepper<T> stepper(params, cfg, features);
  auto state = stepper.start();
  std::vector<Tensor<float>> maps;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    auto out = stepper(state, tokens[t]);
    state = std::move(out.state);
    maps.push_back(std::move(out.alpha));
  }
  return maps;
}

}  // namespace comic
