#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "comic/attention.hpp"

namespace comic {

// Symbolic model description for parameter counting. Mirrors the decoder
// and attention configs but stays independent of them: the accountant does
// its own shape algebra, and a test pins it to the decoder's real
// allocation so the two cannot drift.
struct ModelSpec {
  std::string name;
  int encoded_vocab_size = 258;  // V_e (specials included)
  int word_size = 256;           // m
  int state_size = 512;          // n
  int mlp_size = 512;            // k
  Projection projection = Projection::None;
  int projection_size = 512;  // q (untied)
  int heads = 1;              // g
  int feature_channels = 832;  // r
  int image_embed_size = 1024;  // z
  bool tie_embeddings = false;

  int context_dim() const {
    switch (projection) {
      case Projection::None: return feature_channels;
      case Projection::Untied: return projection_size;
      case Projection::Tied: return mlp_size;
    }
    return 0;
  }
};

struct CountReport {
  std::size_t embeddings = 0;  // E_w + E_o (or tied adapter) + output bias
  std::size_t recurrent = 0;   // LSTM kernel + bias
  std::size_t attention = 0;   // W_M0 + W_M1 + W_M2 (+ W_f)
  std::size_t init = 0;        // W_I
  std::size_t norms = 0;       // input LN + attention LN gains and biases
  std::size_t total = 0;
};

CountReport count(const ModelSpec& spec);

struct ReferenceRow {
  std::string name;
  ModelSpec spec;
  double reported_millions = 0;  // published figure, 0.1M resolution
  double tolerance = 0.02;       // relative
  bool embeddings_only = false;  // row checks the embedding group, not the total
  CountReport computed;
  double rel_err = 0;
  bool pass = false;
};

// Every published size the toolkit reproduces, evaluated and checked
// against its tolerance.
std::vector<ReferenceRow> reference_suite();

std::string format_reference_table(const std::vector<ReferenceRow>& rows);

}  // namespace comic
