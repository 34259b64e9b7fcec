#pragma once

#include <string>
#include <vector>

#include "prosody/tape.hpp"

namespace prosody {

/// Forward-pass context. With train=false, parameters enter the tape as
/// constants: no gradient is recorded downstream, which is how frozen
/// encoders and inference skip the backward pass entirely.
struct GraphCtx {
  Tape& tape;
  ParameterStore& store;
  bool train = true;

  Value p(const std::string& name) {
    return train ? tape.param(store, name) : tape.input(store.at(name).value);
  }
};

struct LinearLayer {
  std::string prefix;
  int in = 0;
  int out = 0;

  void init_params(ParameterStore& store, Rng& rng) const {
    store.add_linear(prefix + ".w", in, out, rng);
    store.add_bias(prefix + ".b", out);
  }
  Value apply(GraphCtx& g, Value x) const {
    return g.tape.add_rowvec(g.tape.matmul(x, g.p(prefix + ".w")), g.p(prefix + ".b"));
  }
};

struct LayerNormLayer {
  std::string prefix;
  int dim = 0;

  void init_params(ParameterStore& store) const { store.add_layer_norm(prefix, dim); }
  Value apply(GraphCtx& g, Value x) const {
    return g.tape.layer_norm(x, g.p(prefix + ".gamma"), g.p(prefix + ".beta"));
  }
};

/// Multi-head attention; queries from `q_in`, keys/values from `kv_in`.
struct MultiHeadAttention {
  std::string prefix;
  int dim = 0;
  int heads = 1;

  void init_params(ParameterStore& store, Rng& rng) const;
  Value apply(GraphCtx& g, Value q_in, Value kv_in, const std::vector<bool>& key_valid) const;
};

struct FeedForward {
  std::string prefix;
  int dim = 0;
  int hidden = 0;

  void init_params(ParameterStore& store, Rng& rng) const;
  Value apply(GraphCtx& g, Value x) const;
};

/// Pre-norm transformer encoder layer:
///   x += attn(ln(x)); x += ffn(ln(x)).
struct TransformerLayer {
  std::string prefix;
  int dim = 0;
  int heads = 1;
  int ffn_hidden = 0;

  void init_params(ParameterStore& store, Rng& rng) const;
  Value apply(GraphCtx& g, Value x, const std::vector<bool>& valid) const;
};

/// Pre-norm cross-attention layer (queries: text stream, keys/values: audio):
///   x += attn(ln(x), audio); x += ffn(ln(x)).
struct CrossAttentionLayer {
  std::string prefix;
  int dim = 0;
  int heads = 1;
  int ffn_hidden = 0;

  void init_params(ParameterStore& store, Rng& rng) const;
  Value apply(GraphCtx& g, Value x, Value audio, const std::vector<bool>& audio_valid) const;
};

/// Simplified conformer block, pre-norm with a residual around each sublayer:
///   x += attn(ln(x)); x += pointwise(relu(depthwise(ln(x)))); x += ffn(ln(x)).
/// Masked rows are zeroed before the depthwise convolution so padding cannot
/// leak into valid positions.
struct ConformerBlock {
  std::string prefix;
  int dim = 0;
  int heads = 1;
  int ffn_hidden = 0;
  int conv_kernel = 7;

  void init_params(ParameterStore& store, Rng& rng) const;
  Value apply(GraphCtx& g, Value x, const std::vector<bool>& valid) const;
};

struct Conv2dLayer {
  std::string prefix;
  int c_in = 1;
  int c_out = 1;
  int kh = 3;
  int kw = 3;
  int stride_h = 1;
  int stride_w = 1;

  void init_params(ParameterStore& store, Rng& rng) const;
  Value apply(GraphCtx& g, Value x) const;  // x: (c_in, h, w)
};

/// Largest head count <= `want` that divides `dim`.
int fit_heads(int dim, int want);

}  // namespace prosody
