#include "prosody/layers.hpp"

#include "prosody/errors.hpp"

namespace prosody {

int fit_heads(int dim, int want) {
  for (int h = std::min(dim, want); h > 1; --h) {
    if (dim % h == 0) return h;
  }
  return 1;
}

void MultiHeadAttention::init_params(ParameterStore& store, Rng& rng) const {
  if (heads <= 0 || dim % heads != 0) {
    throw ValidationError("attention dim " + std::to_string(dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
  }
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) store.add_linear(prefix + w, dim, dim, rng);
  for (const char* b : {".bq", ".bk", ".bv", ".bo"}) store.add_bias(prefix + b, dim);
}

Value MultiHeadAttention::apply(GraphCtx& g, Value q_in, Value kv_in, const std::vector<bool>& key_valid) const {
  Tape& t = g.tape;
  Value q = t.add_rowvec(t.matmul(q_in, g.p(prefix + ".wq")), g.p(prefix + ".bq"));
  Value k = t.add_rowvec(t.matmul(kv_in, g.p(prefix + ".wk")), g.p(prefix + ".bk"));
  Value v = t.add_rowvec(t.matmul(kv_in, g.p(prefix + ".wv")), g.p(prefix + ".bv"));
  const int dh = dim / heads;
  std::vector<Value> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Value qh = t.slice_cols(q, h * dh, dh);
    Value kh = t.slice_cols(k, h * dh, dh);
    Value vh = t.slice_cols(v, h * dh, dh);
    outs.push_back(attention(t, qh, kh, vh, key_valid));
  }
  Value cat = heads == 1 ? outs[0] : t.concat_cols(outs);
  return t.add_rowvec(t.matmul(cat, g.p(prefix + ".wo")), g.p(prefix + ".bo"));
}

void FeedForward::init_params(ParameterStore& store, Rng& rng) const {
  LinearLayer{prefix + ".lin1", dim, hidden}.init_params(store, rng);
  LinearLayer{prefix + ".lin2", hidden, dim}.init_params(store, rng);
}

Value FeedForward::apply(GraphCtx& g, Value x) const {
  Value h = LinearLayer{prefix + ".lin1", dim, hidden}.apply(g, x);
  return LinearLayer{prefix + ".lin2", hidden, dim}.apply(g, g.tape.relu(h));
}

void TransformerLayer::init_params(ParameterStore& store, Rng& rng) const {
  LayerNormLayer{prefix + ".ln_attn", dim}.init_params(store);
  MultiHeadAttention{prefix + ".attn", dim, heads}.init_params(store, rng);
  LayerNormLayer{prefix + ".ln_ffn", dim}.init_params(store);
  FeedForward{prefix + ".ffn", dim, ffn_hidden}.init_params(store, rng);
}

Value TransformerLayer::apply(GraphCtx& g, Value x, const std::vector<bool>& valid) const {
  Value normed = LayerNormLayer{prefix + ".ln_attn", dim}.apply(g, x);
  x = g.tape.add(x, MultiHeadAttention{prefix + ".attn", dim, heads}.apply(g, normed, normed, valid));
  Value normed2 = LayerNormLayer{prefix + ".ln_ffn", dim}.apply(g, x);
  return g.tape.add(x, FeedForward{prefix + ".ffn", dim, ffn_hidden}.apply(g, normed2));
}

void CrossAttentionLayer::init_params(ParameterStore& store, Rng& rng) const {
  LayerNormLayer{prefix + ".ln_attn", dim}.init_params(store);
  MultiHeadAttention{prefix + ".attn", dim, heads}.init_params(store, rng);
  LayerNormLayer{prefix + ".ln_ffn", dim}.init_params(store);
  FeedForward{prefix + ".ffn", dim, ffn_hidden}.init_params(store, rng);
}

Value CrossAttentionLayer::apply(GraphCtx& g, Value x, Value audio, const std::vector<bool>& audio_valid) const {
  Value normed = LayerNormLayer{prefix + ".ln_attn", dim}.apply(g, x);
  x = g.tape.add(x, MultiHeadAttention{prefix + ".attn", dim, heads}.apply(g, normed, audio, audio_valid));
  Value normed2 = LayerNormLayer{prefix + ".ln_ffn", dim}.apply(g, x);
  return g.tape.add(x, FeedForward{prefix + ".ffn", dim, ffn_hidden}.apply(g, normed2));
}

void ConformerBlock::init_params(ParameterStore& store, Rng& rng) const {
  LayerNormLayer{prefix + ".ln_attn", dim}.init_params(store);
  MultiHeadAttention{prefix + ".attn", dim, heads}.init_params(store, rng);
  LayerNormLayer{prefix + ".ln_conv", dim}.init_params(store);
  store.add_uniform(prefix + ".conv.depthwise", {conv_kernel, dim}, conv_kernel, rng);
  LinearLayer{prefix + ".conv.pointwise", dim, dim}.init_params(store, rng);
  LayerNormLayer{prefix + ".ln_ffn", dim}.init_params(store);
  FeedForward{prefix + ".ffn", dim, ffn_hidden}.init_params(store, rng);
}

Value ConformerBlock::apply(GraphCtx& g, Value x, const std::vector<bool>& valid) const {
  Tape& t = g.tape;
  Value normed = LayerNormLayer{prefix + ".ln_attn", dim}.apply(g, x);
  x = t.add(x, MultiHeadAttention{prefix + ".attn", dim, heads}.apply(g, normed, normed, valid));

  Value conv_in = LayerNormLayer{prefix + ".ln_conv", dim}.apply(g, x);
  bool any_masked = false;
  for (bool b : valid) any_masked = any_masked || !b;
  if (any_masked) conv_in = t.zero_rows(conv_in, valid);
  Value conv = t.depthwise_conv1d(conv_in, g.p(prefix + ".conv.depthwise"));
  conv = LinearLayer{prefix + ".conv.pointwise", dim, dim}.apply(g, t.relu(conv));
  x = t.add(x, conv);

  Value normed2 = LayerNormLayer{prefix + ".ln_ffn", dim}.apply(g, x);
  return t.add(x, FeedForward{prefix + ".ffn", dim, ffn_hidden}.apply(g, normed2));
}

void Conv2dLayer::init_params(ParameterStore& store, Rng& rng) const {
  store.add_conv2d(prefix + ".w", c_out, c_in, kh, kw, rng);
  store.add_bias(prefix + ".b", c_out);
}

Value Conv2dLayer::apply(GraphCtx& g, Value x) const {
  return g.tape.conv2d(x, g.p(prefix + ".w"), g.p(prefix + ".b"), stride_h, stride_w);
}

}  // namespace prosody
