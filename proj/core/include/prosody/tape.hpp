#pragma once

#include <functional>
#include <string>
#include <vector>

#include "prosody/param_store.hpp"
#include "prosody/tensor.hpp"

namespace prosody {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Value {
  Tape* tape = nullptr;
  int idx = -1;

  const Tensor& val() const;
  const std::vector<int>& shape() const { return val().shape(); }
  int rows() const { return val().rows(); }
  int cols() const { return val().cols(); }
};

/// Dynamic reverse-mode computation graph. Ops append nodes during the
/// forward pass; backward() walks them in reverse and accumulates gradients
/// into every bound ParameterStore entry. One tape per forward pass; a tape
/// is single-threaded.
class Tape {
 public:
  // Leaves.
  Value input(Tensor v);                                       // constant, no gradient
  Value param(ParameterStore& store, const std::string& name); // trainable leaf

  // Elementwise / shape ops.
  Value add(Value a, Value b);
  Value add_rowvec(Value a, Value bias);  // a: n x m, bias: m
  Value scale(Value a, double c);
  Value mul(Value a, Value b);
  Value relu(Value a);
  Value slice_cols(Value a, int start, int len);
  Value slice_rows(Value a, int start, int len);
  Value concat_cols(const std::vector<Value>& parts);
  /// Zeroes rows where valid[r] is false (and blocks their gradients).
  Value zero_rows(Value a, const std::vector<bool>& valid);
  /// Adds -1e30 to columns where valid[c] is false; used to mask softmax keys.
  Value mask_cols(Value a, const std::vector<bool>& valid);

  // Linear algebra.
  Value matmul(Value a, Value b);     // (n x k) . (k x m)
  Value matmul_bt(Value a, Value b);  // (n x k) . (m x k)^T -> n x m

  // Normalization / activations over rows.
  Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5);
  Value softmax_rows(Value x);
  Value log_softmax_rows(Value x);

  // Lookup.
  Value embedding_rows(Value table, const std::vector<int>& ids);

  // Convolutions.
  /// x: (c_in, h, w), kernel: (c_out, c_in, kh, kw), bias: (c_out).
  /// SAME padding; output (c_out, ceil(h/sh), ceil(w/sw)).
  Value conv2d(Value x, Value kernel, Value bias, int stride_h, int stride_w);
  /// x: (t, d), kernel: (k, d); per-channel conv over time, SAME padding.
  Value depthwise_conv1d(Value x, Value kernel);
  /// (c, t, f) -> (t, c*f): per-time-step flattened feature rows.
  Value to_time_major(Value x);

  // Losses (scalar outputs, shape {1}).
  /// Sum over rows where valid of -log(max(p[r, label[r]], tiny)).
  Value nll_sum(Value probs, const std::vector<int>& labels, const std::vector<bool>& valid);
  /// Sum over rows where valid of -log_softmax(logits)[r, label[r]].
  Value ce_sum(Value logits, const std::vector<int>& labels, const std::vector<bool>& valid);
  /// CTC negative log likelihood; log_probs is a (t, c+1) log-probability
  /// matrix with blank at class 0, target classes in [1, c].
  Value ctc_nll(Value log_probs, const std::vector<int>& target);

  /// Seeds d(loss)=1 and runs the reverse pass. loss must be scalar. Grads
  /// accumulate into bound parameter stores (+=). Throws ContractError when
  /// called with no recorded forward pass or a non-scalar loss.
  void backward(Value loss);

  const Tensor& value_of(Value v) const { return nodes_[static_cast<size_t>(v.idx)].value; }
  /// Gradient of the last backward() wrt a node; zeros if unreachable.
  Tensor grad_of(Value v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    bool requires_grad = false;
    Param* bound = nullptr;
    ParameterStore* bound_store = nullptr;
    std::function<void(Tape&, Node&)> backprop;
    int parents[3] = {-1, -1, -1};
  };

  Value emit(Tensor value, std::initializer_list<Value> parents);
  Node& node(int idx) { return nodes_[static_cast<size_t>(idx)]; }
  Tensor& grad_buf(int idx);
  bool wants_grad(Value v) const { return nodes_[static_cast<size_t>(v.idx)].requires_grad; }

  std::vector<Node> nodes_;
};

/// softmax(Q K^T / sqrt(d) + mask) V with key positions masked by `valid`.
/// Throws ContractError if every key is masked.
Value attention(Tape& t, Value q, Value k, Value v, const std::vector<bool>& key_valid);

}  // namespace prosody
