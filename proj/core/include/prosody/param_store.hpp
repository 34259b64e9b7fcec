#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "prosody/rng.hpp"
#include "prosody/tensor.hpp"

namespace prosody {

/// One named trainable array with its gradient slot and Adam moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool trainable = true;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named, shaped trainable values. Insertion order is the canonical
/// serialization order. One store is owned by one training run.
class ParameterStore {
 public:
  /// Registers a new parameter; name must be unique.
  Param& add(const std::string& name, Tensor init);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return params_.size(); }
  std::size_t value_count() const;

  void zero_grad();
  void mark_grads_populated() { grads_populated_ = true; }
  bool grads_populated() const { return grads_populated_; }

  /// Standard Adam with bias correction over all trainable parameters.
  /// Throws ContractError if no backward pass populated gradients since the
  /// last zero_grad().
  void adam_step(const AdamConfig& cfg);

  long step() const { return step_; }

  /// Marks every parameter whose name starts with `prefix` as frozen; Adam
  /// will not touch it.
  void freeze_prefix(const std::string& prefix);

  /// Rounds every value to the nearest float32 so that in-memory values and
  /// checkpoint bytes agree exactly.
  void round_to_float32();

  // Convenience initializers.
  Param& add_linear(const std::string& name, int fan_in, int fan_out, Rng& rng);
  Param& add_bias(const std::string& name, int n);
  Param& add_embedding(const std::string& name, int count, int dim, Rng& rng);
  Param& add_layer_norm(const std::string& name_prefix, int dim);  // adds .gamma/.beta
  Param& add_conv2d(const std::string& name, int c_out, int c_in, int kh, int kw, Rng& rng);
  Param& add_uniform(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::deque<Param> params_;  // deque: stable addresses for tape bindings
  long step_ = 0;
  bool grads_populated_ = false;
};

}  // namespace prosody
