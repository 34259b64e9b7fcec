#include "prosody/param_store.hpp"

#include <cmath>

namespace prosody {

Param& ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.grad = Tensor::zeros(init.shape());
  p.adam_m = Tensor::zeros(init.shape());
  p.adam_v = Tensor::zeros(init.shape());
  p.value = std::move(init);
  index_[name] = params_.size();
  names_.push_back(name);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return params_[it->second];
}

const Param& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterStore::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
  grads_populated_ = false;
}

void ParameterStore::adam_step(const AdamConfig& cfg) {
  if (!grads_populated_) {
    throw ContractError("adam_step called before any backward pass populated gradients");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& p : params_) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      p.adam_m[i] = cfg.beta1 * p.adam_m[i] + (1.0 - cfg.beta1) * g;
      p.adam_v[i] = cfg.beta2 * p.adam_v[i] + (1.0 - cfg.beta2) * g * g;
      double m_hat = p.adam_m[i] / bc1;
      double v_hat = p.adam_v[i] / bc2;
      p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void ParameterStore::freeze_prefix(const std::string& prefix) {
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) p.trainable = false;
  }
}

void ParameterStore::round_to_float32() {
  for (auto& p : params_) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.value[i] = static_cast<double>(static_cast<float>(p.value[i]));
    }
  }
}

Param& ParameterStore::add_linear(const std::string& name, int fan_in, int fan_out, Rng& rng) {
  return add_uniform(name, {fan_in, fan_out}, fan_in, rng);
}

Param& ParameterStore::add_bias(const std::string& name, int n) { return add(name, Tensor::zeros({n})); }

Param& ParameterStore::add_embedding(const std::string& name, int count, int dim, Rng& rng) {
  Tensor t({count, dim});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, 0.02);
  return add(name, std::move(t));
}

Param& ParameterStore::add_layer_norm(const std::string& name_prefix, int dim) {
  add(name_prefix + ".gamma", Tensor::full({dim}, 1.0));
  return add(name_prefix + ".beta", Tensor::zeros({dim}));
}

Param& ParameterStore::add_conv2d(const std::string& name, int c_out, int c_in, int kh, int kw, Rng& rng) {
  return add_uniform(name, {c_out, c_in, kh, kw}, c_in * kh * kw, rng);
}

Param& ParameterStore::add_uniform(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return add(name, std::move(t));
}

}  // namespace prosody
