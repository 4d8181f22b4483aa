#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "eid/ops.hpp"
#include "eid/rng.hpp"
#include "eid/tensor.hpp"

namespace eid {

/// Ordered association of unique names to trainable tensors, with Adam
/// state. Iteration follows creation order, which is also the checkpoint
/// serialization order.
template <typename T>
class ParamStore {
 public:
  struct AdamState {
    std::vector<T> m, v;  // first/second moment, sized on first step
  };

  Tensor<T>& create(const std::string& name, Shape shape);
  void add(const std::string& name, Tensor<T> tensor);

  bool contains(const std::string& name) const { return map_.count(name) > 0; }
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  AdamState& adam_state(const std::string& name);
  /// Null when the parameter has no optimizer state yet.
  const AdamState* adam_state_if(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }

  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }
  void bump_step() { ++step_; }

  void set_requires_grad_all(bool value);
  void clear_all_grads();

  /// Total number of scalar parameters.
  int64_t numel() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor<T>> map_;
  std::unordered_map<std::string, AdamState> adam_;
  int64_t step_ = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update over every parameter in the store. Every
/// parameter must hold an accumulated gradient (a parameter that never
/// received one is disconnected from the loss and gets rejected by name).
/// Gradients are cleared afterwards.
template <typename T>
void adam_step(ParamStore<T>& params, double lr, const AdamConfig& cfg = {});

/// base_lr halved every 20 epochs: base_lr * 0.5^floor(epoch/20).
double lr_schedule(int epoch, double base_lr);

/// Dehazing U-Net: `levels` resolution scales with channel doubling,
/// two 3x3 convs per level, leaky-relu(0.2) activations, nearest up /
/// average-pool down, skip concatenation, sigmoid output head. When input
/// and output channel counts match, a global logit-space skip makes the
/// zero-bias initialization the identity map.
struct UNetConfig {
  int levels = 3;
  int base_channels = 16;
  int in_channels = 3;
  int out_channels = 3;

  int64_t spatial_divisor() const { return int64_t(1) << (levels - 1); }
  void validate() const;
};

/// Creates the parameters (Kaiming-uniform conv weights, zero biases).
template <typename T>
void unet_init(const UNetConfig& config, ParamStore<T>& params, Rng& rng);

/// Forward pass; output has the input's shape with out_channels channels and
/// values in (0,1). Differentiable w.r.t. parameters and input.
template <typename T>
Tensor<T> unet_forward(const UNetConfig& config, const ParamStore<T>& params,
                       const Tensor<T>& y);

/// Reads the UNetConfig back from a parameter store created by unet_init.
template <typename T>
UNetConfig unet_config_from_params(const ParamStore<T>& params);

/// Conv parameter initialization shared with the adversarial generators:
/// Kaiming-uniform fan-in with leaky-relu(0.2) gain.
template <typename T>
void kaiming_conv_init(ParamStore<T>& params, const std::string& prefix,
                       int64_t out_ch, int64_t in_ch, int64_t k, Rng& rng);

}  // namespace eid
