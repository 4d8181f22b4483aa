#include "eid/network.hpp"

#include <cmath>

namespace eid {

template <typename T>
Tensor<T>& ParamStore<T>::create(const std::string& name, Shape shape) {
  add(name, Tensor<T>::zeros(shape));
  return map_.at(name);
}

template <typename T>
void ParamStore<T>::add(const std::string& name, Tensor<T> tensor) {
  check(!contains(name), detail::cat("duplicate parameter name '", name, "'"));
  tensor.set_requires_grad(true);
  order_.push_back(name);
  map_.emplace(name, std::move(tensor));
}

template <typename T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
  auto it = map_.find(name);
  check(it != map_.end(), detail::cat("no parameter named '", name, "'"));
  return it->second;
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = map_.find(name);
  check(it != map_.end(), detail::cat("no parameter named '", name, "'"));
  return it->second;
}

template <typename T>
typename ParamStore<T>::AdamState& ParamStore<T>::adam_state(
    const std::string& name) {
  check(contains(name), detail::cat("no parameter named '", name, "'"));
  return adam_[name];
}

template <typename T>
const typename ParamStore<T>::AdamState* ParamStore<T>::adam_state_if(
    const std::string& name) const {
  auto it = adam_.find(name);
  return it == adam_.end() ? nullptr : &it->second;
}

template <typename T>
void ParamStore<T>::set_requires_grad_all(bool value) {
  for (const std::string& name : order_) map_.at(name).set_requires_grad(value);
}

template <typename T>
void ParamStore<T>::clear_all_grads() {
  for (const std::string& name : order_) map_.at(name).clear_grad();
}

template <typename T>
int64_t ParamStore<T>::numel() const {
  int64_t total = 0;
  for (const std::string& name : order_) total += map_.at(name).numel();
  return total;
}

template <typename T>
void adam_step(ParamStore<T>& params, double lr, const AdamConfig& cfg) {
  for (const std::string& name : params.names())
    check(params.at(name).has_grad(),
          detail::cat("adam_step: parameter '", name,
                      "' has no gradient; it is disconnected from the loss"));
  params.bump_step();
  const int64_t t = params.step();
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (const std::string& name : params.names()) {
    Tensor<T>& p = params.at(name);
    auto& state = params.adam_state(name);
    if (state.m.empty()) {
      state.m.assign(size_t(p.numel()), T(0));
      state.v.assign(size_t(p.numel()), T(0));
    }
    auto g = p.grad();
    auto v = p.values();
    for (size_t i = 0; i < v.size(); ++i) {
      state.m[i] = T(cfg.beta1) * state.m[i] + T(1 - cfg.beta1) * g[i];
      state.v[i] = T(cfg.beta2) * state.v[i] + T(1 - cfg.beta2) * g[i] * g[i];
      const T mhat = state.m[i] / T(bc1);
      const T vhat = state.v[i] / T(bc2);
      v[i] -= T(lr) * mhat / (std::sqrt(vhat) + T(cfg.eps));
    }
    p.clear_grad();
  }
}

double lr_schedule(int epoch, double base_lr) {
  check(epoch >= 0, detail::cat("epoch must be >= 0, got ", epoch));
  return base_lr * std::ldexp(1.0, -(epoch / 20));
}

void UNetConfig::validate() const {
  check(levels >= 1 && levels <= 8,
        detail::cat("unet levels must be in [1,8], got ", levels));
  check(base_channels >= 1,
        detail::cat("unet base_channels must be >= 1, got ", base_channels));
  check(in_channels >= 1 && out_channels >= 1, "unet channels must be >= 1");
}

template <typename T>
void kaiming_conv_init(ParamStore<T>& params, const std::string& prefix,
                       int64_t out_ch, int64_t in_ch, int64_t k, Rng& rng) {
  Tensor<T>& w = params.create(prefix + ".weight", Shape{out_ch, in_ch, k, k});
  const double fan_in = double(in_ch * k * k);
  const double bound = std::sqrt(6.0 / ((1.0 + 0.2 * 0.2) * fan_in));
  for (T& v : w.values()) v = T(rng.uniform(-bound, bound));
  params.create(prefix + ".bias", Shape{1, out_ch, 1, 1});
}

namespace {

int64_t level_channels(const UNetConfig& cfg, int level) {
  return int64_t(cfg.base_channels) << level;
}

template <typename T>
Tensor<T> conv_block(const ParamStore<T>& params, const std::string& prefix,
                     const Tensor<T>& x) {
  Tensor<T> h = conv2d(x, params.at(prefix + ".conv1.weight"),
                       params.at(prefix + ".conv1.bias"), 1, 1);
  h = leaky_relu(h);
  h = conv2d(h, params.at(prefix + ".conv2.weight"),
             params.at(prefix + ".conv2.bias"), 1, 1);
  return leaky_relu(h);
}

}  // namespace

template <typename T>
void unet_init(const UNetConfig& cfg, ParamStore<T>& params, Rng& rng) {
  cfg.validate();
  int64_t in_ch = cfg.in_channels;
  for (int i = 0; i + 1 < cfg.levels; ++i) {
    const int64_t ch = level_channels(cfg, i);
    kaiming_conv_init(params, detail::cat("enc", i, ".conv1"), ch, in_ch, 3,
                      rng);
    kaiming_conv_init(params, detail::cat("enc", i, ".conv2"), ch, ch, 3, rng);
    in_ch = ch;
  }
  const int64_t bottom = level_channels(cfg, cfg.levels - 1);
  kaiming_conv_init(params, "bottleneck.conv1", bottom, in_ch, 3, rng);
  kaiming_conv_init(params, "bottleneck.conv2", bottom, bottom, 3, rng);
  for (int i = cfg.levels - 2; i >= 0; --i) {
    const int64_t ch = level_channels(cfg, i);
    const int64_t above = level_channels(cfg, i + 1);
    kaiming_conv_init(params, detail::cat("dec", i, ".conv1"), ch, above + ch,
                      3, rng);
    kaiming_conv_init(params, detail::cat("dec", i, ".conv2"), ch, ch, 3, rng);
  }
  kaiming_conv_init(params, "head", cfg.out_channels,
                    level_channels(cfg, 0), 3, rng);
}

template <typename T>
Tensor<T> unet_forward(const UNetConfig& cfg, const ParamStore<T>& params,
                       const Tensor<T>& y) {
  cfg.validate();
  const Shape& s = y.shape();
  check(s.c == cfg.in_channels,
        detail::cat("unet expects ", cfg.in_channels, " input channels, got ",
                    s.str()));
  const int64_t div = cfg.spatial_divisor();
  check(s.h % div == 0 && s.w % div == 0,
        detail::cat("unet with ", cfg.levels,
                    " levels needs spatial size divisible by ", div, ", got ",
                    s.str()));

  std::vector<Tensor<T>> skips;
  Tensor<T> h = y;
  for (int i = 0; i + 1 < cfg.levels; ++i) {
    h = conv_block(params, detail::cat("enc", i), h);
    skips.push_back(h);
    h = resample(h, Resample::kAvgDown2);
  }
  h = conv_block(params, "bottleneck", h);
  for (int i = cfg.levels - 2; i >= 0; --i) {
    h = resample(h, Resample::kNearestUp2);
    h = concat_channels(h, skips[size_t(i)]);
    h = conv_block(params, detail::cat("dec", i), h);
  }
  h = conv2d(h, params.at("head.weight"), params.at("head.bias"), 1, 1);
  if (cfg.in_channels == cfg.out_channels) {
    // Global skip in logit space: with zero-bias heads the network starts
    // as the identity map, and the sigmoid keeps outputs in (0,1).
    const Tensor<T> squeezed = clamp(y, T(1e-4), T(1 - 1e-4));
    const Tensor<T> input_logit =
        sub(log(squeezed), log(sub(Tensor<T>::ones(y.shape()), squeezed)));
    h = add(h, input_logit);
  }
  return sigmoid(h);
}

template <typename T>
UNetConfig unet_config_from_params(const ParamStore<T>& params) {
  UNetConfig cfg;
  check(params.contains("head.weight") && params.contains("bottleneck.conv1.weight"),
        "parameter store does not hold a dehazing U-Net");
  const Shape head = params.at("head.weight").shape();
  cfg.out_channels = int(head.n);
  int levels = 1;
  while (params.contains(detail::cat("enc", levels - 1, ".conv1.weight")))
    ++levels;
  cfg.levels = levels;
  if (levels > 1) {
    const Shape enc0 = params.at("enc0.conv1.weight").shape();
    cfg.base_channels = int(enc0.n);
    cfg.in_channels = int(enc0.c);
  } else {
    const Shape bott = params.at("bottleneck.conv1.weight").shape();
    cfg.base_channels = int(bott.n);
    cfg.in_channels = int(bott.c);
  }
  return cfg;
}

#define EID_INSTANTIATE(T)                                                    \
  template class ParamStore<T>;                                               \
  template void adam_step(ParamStore<T>&, double, const AdamConfig&);         \
  template void unet_init(const UNetConfig&, ParamStore<T>&, Rng&);           \
  template Tensor<T> unet_forward(const UNetConfig&, const ParamStore<T>&,    \
                                  const Tensor<T>&);                          \
  template UNetConfig unet_config_from_params(const ParamStore<T>&);          \
  template void kaiming_conv_init(ParamStore<T>&, const std::string&,         \
                                  int64_t, int64_t, int64_t, Rng&);

EID_INSTANTIATE(float)
EID_INSTANTIATE(double)

}  // namespace eid
