#include "eid/adversarial.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "eid/checkpoint.hpp"
#include "eid/image_io.hpp"

namespace eid {

namespace {

template <typename T>
void init_generator(ParamStore<T>& p, int channels, int base, Rng& rng) {
  kaiming_conv_init(p, "in", base, channels, 3, rng);
  kaiming_conv_init(p, "down1", base * 2, base, 3, rng);
  kaiming_conv_init(p, "down2", base * 4, base * 2, 3, rng);
  kaiming_conv_init(p, "res1.conv1", base * 4, base * 4, 3, rng);
  kaiming_conv_init(p, "res1.conv2", base * 4, base * 4, 3, rng);
  kaiming_conv_init(p, "res2.conv1", base * 4, base * 4, 3, rng);
  kaiming_conv_init(p, "res2.conv2", base * 4, base * 4, 3, rng);
  kaiming_conv_init(p, "up1", base * 2, base * 4, 3, rng);
  kaiming_conv_init(p, "up2", base, base * 2, 3, rng);
  kaiming_conv_init(p, "out", channels, base, 3, rng);
}

template <typename T>
void init_discriminator(ParamStore<T>& p, int channels, int base, Rng& rng) {
  kaiming_conv_init(p, "l1", base, channels, 3, rng);
  kaiming_conv_init(p, "l2", base * 2, base, 3, rng);
  kaiming_conv_init(p, "l3", base * 4, base * 2, 3, rng);
  kaiming_conv_init(p, "l4", 1, base * 4, 3, rng);
}

template <typename T>
Tensor<T> conv_lrelu(const ParamStore<T>& p, const std::string& name,
                     const Tensor<T>& x, int stride) {
  return leaky_relu(conv2d(x, p.at(name + ".weight"), p.at(name + ".bias"),
                           stride, 1));
}

template <typename T>
Tensor<T> residual_block(const ParamStore<T>& p, const std::string& name,
                         const Tensor<T>& x) {
  Tensor<T> h = conv_lrelu(p, name + ".conv1", x, 1);
  h = conv2d(h, p.at(name + ".conv2.weight"), p.at(name + ".conv2.bias"), 1, 1);
  return add(x, h);
}

}  // namespace

template <typename T>
GanBundle<T> init_gan(int channels, int base_channels, Rng& rng,
                      bool use_clear_discriminator) {
  check(channels == 1 || channels == 3,
        detail::cat("gan channels must be 1 or 3, got ", channels));
  check(base_channels >= 1, "gan base_channels must be >= 1");
  GanBundle<T> b;
  b.channels = channels;
  b.base_channels = base_channels;
  b.use_clear_discriminator = use_clear_discriminator;
  init_generator(b.g_h, channels, base_channels, rng);
  init_generator(b.g_c, channels, base_channels, rng);
  init_discriminator(b.d_h, channels, base_channels, rng);
  if (use_clear_discriminator)
    init_discriminator(b.d_c, channels, base_channels, rng);
  return b;
}

template <typename T>
Tensor<T> generator_forward(const ParamStore<T>& p, const Tensor<T>& x) {
  const Shape& s = x.shape();
  check(s.h % 4 == 0 && s.w % 4 == 0,
        detail::cat("generator needs spatial size divisible by 4, got ",
                    s.str()));
  Tensor<T> h = conv_lrelu(p, "in", x, 1);
  h = conv_lrelu(p, "down1", h, 2);
  h = conv_lrelu(p, "down2", h, 2);
  h = residual_block(p, "res1", h);
  h = residual_block(p, "res2", h);
  h = resample(h, Resample::kNearestUp2);
  h = conv_lrelu(p, "up1", h, 1);
  h = resample(h, Resample::kNearestUp2);
  h = conv_lrelu(p, "up2", h, 1);
  h = conv2d(h, p.at("out.weight"), p.at("out.bias"), 1, 1);
  return sigmoid(h);
}

template <typename T>
Tensor<T> discriminator_forward(const ParamStore<T>& p, const Tensor<T>& x) {
  Tensor<T> h = conv_lrelu(p, "l1", x, 2);
  h = conv_lrelu(p, "l2", h, 2);
  h = conv_lrelu(p, "l3", h, 2);
  h = conv2d(h, p.at("l4.weight"), p.at("l4.bias"), 1, 1);
  return sigmoid(h);
}

template <typename T>
Tensor<T> adversarial_value(const Tensor<T>& real_scores,
                            const Tensor<T>& fake_scores) {
  const Tensor<T> one_minus_fake =
      sub(Tensor<T>::ones(fake_scores.shape()), fake_scores);
  return add(mean(log(real_scores)), mean(log(one_minus_fake)));
}

template <typename T>
Tensor<T> generator_adv_loss(const Tensor<T>& fake_scores, bool saturating) {
  if (saturating)
    return mean(log(sub(Tensor<T>::ones(fake_scores.shape()), fake_scores)));
  return mul_scalar(mean(log(fake_scores)), T(-1));
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const GanBundle<T>& bundle,
                                        const Tensor<T>& x_c,
                                        const Tensor<T>& x_h,
                                        bool saturating) {
  check(x_c.defined() && x_h.defined(), "adversarial_losses: empty batch");
  const Tensor<T> fake = generator_forward(bundle.g_h, x_c);
  const Tensor<T> d_real = discriminator_forward(bundle.d_h, x_h);
  const Tensor<T> d_fake = discriminator_forward(bundle.d_h, fake);
  AdversarialLosses<T> out;
  const Tensor<T> value = adversarial_value(d_real, d_fake);
  out.l1 = double(value.item());
  out.d_loss = mul_scalar(value, T(-1));
  out.g_loss = generator_adv_loss(d_fake, saturating);
  return out;
}

template <typename T>
Tensor<T> cycle_loss(const GanBundle<T>& bundle, const Tensor<T>& x_c,
                     const Tensor<T>& x_h) {
  const Tensor<T> hazy_round =
      generator_forward(bundle.g_h, generator_forward(bundle.g_c, x_h));
  const Tensor<T> clear_round =
      generator_forward(bundle.g_c, generator_forward(bundle.g_h, x_c));
  return add(l1(hazy_round, x_h), l1(clear_round, x_c));
}

template <typename T>
double discriminator_fake_accuracy(const GanBundle<T>& bundle,
                                   const Tensor<T>& x_c) {
  NoGradGuard no_grad;
  const Tensor<T> scores =
      discriminator_forward(bundle.d_h, generator_forward(bundle.g_h, x_c));
  int64_t below = 0;
  for (T v : scores.values())
    if (v < T(0.5)) ++below;
  return double(below) / double(scores.numel());
}

void GanTrainConfig::validate() const {
  check(iterations > 0, detail::cat("iterations must be > 0, got ", iterations));
  check(batch_size > 0, detail::cat("batch size must be > 0, got ", batch_size));
  check(lr > 0, detail::cat("learning rate must be > 0, got ", lr));
  check(base_channels >= 1, "base_channels must be >= 1");
  check(cycle_weight > 0,
        detail::cat("cycle weight must be > 0 (the clear generator is "
                    "trained through it), got ",
                    cycle_weight));
}

namespace {

/// Loads every PNG in dir; all images must share one size.
std::vector<Tensor<float>> load_image_set(const std::string& dir) {
  const std::vector<std::string> files = list_png_files(dir);
  check(!files.empty(), detail::cat("no PNG images in ", dir));
  std::vector<Tensor<float>> images;
  for (const std::string& f : files) {
    Tensor<float> img = load_image(f);
    if (!images.empty())
      check(img.shape() == images.front().shape(),
            detail::cat("image size mismatch: ", f, " is ", img.shape().str(),
                        ", expected ", images.front().shape().str()));
    images.push_back(std::move(img));
  }
  return images;
}

Tensor<float> stack_batch(const std::vector<Tensor<float>>& images,
                          const std::vector<size_t>& indices) {
  const Shape& s = images.front().shape();
  Tensor<float> batch =
      Tensor<float>::zeros(Shape{int64_t(indices.size()), s.c, s.h, s.w});
  auto dst = batch.values();
  const int64_t item = s.numel();
  for (size_t i = 0; i < indices.size(); ++i) {
    const auto src = images[indices[i]].values();
    std::copy(src.begin(), src.end(), dst.begin() + int64_t(i) * item);
  }
  return batch;
}

std::vector<size_t> sample_indices(size_t count, size_t n, Rng& rng) {
  std::vector<size_t> out(count);
  for (size_t i = 0; i < count; ++i)
    out[i] = size_t(rng.uniform_int(0, int64_t(n) - 1));
  return out;
}

template <typename T>
void merge_prefixed(ParamStore<T>& dst, const ParamStore<T>& src,
                    const std::string& prefix) {
  for (const std::string& name : src.names())
    dst.add(prefix + name, src.at(name).detach());
}

}  // namespace

GanTrainReport train_pseudo_physics(const std::string& clear_dir,
                                    const std::string& hazy_dir,
                                    const std::string& out_dir,
                                    const GanTrainConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) fail_io("cannot create " + out_dir);

  const std::vector<Tensor<float>> clear = load_image_set(clear_dir);
  const std::vector<Tensor<float>> hazy = load_image_set(hazy_dir);
  check(clear.front().shape() == hazy.front().shape(),
        detail::cat("clear images are ", clear.front().shape().str(),
                    " but hazy images are ", hazy.front().shape().str()));
  const int channels = int(clear.front().shape().c);

  Rng rng(config.seed);
  Rng init_rng = rng.fork(1);
  Rng batch_rng = rng.fork(2);
  GanBundle<float> bundle = init_gan<float>(
      channels, config.base_channels, init_rng, config.use_clear_discriminator);

  const std::string log_path = out_dir + "/gan_log.csv";
  std::ofstream log(log_path);
  if (!log) fail_io("cannot write " + log_path);
  log << "iter,d_loss,g_loss,cycle_loss\n";

  GanTrainReport report;
  const std::vector<size_t> probe = sample_indices(
      std::min<size_t>(clear.size(), 8), clear.size(), batch_rng);
  const Tensor<float> probe_batch = stack_batch(clear, probe);

  for (int iter = 0; iter < config.iterations; ++iter) {
    const Tensor<float> x_c =
        stack_batch(clear, sample_indices(size_t(config.batch_size),
                                          clear.size(), batch_rng));
    const Tensor<float> x_h =
        stack_batch(hazy, sample_indices(size_t(config.batch_size),
                                         hazy.size(), batch_rng));

    // Discriminator phase. Fakes are built without recording so no gradient
    // can reach the generators.
    Tensor<float> fake_h, fake_c;
    {
      NoGradGuard no_grad;
      fake_h = generator_forward(bundle.g_h, x_c);
      if (bundle.use_clear_discriminator)
        fake_c = generator_forward(bundle.g_c, x_h);
    }
    Tensor<float> d_loss = mul_scalar(
        adversarial_value(discriminator_forward(bundle.d_h, x_h),
                          discriminator_forward(bundle.d_h, fake_h)),
        -1.0f);
    if (bundle.use_clear_discriminator)
      d_loss = add(d_loss,
                   mul_scalar(adversarial_value(
                                  discriminator_forward(bundle.d_c, x_c),
                                  discriminator_forward(bundle.d_c, fake_c)),
                              -1.0f));
    const double d_loss_value = double(d_loss.item());
    backward(d_loss);
    adam_step(bundle.d_h, config.lr);
    if (bundle.use_clear_discriminator) adam_step(bundle.d_c, config.lr);

    // Generator phase. Discriminator weights are taken out of the gradient
    // set so the backward pass cannot deposit anything on them.
    bundle.d_h.set_requires_grad_all(false);
    if (bundle.use_clear_discriminator) bundle.d_c.set_requires_grad_all(false);
    const Tensor<float> fake = generator_forward(bundle.g_h, x_c);
    Tensor<float> g_adv = generator_adv_loss(
        discriminator_forward(bundle.d_h, fake),
        config.saturating_generator_loss);
    if (bundle.use_clear_discriminator)
      g_adv = add(g_adv, generator_adv_loss(
                             discriminator_forward(
                                 bundle.d_c, generator_forward(bundle.g_c, x_h)),
                             config.saturating_generator_loss));
    const Tensor<float> cyc = cycle_loss(bundle, x_c, x_h);
    const double cycle_value = double(cyc.item());
    const Tensor<float> g_total =
        add(g_adv, mul_scalar(cyc, float(config.cycle_weight)));
    const double g_loss_value = double(g_total.item());
    backward(g_total);
    adam_step(bundle.g_h, config.lr);
    adam_step(bundle.g_c, config.lr);
    bundle.d_h.set_requires_grad_all(true);
    if (bundle.use_clear_discriminator) bundle.d_c.set_requires_grad_all(true);

    if (iter == 0) report.first_cycle_loss = cycle_value;
    report.last_cycle_loss = cycle_value;
    report.fake_accuracy.push_back(
        discriminator_fake_accuracy(bundle, probe_batch));
    log << iter << "," << d_loss_value << "," << g_loss_value << ","
        << cycle_value << "\n";
  }
  log.close();

  ParamStore<float> merged;
  merge_prefixed(merged, bundle.g_h, "G_h.");
  merge_prefixed(merged, bundle.g_c, "G_c.");
  const std::string ckpt_path = out_dir + "/pseudo_physics.ckpt";
  save_checkpoint(ckpt_path, merged, {{"frozen", 1.0f}});

  report.checkpoint_path = ckpt_path;
  report.log_path = log_path;
  return report;
}

template <typename T>
LearnedHaze<T>::LearnedHaze(ParamStore<T> generator_params)
    : params_(std::move(generator_params)), source_("<params>") {
  params_.set_requires_grad_all(false);
}

template <typename T>
LearnedHaze<T> LearnedHaze<T>::from_checkpoint(const std::string& path) {
  LoadedCheckpoint<T> loaded = load_checkpoint<T>(path);
  ParamStore<T> g_h;
  for (const std::string& name : loaded.params.names())
    if (name.rfind("G_h.", 0) == 0)
      g_h.add(name.substr(4), loaded.params.at(name).detach());
  check(g_h.size() > 0,
        detail::cat("checkpoint ", path, " holds no G_h.* generator tensors"));
  LearnedHaze<T> op(std::move(g_h));
  op.source_ = path;
  return op;
}

template <typename T>
Tensor<T> LearnedHaze<T>::apply(const Tensor<T>& x) const {
  return generator_forward(params_, x);
}

template <typename T>
std::vector<Tensor<T>> LearnedHaze<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const std::string& name : params_.names())
    out.push_back(params_.at(name));
  return out;
}

template <typename T>
std::string LearnedHaze<T>::describe() const {
  return "learned(" + source_ + ")";
}

#define EID_INSTANTIATE(T)                                                    \
  template struct GanBundle<T>;                                               \
  template GanBundle<T> init_gan(int, int, Rng&, bool);                       \
  template Tensor<T> generator_forward(const ParamStore<T>&,                  \
                                       const Tensor<T>&);                     \
  template Tensor<T> discriminator_forward(const ParamStore<T>&,              \
                                           const Tensor<T>&);                 \
  template Tensor<T> adversarial_value(const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> generator_adv_loss(const Tensor<T>&, bool);              \
  template AdversarialLosses<T> adversarial_losses(                           \
      const GanBundle<T>&, const Tensor<T>&, const Tensor<T>&, bool);         \
  template Tensor<T> cycle_loss(const GanBundle<T>&, const Tensor<T>&,        \
                                const Tensor<T>&);                            \
  template double discriminator_fake_accuracy(const GanBundle<T>&,            \
                                              const Tensor<T>&);              \
  template class LearnedHaze<T>;

EID_INSTANTIATE(float)
EID_INSTANTIATE(double)

}  // namespace eid
