#include "eid/metrics.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <thread>

#include "eid/image_io.hpp"

namespace eid {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
constexpr double kRange = 1.0;

std::array<double, kWindow * kWindow> gaussian_window() {
  std::array<double, kWindow * kWindow> w{};
  const int half = kWindow / 2;
  double total = 0;
  for (int y = 0; y < kWindow; ++y)
    for (int x = 0; x < kWindow; ++x) {
      const double dy = y - half, dx = x - half;
      w[y * kWindow + x] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
      total += w[y * kWindow + x];
    }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_val) {
  check(a.shape() == b.shape(),
        detail::cat("psnr: shape mismatch ", a.shape().str(), " vs ",
                    b.shape().str()));
  const auto xa = a.values();
  const auto xb = b.values();
  double acc = 0;
  for (size_t i = 0; i < xa.size(); ++i) {
    const double d = double(xa[i]) - double(xb[i]);
    acc += d * d;
  }
  const double mse = acc / double(xa.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& s = a.shape();
  check(s == b.shape(), detail::cat("ssim: shape mismatch ", s.str(), " vs ",
                                    b.shape().str()));
  check(s.h >= kWindow && s.w >= kWindow,
        detail::cat("ssim: image ", s.str(), " smaller than the ", kWindow,
                    "x", kWindow, " window"));

  static const std::array<double, kWindow * kWindow> win = gaussian_window();
  const double c1 = (kK1 * kRange) * (kK1 * kRange);
  const double c2 = (kK2 * kRange) * (kK2 * kRange);
  const auto va = a.values();
  const auto vb = b.values();
  const int64_t plane = s.plane();

  double total = 0;
  int64_t count = 0;
  for (int64_t p = 0; p < s.n * s.c; ++p) {
    const T* pa = va.data() + p * plane;
    const T* pb = vb.data() + p * plane;
    for (int64_t y = 0; y + kWindow <= s.h; ++y) {
      for (int64_t x = 0; x + kWindow <= s.w; ++x) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int wy = 0; wy < kWindow; ++wy) {
          const T* ra = pa + (y + wy) * s.w + x;
          const T* rb = pb + (y + wy) * s.w + x;
          const double* wrow = win.data() + wy * kWindow;
          for (int wx = 0; wx < kWindow; ++wx) {
            const double ea = ra[wx], eb = rb[wx], w = wrow[wx];
            ma += w * ea;
            mb += w * eb;
            maa += w * ea * ea;
            mbb += w * eb * eb;
            mab += w * ea * eb;
          }
        }
        const double var_a = maa - ma * ma;
        const double var_b = mbb - mb * mb;
        const double cov = mab - ma * mb;
        const double value = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        total += value;
        ++count;
      }
    }
  }
  return total / double(count);
}

EvalReport evaluate_directories(const std::string& pred_dir,
                                const std::string& ref_dir) {
  const std::vector<std::string> pred = list_png_files(pred_dir);
  const std::vector<std::string> ref = list_png_files(ref_dir);
  check(!pred.empty(), detail::cat("no PNG images in ", pred_dir));
  check(pred.size() == ref.size(),
        detail::cat(pred_dir, " has ", pred.size(), " images but ", ref_dir,
                    " has ", ref.size()));

  EvalReport report;
  report.per_image.resize(pred.size());
  std::atomic<size_t> next{0};
  const int workers =
      std::min<int>(thread_budget(), int(pred.size()));
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < pred.size();
         i = next.fetch_add(1)) {
      const Tensor<float> a = load_image(pred[i]);
      const Tensor<float> b = load_image(ref[i]);
      ImageScore& score = report.per_image[i];
      score.name = std::filesystem::path(pred[i]).filename().string();
      score.psnr = psnr(a, b);
      score.ssim = ssim(a, b);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }

  double sum_psnr = 0, sum_ssim = 0;
  bool any_inf = false;
  for (const ImageScore& s : report.per_image) {
    any_inf = any_inf || std::isinf(s.psnr);
    sum_psnr += s.psnr;
    sum_ssim += s.ssim;
  }
  report.mean_psnr = any_inf ? std::numeric_limits<double>::infinity()
                             : sum_psnr / double(pred.size());
  report.mean_ssim = sum_ssim / double(pred.size());
  return report;
}

template double psnr(const Tensor<float>&, const Tensor<float>&, double);
template double psnr(const Tensor<double>&, const Tensor<double>&, double);
template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

}  // namespace eid
