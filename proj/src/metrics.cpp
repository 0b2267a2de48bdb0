#include "metrics.hpp"

#include <array>
#include <cmath>

#include "error.hpp"

namespace dpc {

namespace {

void check_pair(const Tensor<float>& a, const Tensor<float>& b) {
  require(a.shape == b.shape && a.shape.size() == 3, ErrorKind::shape,
          "metric: images must share an [h,w,c] shape");
}

const double* gauss11() {
  static const std::array<double, 11> k = [] {
    std::array<double, 11> g{};
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
      g[static_cast<size_t>(i)] = std::exp(-(i - 5.0) * (i - 5.0) / (2.0 * 1.5 * 1.5));
      sum += g[static_cast<size_t>(i)];
    }
    for (double& x : g) x /= sum;
    return g;
  }();
  return k.data();
}

// Mean SSIM over valid 11x11 windows; optional center-pixel mask.
double ssim_impl(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>* mask) {
  check_pair(a, b);
  const int h = a.shape[0], w = a.shape[1], c = a.shape[2];
  require(h >= 11 && w >= 11, ErrorKind::shape, "ssim: image smaller than the 11x11 window");
  const double* k = gauss11();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  long count = 0;
  for (int y = 0; y + 11 <= h; ++y)
    for (int x = 0; x + 11 <= w; ++x) {
      if (mask && mask->at(y + 5, x + 5, 0) <= 0.5f) continue;
      for (int ch = 0; ch < c; ++ch) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double wgt = k[i] * k[j];
            const double xa = a.at(y + i, x + j, ch);
            const double xb = b.at(y + i, x + j, ch);
            mu_a += wgt * xa;
            mu_b += wgt * xb;
            aa += wgt * xa * xa;
            bb += wgt * xb * xb;
            ab += wgt * xa * xb;
          }
        const double va = aa - mu_a * mu_a;
        const double vb = bb - mu_b * mu_b;
        const double cov = ab - mu_a * mu_b;
        total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
        ++count;
      }
    }
  require(count > 0, ErrorKind::task, "ssim: no windows inside the mask");
  return total / static_cast<double>(count);
}

}  // namespace

double metric_rmse(const Tensor<float>& a, const Tensor<float>& b) {
  check_pair(a, b);
  double acc = 0;
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.v[i]) - b.v[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

double metric_rmse_masked(const Tensor<float>& a, const Tensor<float>& b,
                          const Tensor<float>& mask) {
  check_pair(a, b);
  require(mask.shape == Shape{a.shape[0], a.shape[1], 1}, ErrorKind::shape,
          "metric: mask must be [h,w,1]");
  double acc = 0;
  long count = 0;
  const int c = a.shape[2];
  const int64_t npix = static_cast<int64_t>(a.shape[0]) * a.shape[1];
  for (int64_t i = 0; i < npix; ++i) {
    if (mask.v[i] <= 0.5f) continue;
    for (int ch = 0; ch < c; ++ch) {
      const double d = static_cast<double>(a.v[i * c + ch]) - b.v[i * c + ch];
      acc += d * d;
    }
    count += c;
  }
  require(count > 0, ErrorKind::task, "metric: empty mask");
  return std::sqrt(acc / static_cast<double>(count));
}

double metric_psnr(const Tensor<float>& a, const Tensor<float>& b) {
  const double r = metric_rmse(a, b);
  return r <= 0 ? 99.0 : -20.0 * std::log10(r);
}

double metric_psnr_masked(const Tensor<float>& a, const Tensor<float>& b,
                          const Tensor<float>& mask) {
  const double r = metric_rmse_masked(a, b, mask);
  return r <= 0 ? 99.0 : -20.0 * std::log10(r);
}

double metric_ssim(const Tensor<float>& a, const Tensor<float>& b) {
  return ssim_impl(a, b, nullptr);
}

double metric_ssim_masked(const Tensor<float>& a, const Tensor<float>& b,
                          const Tensor<float>& mask) {
  return ssim_impl(a, b, &mask);
}

double metric_d_err(const Tensor<float>& pts_a, const Tensor<float>& pts_b,
                    const Tensor<float>& mask) {
  require(pts_a.shape == pts_b.shape && pts_a.shape.size() == 3 && pts_a.shape[2] == 3,
          ErrorKind::shape, "d_err: point maps must be [h,w,3]");
  require(mask.shape == Shape{pts_a.shape[0], pts_a.shape[1], 1}, ErrorKind::shape,
          "d_err: mask must be [h,w,1]");
  double acc = 0;
  long count = 0;
  const int64_t npix = static_cast<int64_t>(pts_a.shape[0]) * pts_a.shape[1];
  for (int64_t i = 0; i < npix; ++i) {
    if (mask.v[i] <= 0.5f) continue;
    double d2 = 0;
    for (int k = 0; k < 3; ++k) {
      const double d = static_cast<double>(pts_a.v[i * 3 + k]) - pts_b.v[i * 3 + k];
      d2 += d * d;
    }
    acc += std::sqrt(d2);
    ++count;
  }
  require(count > 0, ErrorKind::task, "d_err: empty mask");
  return acc / static_cast<double>(count);
}

}  // namespace dpc
