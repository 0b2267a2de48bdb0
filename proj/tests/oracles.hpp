#pragma once

// Naive reference implementations used as independent oracles in tests.
// Deliberately written as direct loops with no shared code with src/.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tensor.hpp"

namespace oracle {

using dpc::Tensor;

// Direct nested-loop cross-correlation, zero padding.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>& bias, int stride, int pad) {
  const int h = x.shape[0], wd = x.shape[1], cin = x.shape[2];
  const int cout = w.shape[0], kh = w.shape[1], kw = w.shape[2];
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor<double> out({oh, ow, cout});
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int oc = 0; oc < cout; ++oc) {
        double acc = bias.v[static_cast<size_t>(oc)];
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx)
            for (int ic = 0; ic < cin; ++ic) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += x.at(iy, ix, ic) *
                     w.v[((static_cast<size_t>(oc) * kh + ky) * kw + kx) * cin + ic];
            }
        out.at(oy, ox, oc) = acc;
      }
  return out;
}

inline Tensor<double> tconv2d(const Tensor<double>& x, const Tensor<double>& w,
                              const Tensor<double>& bias, int stride) {
  const int h = x.shape[0], wd = x.shape[1], cin = x.shape[2];
  const int cout = w.shape[0], kh = w.shape[1], kw = w.shape[2];
  Tensor<double> out({h * stride, wd * stride, cout});
  for (int oy = 0; oy < h * stride; ++oy)
    for (int ox = 0; ox < wd * stride; ++ox)
      for (int oc = 0; oc < cout; ++oc) out.at(oy, ox, oc) = bias.v[static_cast<size_t>(oc)];
  for (int iy = 0; iy < h; ++iy)
    for (int ix = 0; ix < wd; ++ix)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
          for (int oc = 0; oc < cout; ++oc)
            for (int ic = 0; ic < cin; ++ic)
              out.at(iy * stride + ky, ix * stride + kx, oc) +=
                  x.at(iy, ix, ic) *
                  w.v[((static_cast<size_t>(oc) * kh + ky) * kw + kx) * cin + ic];
  return out;
}

// Mean SSIM over valid 11x11 Gaussian windows, straight from the formula.
inline double ssim_mean(const Tensor<double>& a, const Tensor<double>& b) {
  const int h = a.shape[0], w = a.shape[1], c = a.shape[2];
  std::vector<double> k(11);
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    k[static_cast<size_t>(i)] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * 1.5 * 1.5));
    sum += k[static_cast<size_t>(i)];
  }
  for (double& x : k) x /= sum;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  long count = 0;
  for (int y = 0; y + 11 <= h; ++y)
    for (int x = 0; x + 11 <= w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double wt = k[static_cast<size_t>(i)] * k[static_cast<size_t>(j)];
            ma += wt * a.at(y + i, x + j, ch);
            mb += wt * b.at(y + i, x + j, ch);
            aa += wt * a.at(y + i, x + j, ch) * a.at(y + i, x + j, ch);
            bb += wt * b.at(y + i, x + j, ch) * b.at(y + i, x + j, ch);
            ab += wt * a.at(y + i, x + j, ch) * b.at(y + i, x + j, ch);
          }
        total += ((2 * ma * mb + c1) * (2 * (ab - ma * mb) + c2)) /
                 ((ma * ma + mb * mb + c1) * ((aa - ma * ma) + (bb - mb * mb) + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

// Forward difference along x with the last valid column replicated.
inline Tensor<double> forward_diff_x(const Tensor<double>& img) {
  const int h = img.shape[0], w = img.shape[1], c = img.shape[2];
  Tensor<double> out(img.shape);
  for (int y = 0; y < h; ++y)
    for (int ch = 0; ch < c; ++ch) {
      for (int x = 0; x < w - 1; ++x) out.at(y, x, ch) = img.at(y, x + 1, ch) - img.at(y, x, ch);
      out.at(y, w - 1, ch) = out.at(y, w - 2, ch);
    }
  return out;
}

}  // namespace oracle
