#pragma once

#include <algorithm>
#include <numeric>

#include "blas.hpp"
#include "tape.hpp"

namespace dpc::ops {

// ---------------------------------------------------------------------------
// conv2d / tconv2d
//
// Cross-correlation semantics. Weights are [cout, kh, kw, cin]; images are
// [h, w, c]. The im2col matrix is [pixels, kh*kw*cin] so both the forward
// product and the two backward products are single GEMM calls. The column
// matrix is rebuilt in the backward pass instead of being saved.
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, int oh, int ow,
            std::vector<T>& col) {
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  const int64_t kcols = static_cast<int64_t>(kh) * kw * c;
  col.assign(static_cast<size_t>(oh) * ow * kcols, T(0));
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      T* row = col.data() + (static_cast<int64_t>(oy) * ow + ox) * kcols;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          const T* src = x.data() + (static_cast<int64_t>(iy) * w + ix) * c;
          std::copy(src, src + c, row + (static_cast<int64_t>(ky) * kw + kx) * c);
        }
      }
    }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int kh, int kw, int stride, int pad, int oh, int ow,
                Tensor<T>& gx) {
  const int h = gx.shape[0], w = gx.shape[1], c = gx.shape[2];
  const int64_t kcols = static_cast<int64_t>(kh) * kw * c;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const T* row = col.data() + (static_cast<int64_t>(oy) * ow + ox) * kcols;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= w) continue;
          T* dst = gx.data() + (static_cast<int64_t>(iy) * w + ix) * c;
          const T* src = row + (static_cast<int64_t>(ky) * kw + kx) * c;
          for (int k = 0; k < c; ++k) dst[k] += src[k];
        }
      }
    }
}

template <typename T>
Var<T> conv2d(Tape<T>& t, Var<T> x, Var<T> wgt, Var<T> bias, int stride, int pad) {
  const Tensor<T>& xv = t.val(x);
  const Tensor<T>& wv = t.val(wgt);
  require(xv.shape.size() == 3, ErrorKind::shape, "conv2d: input must be [h,w,c]");
  require(wv.shape.size() == 4, ErrorKind::shape, "conv2d: weights must be [cout,kh,kw,cin]");
  const int h = xv.shape[0], w = xv.shape[1], cin = xv.shape[2];
  const int cout = wv.shape[0], kh = wv.shape[1], kw = wv.shape[2];
  require(wv.shape[3] == cin, ErrorKind::shape,
          "conv2d: weight cin " + std::to_string(wv.shape[3]) + " != input channels " +
              std::to_string(cin));
  require(t.val(bias).shape == Shape{cout}, ErrorKind::shape, "conv2d: bias must be [cout]");
  require(h + 2 * pad >= kh && w + 2 * pad >= kw, ErrorKind::shape,
          "conv2d: kernel larger than padded input (input " + shape_str(xv.shape) + ")");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  const int64_t npix = static_cast<int64_t>(oh) * ow;
  const int kcols = kh * kw * cin;

  std::vector<T> col;
  im2col(xv, kh, kw, stride, pad, oh, ow, col);
  Tensor<T> out({oh, ow, cout});
  blas::gemm<T>(false, true, static_cast<int>(npix), cout, kcols, T(1), col.data(), kcols,
                wv.data(), kcols, T(0), out.data(), cout);
  const Tensor<T>& bv = t.val(bias);
  for (int64_t i = 0; i < npix; ++i)
    for (int oc = 0; oc < cout; ++oc) out.v[i * cout + oc] += bv.v[oc];

  const bool rg = t.requires_grad(x) || t.requires_grad(wgt) || t.requires_grad(bias);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, x, wgt, bias, stride, pad, oh, ow, kh, kw, cin, cout, kcols,
                      npix](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      std::vector<T> col;
      im2col(tp.val(x), kh, kw, stride, pad, oh, ow, col);
      if (tp.requires_grad(wgt)) {
        Tensor<T>& gw = tp.grad(wgt);
        blas::gemm<T>(true, false, cout, kcols, static_cast<int>(npix), T(1), g.data(), cout,
                      col.data(), kcols, T(1), gw.data(), kcols);
      }
      if (tp.requires_grad(bias)) {
        Tensor<T>& gb = tp.grad(bias);
        for (int64_t i = 0; i < npix; ++i)
          for (int oc = 0; oc < cout; ++oc) gb.v[oc] += g.v[i * cout + oc];
      }
      if (tp.requires_grad(x)) {
        std::vector<T> dcol(static_cast<size_t>(npix) * kcols);
        blas::gemm<T>(false, false, static_cast<int>(npix), kcols, cout, T(1), g.data(), cout,
                      tp.val(wgt).data(), kcols, T(0), dcol.data(), kcols);
        col2im_add(dcol, kh, kw, stride, pad, oh, ow, tp.grad(x));
      }
    });
  return self;
}

// Transposed convolution restricted to non-overlapping tiles (kernel == stride),
// which is the only form the network uses. Each input pixel paints one
// kh x kw output tile.
template <typename T>
Var<T> tconv2d(Tape<T>& t, Var<T> x, Var<T> wgt, Var<T> bias, int stride) {
  const Tensor<T>& xv = t.val(x);
  const Tensor<T>& wv = t.val(wgt);
  require(xv.shape.size() == 3, ErrorKind::shape, "tconv2d: input must be [h,w,c]");
  require(wv.shape.size() == 4, ErrorKind::shape, "tconv2d: weights must be [cout,kh,kw,cin]");
  const int h = xv.shape[0], w = xv.shape[1], cin = xv.shape[2];
  const int cout = wv.shape[0], kh = wv.shape[1], kw = wv.shape[2];
  require(wv.shape[3] == cin, ErrorKind::shape, "tconv2d: weight cin mismatch");
  require(kh == stride && kw == stride, ErrorKind::shape,
          "tconv2d: kernel must equal stride (got k=" + std::to_string(kh) +
              " s=" + std::to_string(stride) + ")");
  require(t.val(bias).shape == Shape{cout}, ErrorKind::shape, "tconv2d: bias must be [cout]");
  const int oh = h * stride, ow = w * stride;
  const int64_t nin = static_cast<int64_t>(h) * w;

  Tensor<T> out({oh, ow, cout});
  const Tensor<T>& bv = t.val(bias);
  std::vector<T> wsub(static_cast<size_t>(cout) * cin), ysub(static_cast<size_t>(nin) * cout);
  for (int ky = 0; ky < kh; ++ky)
    for (int kx = 0; kx < kw; ++kx) {
      for (int oc = 0; oc < cout; ++oc) {
        const T* src = wv.data() + ((static_cast<int64_t>(oc) * kh + ky) * kw + kx) * cin;
        std::copy(src, src + cin, wsub.data() + static_cast<int64_t>(oc) * cin);
      }
      blas::gemm<T>(false, true, static_cast<int>(nin), cout, cin, T(1), xv.data(), cin,
                    wsub.data(), cin, T(0), ysub.data(), cout);
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < w; ++ix) {
          T* dst = out.data() + (static_cast<int64_t>(iy * stride + ky) * ow + ix * stride + kx) * cout;
          const T* src = ysub.data() + (static_cast<int64_t>(iy) * w + ix) * cout;
          for (int oc = 0; oc < cout; ++oc) dst[oc] = src[oc] + bv.v[oc];
        }
    }

  const bool rg = t.requires_grad(x) || t.requires_grad(wgt) || t.requires_grad(bias);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, x, wgt, bias, stride, h, w, cin, cout, kh, kw, nin, ow](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      const Tensor<T>& xv = tp.val(x);
      const Tensor<T>& wv = tp.val(wgt);
      std::vector<T> gsub(static_cast<size_t>(nin) * cout), wsub(static_cast<size_t>(cout) * cin),
          tmp(static_cast<size_t>(nin) * cin);
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
              const T* src =
                  g.data() + (static_cast<int64_t>(iy * stride + ky) * ow + ix * stride + kx) * cout;
              std::copy(src, src + cout, gsub.data() + (static_cast<int64_t>(iy) * w + ix) * cout);
            }
          if (tp.requires_grad(wgt)) {
            Tensor<T>& gw = tp.grad(wgt);
            std::fill(wsub.begin(), wsub.end(), T(0));
            blas::gemm<T>(true, false, cout, cin, static_cast<int>(nin), T(1), gsub.data(), cout,
                          xv.data(), cin, T(0), wsub.data(), cin);
            for (int oc = 0; oc < cout; ++oc) {
              T* dst = gw.data() + ((static_cast<int64_t>(oc) * kh + ky) * kw + kx) * cin;
              const T* src = wsub.data() + static_cast<int64_t>(oc) * cin;
              for (int ic = 0; ic < cin; ++ic) dst[ic] += src[ic];
            }
          }
          if (tp.requires_grad(x)) {
            for (int oc = 0; oc < cout; ++oc) {
              const T* src = wv.data() + ((static_cast<int64_t>(oc) * kh + ky) * kw + kx) * cin;
              std::copy(src, src + cin, wsub.data() + static_cast<int64_t>(oc) * cin);
            }
            blas::gemm<T>(false, false, static_cast<int>(nin), cin, cout, T(1), gsub.data(), cout,
                          wsub.data(), cin, T(0), tmp.data(), cin);
            Tensor<T>& gx = tp.grad(x);
            for (int64_t i = 0; i < nin * cin; ++i) gx.v[i] += tmp[i];
          }
          if (tp.requires_grad(bias)) {
            Tensor<T>& gb = tp.grad(bias);
            for (int64_t i = 0; i < nin; ++i)
              for (int oc = 0; oc < cout; ++oc) gb.v[oc] += gsub[i * cout + oc];
          }
        }
    });
  return self;
}

// ---------------------------------------------------------------------------
// grid_sample: bilinear resampling with a zero border. grid is [gh,gw,2] in
// pixel coordinates (channel 0 = x, channel 1 = y). Gradients flow to both the
// image values and the grid coordinates.
// ---------------------------------------------------------------------------
template <typename T>
Var<T> grid_sample(Tape<T>& t, Var<T> img, Var<T> grid) {
  const Tensor<T>& iv = t.val(img);
  const Tensor<T>& gv = t.val(grid);
  require(iv.shape.size() == 3, ErrorKind::shape, "grid_sample: image must be [h,w,c]");
  require(gv.shape.size() == 3 && gv.shape[2] == 2, ErrorKind::shape,
          "grid_sample: grid must be [h,w,2]");
  const int h = iv.shape[0], w = iv.shape[1], c = iv.shape[2];
  const int gh = gv.shape[0], gw = gv.shape[1];
  Tensor<T> out({gh, gw, c});
  const int64_t npix = static_cast<int64_t>(gh) * gw;
  auto pix = [&](int y, int x, int k) -> T {
    if (y < 0 || y >= h || x < 0 || x >= w) return T(0);
    return iv.v[(static_cast<int64_t>(y) * w + x) * c + k];
  };
  for (int64_t i = 0; i < npix; ++i) {
    const T sx = gv.v[i * 2], sy = gv.v[i * 2 + 1];
    const int x0 = static_cast<int>(std::floor(static_cast<double>(sx)));
    const int y0 = static_cast<int>(std::floor(static_cast<double>(sy)));
    const T fx = sx - static_cast<T>(x0), fy = sy - static_cast<T>(y0);
    for (int k = 0; k < c; ++k) {
      out.v[i * c + k] = (T(1) - fy) * ((T(1) - fx) * pix(y0, x0, k) + fx * pix(y0, x0 + 1, k)) +
                         fy * ((T(1) - fx) * pix(y0 + 1, x0, k) + fx * pix(y0 + 1, x0 + 1, k));
    }
  }
  const bool rg = t.requires_grad(img) || t.requires_grad(grid);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, img, grid, h, w, c, npix](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      const Tensor<T>& iv = tp.val(img);
      const Tensor<T>& gv = tp.val(grid);
      Tensor<T>* gi = tp.requires_grad(img) ? &tp.grad(img) : nullptr;
      Tensor<T>* gg = tp.requires_grad(grid) ? &tp.grad(grid) : nullptr;
      auto pix = [&](int y, int x, int k) -> T {
        if (y < 0 || y >= h || x < 0 || x >= w) return T(0);
        return iv.v[(static_cast<int64_t>(y) * w + x) * c + k];
      };
      auto add_pix = [&](int y, int x, int k, T val) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        gi->v[(static_cast<int64_t>(y) * w + x) * c + k] += val;
      };
      for (int64_t i = 0; i < npix; ++i) {
        const T sx = gv.v[i * 2], sy = gv.v[i * 2 + 1];
        const int x0 = static_cast<int>(std::floor(static_cast<double>(sx)));
        const int y0 = static_cast<int>(std::floor(static_cast<double>(sy)));
        const T fx = sx - static_cast<T>(x0), fy = sy - static_cast<T>(y0);
        T dsx = T(0), dsy = T(0);
        for (int k = 0; k < c; ++k) {
          const T go = g.v[i * c + k];
          if (go == T(0)) continue;
          if (gi) {
            add_pix(y0, x0, k, go * (T(1) - fx) * (T(1) - fy));
            add_pix(y0, x0 + 1, k, go * fx * (T(1) - fy));
            add_pix(y0 + 1, x0, k, go * (T(1) - fx) * fy);
            add_pix(y0 + 1, x0 + 1, k, go * fx * fy);
          }
          if (gg) {
            dsx += go * ((T(1) - fy) * (pix(y0, x0 + 1, k) - pix(y0, x0, k)) +
                         fy * (pix(y0 + 1, x0 + 1, k) - pix(y0 + 1, x0, k)));
            dsy += go * ((T(1) - fx) * (pix(y0 + 1, x0, k) - pix(y0, x0, k)) +
                         fx * (pix(y0 + 1, x0 + 1, k) - pix(y0, x0 + 1, k)));
          }
        }
        if (gg) {
          gg->v[i * 2] += dsx;
          gg->v[i * 2 + 1] += dsy;
        }
      }
    });
  return self;
}

// ---------------------------------------------------------------------------
// Row-wise lexicographic sort of 3-vectors by (channel0, channel1), stable.
// The backward pass routes gradients through the inverse permutation.
// ---------------------------------------------------------------------------
using RowPerm = std::shared_ptr<std::vector<int>>;

template <typename T>
std::pair<Var<T>, RowPerm> row_sort_lex(Tape<T>& t, Var<T> x) {
  const Tensor<T>& xv = t.val(x);
  require(xv.shape.size() == 3 && xv.shape[2] == 3, ErrorKind::shape,
          "row_sort_lex: expected [h,w,3]");
  require(xv.all_finite(), ErrorKind::numeric, "row_sort_lex: non-finite input");
  const int h = xv.shape[0], w = xv.shape[1];
  auto perm = std::make_shared<std::vector<int>>(static_cast<size_t>(h) * w);
  Tensor<T> out(xv.shape);
  std::vector<int> idx(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::iota(idx.begin(), idx.end(), 0);
    const T* row = xv.data() + static_cast<int64_t>(y) * w * 3;
    std::stable_sort(idx.begin(), idx.end(), [row](int a, int b) {
      if (row[a * 3] != row[b * 3]) return row[a * 3] < row[b * 3];
      return row[a * 3 + 1] < row[b * 3 + 1];
    });
    for (int k = 0; k < w; ++k) {
      (*perm)[static_cast<size_t>(y) * w + k] = idx[static_cast<size_t>(k)];
      for (int ch = 0; ch < 3; ++ch)
        out.at(y, k, ch) = xv.at(y, idx[static_cast<size_t>(k)], ch);
    }
  }
  const bool rg = t.requires_grad(x);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, x, perm, h, w](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& gx = tp.grad(x);
      for (int y = 0; y < h; ++y)
        for (int k = 0; k < w; ++k) {
          const int src = (*perm)[static_cast<size_t>(y) * w + k];
          for (int ch = 0; ch < 3; ++ch) gx.at(y, src, ch) += g.at(y, k, ch);
        }
    });
  return {self, perm};
}

// Scatter sorted-order values back to their pre-sort columns.
template <typename T>
Var<T> unsort_rows(Tape<T>& t, Var<T> x, const RowPerm& perm) {
  const Tensor<T>& xv = t.val(x);
  require(xv.shape.size() == 3, ErrorKind::shape, "unsort_rows: expected [h,w,c]");
  const int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
  require(static_cast<int64_t>(perm->size()) == static_cast<int64_t>(h) * w, ErrorKind::shape,
          "unsort_rows: permutation size mismatch");
  Tensor<T> out(xv.shape);
  for (int y = 0; y < h; ++y)
    for (int k = 0; k < w; ++k) {
      const int dst = (*perm)[static_cast<size_t>(y) * w + k];
      for (int ch = 0; ch < c; ++ch) out.at(y, dst, ch) = xv.at(y, k, ch);
    }
  const bool rg = t.requires_grad(x);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, x, perm, h, w, c](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& gx = tp.grad(x);
      for (int y = 0; y < h; ++y)
        for (int k = 0; k < w; ++k) {
          const int dst = (*perm)[static_cast<size_t>(y) * w + k];
          for (int ch = 0; ch < c; ++ch) gx.at(y, k, ch) += g.at(y, dst, ch);
        }
    });
  return self;
}

// Shift columns right by one; column 0 takes a constant fill value.
template <typename T>
Var<T> shift_right1(Tape<T>& t, Var<T> a, double fill) {
  const Tensor<T>& xv = t.val(a);
  require(xv.shape.size() == 3, ErrorKind::shape, "shift_right1: expected [h,w,c]");
  const int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
  Tensor<T> out(xv.shape);
  for (int y = 0; y < h; ++y) {
    for (int k = 0; k < c; ++k) out.at(y, 0, k) = static_cast<T>(fill);
    for (int x = 1; x < w; ++x)
      for (int k = 0; k < c; ++k) out.at(y, x, k) = xv.at(y, x - 1, k);
  }
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, h, w, c](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& ga = tp.grad(a);
      for (int y = 0; y < h; ++y)
        for (int x = 1; x < w; ++x)
          for (int k = 0; k < c; ++k) ga.at(y, x - 1, k) += g.at(y, x, k);
    });
  return self;
}

// ---------------------------------------------------------------------------
// Forward differences with the last valid difference replicated into the
// final column/row, so gradient maps keep the input shape.
// ---------------------------------------------------------------------------
template <typename T>
Var<T> grad_x(Tape<T>& t, Var<T> a) {
  const Tensor<T>& xv = t.val(a);
  require(xv.shape.size() == 3, ErrorKind::shape, "grad_x: expected [h,w,c]");
  const int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
  require(w >= 2, ErrorKind::shape, "grad_x: width must be >= 2");
  Tensor<T> out(xv.shape);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w - 1; ++x)
      for (int k = 0; k < c; ++k) out.at(y, x, k) = xv.at(y, x + 1, k) - xv.at(y, x, k);
    for (int k = 0; k < c; ++k) out.at(y, w - 1, k) = out.at(y, w - 2, k);
  }
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, h, w, c](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& ga = tp.grad(a);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w - 1; ++x)
          for (int k = 0; k < c; ++k) {
            const T gv = g.at(y, x, k);
            ga.at(y, x + 1, k) += gv;
            ga.at(y, x, k) -= gv;
          }
        for (int k = 0; k < c; ++k) {
          const T gv = g.at(y, w - 1, k);
          ga.at(y, w - 1, k) += gv;
          ga.at(y, w - 2, k) -= gv;
        }
      }
    });
  return self;
}

template <typename T>
Var<T> grad_y(Tape<T>& t, Var<T> a) {
  const Tensor<T>& xv = t.val(a);
  require(xv.shape.size() == 3, ErrorKind::shape, "grad_y: expected [h,w,c]");
  const int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
  require(h >= 2, ErrorKind::shape, "grad_y: height must be >= 2");
  Tensor<T> out(xv.shape);
  for (int y = 0; y < h - 1; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) out.at(y, x, k) = xv.at(y + 1, x, k) - xv.at(y, x, k);
  for (int x = 0; x < w; ++x)
    for (int k = 0; k < c; ++k) out.at(h - 1, x, k) = out.at(h - 2, x, k);
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, h, w, c](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& ga = tp.grad(a);
      for (int y = 0; y < h - 1; ++y)
        for (int x = 0; x < w; ++x)
          for (int k = 0; k < c; ++k) {
            const T gv = g.at(y, x, k);
            ga.at(y + 1, x, k) += gv;
            ga.at(y, x, k) -= gv;
          }
      for (int x = 0; x < w; ++x)
        for (int k = 0; k < c; ++k) {
          const T gv = g.at(h - 1, x, k);
          ga.at(h - 1, x, k) += gv;
          ga.at(h - 2, x, k) -= gv;
        }
    });
  return self;
}

// ---------------------------------------------------------------------------
// SSIM: 11x11 Gaussian window (sigma 1.5), valid-mode windows, per channel
// then averaged. Built from a separable Gaussian filter plus elementwise ops.
// ---------------------------------------------------------------------------
inline const std::vector<double>& ssim_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> g(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      g[static_cast<size_t>(i)] = std::exp(-((i - 5.0) * (i - 5.0)) / (2.0 * 1.5 * 1.5));
      sum += g[static_cast<size_t>(i)];
    }
    for (double& x : g) x /= sum;
    return g;
  }();
  return k;
}

// Valid-mode separable Gaussian; output is [(h-10), (w-10), c].
template <typename T>
Var<T> gauss11_valid(Tape<T>& t, Var<T> a) {
  const Tensor<T>& xv = t.val(a);
  require(xv.shape.size() == 3, ErrorKind::shape, "gauss11_valid: expected [h,w,c]");
  const int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
  require(h >= 11 && w >= 11, ErrorKind::shape,
          "gauss11_valid: image smaller than the 11x11 window");
  const auto& kd = ssim_kernel();
  std::vector<T> k(11);
  for (int i = 0; i < 11; ++i) k[static_cast<size_t>(i)] = static_cast<T>(kd[static_cast<size_t>(i)]);
  const int oh = h - 10, ow = w - 10;
  // horizontal then vertical
  Tensor<T> tmp({h, ow, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x)
      for (int ch = 0; ch < c; ++ch) {
        T acc = T(0);
        for (int i = 0; i < 11; ++i) acc += k[static_cast<size_t>(i)] * xv.at(y, x + i, ch);
        tmp.at(y, x, ch) = acc;
      }
  Tensor<T> out({oh, ow, c});
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int ch = 0; ch < c; ++ch) {
        T acc = T(0);
        for (int i = 0; i < 11; ++i) acc += k[static_cast<size_t>(i)] * tmp.at(y + i, x, ch);
        out.at(y, x, ch) = acc;
      }
  const bool rg = t.requires_grad(a);
  Var<T> self = t.push(std::move(out), rg);
  if (rg)
    t.set_back(self, [self, a, h, w, c, oh, ow, k](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad(self);
      Tensor<T>& ga = tp.grad(a);
      Tensor<T> gtmp({h, ow, c});
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
          for (int ch = 0; ch < c; ++ch) {
            const T gv = g.at(y, x, ch);
            if (gv == T(0)) continue;
            for (int i = 0; i < 11; ++i) gtmp.at(y + i, x, ch) += k[static_cast<size_t>(i)] * gv;
          }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x)
          for (int ch = 0; ch < c; ++ch) {
            const T gv = gtmp.at(y, x, ch);
            if (gv == T(0)) continue;
            for (int i = 0; i < 11; ++i) ga.at(y, x + i, ch) += k[static_cast<size_t>(i)] * gv;
          }
    });
  return self;
}

// Mean SSIM between two [h,w,c] images, differentiable in both.
template <typename T>
Var<T> ssim(Tape<T>& t, Var<T> a, Var<T> b) {
  require(t.val(a).shape == t.val(b).shape, ErrorKind::shape, "ssim: shape mismatch");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  Var<T> mu_a = gauss11_valid(t, a);
  Var<T> mu_b = gauss11_valid(t, b);
  Var<T> aa = gauss11_valid(t, mul(t, a, a));
  Var<T> bb = gauss11_valid(t, mul(t, b, b));
  Var<T> ab = gauss11_valid(t, mul(t, a, b));
  Var<T> mu_ab = mul(t, mu_a, mu_b);
  Var<T> var_a = sub(t, aa, mul(t, mu_a, mu_a));
  Var<T> var_b = sub(t, bb, mul(t, mu_b, mu_b));
  Var<T> cov = sub(t, ab, mu_ab);
  Var<T> num = mul(t, add_s(t, mul_s(t, mu_ab, 2.0), c1), add_s(t, mul_s(t, cov, 2.0), c2));
  Var<T> den = mul(t, add_s(t, add(t, mul(t, mu_a, mu_a), mul(t, mu_b, mu_b)), c1),
                   add_s(t, add(t, var_a, var_b), c2));
  return reduce_mean(t, div(t, num, den));
}

}  // namespace dpc::ops
