#pragma once

#include "tape.hpp"
#include "tape_image.hpp"

namespace dpc {

// Edge-aware smoothness weights exp(-|grad s|) with the per-pixel channel
// norm of the surface image gradient; forward differences, replicated border.
struct SmoothWeights {
  Tensor<float> wx;  // [h,w,1]
  Tensor<float> wy;  // [h,w,1]
};

inline SmoothWeights make_smooth_weights(const Tensor<float>& s) {
  check_image_shape(s, "make_smooth_weights");
  const int h = s.shape[0], w = s.shape[1], c = s.shape[2];
  SmoothWeights out;
  out.wx = Tensor<float>({h, w, 1});
  out.wy = Tensor<float>({h, w, 1});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int xs = std::min(x, w - 2), ys = std::min(y, h - 2);
      double nx = 0, ny = 0;
      for (int k = 0; k < c; ++k) {
        const double dx = s.at(y, xs + 1, k) - s.at(y, xs, k);
        const double dy = s.at(ys + 1, x, k) - s.at(ys, x, k);
        nx += dx * dx;
        ny += dy * dy;
      }
      out.wx.at(y, x, 0) = static_cast<float>(std::exp(-std::sqrt(nx)));
      out.wy.at(y, x, 0) = static_cast<float>(std::exp(-std::sqrt(ny)));
    }
  return out;
}

// L1 + (1 - SSIM) between a prediction and a captured image.
template <typename T>
typename Tape<T>::Var loss_recon(Tape<T>& t, typename Tape<T>::Var pred,
                                 typename Tape<T>::Var target) {
  using namespace ops;
  auto l1 = reduce_mean(t, ops::abs(t, sub(t, pred, target)));
  auto s = ssim(t, pred, target);
  return add(t, l1, sub(t, t.scalar_const(T(1)), s));
}

// ||M - s*||^2, summed over pixels.
template <typename T>
typename Tape<T>::Var loss_mask(Tape<T>& t, typename Tape<T>::Var mask,
                                typename Tape<T>::Var s_star) {
  require(t.val(mask).shape == t.val(s_star).shape, ErrorKind::shape, "loss_mask: shape mismatch");
  return ops::reduce_l2sq(t, ops::sub(t, mask, s_star));
}

// Per-item ||I_diff - I_c||^2 (the 1/(2N) batch factor is applied by the caller).
template <typename T>
typename Tape<T>::Var loss_rough_term(Tape<T>& t, typename Tape<T>::Var i_diff,
                                      typename Tape<T>::Var target) {
  require(t.val(i_diff).shape == t.val(target).shape, ErrorKind::shape,
          "loss_rough: shape mismatch");
  return ops::reduce_l2sq(t, ops::sub(t, i_diff, target));
}

// mean(|dx I| exp(-|dx s|) + |dy I| exp(-|dy s|))
template <typename T>
typename Tape<T>::Var loss_smooth(Tape<T>& t, typename Tape<T>::Var img,
                                  typename Tape<T>::Var wx, typename Tape<T>::Var wy) {
  using namespace ops;
  const int c = t.val(img).shape[2];
  auto wxr = c == 1 ? wx : repeat_c(t, wx, c);
  auto wyr = c == 1 ? wy : repeat_c(t, wy, c);
  auto tx = reduce_mean(t, mul(t, ops::abs(t, grad_x(t, img)), wxr));
  auto ty = reduce_mean(t, mul(t, ops::abs(t, grad_y(t, img)), wyr));
  return add(t, tx, ty);
}

// Plain-value oracle-independent loss bookkeeping for logs.
struct LossBreakdown {
  double recon = 0, mask = 0, rough = 0, smooth = 0, total = 0;
};

}  // namespace dpc
