#pragma once

// Shared fixtures for attribute/simulator/task tests.

#include <cmath>

#include "attributes.hpp"
#include "simulator.hpp"
#include "tape.hpp"

namespace testutil {

using namespace dpc;

// Binary dilation of a [h,w,1] mask by one pixel (8-neighborhood).
inline Tensor<float> dilate1(const Tensor<float>& m) {
  const int h = m.shape[0], w = m.shape[1];
  Tensor<float> out(m.shape);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float v = 0;
      for (int dy = -1; dy <= 1 && v == 0; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          if (m.at(yy, xx, 0) > 0.5f) {
            v = 1;
            break;
          }
        }
      out.at(y, x, 0) = v;
    }
  return out;
}

// Pixels within one pixel of a 0/1 transition in m.
inline Tensor<float> boundary_band(const Tensor<float>& m) {
  Tensor<float> inv(m.shape);
  for (int64_t i = 0; i < m.size(); ++i) inv.v[i] = m.v[i] > 0.5f ? 0.0f : 1.0f;
  Tensor<float> grown = dilate1(m);
  Tensor<float> shrunk_inv = dilate1(inv);
  Tensor<float> band(m.shape);
  for (int64_t i = 0; i < m.size(); ++i) {
    const bool near_on = grown.v[i] > 0.5f && m.v[i] <= 0.5f;
    const bool near_off = shrunk_inv.v[i] > 0.5f && m.v[i] > 0.5f;
    band.v[i] = (near_on || near_off) ? 1.0f : 0.0f;
  }
  return band;
}

// Inverse depth tensor (normalized units) from a ground-truth depth raster.
template <typename T>
Tensor<T> inv_depth_from_gt(const Tensor<double>& depth_gt, double t_norm) {
  Tensor<T> inv({depth_gt.shape[0], depth_gt.shape[1], 1});
  for (int64_t i = 0; i < inv.size(); ++i)
    inv.v[i] = static_cast<T>(t_norm / depth_gt.v[i]);
  return inv;
}

// Fraction of agreement between harden(M) and the ray-cast oracle over FOV
// pixels, excluding a 1-px band around oracle transitions, the FOV boundary
// and the image border.
struct MaskAgreement {
  double agreement = 0;
  long compared = 0;
  long mismatched = 0;
};

inline MaskAgreement compare_mask_to_oracle(const Tensor<float>& soft_mask, const SimContext& ctx) {
  const int h = soft_mask.shape[0], w = soft_mask.shape[1];
  Tensor<float> lit_band = boundary_band(ctx.lit);
  Tensor<float> fov_band = boundary_band(ctx.fov);
  MaskAgreement out;
  for (int y = 2; y < h - 2; ++y)
    for (int x = 2; x < w - 2; ++x) {
      if (ctx.fov.at(y, x, 0) <= 0.5f) continue;
      if (lit_band.at(y, x, 0) > 0.5f || fov_band.at(y, x, 0) > 0.5f) continue;
      const int hard = soft_mask.at(y, x, 0) >= 0.5f ? 1 : 0;
      const int oracle = ctx.visible.at(y, x, 0) > 0.5f ? 1 : 0;
      ++out.compared;
      if (hard != oracle) ++out.mismatched;
    }
  out.agreement =
      out.compared == 0 ? 0.0 : 1.0 - static_cast<double>(out.mismatched) / out.compared;
  return out;
}

// Differentiable mask evaluated from ground-truth depth, in double.
inline Tensor<float> mask_from_gt_depth(const SyntheticScene& scene, const CalibrationPair& calib) {
  auto consts = make_attribute_constants<double>(calib.normalized());
  Tape<double> t;
  auto inv_d = t.leaf(inv_depth_from_gt<double>(scene.depth_gt, calib.baseline_norm()), false);
  AttributeVars<double> attrs = compute_attributes(t, inv_d, consts);
  return t.val(attrs.mask).cast<float>();
}

}  // namespace testutil
