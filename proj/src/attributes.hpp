#pragma once

#include "geometry.hpp"
#include "tape.hpp"
#include "tape_image.hpp"

namespace dpc {

inline constexpr float kInvDepthMin = 1e-3f;
inline constexpr float kInvDepthMax = 1.0f;
inline constexpr double kMaskSigma = 100.0;  // smooth-step scale
// A sorted neighbor on the same projector ray only counts as an occluder when
// it is closer by more than this margin (units of |t|). Rectification can
// sample one camera pixel twice; the duplicate pair has a near-zero depth gap
// and must not shadow itself.
inline constexpr double kMaskDepthBias = 0.01;

// Learnable inverse depth in the camera view; true depth = (1/inv_d) * |t|.
struct DepthField {
  Tensor<float> inv_d;  // [h,w,1], clamped to [1e-3, 1]

  static DepthField constant(int h, int w, float value) {
    DepthField d;
    d.inv_d = Tensor<float>({h, w, 1}, value);
    return d;
  }
  void clamp_bounds() {
    for (float& x : inv_d.v) x = std::min(kInvDepthMax, std::max(kInvDepthMin, x));
  }
};

// Camera capture of the scene under plain white illumination, its grayscale,
// and the thresholded projector-FOV mask.
struct SurfacePrior {
  Tensor<float> s;       // [h,w,3] in [0,1]
  Tensor<float> s_gray;  // [h,w,1], Rec.601 weights
  Tensor<float> s_star;  // [h,w,1] binary
};

inline Tensor<float> rgb_to_gray(const Tensor<float>& rgb) {
  check_image_shape(rgb, "rgb_to_gray");
  require(rgb.shape[2] == 3, ErrorKind::shape, "rgb_to_gray: expected 3 channels");
  Tensor<float> g({rgb.shape[0], rgb.shape[1], 1});
  const int64_t n = g.size();
  for (int64_t i = 0; i < n; ++i)
    g.v[i] = 0.299f * rgb.v[i * 3] + 0.587f * rgb.v[i * 3 + 1] + 0.114f * rgb.v[i * 3 + 2];
  return g;
}

inline SurfacePrior make_surface_prior(Tensor<float> s, Tensor<float> s_star) {
  SurfacePrior p;
  p.s_gray = rgb_to_gray(s);
  p.s = std::move(s);
  p.s_star = std::move(s_star);
  return p;
}

// Everything about the attribute stage that depends only on the calibration:
// per-pixel backprojection directions, the projector transform, and the
// rectification sampling grids.
template <typename T>
struct AttributeConstants {
  int h = 0, w = 0;
  Tensor<T> dirs;      // [h,w,3] K_c^-1 (x, y, 1)
  Tensor<T> o_p_map;   // [h,w,3] projector center broadcast per pixel
  std::array<double, 9> R{};
  std::array<double, 3> t{};
  double prj_fx = 0, prj_fy = 0, prj_cx = 0, prj_cy = 0;
  int prj_h = 0, prj_w = 0;
  Rectification rect;
  Tensor<T> grid_rect;    // [hr,wr,2] rectified pixel -> camera pixel (H^-1)
  Tensor<T> grid_unrect;  // [h,w,2] camera pixel -> rectified pixel (H)
  Tensor<T> rect_valid3;  // [hr,wr,3] 1 where the bilinear footprint is fully inside
  double omega_clamp_lo_x = 0, omega_clamp_hi_x = 0;
  double omega_clamp_lo_y = 0, omega_clamp_hi_y = 0;
};

template <typename T>
AttributeConstants<T> make_attribute_constants(const CalibrationPair& calib) {
  calib.validate();
  AttributeConstants<T> c;
  c.h = calib.cam_size.h;
  c.w = calib.cam_size.w;
  c.dirs = Tensor<T>({c.h, c.w, 3});
  for (int y = 0; y < c.h; ++y)
    for (int x = 0; x < c.w; ++x) {
      c.dirs.at(y, x, 0) = static_cast<T>((x - calib.cam.cx) / calib.cam.fx);
      c.dirs.at(y, x, 1) = static_cast<T>((y - calib.cam.cy) / calib.cam.fy);
      c.dirs.at(y, x, 2) = T(1);
    }
  Vec3 op = calib.projector_center();
  c.o_p_map = Tensor<T>({c.h, c.w, 3});
  for (int64_t i = 0; i < static_cast<int64_t>(c.h) * c.w; ++i) {
    c.o_p_map.v[i * 3 + 0] = static_cast<T>(op.x);
    c.o_p_map.v[i * 3 + 1] = static_cast<T>(op.y);
    c.o_p_map.v[i * 3 + 2] = static_cast<T>(op.z);
  }
  for (int i = 0; i < 9; ++i) c.R[static_cast<size_t>(i)] = calib.ext.R.m[static_cast<size_t>(i)];
  c.t = {calib.ext.t.x, calib.ext.t.y, calib.ext.t.z};
  c.prj_fx = calib.prj.fx;
  c.prj_fy = calib.prj.fy;
  c.prj_cx = calib.prj.cx;
  c.prj_cy = calib.prj.cy;
  c.prj_h = calib.prj_size.h;
  c.prj_w = calib.prj_size.w;

  c.rect = make_rectification(calib);
  c.grid_rect = Tensor<T>({c.rect.canvas.h, c.rect.canvas.w, 2});
  for (int y = 0; y < c.rect.canvas.h; ++y)
    for (int x = 0; x < c.rect.canvas.w; ++x) {
      Vec2 p = apply_homography(c.rect.H_inv, {static_cast<double>(x), static_cast<double>(y)});
      c.grid_rect.at(y, x, 0) = static_cast<T>(p.x);
      c.grid_rect.at(y, x, 1) = static_cast<T>(p.y);
    }
  c.grid_unrect = Tensor<T>({c.h, c.w, 2});
  for (int y = 0; y < c.h; ++y)
    for (int x = 0; x < c.w; ++x) {
      Vec2 p = apply_homography(c.rect.H, {static_cast<double>(x), static_cast<double>(y)});
      c.grid_unrect.at(y, x, 0) = static_cast<T>(p.x);
      c.grid_unrect.at(y, x, 1) = static_cast<T>(p.y);
    }
  // Keep warp coordinates of behind-projector points finite and far outside
  // the projector image instead of exploding.
  c.omega_clamp_lo_x = -2.0 * calib.prj_size.w;
  c.omega_clamp_hi_x = 3.0 * calib.prj_size.w;
  c.omega_clamp_lo_y = -2.0 * calib.prj_size.h;
  c.omega_clamp_hi_y = 3.0 * calib.prj_size.h;
  return c;
}

enum class MaskMode { computed, forced };

template <typename T>
struct AttributeVars {
  using Var = typename Tape<T>::Var;
  Var points = -1;  // [h,w,3] x_s
  Var normal = -1;  // [h,w,3] n, unit, camera-facing
  Var light = -1;   // [h,w,3] l, unit
  Var view = -1;    // [h,w,3] v, unit
  Var reflect = -1; // [h,w,3] r = 2(n.l)n - l
  Var omega = -1;   // [h,w,2] projector pixel coords
  Var d_p = -1;     // [h,w,1] projector-view depth
  Var mask = -1;    // [h,w,1] direct light mask in [0,1]
  Var n_dot_l = -1; // [h,w,1] clamped to [0,1]
  Var r_dot_v = -1; // [h,w,1] clamped to [0,1]
  int degenerate_normals = 0;
};

// Unit-normalize per-pixel 3-vectors; errors out on (near-)zero length.
template <typename T>
typename Tape<T>::Var normalize_ch(Tape<T>& t, typename Tape<T>::Var x, const char* what) {
  auto n2 = ops::channel_dot(t, x, x);
  for (const T& v : t.val(n2).v)
    require(static_cast<double>(v) > 1e-24, ErrorKind::numeric,
            std::string(what) + ": zero-length vector");
  return ops::mul(t, x, ops::repeat_c(t, ops::recip(t, ops::sqrt(t, n2)), 3));
}

// The DepthToAttribute stage: from inverse depth and calibration to points,
// normals, light/view/reflection directions, the warp grid, the projector-view
// depth and the differentiable direct light mask.
template <typename T>
AttributeVars<T> compute_attributes(Tape<T>& t, typename Tape<T>::Var inv_d,
                                    const AttributeConstants<T>& c,
                                    MaskMode mask_mode = MaskMode::computed,
                                    const Tensor<T>* forced_mask = nullptr) {
  using namespace ops;
  AttributeVars<T> out;
  require(t.val(inv_d).shape == Shape{c.h, c.w, 1}, ErrorKind::shape,
          "compute_attributes: inverse depth must be [h,w,1]");

  // x_s = K^-1 x_bar * d with d = 1 / inv_d
  auto depth = recip(t, inv_d);
  out.points = mul(t, repeat_c(t, depth, 3), t.constant(c.dirs));

  // view direction v = normalize(o_c - x_s), o_c = 0
  out.view = normalize_ch(t, neg(t, out.points), "view direction");

  // n = normalize(dx x_s x dy x_s), oriented toward the camera; degenerate
  // folds fall back to the view direction.
  auto gx = grad_x(t, out.points);
  auto gy = grad_y(t, out.points);
  auto cr = channel_cross(t, gx, gy);
  auto cr_n2 = channel_dot(t, cr, cr);
  const Tensor<T>& n2v = t.val(cr_n2);
  const int64_t npix = static_cast<int64_t>(c.h) * c.w;
  Tensor<T> degen({c.h, c.w, 1});
  int degen_count = 0;
  for (int64_t i = 0; i < npix; ++i) {
    const bool bad = static_cast<double>(n2v.v[i]) < 1e-24;
    degen.v[i] = bad ? T(1) : T(0);
    degen_count += bad ? 1 : 0;
  }
  out.degenerate_normals = degen_count;
  auto n2_safe = max_s(t, cr_n2, 1e-24);
  auto n_unit = mul(t, cr, repeat_c(t, recip(t, ops::sqrt(t, n2_safe)), 3));
  // orientation selector from forward values only (discrete flip)
  auto nv_dot = channel_dot(t, n_unit, out.view);
  Tensor<T> flip({c.h, c.w, 1});
  for (int64_t i = 0; i < npix; ++i) flip.v[i] = t.val(nv_dot).v[i] < T(0) ? T(-1) : T(1);
  auto n_oriented = mul(t, n_unit, repeat_c(t, t.constant(flip), 3));
  Tensor<T> degen3({c.h, c.w, 3});
  for (int64_t i = 0; i < npix; ++i)
    for (int k = 0; k < 3; ++k) degen3.v[i * 3 + k] = degen.v[i];
  out.normal = degen_count == 0 ? n_oriented : lerp_const(t, degen3, out.view, n_oriented);

  // l = normalize(o_p - x_s); r = 2(n.l)n - l
  out.light = normalize_ch(t, sub(t, t.constant(c.o_p_map), out.points), "light direction");
  auto ndl_raw = channel_dot(t, out.normal, out.light);
  out.reflect =
      sub(t, mul(t, repeat_c(t, mul_s(t, ndl_raw, 2.0), 3), out.normal), out.light);

  // warp grid: project x_s into the projector
  auto p = affine3(t, out.points, c.R, c.t);
  out.d_p = slice_c(t, p, 2, 3);
  auto pz = max_s(t, out.d_p, 1e-6);
  auto ox = clamp(t, add_s(t, mul_s(t, div(t, slice_c(t, p, 0, 1), pz), c.prj_fx), c.prj_cx),
                  static_cast<T>(c.omega_clamp_lo_x), static_cast<T>(c.omega_clamp_hi_x));
  auto oy = clamp(t, add_s(t, mul_s(t, div(t, slice_c(t, p, 1, 2), pz), c.prj_fy), c.prj_cy),
                  static_cast<T>(c.omega_clamp_lo_y), static_cast<T>(c.omega_clamp_hi_y));
  out.omega = concat_c<T>(t, {ox, oy});

  // rough-shading cosines
  out.n_dot_l = clamp(t, ndl_raw, T(0), T(1));
  out.r_dot_v = clamp(t, channel_dot(t, out.reflect, out.view), T(0), T(1));

  if (mask_mode == MaskMode::forced) {
    require(forced_mask != nullptr, ErrorKind::config, "forced mask mode without a mask");
    out.mask = t.constant(*forced_mask);
    return out;
  }

  // Differentiable direct light mask: rectify [omega, d_p], sort each row
  // lexicographically, compare each entry against its +-1 sorted neighbors
  // with soft indicators min(sigma*relu(.), 1), undo the sort, unrectify.
  //
  // An entry keeps its direct light when, on each side, the neighbor either
  // maps more than one projector pixel away (different ray) or sits farther
  // from the projector (it is the occluded one, not us). OR is max, AND is
  // min, so gradients follow the active branch.
  auto omega_dp = concat_c<T>(t, {out.omega, out.d_p});
  auto rectified = grid_sample(t, omega_dp, t.constant(c.grid_rect));
  auto [sorted, perm] = row_sort_lex(t, rectified);
  auto d = grad_x(t, sorted);  // D(k) = sorted(k+1) - sorted(k), last column replicated
  auto dxy = add(t, ops::abs(t, slice_c(t, d, 0, 1)), ops::abs(t, slice_c(t, d, 1, 2)));
  auto far_step = smooth_step(t, sub_s(t, dxy, 1.0), kMaskSigma);
  auto dz = slice_c(t, d, 2, 3);
  // vs next neighbor: far, or next is not closer than the bias (D_z > -bias)
  auto lit_next =
      maximum(t, far_step, smooth_step(t, add_s(t, dz, kMaskDepthBias), kMaskSigma));
  // vs previous neighbor at position k: far(D(k-1)), or prev not closer
  // (D_z(k-1) < bias); position 0 has no previous neighbor.
  auto surv =
      maximum(t, far_step, smooth_step(t, add_s(t, neg(t, dz), kMaskDepthBias), kMaskSigma));
  auto lit_prev = shift_right1(t, surv, 1.0);
  auto lit = minimum(t, lit_next, lit_prev);
  auto lit_unsorted = unsort_rows(t, lit, perm);
  out.mask = clamp(t, grid_sample(t, lit_unsorted, t.constant(c.grid_unrect)), T(0), T(1));
  return out;
}

// I'_p = phi(I_p, omega) . M, the projector image in the camera frontal view.
template <typename T>
typename Tape<T>::Var warp_projector_image(Tape<T>& t, typename Tape<T>::Var i_p,
                                           const AttributeVars<T>& attrs) {
  const auto& s = t.val(i_p).shape;
  require(s.size() == 3 && s[2] == 3, ErrorKind::shape, "warp_projector_image: I_p must be [h,w,3]");
  auto warped = ops::grid_sample(t, i_p, attrs.omega);
  return ops::mul(t, warped, ops::repeat_c(t, attrs.mask, 3));
}

template <typename T>
struct RoughShadings {
  using Var = typename Tape<T>::Var;
  Var ambient = -1;  // s
  Var diffuse = -1;  // I'_p . s . (n.l)
  Var specular = -1; // I'_p . s_gray . (r.v)^alpha, alpha = 1
};

template <typename T>
RoughShadings<T> rough_shadings(Tape<T>& t, typename Tape<T>::Var i_p_prime,
                                const AttributeVars<T>& attrs, typename Tape<T>::Var s_const,
                                typename Tape<T>::Var s_gray_const) {
  using namespace ops;
  RoughShadings<T> out;
  out.ambient = s_const;
  out.diffuse = mul(t, mul(t, i_p_prime, s_const), repeat_c(t, attrs.n_dot_l, 3));
  out.specular =
      mul(t, mul(t, i_p_prime, repeat_c(t, s_gray_const, 3)), repeat_c(t, attrs.r_dot_v, 3));
  return out;
}

}  // namespace dpc
