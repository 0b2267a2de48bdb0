#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "rng.hpp"

using namespace dpc;
using testutil::compare_mask_to_oracle;
using testutil::inv_depth_from_gt;
using testutil::mask_from_gt_depth;

namespace {

Tensor<double> full_mask(const CalibrationPair& calib) {
  return Tensor<double>({calib.cam_size.h, calib.cam_size.w, 1}, 1.0);
}

}  // namespace

TEST_CASE("compute points: constant inverse depth lies on a plane") {
  CalibrationPair calib = default_calibration();
  auto consts = make_attribute_constants<double>(calib.normalized());
  Tape<double> t;
  auto inv_d = t.leaf(Tensor<double>({calib.cam_size.h, calib.cam_size.w, 1}, 1.0), false);
  Tensor<double> forced = full_mask(calib);
  AttributeVars<double> attrs =
      compute_attributes(t, inv_d, consts, MaskMode::forced, &forced);
  const Tensor<double>& pts = t.val(attrs.points);
  for (int64_t i = 0; i < pts.size() / 3; ++i) CHECK(pts.v[i * 3 + 2] == doctest::Approx(1.0));
  // ray direction: x = (px - cx)/fx * d
  const int x0 = 40, y0 = 20;
  CHECK(pts.at(y0, x0, 0) == doctest::Approx((x0 - calib.cam.cx) / calib.cam.fx));
  CHECK(pts.at(y0, x0, 1) == doctest::Approx((y0 - calib.cam.cy) / calib.cam.fy));
}

TEST_CASE("normals: fronto-parallel plane faces the camera") {
  CalibrationPair calib = default_calibration();
  SyntheticScene scene = make_scene("plane", calib);
  Tape<double> t;
  auto consts = make_attribute_constants<double>(calib.normalized());
  auto inv_d = t.leaf(inv_depth_from_gt<double>(scene.depth_gt, 1.0), false);
  AttributeVars<double> attrs = compute_attributes(t, inv_d, consts);
  const Tensor<double>& n = t.val(attrs.normal);
  for (int64_t i = 0; i < n.size() / 3; ++i) {
    CHECK(std::fabs(n.v[i * 3 + 0]) < 1e-9);
    CHECK(std::fabs(n.v[i * 3 + 1]) < 1e-9);
    CHECK(n.v[i * 3 + 2] == doctest::Approx(-1.0));
  }
  CHECK(attrs.degenerate_normals == 0);
}

TEST_CASE("normals: 45-degree plane about the y axis") {
  CalibrationPair calib = default_calibration();
  const int h = calib.cam_size.h, w = calib.cam_size.w;
  // plane z = z0 + x_world  =>  z = z0 / (1 - x_tilde)
  Tensor<double> depth({h, w, 1});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double xt = (x - calib.cam.cx) / calib.cam.fx;
      depth.at(y, x, 0) = 3.0 / (1.0 - xt);
    }
  Tape<double> t;
  auto consts = make_attribute_constants<double>(calib.normalized());
  auto inv_d = t.leaf(inv_depth_from_gt<double>(depth, 1.0), false);
  AttributeVars<double> attrs = compute_attributes(t, inv_d, consts);
  const Tensor<double>& n = t.val(attrs.normal);
  const double r2 = std::sqrt(2.0) / 2.0;
  for (int y = 5; y < h - 5; y += 13)
    for (int x = 5; x < w - 5; x += 17) {
      CHECK(n.at(y, x, 0) == doctest::Approx(r2).epsilon(1e-6));
      CHECK(std::fabs(n.at(y, x, 1)) < 1e-6);
      CHECK(n.at(y, x, 2) == doctest::Approx(-r2).epsilon(1e-6));
    }
}

TEST_CASE("normals: sinusoidal heightfield matches the analytic field") {
  CalibrationPair calib = default_calibration();
  SyntheticScene scene = make_scene("waves", calib);
  Tape<double> t;
  auto consts = make_attribute_constants<double>(calib.normalized());
  auto inv_d = t.leaf(inv_depth_from_gt<double>(scene.depth_gt, 1.0), false);
  AttributeVars<double> attrs = compute_attributes(t, inv_d, consts);
  const Tensor<double>& n = t.val(attrs.normal);
  const int h = calib.cam_size.h, w = calib.cam_size.w;
  long ok = 0, total = 0;
  double angle_sum = 0;
  for (int y = 2; y < h - 2; ++y)
    for (int x = 2; x < w - 2; ++x) {
      const double xt = (x - calib.cam.cx) / calib.cam.fx;
      const double yt = (y - calib.cam.cy) / calib.cam.fy;
      const double z = scene.depth_gt.at(y, x, 0);
      const double zx =
          0.15 * 6.2832 * 1.6 * std::cos(6.2832 * 1.6 * xt) * std::cos(6.2832 * 1.2 * yt);
      const double zy =
          -0.15 * 6.2832 * 1.2 * std::sin(6.2832 * 1.6 * xt) * std::sin(6.2832 * 1.2 * yt);
      // tangents of S = (x z, y z, z) over normalized camera coords
      Vec3 tx{z + xt * zx, yt * zx, zx};
      Vec3 ty{xt * zy, z + yt * zy, zy};
      Vec3 na = normalized(cross(tx, ty));
      Vec3 view = normalized(-Vec3{xt * z, yt * z, z});
      if (dot(na, view) < 0) na = -na;
      Vec3 nd{n.at(y, x, 0), n.at(y, x, 1), n.at(y, x, 2)};
      const double cosang = std::min(1.0, std::max(-1.0, dot(na, nd)));
      const double deg = std::acos(cosang) * 180.0 / 3.14159265358979;
      angle_sum += deg;
      ok += deg < 2.0 ? 1 : 0;
      ++total;
    }
  CHECK(static_cast<double>(ok) / static_cast<double>(total) > 0.9);
  CHECK(angle_sum / static_cast<double>(total) < 1.0);
}

TEST_CASE("light, view, reflect: unit norms and the reflection angle identity") {
  CalibrationPair calib = default_calibration();
  SyntheticScene scene = make_scene("waves", calib);
  Tape<double> t;
  auto consts = make_attribute_constants<double>(calib.normalized());
  auto inv_d = t.leaf(inv_depth_from_gt<double>(scene.depth_gt, 1.0), false);
  AttributeVars<double> attrs = compute_attributes(t, inv_d, consts);
  const Tensor<double>& n = t.val(attrs.normal);
  const Tensor<double>& l = t.val(attrs.light);
  const Tensor<double>& v = t.val(attrs.view);
  const Tensor<double>& r = t.val(attrs.reflect);
  const int64_t npix = n.size() / 3;
  for (int64_t i = 0; i < npix; i += 7) {
    auto unit_dev = [&](const Tensor<double>& f) {
      return std::fabs(std::sqrt(f.v[i * 3] * f.v[i * 3] + f.v[i * 3 + 1] * f.v[i * 3 + 1] +
                                 f.v[i * 3 + 2] * f.v[i * 3 + 2]) -
                       1.0);
    };
    CHECK(unit_dev(n) < 1e-6);
    CHECK(unit_dev(l) < 1e-6);
    CHECK(unit_dev(v) < 1e-6);
    CHECK(unit_dev(r) < 1e-6);
    const double nl = n.v[i * 3] * l.v[i * 3] + n.v[i * 3 + 1] * l.v[i * 3 + 1] +
                      n.v[i * 3 + 2] * l.v[i * 3 + 2];
    const double nr = n.v[i * 3] * r.v[i * 3] + n.v[i * 3 + 1] * r.v[i * 3 + 1] +
                      n.v[i * 3 + 2] * r.v[i * 3 + 2];
    CHECK(std::fabs(nl - nr) < 1e-6);  // angle(n,l) == angle(n,r)
  }
  const int yc = calib.cam_size.h / 2, xc = calib.cam_size.w / 2;
  CHECK(v.at(yc, xc, 2) == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("warp grid: near-coincident devices give the identity grid") {
  CalibrationPair calib = default_calibration();
  calib.prj = calib.cam;
  calib.prj_size = calib.cam_size;
  calib.ext.R = Mat3{};
  calib.ext.t = {1e-7, 0, 0};
  auto consts = make_attribute_constants<double>(calib);  // raw units on purpose
  Tape<double> t;
  auto inv_d = t.leaf(Tensor<double>({calib.cam_size.h, calib.cam_size.w, 1}, 1.0 / 3.0), false);
  Tensor<double> forced = full_mask(calib);
  AttributeVars<double> attrs =
      compute_attributes(t, inv_d, consts, MaskMode::forced, &forced);
  const Tensor<double>& omega = t.val(attrs.omega);
  for (int y = 0; y < calib.cam_size.h; y += 9)
    for (int x = 0; x < calib.cam_size.w; x += 11) {
      CHECK(std::fabs(omega.at(y, x, 0) - x) < 1e-4);
      CHECK(std::fabs(omega.at(y, x, 1) - y) < 1e-4);
    }
}

TEST_CASE("warp grid equals the plane-induced homography") {
  CalibrationPair calib = default_calibration();
  const CalibrationPair nc = calib.normalized();
  const double z0 = 3.0;
  auto consts = make_attribute_constants<double>(nc);
  Tape<double> t;
  auto inv_d = t.leaf(Tensor<double>({calib.cam_size.h, calib.cam_size.w, 1}, 1.0 / z0), false);
  AttributeVars<double> attrs = compute_attributes(t, inv_d, consts);
  // H = K_p (R + t n^T / d) K_c^-1 for the plane n.X = d with n = (0,0,1)
  Mat3 rtn = nc.ext.R;
  rtn(0, 2) += nc.ext.t.x / z0;
  rtn(1, 2) += nc.ext.t.y / z0;
  rtn(2, 2) += nc.ext.t.z / z0;
  Mat3 hplane = nc.prj.matrix() * rtn * nc.cam.matrix().inverse();
  const Tensor<double>& omega = t.val(attrs.omega);
  for (int y = 0; y < calib.cam_size.h; y += 7)
    for (int x = 0; x < calib.cam_size.w; x += 11) {
      Vec2 expect = apply_homography(hplane, {static_cast<double>(x), static_cast<double>(y)});
      CHECK(std::fabs(omega.at(y, x, 0) - expect.x) < 1e-6);
      CHECK(std::fabs(omega.at(y, x, 1) - expect.y) < 1e-6);
    }
}

TEST_CASE("direct light mask is 1 inside the FOV on an unoccluded plane") {
  CalibrationPair calib = default_calibration();
  SyntheticScene scene = make_scene("plane", calib);
  SimContext ctx = make_sim_context(scene, calib);
  Tensor<float> mask = mask_from_gt_depth(scene, calib);
  const int h = calib.cam_size.h, w = calib.cam_size.w;
  Tensor<float> fov_band = testutil::boundary_band(ctx.fov);
  long wrong = 0, total = 0;
  for (int y = 2; y < h - 2; ++y)
    for (int x = 2; x < w - 2; ++x) {
      if (ctx.fov.at(y, x, 0) <= 0.5f || fov_band.at(y, x, 0) > 0.5f) continue;
      ++total;
      if (mask.at(y, x, 0) < 0.5f) ++wrong;
    }
  CHECK(total > 1000);
  CHECK(wrong == 0);
}

TEST_CASE("direct light mask matches the ray-cast oracle on the step scene") {
  CalibrationPair calib = default_calibration();
  SyntheticScene scene = make_scene("step", calib);
  SimContext ctx = make_sim_context(scene, calib);
  long shadowed = 0;
  for (int64_t i = 0; i < ctx.visible.size(); ++i)
    if (ctx.fov.v[i] > 0.5f && ctx.visible.v[i] < 0.5f) ++shadowed;
  CHECK(shadowed > 200);  // the scene has a real shadow band

  Tensor<float> mask = mask_from_gt_depth(scene, calib);
  auto result = compare_mask_to_oracle(mask, ctx);
  CAPTURE(result.compared);
  CAPTURE(result.mismatched);
  CHECK(result.compared > 5000);
  CHECK(result.agreement >= 0.99);
}

TEST_CASE("mask gradients are finite on random depth fields") {
  CalibrationPair calib = default_calibration(40, 52, 50, 64);
  auto consts = make_attribute_constants<double>(calib.normalized());
  Rng rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor<double> inv_d({40, 52, 1});
    for (double& v : inv_d.v) v = 1.0 / rng.uniform(2.0, 5.0);
    Tape<double> t;
    auto leaf = t.leaf(inv_d, true);
    AttributeVars<double> attrs = compute_attributes(t, leaf, consts);
    t.backward(ops::reduce_sum(t, attrs.mask));
    for (double g : t.grad(leaf).v) CHECK(std::isfinite(g));
  }
}

TEST_CASE("mask hardening is a fixed point for fixed depth") {
  CalibrationPair calib = default_calibration();
  SyntheticScene scene = make_scene("step", calib);
  Tensor<float> m1 = mask_from_gt_depth(scene, calib);
  Tensor<float> m2 = mask_from_gt_depth(scene, calib);
  for (int64_t i = 0; i < m1.size(); ++i)
    CHECK(std::lround(m1.v[i]) == std::lround(m2.v[i]));
}

TEST_CASE("warp_projector_image matches an independent homography warp") {
  CalibrationPair calib = default_calibration();
  const CalibrationPair nc = calib.normalized();
  const double z0 = 3.0;
  auto consts = make_attribute_constants<double>(nc);
  Tensor<double> checker({calib.prj_size.h, calib.prj_size.w, 3});
  for (int y = 0; y < calib.prj_size.h; ++y)
    for (int x = 0; x < calib.prj_size.w; ++x)
      for (int k = 0; k < 3; ++k)
        checker.at(y, x, k) = ((x / 8 + y / 8) % 2) ? 1.0 : 0.1 * (k + 1);
  Tape<double> t;
  auto inv_d = t.leaf(Tensor<double>({calib.cam_size.h, calib.cam_size.w, 1}, 1.0 / z0), false);
  Tensor<double> forced = full_mask(calib);
  AttributeVars<double> attrs =
      compute_attributes(t, inv_d, consts, MaskMode::forced, &forced);
  auto warped = warp_projector_image(t, t.constant(checker), attrs);

  Mat3 rtn = nc.ext.R;
  rtn(0, 2) += nc.ext.t.x / z0;
  rtn(1, 2) += nc.ext.t.y / z0;
  rtn(2, 2) += nc.ext.t.z / z0;
  Mat3 hplane = nc.prj.matrix() * rtn * nc.cam.matrix().inverse();
  auto sample = [&](double sx, double sy, int k) {
    const int xf = static_cast<int>(std::floor(sx)), yf = static_cast<int>(std::floor(sy));
    const double fx = sx - xf, fy = sy - yf;
    auto px = [&](int yy, int xx) {
      if (yy < 0 || yy >= calib.prj_size.h || xx < 0 || xx >= calib.prj_size.w) return 0.0;
      return checker.at(yy, xx, k);
    };
    return (1 - fy) * ((1 - fx) * px(yf, xf) + fx * px(yf, xf + 1)) +
           fy * ((1 - fx) * px(yf + 1, xf) + fx * px(yf + 1, xf + 1));
  };
  for (int y = 0; y < calib.cam_size.h; y += 5)
    for (int x = 0; x < calib.cam_size.w; x += 7) {
      Vec2 p = apply_homography(hplane, {static_cast<double>(x), static_cast<double>(y)});
      for (int k = 0; k < 3; ++k)
        CHECK(std::fabs(t.val(warped).at(y, x, k) - sample(p.x, p.y, k)) < 1e-6);
    }
}

TEST_CASE("rough shadings scale with the clamped cosine factors") {
  Tape<double> t;
  const Shape img{4, 4, 3};
  AttributeVars<double> attrs;
  attrs.n_dot_l = t.constant(Tensor<double>({4, 4, 1}, 1.0));
  attrs.r_dot_v = t.constant(Tensor<double>({4, 4, 1}, 0.0));
  auto ipp = t.constant(Tensor<double>(img, 0.5));
  auto s_c = t.constant(Tensor<double>(img, 0.8));
  auto s_gray = t.constant(Tensor<double>({4, 4, 1}, 0.8));
  RoughShadings<double> rough = rough_shadings(t, ipp, attrs, s_c, s_gray);
  CHECK(rough.ambient == s_c);  // ambient passes s through
  for (double v : t.val(rough.diffuse).v) CHECK(v == doctest::Approx(0.4));  // cosine = 1
  for (double v : t.val(rough.specular).v) CHECK(v == 0.0);

  AttributeVars<double> attrs2;
  attrs2.n_dot_l = t.constant(Tensor<double>({4, 4, 1}, 0.0));  // grazing light
  attrs2.r_dot_v = t.constant(Tensor<double>({4, 4, 1}, 0.3));
  RoughShadings<double> rough2 = rough_shadings(t, ipp, attrs2, s_c, s_gray);
  for (double v : t.val(rough2.diffuse).v) CHECK(v == 0.0);
  for (double v : t.val(rough2.specular).v) CHECK(v == doctest::Approx(0.5 * 0.8 * 0.3));
}
