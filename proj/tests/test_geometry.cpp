#include <cmath>

#include "doctest.h"
#include "geometry.hpp"
#include "rng.hpp"

using namespace dpc;

namespace {

CalibrationPair test_calib() {
  CalibrationPair c;
  c.cam_size = {120, 160};
  c.prj_size = {150, 200};
  c.cam.fx = 140;
  c.cam.fy = 140;
  c.cam.cx = 79.5;
  c.cam.cy = 59.5;
  c.prj.fx = 260;
  c.prj.fy = 260;
  c.prj.cx = 99.5;
  c.prj.cy = 74.5;
  Vec3 o_p = normalized(Vec3{0.93, 0.25, 0.05});
  Vec3 zp = normalized(Vec3{0, 0, 3.2} - o_p);
  Vec3 xp = normalized(cross(Vec3{0, 1, 0}, zp));
  Vec3 yp = cross(zp, xp);
  Mat3 r;
  r(0, 0) = xp.x; r(0, 1) = xp.y; r(0, 2) = xp.z;
  r(1, 0) = yp.x; r(1, 1) = yp.y; r(1, 2) = yp.z;
  r(2, 0) = zp.x; r(2, 1) = zp.y; r(2, 2) = zp.z;
  c.ext.R = r;
  c.ext.t = -(r * o_p);
  c.validate();
  return c;
}

CalibrationPair coincident_calib() {
  CalibrationPair c = test_calib();
  c.prj = c.cam;
  c.prj_size = c.cam_size;
  c.ext = Extrinsics{};  // R = I, t = 0
  return c;
}

}  // namespace

TEST_CASE("backproject principal point and unit-slope ray") {
  Intrinsics k;
  k.fx = 140;
  k.fy = 140;
  k.cx = 79.5;
  k.cy = 59.5;
  Vec3 p = backproject({79.5, 59.5}, 1.0, k);
  CHECK(p.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.z == doctest::Approx(1.0));

  Intrinsics k2;
  k2.fx = 100;
  k2.fy = 100;
  k2.cx = 0;
  k2.cy = 0;
  Vec3 q = backproject({100, 0}, 2.0, k2);
  CHECK(q.x == doctest::Approx(2.0));
  CHECK(q.y == doctest::Approx(0.0));
  CHECK(q.z == doctest::Approx(2.0));

  CHECK_THROWS_AS(backproject({0, 0}, -1.0, k), Error);
  CHECK_THROWS_AS(backproject({0, 0}, std::nan(""), k), Error);
}

TEST_CASE("backproject/project round trip") {
  Intrinsics k;
  k.fx = 123.4;
  k.fy = 117.8;
  k.cx = 42.1;
  k.cy = 61.7;
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Vec2 px{rng.uniform(0, 159), rng.uniform(0, 119)};
    double d = rng.uniform(0.5, 10.0);
    Vec3 p = backproject(px, d, k);
    Vec2 back = project_pinhole(p, k);
    CHECK(std::fabs(back.x - px.x) < 1e-9);
    CHECK(std::fabs(back.y - px.y) < 1e-9);
    CHECK(p.z == doctest::Approx(d));
  }
}

TEST_CASE("project_to_projector coincident devices equals camera projection") {
  CalibrationPair c = coincident_calib();
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1.0, 5.0)};
    ProjectorPoint pp = project_to_projector(p, c);
    Vec2 cam = project_pinhole(p, c.cam);
    CHECK(std::fabs(pp.pixel.x - cam.x) < 1e-12);
    CHECK(std::fabs(pp.pixel.y - cam.y) < 1e-12);
    CHECK(pp.depth == doctest::Approx(p.z));
  }
}

TEST_CASE("project_to_projector matches 4x4 homogeneous matrix chain") {
  CalibrationPair c = test_calib();
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    Vec3 p{rng.uniform(-1.5, 1.5), rng.uniform(-1.1, 1.1), rng.uniform(2.0, 5.0)};
    // Independent 4x4 route: P = [K_p 0; 0 1] [R t; 0 1] applied to [p; 1].
    double rt[4][4] = {};
    for (int r = 0; r < 3; ++r) {
      for (int cc = 0; cc < 3; ++cc) rt[r][cc] = c.ext.R(r, cc);
    }
    rt[0][3] = c.ext.t.x;
    rt[1][3] = c.ext.t.y;
    rt[2][3] = c.ext.t.z;
    rt[3][3] = 1;
    double kp[4][4] = {};
    kp[0][0] = c.prj.fx;
    kp[0][2] = c.prj.cx;
    kp[1][1] = c.prj.fy;
    kp[1][2] = c.prj.cy;
    kp[2][2] = 1;
    kp[3][3] = 1;
    double m[4][4] = {};
    for (int r = 0; r < 4; ++r)
      for (int cc = 0; cc < 4; ++cc)
        for (int k = 0; k < 4; ++k) m[r][cc] += kp[r][k] * rt[k][cc];
    double hom[4] = {p.x, p.y, p.z, 1.0};
    double out[4] = {};
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) out[r] += m[r][k] * hom[k];

    ProjectorPoint pp = project_to_projector(p, c);
    CHECK(std::fabs(pp.pixel.x - out[0] / out[2]) < 1e-9);
    CHECK(std::fabs(pp.pixel.y - out[1] / out[2]) < 1e-9);
    CHECK(std::fabs(pp.depth - out[2]) < 1e-9);
  }
}

TEST_CASE("points on the baseline axis project to the projector epipole") {
  CalibrationPair c = test_calib();
  Vec3 o_p = c.projector_center();
  // between the two centers: in front of the inward-looking projector
  ProjectorPoint e1 = project_to_projector(o_p * 0.3, c);
  ProjectorPoint e2 = project_to_projector(o_p * 0.7, c);
  CHECK(std::fabs(e1.pixel.x - e2.pixel.x) < 1e-8);
  CHECK(std::fabs(e1.pixel.y - e2.pixel.y) < 1e-8);
  // past the projector along the baseline: behind it
  CHECK_THROWS_AS(project_to_projector(o_p * 2.0, c), Error);
}

TEST_CASE("triangulate recovers forward-projected points") {
  CalibrationPair c = test_calib();
  Rng rng(29);
  for (int i = 0; i < 100; ++i) {
    Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-0.8, 0.8), rng.uniform(2.2, 4.5)};
    Vec2 xc = project_pinhole(p, c.cam);
    ProjectorPoint pp = project_to_projector(p, c);
    Vec3 rec = triangulate(xc, pp.pixel, c);
    CHECK(std::fabs(rec.x - p.x) < 1e-6);
    CHECK(std::fabs(rec.y - p.y) < 1e-6);
    CHECK(std::fabs(rec.z - p.z) < 1e-6);
  }
}

TEST_CASE("triangulate rejects epipolar-degenerate rays") {
  CalibrationPair c = test_calib();
  // camera pixel of the projector center and projector pixel of the camera
  // center: both rays run along the baseline.
  Vec2 e_c = project_pinhole(c.projector_center(), c.cam);
  Vec3 cam_in_prj = c.ext.R * Vec3{0, 0, 0} + c.ext.t;
  Vec2 e_p = project_pinhole(cam_in_prj, c.prj);
  CHECK_THROWS_AS(triangulate(e_c, e_p, c), Error);
}

TEST_CASE("triangulate perturbation stays within first-order sensitivity") {
  CalibrationPair c = test_calib();
  Vec3 p{0.3, -0.2, 3.1};
  Vec2 xc = project_pinhole(p, c.cam);
  Vec2 xp = project_to_projector(p, c).pixel;
  const double h = 1e-3;
  auto depth_at = [&](double dx, double dy) {
    return triangulate(xc, {xp.x + dx, xp.y + dy}, c).z;
  };
  const double base = depth_at(0, 0);
  const double jx = (depth_at(h, 0) - depth_at(-h, 0)) / (2 * h);
  const double jy = (depth_at(0, h) - depth_at(0, -h)) / (2 * h);
  const double bound = (std::fabs(jx) + std::fabs(jy)) * 0.5;
  for (double dx : {-0.5, 0.5})
    for (double dy : {-0.5, 0.5})
      CHECK(std::fabs(depth_at(dx, dy) - base) <= 1.6 * bound + 1e-9);
}

TEST_CASE("rectification is identity for a pure horizontal baseline") {
  CalibrationPair c = coincident_calib();
  c.ext.t = {-0.7, 0, 0};  // o_p = (0.7, 0, 0)
  Mat3 h = rectification_homography(c);
  for (int r = 0; r < 3; ++r)
    for (int cc = 0; cc < 3; ++cc) {
      const double expect = r == cc ? 1.0 : 0.0;
      CHECK(std::fabs(h(r, cc) / h(2, 2) - expect) < 1e-9);
    }
}

TEST_CASE("rectification maps epipolar pairs to equal rows") {
  for (int variant = 0; variant < 2; ++variant) {
    CalibrationPair c = test_calib();
    if (variant == 1) {
      // vertical-ish baseline
      c = coincident_calib();
      c.ext.t = {0.05, -0.8, 0.1};
    }
    Mat3 h = rectification_homography(c);
    Vec3 o_p = c.projector_center();
    Rng rng(41 + variant);
    for (int i = 0; i < 100; ++i) {
      // Two depths along one projector ray: same epipolar plane.
      Vec3 dir = normalized(Vec3{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0});
      Vec3 a = o_p + dir * rng.uniform(2.0, 3.0);
      Vec3 b = o_p + dir * rng.uniform(3.5, 5.0);
      Vec2 pa = apply_homography(h, project_pinhole(a, c.cam));
      Vec2 pb = apply_homography(h, project_pinhole(b, c.cam));
      CHECK(std::fabs(pa.y - pb.y) < 1e-6);
    }
    // H^-1 H is an identity warp
    Mat3 hinv = h.inverse();
    Vec2 probe{37.3, 91.2};
    Vec2 roundtrip = apply_homography(hinv, apply_homography(h, probe));
    CHECK(std::fabs(roundtrip.x - probe.x) < 1e-9);
    CHECK(std::fabs(roundtrip.y - probe.y) < 1e-9);
  }
}

TEST_CASE("rectification requires a baseline") {
  CalibrationPair c = coincident_calib();
  CHECK_THROWS_AS(rectification_homography(c), Error);
}

TEST_CASE("camera epipole is collinear with epipolar point pairs") {
  CalibrationPair c = test_calib();
  Vec2 e_c = project_pinhole(c.projector_center(), c.cam);
  Vec3 o_p = c.projector_center();
  Rng rng(53);
  for (int i = 0; i < 50; ++i) {
    Vec3 dir = normalized(Vec3{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0});
    Vec2 a = project_pinhole(o_p + dir * 2.5, c.cam);
    Vec2 b = project_pinhole(o_p + dir * 4.0, c.cam);
    // area of the triangle (e_c, a, b) vanishes when collinear
    const double area =
        (a.x - e_c.x) * (b.y - e_c.y) - (b.x - e_c.x) * (a.y - e_c.y);
    const double scale = std::hypot(a.x - e_c.x, a.y - e_c.y) * std::hypot(b.x - e_c.x, b.y - e_c.y);
    CHECK(std::fabs(area) / std::max(scale, 1.0) < 1e-9);
  }
}

TEST_CASE("round trip: project, triangulate reproduces depth") {
  CalibrationPair c = test_calib();
  Rng rng(67);
  for (int i = 0; i < 100; ++i) {
    Vec2 px{rng.uniform(10, 150), rng.uniform(10, 110)};
    double d = rng.uniform(2.2, 4.8);
    Vec3 p = backproject(px, d, c.cam);
    ProjectorPoint pp = project_to_projector(p, c);
    Vec3 rec = triangulate(px, pp.pixel, c);
    CHECK(std::fabs(rec.z - d) < 1e-6);
  }
}

TEST_CASE("calibration JSON round trip") {
  CalibrationPair c = test_calib();
  std::string text = c.to_json();
  CalibrationPair back = CalibrationPair::from_json(text);
  CHECK(back.cam.fx == doctest::Approx(c.cam.fx));
  CHECK(back.prj.cy == doctest::Approx(c.prj.cy));
  for (int i = 0; i < 9; ++i)
    CHECK(back.ext.R.m[static_cast<size_t>(i)] ==
          doctest::Approx(c.ext.R.m[static_cast<size_t>(i)]).epsilon(1e-12));
  CHECK(back.cam_size.h == c.cam_size.h);
  CHECK(back.prj_size.w == c.prj_size.w);
  CHECK_THROWS_AS(CalibrationPair::from_json("{not json"), Error);
  CHECK_THROWS_AS(CalibrationPair::from_json("{\"K_c\": [1,2,3]}"), Error);
}

TEST_CASE("extrinsics validation rejects non-rotations") {
  Extrinsics e;
  e.R(0, 0) = 2.0;
  CHECK_THROWS_AS(e.validate(), Error);
  Mat3 flip;  // det = -1
  flip(0, 0) = -1;
  Extrinsics e2;
  e2.R = flip;
  CHECK_THROWS_AS(e2.validate(), Error);
}
