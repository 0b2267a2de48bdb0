#include "geometry.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace dpc {

void Extrinsics::validate() const {
  Mat3 rtr = R.transposed() * R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double expect = i == j ? 1.0 : 0.0;
      require(std::fabs(rtr(i, j) - expect) < 1e-9, ErrorKind::geometry,
              "extrinsics: R is not orthonormal");
    }
  require(std::fabs(R.det() - 1.0) < 1e-9, ErrorKind::geometry, "extrinsics: det(R) != 1");
}

void CalibrationPair::validate() const {
  cam.validate();
  prj.validate();
  ext.validate();
  require(cam_size.h > 0 && cam_size.w > 0 && prj_size.h > 0 && prj_size.w > 0,
          ErrorKind::geometry, "calibration: image sizes must be positive");
}

Vec3 backproject(const Vec2& pixel, double depth, const Intrinsics& k) {
  require(std::isfinite(depth) && std::isfinite(pixel.x) && std::isfinite(pixel.y),
          ErrorKind::numeric, "backproject: non-finite input");
  require(depth > 0, ErrorKind::numeric, "backproject: depth must be positive");
  return {(pixel.x - k.cx) / k.fx * depth, (pixel.y - k.cy) / k.fy * depth, depth};
}

Vec2 project_pinhole(const Vec3& p, const Intrinsics& k) {
  require(std::fabs(p.z) > 1e-300, ErrorKind::geometry, "project: point at zero depth");
  return {k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy};
}

ProjectorPoint project_to_projector(const Vec3& x_s, const CalibrationPair& calib) {
  Vec3 p = calib.ext.R * x_s + calib.ext.t;
  require(p.z > 0, ErrorKind::geometry, "project_to_projector: point behind the projector");
  return {project_pinhole(p, calib.prj), p.z};
}

bool try_triangulate(const Vec2& x_c, const Vec2& x_p, const CalibrationPair& calib, Vec3* out) {
  // Camera ray from the origin, projector ray from o_p; both in world coords.
  Vec3 d1 = normalized(backproject(x_c, 1.0, calib.cam));
  Vec3 o2 = calib.projector_center();
  Vec3 dir_p{(x_p.x - calib.prj.cx) / calib.prj.fx, (x_p.y - calib.prj.cy) / calib.prj.fy, 1.0};
  Vec3 d2 = normalized(calib.ext.R.transposed() * dir_p);

  double c = dot(d1, d2);
  double sin2 = 1.0 - c * c;  // sin^2 of the ray angle
  if (!(sin2 > 1e-12)) return false;

  // Closest points p1 = s*d1, p2 = o2 + u*d2 from the normal equations.
  Vec3 w0 = o2;  // o2 - o1 with o1 = 0
  double s = (dot(w0, d1) - dot(w0, d2) * c) / sin2;
  double u = (dot(w0, d1) * c - dot(w0, d2)) / sin2;
  Vec3 p1 = d1 * s;
  Vec3 p2 = o2 + d2 * u;
  *out = (p1 + p2) * 0.5;
  return true;
}

Vec3 triangulate(const Vec2& x_c, const Vec2& x_p, const CalibrationPair& calib) {
  Vec3 out;
  require(try_triangulate(x_c, x_p, calib, &out), ErrorKind::geometry,
          "triangulate: rays are (near-)parallel");
  return out;
}

namespace {

// Rotation whose rows are the rectified camera axes in old camera coords:
// x along the baseline, z as close to the old optical axis as possible.
Mat3 rectifying_rotation(const CalibrationPair& calib) {
  Vec3 b = calib.projector_center();
  require(norm(b) > 0, ErrorKind::geometry, "rectification: zero baseline");
  Vec3 e1 = normalized(b);
  // Make the dominant component positive so an already-rectified pair maps to
  // the identity rather than a 180 degree flip.
  double ax = std::fabs(e1.x), ay = std::fabs(e1.y), az = std::fabs(e1.z);
  if ((ax >= ay && ax >= az && e1.x < 0) || (ay > ax && ay >= az && e1.y < 0) ||
      (az > ax && az > ay && e1.z < 0))
    e1 = -e1;
  Vec3 up{0, 0, 1};
  if (norm(cross(up, e1)) < 1e-8) up = Vec3{0, 1, 0};
  Vec3 e2 = normalized(cross(up, e1));
  Vec3 e3 = cross(e1, e2);
  Mat3 r;
  r(0, 0) = e1.x;
  r(0, 1) = e1.y;
  r(0, 2) = e1.z;
  r(1, 0) = e2.x;
  r(1, 1) = e2.y;
  r(1, 2) = e2.z;
  r(2, 0) = e3.x;
  r(2, 1) = e3.y;
  r(2, 2) = e3.z;
  return r;
}

}  // namespace

Mat3 rectification_homography(const CalibrationPair& calib) {
  Mat3 k = calib.cam.matrix();
  return k * rectifying_rotation(calib) * k.inverse();
}

Rectification make_rectification(const CalibrationPair& calib) {
  Mat3 h = rectification_homography(calib);
  const double w = calib.cam_size.w, hh = calib.cam_size.h;
  Vec2 corners[4] = {{0, 0}, {w - 1, 0}, {0, hh - 1}, {w - 1, hh - 1}};
  double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
  for (const Vec2& c : corners) {
    Vec2 p = apply_homography(h, c);
    minx = std::min(minx, p.x);
    miny = std::min(miny, p.y);
    maxx = std::max(maxx, p.x);
    maxy = std::max(maxy, p.y);
  }
  Mat3 shift;
  shift(0, 2) = -std::floor(minx);
  shift(1, 2) = -std::floor(miny);
  Rectification rect;
  rect.H = shift * h;
  rect.H_inv = rect.H.inverse();
  rect.canvas.w = static_cast<int>(std::ceil(maxx) - std::floor(minx)) + 1;
  rect.canvas.h = static_cast<int>(std::ceil(maxy) - std::floor(miny)) + 1;
  const int cap_w = 4 * calib.cam_size.w, cap_h = 4 * calib.cam_size.h;
  require(rect.canvas.w <= cap_w && rect.canvas.h <= cap_h, ErrorKind::geometry,
          "rectification: canvas blows up; calibration is close to degenerate");
  return rect;
}

namespace {

using nlohmann::json;

std::array<double, 9> mat_to_array(const Mat3& m) {
  std::array<double, 9> a{};
  std::copy(m.m.begin(), m.m.end(), a.begin());
  return a;
}

Mat3 mat_from_json(const json& j, const char* key) {
  require(j.contains(key) && j[key].is_array() && j[key].size() == 9, ErrorKind::parse,
          std::string("calibration: missing or malformed \"") + key + "\"");
  Mat3 m;
  for (int i = 0; i < 9; ++i) m.m[static_cast<size_t>(i)] = j[key][static_cast<size_t>(i)].get<double>();
  return m;
}

Intrinsics intrinsics_from_mat(const Mat3& k) {
  Intrinsics in;
  in.fx = k(0, 0);
  in.fy = k(1, 1);
  in.cx = k(0, 2);
  in.cy = k(1, 2);
  return in;
}

}  // namespace

std::string CalibrationPair::to_json() const {
  json j;
  j["K_c"] = mat_to_array(cam.matrix());
  j["K_p"] = mat_to_array(prj.matrix());
  j["R"] = mat_to_array(ext.R);
  j["t"] = std::array<double, 3>{ext.t.x, ext.t.y, ext.t.z};
  j["cam_size"] = std::array<int, 2>{cam_size.h, cam_size.w};
  j["prj_size"] = std::array<int, 2>{prj_size.h, prj_size.w};
  return j.dump(2);
}

CalibrationPair CalibrationPair::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorKind::parse, std::string("calibration: invalid JSON: ") + e.what());
  }
  CalibrationPair c;
  c.cam = intrinsics_from_mat(mat_from_json(j, "K_c"));
  c.prj = intrinsics_from_mat(mat_from_json(j, "K_p"));
  c.ext.R = mat_from_json(j, "R");
  require(j.contains("t") && j["t"].is_array() && j["t"].size() == 3, ErrorKind::parse,
          "calibration: missing or malformed \"t\"");
  c.ext.t = {j["t"][0].get<double>(), j["t"][1].get<double>(), j["t"][2].get<double>()};
  auto size_of = [&](const char* key) {
    require(j.contains(key) && j[key].is_array() && j[key].size() == 2, ErrorKind::parse,
            std::string("calibration: missing or malformed \"") + key + "\"");
    return Size2i{j[key][0].get<int>(), j[key][1].get<int>()};
  };
  c.cam_size = size_of("cam_size");
  c.prj_size = size_of("prj_size");
  c.validate();
  return c;
}

}  // namespace dpc
