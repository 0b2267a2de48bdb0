#pragma once

#include <array>
#include <cmath>
#include <string>

#include "error.hpp"

namespace dpc {

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  require(n > 0, ErrorKind::geometry, "cannot normalize zero vector");
  return a * (1.0 / n);
}

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double& operator()(int r, int c) { return m[static_cast<size_t>(r * 3 + c)]; }
  double operator()(int r, int c) const { return m[static_cast<size_t>(r * 3 + c)]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  Mat3 inverse() const {
    double d = det();
    require(std::fabs(d) > 1e-300, ErrorKind::geometry, "singular 3x3 matrix");
    Mat3 r;
    r(0, 0) = (m[4] * m[8] - m[5] * m[7]) / d;
    r(0, 1) = (m[2] * m[7] - m[1] * m[8]) / d;
    r(0, 2) = (m[1] * m[5] - m[2] * m[4]) / d;
    r(1, 0) = (m[5] * m[6] - m[3] * m[8]) / d;
    r(1, 1) = (m[0] * m[8] - m[2] * m[6]) / d;
    r(1, 2) = (m[2] * m[3] - m[0] * m[5]) / d;
    r(2, 0) = (m[3] * m[7] - m[4] * m[6]) / d;
    r(2, 1) = (m[1] * m[6] - m[0] * m[7]) / d;
    r(2, 2) = (m[0] * m[4] - m[1] * m[3]) / d;
    return r;
  }
};

// Pinhole intrinsics; pixel coordinates are zero-indexed with integer values
// at pixel centers.
struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;

  Mat3 matrix() const {
    Mat3 k;
    k(0, 0) = fx;
    k(0, 2) = cx;
    k(1, 1) = fy;
    k(1, 2) = cy;
    k(2, 2) = 1;
    return k;
  }
  void validate() const {
    require(fx > 0 && fy > 0, ErrorKind::geometry, "intrinsics: focal lengths must be positive");
  }
};

// World-to-device rigid transform [R|t]; the camera frame is the world frame.
struct Extrinsics {
  Mat3 R;
  Vec3 t;

  void validate() const;
  Vec3 device_center() const { return -(R.transposed() * t); }  // o_p for the projector
};

struct Size2i {
  int h = 0, w = 0;
};

struct CalibrationPair {
  Intrinsics cam;
  Intrinsics prj;
  Extrinsics ext;
  Size2i cam_size;
  Size2i prj_size;

  void validate() const;
  Vec3 projector_center() const { return ext.device_center(); }
  double baseline_norm() const { return norm(ext.t); }

  // Copy with t scaled to unit norm; the learned depth lives in these units.
  CalibrationPair normalized() const {
    double n = baseline_norm();
    require(n > 0, ErrorKind::geometry, "calibration: zero baseline cannot be normalized");
    CalibrationPair c = *this;
    c.ext.t = ext.t * (1.0 / n);
    return c;
  }

  std::string to_json() const;
  static CalibrationPair from_json(const std::string& text);
};

// x_s = K^-1 [x, y, 1]^T * d   (depth is the camera-space z coordinate)
Vec3 backproject(const Vec2& pixel, double depth, const Intrinsics& k);

// Dehomogenized K [x, y, z]^T for a point in the device frame.
Vec2 project_pinhole(const Vec3& p, const Intrinsics& k);

struct ProjectorPoint {
  Vec2 pixel;   // x_p
  double depth; // z in the projector frame
};

// x_p = dehomog(K_p [R|t] x_s); throws behind-projector for depth <= 0.
ProjectorPoint project_to_projector(const Vec3& x_s, const CalibrationPair& calib);

// Midpoint of the shortest segment between the camera and projector rays.
// try_triangulate returns false for (near-)parallel rays instead of throwing.
bool try_triangulate(const Vec2& x_c, const Vec2& x_p, const CalibrationPair& calib, Vec3* out);
Vec3 triangulate(const Vec2& x_c, const Vec2& x_p, const CalibrationPair& calib);

// Homography making camera-image epipolar lines horizontal (calibrated
// method: rotate the camera so its x axis aligns with the baseline).
Mat3 rectification_homography(const CalibrationPair& calib);

// Rectification with the output canvas sized to cover the warped image and
// the translation folded into H.
struct Rectification {
  Mat3 H;      // camera pixel -> rectified canvas pixel
  Mat3 H_inv;  // rectified canvas pixel -> camera pixel
  Size2i canvas;
};

Rectification make_rectification(const CalibrationPair& calib);

inline Vec2 apply_homography(const Mat3& h, const Vec2& p) {
  Vec3 q = h * Vec3{p.x, p.y, 1.0};
  require(std::fabs(q.z) > 1e-300, ErrorKind::geometry, "homography maps point to infinity");
  return {q.x / q.z, q.y / q.z};
}

}  // namespace dpc
