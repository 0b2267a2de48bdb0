#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace dpc {

// Ground-truth heightfield scene in the camera view. Depths are in normalized
// units (the baseline |t| is 1 in generated calibrations).
struct SyntheticScene {
  std::string name;
  Tensor<double> depth_gt;       // [h,w,1] camera-space z, > 0
  Tensor<double> albedo;         // [h,w,3]
  Tensor<double> spec_strength;  // [h,w,1]
  std::array<double, 3> ambient{0.10, 0.09, 0.11};
  double gamma = 1.8;      // camera response exponent, in [1, 2.4]
  double noise_std = 0.01; // additive Gaussian, in [0, 0.05]

  void validate() const;
};

std::vector<std::string> builtin_scene_names();

// Desk-scale default: camera 120x160, projector 150x200, |t| = 1.
CalibrationPair default_calibration(int cam_h = 120, int cam_w = 160, int prj_h = 150,
                                    int prj_w = 200);

SyntheticScene make_scene(const std::string& name, const CalibrationPair& calib);

// Per-scene cache of geometry/shading terms shared by renders.
struct SimContext {
  CalibrationPair calib;
  SyntheticScene scene;
  Tensor<double> points;   // [h,w,3]
  Tensor<double> normals;  // [h,w,3] unit, camera-facing
  Tensor<double> n_dot_l;  // [h,w,1] clamped at 0
  Tensor<double> r_dot_v;  // [h,w,1] clamped at 0
  Tensor<double> omega;    // [h,w,2] projector pixel coords
  Tensor<double> d_p;      // [h,w,1] projector-view depth
  Tensor<float> visible;   // [h,w,1] ray-cast visibility (binary)
  Tensor<float> fov;       // [h,w,1] inside projector image bounds (binary)
  Tensor<float> lit;       // [h,w,1] visible AND in FOV (binary)
};

SimContext make_sim_context(const SyntheticScene& scene, const CalibrationPair& calib);

// Brute-force shadow ray march against the supersampled heightfield;
// 1 = the segment from the surface point to the projector is unobstructed.
Tensor<float> raycast_visibility(const SyntheticScene& scene, const CalibrationPair& calib);

// Forward capture model:
//   direct = warp(I_p) * V
//   I_c = clamp((ambient + albedo*direct*(n.l) + spec*direct*(r.v))^(1/gamma) + noise, 0, 1)
// noise_rng may be null for a noise-free render.
Tensor<double> render_capture(const SimContext& ctx, const Tensor<float>& i_p, Rng* noise_rng);

// Seeded sampling pattern (multi-scale colored noise, occasional gradient sweep).
Tensor<float> make_pattern(int h, int w, Rng& rng, bool gradient_sweep);

struct DatasetPaths {
  std::filesystem::path root;
  std::filesystem::path calib_json() const { return root / "calib/params.json"; }
  std::filesystem::path prj_train(int i) const;
  std::filesystem::path cam_train(int i) const;
  std::filesystem::path prj_test(int i) const;
  std::filesystem::path cam_test(int i) const;
  std::filesystem::path surface() const { return root / "cam/ref/s.png"; }
  std::filesystem::path dark() const { return root / "cam/ref/dark.png"; }
  std::filesystem::path mask() const { return root / "cam/ref/mask.png"; }
  std::filesystem::path gt_depth() const { return root / "gt/depth.pfm"; }
  std::filesystem::path gt_normal() const { return root / "gt/normal.pfm"; }
  std::filesystem::path gt_mask() const { return root / "gt/mask.png"; }
};

// Writes the full on-disk dataset layout for a scene: calibration, N training
// and n_test test pairs, the white/dark reference captures, the thresholded
// FOV mask and the ground-truth bundle.
void generate_dataset(const SyntheticScene& scene, const CalibrationPair& calib, int n_train,
                      int n_test, uint64_t seed, const std::filesystem::path& out_dir);

// mean-channel(white - dark) > 0.05
Tensor<float> threshold_fov_mask(const Tensor<float>& white, const Tensor<float>& dark);

}  // namespace dpc
