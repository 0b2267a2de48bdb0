#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "dataset.hpp"
#include "image_io.hpp"
#include "model.hpp"

namespace dpc {

// Attribute values and the surface-skip activation evaluated once from the
// trained model; inference and compensation reuse them across calls.
struct ModelRuntime {
  CalibrationPair calib;
  AttributeConstants<float> consts;
  Tensor<float> s, s_gray, s_star;
  Tensor<float> omega;    // [h,w,2]
  Tensor<float> mask;     // [h,w,1]
  Tensor<float> n_dot_l;  // [h,w,1]
  Tensor<float> r_dot_v;  // [h,w,1]
  Tensor<float> normal;   // [h,w,3]
  Tensor<float> inv_d;    // [h,w,1]
  Tensor<float> sk1_out;  // [h,w,32]
  ShadingNetParams net;
};

ModelRuntime make_runtime(const Model& model);

// Single forward pass: predicted camera image for a projector input.
Tensor<float> relight(const ModelRuntime& rt, const Tensor<float>& pattern);

struct RectRegion {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
  bool empty() const { return x1 < x0 || y1 < y0; }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

// Largest axis-aligned rectangle of 1s in a binary [h,w,1] mask.
RectRegion largest_inscribed_rect(const Tensor<float>& mask);

struct DesiredImage {
  Tensor<float> image;  // [h,w,3], zero outside the region
  RectRegion region;    // displayable rectangle inside harden(M) and s*
  double gain = 1.0;
};

// Target warped into the camera view through the learned grid, restricted to
// the largest inscribed rectangle of harden(M) & s*, scaled by a displayable
// gain (95th percentile of the surface gray level inside the region, cap 1).
DesiredImage desired_camera_image(const ModelRuntime& rt, const Tensor<float>& target);

struct CompensationConfig {
  double lr = 2e-2;
  int iterations = 200;
  double saturation_weight = 10.0;
  double w_smooth = 1.0;

  void validate() const;
  static CompensationConfig from_json(const std::string& text);
};

struct CompensationResult {
  Tensor<float> image;    // optimized projector input, clamped to [0,1]
  DesiredImage desired;
  std::vector<double> loss;
};

// Gradient descent on the projector image with the model frozen.
CompensationResult compensate(const ModelRuntime& rt, const Tensor<float>& target,
                              const CompensationConfig& cfg);

struct Reconstruction {
  Tensor<float> depth;    // [h,w,1] metric depth = (1/inv_d) * t_norm
  Tensor<float> normals;  // [h,w,3]
  PointCloud cloud;       // FOV pixels, metric units
};

Reconstruction export_reconstruction(const ModelRuntime& rt, double t_norm);

// Pixel-aligned camera-space points from a normalized depth raster.
Tensor<float> points_from_depth_raster(const Tensor<float>& depth, const CalibrationPair& calib);

struct EvalRow {
  int index;
  double psnr, rmse, ssim;
  double psnr_masked, rmse_masked, ssim_masked;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  EvalRow mean{};              // index = -1
  std::optional<double> d_err; // in units of |t|; absent without ground truth
};

// Relights every test pattern and reports PSNR/RMSE/SSIM (whole image and
// mask-restricted) plus the point-cloud error when ground truth is present.
EvalSummary evaluate(const ModelRuntime& rt, const Dataset& ds);

void write_eval_csv(const std::filesystem::path& path, const EvalSummary& summary);

}  // namespace dpc
