#pragma once

#include <array>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "model.hpp"

namespace dpc {

enum class Ablation { full, no_mask, no_rough, no_const };

Ablation parse_ablation(const std::string& name);
const char* ablation_name(Ablation a);

struct TrainConfig {
  double lr_depth = 1e-2;
  double lr_net = 1e-3;
  int iterations = 1000;
  int batch_size = 24;  // auto-reduced to the dataset size
  uint64_t seed = 0;
  double w_recon = 1.0;
  double w_mask = 1.0;
  double w_rough = 1.0;
  double w_smooth_depth = 2.0;
  double w_smooth_grid = 1.0;
  double w_smooth_normal = 0.01;
  Ablation ablation = Ablation::full;
  std::string loss_log;  // CSV path, optional

  void validate() const;
  // Unknown keys are rejected.
  static TrainConfig from_json(const std::string& text);
  std::string to_json() const;
};

struct LossRow {
  int iter;
  double recon, mask, rough, smooth, total;
};

struct TrainResult {
  Model model;
  std::vector<LossRow> log;
};

// Depth initialization from the projector FOV mask: assume an affine warp
// from the mask's bounding rectangle to the projector image, triangulate each
// pixel's correspondence, fall back to the median where degenerate.
DepthField init_depth(const Tensor<float>& s_star, const CalibrationPair& calib);

// Joint Adam optimization of {depth map, ShadingNet} under
// recon + mask + rough + smoothness losses.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRow>& rows);

}  // namespace dpc
