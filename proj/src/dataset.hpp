#pragma once

#include <filesystem>
#include <vector>

#include "attributes.hpp"
#include "geometry.hpp"
#include "tensor.hpp"

namespace dpc {

struct GroundTruth {
  bool present = false;
  Tensor<float> depth;    // [h,w,1] normalized by |t|
  Tensor<float> normals;  // [h,w,3]
  Tensor<float> mask;     // [h,w,1] lit = visible and inside the projector FOV
};

struct Dataset {
  CalibrationPair calib;
  std::vector<Tensor<float>> prj_train, cam_train;
  std::vector<Tensor<float>> prj_test, cam_test;
  SurfacePrior prior;
  GroundTruth gt;

  int train_count() const { return static_cast<int>(prj_train.size()); }
  void validate() const;
};

// Loads the on-disk layout written by the simulator (or a real capture rig
// following the same layout). Test pairs and ground truth are optional.
Dataset load_dataset(const std::filesystem::path& root, bool load_test = true);

}  // namespace dpc
