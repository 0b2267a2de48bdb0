#pragma once

#include <filesystem>

#include "attributes.hpp"
#include "geometry.hpp"
#include "shading_net.hpp"

namespace dpc {

// A trained DeProCams model: the learned depth map, the shading network, the
// calibration it was trained with, and the surface prior captures it needs at
// inference time.
struct Model {
  CalibrationPair calib;
  DepthField depth;
  ShadingNetParams net;
  SurfacePrior prior;

  void validate() const;
};

// Binary checkpoint; bit-exact round trip.
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace dpc
