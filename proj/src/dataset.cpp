#include "dataset.hpp"

#include "image_io.hpp"
#include "simulator.hpp"

namespace dpc {

namespace fs = std::filesystem;

void Dataset::validate() const {
  calib.validate();
  require(!prj_train.empty(), ErrorKind::config, "dataset: no training pairs");
  require(prj_train.size() == cam_train.size(), ErrorKind::config,
          "dataset: training pair count mismatch");
  require(prj_test.size() == cam_test.size(), ErrorKind::config,
          "dataset: test pair count mismatch");
  const Shape cam_shape{calib.cam_size.h, calib.cam_size.w, 3};
  const Shape prj_shape{calib.prj_size.h, calib.prj_size.w, 3};
  for (const auto& t : prj_train)
    require(t.shape == prj_shape, ErrorKind::shape, "dataset: projector image size mismatch");
  for (const auto& t : cam_train)
    require(t.shape == cam_shape, ErrorKind::shape, "dataset: camera image size mismatch");
  require(prior.s.shape == cam_shape, ErrorKind::shape, "dataset: surface image size mismatch");
  require(prior.s_star.shape == Shape{calib.cam_size.h, calib.cam_size.w, 1}, ErrorKind::shape,
          "dataset: FOV mask size mismatch");
}

namespace {

Tensor<float> read_mask_png(const fs::path& p) {
  Tensor<float> m = read_png(p);
  if (m.shape[2] == 3) m = rgb_to_gray(m);
  for (float& x : m.v) x = x > 0.5f ? 1.0f : 0.0f;
  return m;
}

}  // namespace

Dataset load_dataset(const fs::path& root, bool load_test) {
  require(fs::exists(root), ErrorKind::io, "dataset directory not found: " + root.string());
  DatasetPaths paths{root};
  Dataset ds;
  ds.calib = CalibrationPair::from_json(read_text_file(paths.calib_json()));

  for (int i = 0;; ++i) {
    const fs::path pp = paths.prj_train(i), cp = paths.cam_train(i);
    if (!fs::exists(pp)) break;
    require(fs::exists(cp), ErrorKind::io, "dataset: missing capture " + cp.string());
    ds.prj_train.push_back(read_png(pp));
    ds.cam_train.push_back(read_png(cp));
  }
  if (load_test) {
    for (int i = 0;; ++i) {
      const fs::path pp = paths.prj_test(i), cp = paths.cam_test(i);
      if (!fs::exists(pp) || !fs::exists(cp)) break;
      ds.prj_test.push_back(read_png(pp));
      ds.cam_test.push_back(read_png(cp));
    }
  }

  Tensor<float> s = read_png(paths.surface());
  Tensor<float> s_star = read_mask_png(paths.mask());
  ds.prior = make_surface_prior(std::move(s), std::move(s_star));

  if (fs::exists(paths.gt_depth())) {
    ds.gt.present = true;
    ds.gt.depth = read_pfm(paths.gt_depth());
    if (fs::exists(paths.gt_normal())) ds.gt.normals = read_pfm(paths.gt_normal());
    if (fs::exists(paths.gt_mask())) ds.gt.mask = read_mask_png(paths.gt_mask());
  }
  ds.validate();
  return ds;
}

}  // namespace dpc
