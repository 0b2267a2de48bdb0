#include "tasks.hpp"

#include <algorithm>
#include <cmath>

#include "adam.hpp"
#include "json.hpp"
#include "losses.hpp"
#include "metrics.hpp"

namespace dpc {

namespace {

// Forward-only evaluation of the shading network given attribute values.
Tensor<float> net_forward_values(const ShadingNetParams& net, const Tensor<float>& sk1_out,
                                 const Tensor<float>& s, const Tensor<float>& s_gray,
                                 const Tensor<float>& omega, const Tensor<float>& mask,
                                 const Tensor<float>& ndl, const Tensor<float>& rdv,
                                 const Tensor<float>& pattern) {
  Tape<float> t;
  auto nv = net_leaves(t, net, false);
  auto ip = t.constant(pattern);
  auto warped = ops::grid_sample(t, ip, t.constant(omega));
  auto ipp = ops::mul(t, warped, ops::repeat_c(t, t.constant(mask), 3));
  auto sc = t.constant(s);
  auto i_diff = ops::mul(t, ops::mul(t, ipp, sc), ops::repeat_c(t, t.constant(ndl), 3));
  auto i_spec = ops::mul(t, ops::mul(t, ipp, ops::repeat_c(t, t.constant(s_gray), 3)),
                         ops::repeat_c(t, t.constant(rdv), 3));
  auto pred = shading_forward(t, nv, ipp, sc, i_diff, i_spec, t.constant(sk1_out));
  return t.val(pred);
}

float percentile(std::vector<float> xs, double p) {
  require(!xs.empty(), ErrorKind::task, "percentile of empty set");
  size_t k = static_cast<size_t>(p * (static_cast<double>(xs.size()) - 1) + 0.5);
  k = std::min(k, xs.size() - 1);
  std::nth_element(xs.begin(), xs.begin() + static_cast<long>(k), xs.end());
  return xs[k];
}

}  // namespace

ModelRuntime make_runtime(const Model& model) {
  model.validate();
  ModelRuntime rt;
  rt.calib = model.calib;
  rt.net = model.net;
  rt.s = model.prior.s;
  rt.s_gray = model.prior.s_gray;
  rt.s_star = model.prior.s_star;
  rt.inv_d = model.depth.inv_d;
  rt.consts = make_attribute_constants<float>(model.calib.normalized());

  Tape<float> t;
  auto inv_d = t.leaf(model.depth.inv_d, false);
  AttributeVars<float> attrs = compute_attributes(t, inv_d, rt.consts);
  rt.omega = t.val(attrs.omega);
  rt.mask = t.val(attrs.mask);
  rt.n_dot_l = t.val(attrs.n_dot_l);
  rt.r_dot_v = t.val(attrs.r_dot_v);
  rt.normal = t.val(attrs.normal);

  Tape<float> ts;
  auto nv = net_leaves(ts, model.net, false);
  rt.sk1_out = ts.val(surface_skip_forward(ts, nv, ts.constant(model.prior.s)));
  return rt;
}

Tensor<float> relight(const ModelRuntime& rt, const Tensor<float>& pattern) {
  require(pattern.shape == Shape{rt.calib.prj_size.h, rt.calib.prj_size.w, 3}, ErrorKind::shape,
          "relight: pattern must be " + std::to_string(rt.calib.prj_size.h) + "x" +
              std::to_string(rt.calib.prj_size.w) + "x3, got " + shape_str(pattern.shape));
  return net_forward_values(rt.net, rt.sk1_out, rt.s, rt.s_gray, rt.omega, rt.mask, rt.n_dot_l,
                            rt.r_dot_v, pattern);
}

RectRegion largest_inscribed_rect(const Tensor<float>& mask) {
  require(mask.shape.size() == 3 && mask.shape[2] == 1, ErrorKind::shape,
          "largest_inscribed_rect: expected [h,w,1]");
  const int h = mask.shape[0], w = mask.shape[1];
  std::vector<int> height(static_cast<size_t>(w), 0);
  RectRegion best;
  long best_area = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      height[static_cast<size_t>(x)] = mask.at(y, x, 0) > 0.5f ? height[static_cast<size_t>(x)] + 1 : 0;
    // largest rectangle in histogram via a monotonic stack
    std::vector<int> stack;
    for (int x = 0; x <= w; ++x) {
      const int cur = x < w ? height[static_cast<size_t>(x)] : 0;
      int start = x;
      while (!stack.empty() && height[static_cast<size_t>(stack.back())] >= cur) {
        const int idx = stack.back();
        stack.pop_back();
        const int hh = height[static_cast<size_t>(idx)];
        const int left = stack.empty() ? 0 : stack.back() + 1;
        const long area = static_cast<long>(hh) * (x - left);
        if (area > best_area) {
          best_area = area;
          best = RectRegion{left, y - hh + 1, x - 1, y};
        }
        start = left;
      }
      (void)start;
      if (x < w) stack.push_back(x);
    }
  }
  return best;
}

DesiredImage desired_camera_image(const ModelRuntime& rt, const Tensor<float>& target) {
  require(target.shape == Shape{rt.calib.prj_size.h, rt.calib.prj_size.w, 3}, ErrorKind::shape,
          "desired_camera_image: target must match the projector size");
  const int h = rt.calib.cam_size.h, w = rt.calib.cam_size.w;

  Tensor<float> region({h, w, 1});
  for (int64_t i = 0; i < region.size(); ++i)
    region.v[i] = (std::lround(rt.mask.v[i]) >= 1 && rt.s_star.v[i] > 0.5f) ? 1.0f : 0.0f;
  RectRegion rect = largest_inscribed_rect(region);
  require(!rect.empty(), ErrorKind::task, "desired_camera_image: empty displayable region");

  // warp the target through the learned grid (plain forward resampling)
  Tape<float> t;
  auto warped = ops::grid_sample(t, t.constant(target), t.constant(rt.omega));
  const Tensor<float>& wv = t.val(warped);

  std::vector<float> grays;
  grays.reserve(static_cast<size_t>((rect.x1 - rect.x0 + 1) * (rect.y1 - rect.y0 + 1)));
  for (int y = rect.y0; y <= rect.y1; ++y)
    for (int x = rect.x0; x <= rect.x1; ++x) grays.push_back(rt.s_gray.at(y, x, 0));
  DesiredImage out;
  out.gain = std::min(1.0, static_cast<double>(percentile(std::move(grays), 0.95)));
  out.region = rect;
  out.image = Tensor<float>({h, w, 3});
  for (int y = rect.y0; y <= rect.y1; ++y)
    for (int x = rect.x0; x <= rect.x1; ++x)
      for (int k = 0; k < 3; ++k)
        out.image.at(y, x, k) = static_cast<float>(out.gain) * wv.at(y, x, k);
  return out;
}

void CompensationConfig::validate() const {
  require(lr > 0, ErrorKind::config, "compensation: lr must be positive");
  require(iterations >= 1, ErrorKind::config, "compensation: need at least one iteration");
  require(saturation_weight >= 0 && w_smooth >= 0, ErrorKind::config,
          "compensation: weights must be non-negative");
}

CompensationConfig CompensationConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorKind::parse, std::string("compensation config: invalid JSON: ") + e.what());
  }
  CompensationConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "lr") cfg.lr = value.get<double>();
    else if (key == "iterations") cfg.iterations = value.get<int>();
    else if (key == "saturation_weight") cfg.saturation_weight = value.get<double>();
    else if (key == "w_smooth") cfg.w_smooth = value.get<double>();
    else fail(ErrorKind::config, "compensation config: unknown key \"" + key + "\"");
  }
  cfg.validate();
  return cfg;
}

namespace {

// Nearest-grid inverse of the warp: splat desired camera pixels onto their
// rounded projector coordinates, average collisions, fill holes by diffusion.
Tensor<float> init_compensation_image(const ModelRuntime& rt, const DesiredImage& desired) {
  const int ph = rt.calib.prj_size.h, pw = rt.calib.prj_size.w;
  const int h = rt.calib.cam_size.h, w = rt.calib.cam_size.w;
  Tensor<float> acc({ph, pw, 3});
  Tensor<float> cnt({ph, pw, 1});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!desired.region.contains(x, y)) continue;
      const int px = static_cast<int>(std::lround(rt.omega.at(y, x, 0)));
      const int py = static_cast<int>(std::lround(rt.omega.at(y, x, 1)));
      if (px < 0 || px >= pw || py < 0 || py >= ph) continue;
      for (int k = 0; k < 3; ++k) acc.at(py, px, k) += desired.image.at(y, x, k);
      cnt.at(py, px, 0) += 1.0f;
    }
  Tensor<float> img({ph, pw, 3}, 0.5f);
  Tensor<float> known({ph, pw, 1});
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x)
      if (cnt.at(y, x, 0) > 0) {
        known.at(y, x, 0) = 1.0f;
        for (int k = 0; k < 3; ++k) img.at(y, x, k) = acc.at(y, x, k) / cnt.at(y, x, 0);
      }
  // a few dilation passes close the splat holes
  for (int pass = 0; pass < 4; ++pass) {
    Tensor<float> img2 = img;
    Tensor<float> known2 = known;
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        if (known.at(y, x, 0) > 0) continue;
        float sum[3] = {0, 0, 0};
        int m = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= ph || xx < 0 || xx >= pw || known.at(yy, xx, 0) == 0) continue;
            for (int k = 0; k < 3; ++k) sum[k] += img.at(yy, xx, k);
            ++m;
          }
        if (m > 0) {
          for (int k = 0; k < 3; ++k) img2.at(y, x, k) = sum[k] / static_cast<float>(m);
          known2.at(y, x, 0) = 1.0f;
        }
      }
    img = std::move(img2);
    known = std::move(known2);
  }
  return img;
}

}  // namespace

CompensationResult compensate(const ModelRuntime& rt, const Tensor<float>& target,
                              const CompensationConfig& cfg) {
  cfg.validate();
  CompensationResult result;
  result.desired = desired_camera_image(rt, target);

  Tensor<float> image = init_compensation_image(rt, result.desired);
  AdamState<float> state;
  AdamConfig<float> opt;
  opt.lr = cfg.lr;

  Tensor<float> uniform_w({rt.calib.prj_size.h, rt.calib.prj_size.w, 1}, 1.0f);
  int rising = 0;
  double prev = 0;
  Tape<float> t;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    t.clear();
    auto ip = t.leaf(image, true);
    auto nv = net_leaves(t, rt.net, false);
    auto warped = ops::grid_sample(t, ip, t.constant(rt.omega));
    auto ipp = ops::mul(t, warped, ops::repeat_c(t, t.constant(rt.mask), 3));
    auto sc = t.constant(rt.s);
    auto i_diff = ops::mul(t, ops::mul(t, ipp, sc), ops::repeat_c(t, t.constant(rt.n_dot_l), 3));
    auto i_spec = ops::mul(t, ops::mul(t, ipp, ops::repeat_c(t, t.constant(rt.s_gray), 3)),
                           ops::repeat_c(t, t.constant(rt.r_dot_v), 3));
    auto pred = shading_forward(t, nv, ipp, sc, i_diff, i_spec, t.constant(rt.sk1_out));
    auto recon = loss_recon(t, pred, t.constant(result.desired.image));
    auto wc = t.constant(uniform_w);
    auto smooth = ops::mul_s(t, loss_smooth(t, ip, wc, wc), cfg.w_smooth);
    auto over = ops::reduce_l2sq(t, ops::relu(t, ops::sub_s(t, ip, 1.0)));
    auto under = ops::reduce_l2sq(t, ops::relu(t, ops::neg(t, ip)));
    auto sat = ops::mul_s(t, ops::add(t, over, under), cfg.saturation_weight);
    auto total = ops::add(t, ops::add(t, recon, smooth), sat);

    const double loss = static_cast<double>(t.val(total).v[0]);
    require(std::isfinite(loss), ErrorKind::numeric, "compensation: non-finite loss");
    if (iter > 0 && loss > prev) {
      if (++rising >= 50)
        fail(ErrorKind::numeric,
             "compensation: diverging (50 consecutive loss increases at iteration " +
                 std::to_string(iter) + ")");
    } else {
      rising = 0;
    }
    prev = loss;
    result.loss.push_back(loss);

    t.backward(total);
    adam_step(image, t.grad(ip), state, opt);
  }
  for (float& x : image.v) x = std::clamp(x, 0.0f, 1.0f);
  result.image = std::move(image);
  return result;
}

Tensor<float> points_from_depth_raster(const Tensor<float>& depth, const CalibrationPair& calib) {
  require(depth.shape == Shape{calib.cam_size.h, calib.cam_size.w, 1}, ErrorKind::shape,
          "points_from_depth_raster: depth size mismatch");
  const int h = depth.shape[0], w = depth.shape[1];
  Tensor<float> pts({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double z = depth.at(y, x, 0);
      pts.at(y, x, 0) = static_cast<float>((x - calib.cam.cx) / calib.cam.fx * z);
      pts.at(y, x, 1) = static_cast<float>((y - calib.cam.cy) / calib.cam.fy * z);
      pts.at(y, x, 2) = static_cast<float>(z);
    }
  return pts;
}

Reconstruction export_reconstruction(const ModelRuntime& rt, double t_norm) {
  require(t_norm > 0, ErrorKind::config, "export: t_norm must be positive");
  const int h = rt.calib.cam_size.h, w = rt.calib.cam_size.w;
  Reconstruction rec;
  rec.depth = Tensor<float>({h, w, 1});
  for (int64_t i = 0; i < rec.depth.size(); ++i)
    rec.depth.v[i] = static_cast<float>(t_norm / rt.inv_d.v[i]);
  rec.normals = rt.normal;
  Tensor<float> pts = points_from_depth_raster(rec.depth, rt.calib);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (rt.s_star.at(y, x, 0) <= 0.5f) continue;
      rec.cloud.vertices.push_back({pts.at(y, x, 0), pts.at(y, x, 1), pts.at(y, x, 2),
                                    rt.normal.at(y, x, 0), rt.normal.at(y, x, 1),
                                    rt.normal.at(y, x, 2)});
    }
  return rec;
}

EvalSummary evaluate(const ModelRuntime& rt, const Dataset& ds) {
  require(!ds.prj_test.empty(), ErrorKind::config, "evaluate: dataset has no test pairs");
  EvalSummary summary;
  const Tensor<float>& mask = ds.gt.present && !ds.gt.mask.empty() ? ds.gt.mask : ds.prior.s_star;
  double acc[6] = {0, 0, 0, 0, 0, 0};
  for (size_t i = 0; i < ds.prj_test.size(); ++i) {
    Tensor<float> pred = relight(rt, ds.prj_test[i]);
    const Tensor<float>& ref = ds.cam_test[i];
    EvalRow row;
    row.index = static_cast<int>(i);
    row.psnr = metric_psnr(pred, ref);
    row.rmse = metric_rmse(pred, ref);
    row.ssim = metric_ssim(pred, ref);
    row.psnr_masked = metric_psnr_masked(pred, ref, mask);
    row.rmse_masked = metric_rmse_masked(pred, ref, mask);
    row.ssim_masked = metric_ssim_masked(pred, ref, mask);
    acc[0] += row.psnr;
    acc[1] += row.rmse;
    acc[2] += row.ssim;
    acc[3] += row.psnr_masked;
    acc[4] += row.rmse_masked;
    acc[5] += row.ssim_masked;
    summary.rows.push_back(row);
  }
  const double n = static_cast<double>(summary.rows.size());
  summary.mean = EvalRow{-1, acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n, acc[4] / n,
                         acc[5] / n};
  if (ds.gt.present && !ds.gt.mask.empty()) {
    Tensor<float> depth_norm({rt.calib.cam_size.h, rt.calib.cam_size.w, 1});
    for (int64_t i = 0; i < depth_norm.size(); ++i) depth_norm.v[i] = 1.0f / rt.inv_d.v[i];
    Tensor<float> pts = points_from_depth_raster(depth_norm, rt.calib);
    Tensor<float> pts_gt = points_from_depth_raster(ds.gt.depth, rt.calib);
    summary.d_err = metric_d_err(pts, pts_gt, ds.gt.mask);
  }
  return summary;
}

void write_eval_csv(const std::filesystem::path& path, const EvalSummary& summary) {
  atomic_write(path, [&](std::ostream& os) {
    os << "index,psnr,rmse,ssim,psnr_masked,rmse_masked,ssim_masked\n";
    char buf[200];
    auto put = [&](const EvalRow& r, const char* tag) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", tag, r.psnr, r.rmse,
                    r.ssim, r.psnr_masked, r.rmse_masked, r.ssim_masked);
      os << buf;
    };
    for (const EvalRow& r : summary.rows) {
      std::snprintf(buf, sizeof(buf), "%d", r.index);
      put(r, buf);
    }
    put(summary.mean, "mean");
    if (summary.d_err) {
      std::snprintf(buf, sizeof(buf), "d_err,%.6f\n", *summary.d_err);
      os << buf;
    } else {
      os << "d_err,skipped (no ground truth)\n";
    }
  });
}

}  // namespace dpc
