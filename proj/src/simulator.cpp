#include "simulator.hpp"

#include <algorithm>
#include <cmath>

#include "image_io.hpp"
#include "parallel.hpp"

namespace dpc {

namespace fs = std::filesystem;

void SyntheticScene::validate() const {
  require(depth_gt.shape.size() == 3 && depth_gt.shape[2] == 1, ErrorKind::shape,
          "scene: depth must be [h,w,1]");
  for (double d : depth_gt.v)
    require(d > 0, ErrorKind::geometry, "scene: depth must be positive everywhere");
  require(gamma >= 1.0 && gamma <= 2.4, ErrorKind::config, "scene: gamma must be in [1, 2.4]");
  require(noise_std >= 0.0 && noise_std <= 0.05, ErrorKind::config,
          "scene: noise_std must be in [0, 0.05]");
  require(albedo.shape == Shape{depth_gt.shape[0], depth_gt.shape[1], 3}, ErrorKind::shape,
          "scene: albedo size mismatch");
  require(spec_strength.shape == depth_gt.shape, ErrorKind::shape,
          "scene: specular map size mismatch");
}

std::vector<std::string> builtin_scene_names() {
  return {"plane", "slant30", "step", "sphere", "waves"};
}

CalibrationPair default_calibration(int cam_h, int cam_w, int prj_h, int prj_w) {
  CalibrationPair c;
  c.cam_size = {cam_h, cam_w};
  c.prj_size = {prj_h, prj_w};
  c.cam.fx = c.cam.fy = 0.875 * cam_w;  // ~59 deg horizontal FOV at 160 px
  c.cam.cx = (cam_w - 1) / 2.0;
  c.cam.cy = (cam_h - 1) / 2.0;
  c.prj.fx = c.prj.fy = 1.3 * prj_w;  // narrower throw than the camera FOV
  c.prj.cx = (prj_w - 1) / 2.0;
  c.prj.cy = (prj_h - 1) / 2.0;

  // Projector one baseline unit away, slightly elevated, aimed at the scene.
  Vec3 o_p = normalized(Vec3{0.966, 0.259, 0.0});
  Vec3 target{0.0, 0.0, 3.3};
  Vec3 zp = normalized(target - o_p);
  Vec3 up{0.0, 1.0, 0.0};
  Vec3 xp = normalized(cross(up, zp));
  Vec3 yp = cross(zp, xp);
  Mat3 r;  // world-to-projector rotation: rows are the projector axes
  r(0, 0) = xp.x; r(0, 1) = xp.y; r(0, 2) = xp.z;
  r(1, 0) = yp.x; r(1, 1) = yp.y; r(1, 2) = yp.z;
  r(2, 0) = zp.x; r(2, 1) = zp.y; r(2, 2) = zp.z;
  c.ext.R = r;
  c.ext.t = -(r * o_p);
  c.validate();
  return c;
}

namespace {

// Deterministic colorful texture used for scene albedos.
Tensor<double> make_albedo(int h, int w) {
  Tensor<double> a({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
      double checker = ((x / 14 + y / 14) % 2 == 0) ? 0.10 : -0.10;
      a.at(y, x, 0) = 0.55 + 0.28 * std::sin(6.2832 * (2.1 * u + 0.3)) * std::sin(6.2832 * (1.3 * v)) + checker;
      a.at(y, x, 1) = 0.52 + 0.30 * std::sin(6.2832 * (1.2 * u + 0.8 * v + 0.1)) + checker * 0.6;
      a.at(y, x, 2) = 0.50 + 0.26 * std::cos(6.2832 * (1.7 * v + 0.5 * u)) - checker * 0.4;
      for (int k = 0; k < 3; ++k) a.at(y, x, k) = std::clamp(a.at(y, x, k), 0.15, 0.95);
    }
  return a;
}

Tensor<double> make_spec_map(int h, int w) {
  Tensor<double> s({h, w, 1});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double u = static_cast<double>(x) / w - 0.35, v = static_cast<double>(y) / h - 0.55;
      s.at(y, x, 0) = 0.12 + 0.25 * std::exp(-(u * u + v * v) / 0.03);
    }
  return s;
}

}  // namespace

SyntheticScene make_scene(const std::string& name, const CalibrationPair& calib) {
  const int h = calib.cam_size.h, w = calib.cam_size.w;
  SyntheticScene sc;
  sc.name = name;
  sc.depth_gt = Tensor<double>({h, w, 1});
  sc.albedo = make_albedo(h, w);
  sc.spec_strength = make_spec_map(h, w);

  auto ray = [&](int x, int y) {
    return Vec2{(x - calib.cam.cx) / calib.cam.fx, (y - calib.cam.cy) / calib.cam.fy};
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Vec2 d = ray(x, y);
      double z;
      if (name == "plane") {
        z = 3.0;
      } else if (name == "slant30") {
        // plane through (0,0,3.2), normal rotated 30 deg about the y axis
        z = (0.8660254037844387 * 3.2) / (0.8660254037844387 - 0.5 * d.x);
      } else if (name == "step") {
        z = 3.6;
        if (d.x > 0.08 && d.x < 0.45 && d.y > -0.30 && d.y < 0.35) z = 2.8;
      } else if (name == "sphere") {
        z = 3.6;
        const Vec3 c{0.12, 0.03, 3.05};
        const double r = 0.50;
        const Vec3 dir{d.x, d.y, 1.0};
        double a2 = dot(dir, dir);
        double b2 = -2.0 * dot(dir, c);
        double c2 = dot(c, c) - r * r;
        double disc = b2 * b2 - 4 * a2 * c2;
        if (disc > 0) {
          double t = (-b2 - std::sqrt(disc)) / (2 * a2);
          if (t > 0 && t < z) z = t;
        }
      } else if (name == "waves") {
        z = 3.2 + 0.15 * std::sin(6.2832 * 1.6 * d.x) * std::cos(6.2832 * 1.2 * d.y);
      } else {
        fail(ErrorKind::config, "unknown scene \"" + name + "\"");
      }
      sc.depth_gt.at(y, x, 0) = z;
    }
  sc.validate();
  return sc;
}

namespace {

// Shared discretization with the attribute stage: forward differences with a
// replicated border, normalized, oriented toward the camera, view-direction
// fallback at degenerate folds. Coded here as plain loops.
Tensor<double> points_from_depth(const Tensor<double>& depth, const CalibrationPair& calib) {
  const int h = depth.shape[0], w = depth.shape[1];
  Tensor<double> p({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double z = depth.at(y, x, 0);
      p.at(y, x, 0) = (x - calib.cam.cx) / calib.cam.fx * z;
      p.at(y, x, 1) = (y - calib.cam.cy) / calib.cam.fy * z;
      p.at(y, x, 2) = z;
    }
  return p;
}

Tensor<double> normals_from_points(const Tensor<double>& p) {
  const int h = p.shape[0], w = p.shape[1];
  Tensor<double> n({h, w, 3});
  auto diff = [&](int y, int x, int dy, int dx, int k) {
    return p.at(y + dy, x + dx, k) - p.at(y, x, k);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int xs = std::min(x, w - 2), ys = std::min(y, h - 2);
      Vec3 gx{diff(y, xs, 0, 1, 0), diff(y, xs, 0, 1, 1), diff(y, xs, 0, 1, 2)};
      Vec3 gy{diff(ys, x, 1, 0, 0), diff(ys, x, 1, 0, 1), diff(ys, x, 1, 0, 2)};
      Vec3 cr = cross(gx, gy);
      Vec3 view = normalized(-Vec3{p.at(y, x, 0), p.at(y, x, 1), p.at(y, x, 2)});
      Vec3 nn;
      if (dot(cr, cr) < 1e-24) {
        nn = view;
      } else {
        nn = normalized(cr);
        if (dot(nn, view) < 0) nn = -nn;
      }
      n.at(y, x, 0) = nn.x;
      n.at(y, x, 1) = nn.y;
      n.at(y, x, 2) = nn.z;
    }
  return n;
}

double bilinear1(const Tensor<double>& img, double sx, double sy) {
  const int h = img.shape[0], w = img.shape[1];
  const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0, fy = sy - y0;
  auto px = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return img.at(y, x, 0);
  };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
         fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

}  // namespace

Tensor<float> raycast_visibility(const SyntheticScene& scene, const CalibrationPair& calib) {
  const int h = scene.depth_gt.shape[0], w = scene.depth_gt.shape[1];
  Tensor<double> points = points_from_depth(scene.depth_gt, calib);
  const Vec3 o_p = calib.projector_center();
  double min_depth = 1e300;
  for (double d : scene.depth_gt.v) min_depth = std::min(min_depth, d);

  Tensor<float> vis({h, w, 1});
  const int rows = h;
  parallel_for(rows, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 xs{points.at(y, x, 0), points.at(y, x, 1), points.at(y, x, 2)};
      const Vec3 seg = o_p - xs;
      // Supersample so consecutive probes move <= 1/4 camera pixel near the
      // surface; the image displacement is bounded by the full epipolar run.
      Vec2 start = project_pinhole(xs, calib.cam);
      bool blocked = false;
      const int steps = 4 * std::max(h, w);
      const double t_skip = 1.5 / steps;  // shadow-acne guard near the start
      for (int i = 1; i < steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        if (t < t_skip) continue;
        const Vec3 pt = xs + seg * t;
        if (pt.z < min_depth - 1e-6) break;  // above every surface
        if (pt.z <= 1e-9) break;
        Vec2 uv = project_pinhole(pt, calib.cam);
        if (uv.x < 0 || uv.x > w - 1 || uv.y < 0 || uv.y > h - 1) continue;
        const double surf = bilinear1(scene.depth_gt, uv.x, uv.y);
        if (surf > 0 && pt.z > surf + 2e-3) {
          blocked = true;
          break;
        }
      }
      (void)start;
      vis.at(y, x, 0) = blocked ? 0.0f : 1.0f;
    }
  });
  return vis;
}

SimContext make_sim_context(const SyntheticScene& scene, const CalibrationPair& calib) {
  scene.validate();
  calib.validate();
  SimContext ctx;
  ctx.calib = calib;
  ctx.scene = scene;
  const int h = scene.depth_gt.shape[0], w = scene.depth_gt.shape[1];
  ctx.points = points_from_depth(scene.depth_gt, calib);
  ctx.normals = normals_from_points(ctx.points);
  ctx.n_dot_l = Tensor<double>({h, w, 1});
  ctx.r_dot_v = Tensor<double>({h, w, 1});
  ctx.omega = Tensor<double>({h, w, 2});
  ctx.d_p = Tensor<double>({h, w, 1});
  ctx.fov = Tensor<float>({h, w, 1});
  const Vec3 o_p = calib.projector_center();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec3 xs{ctx.points.at(y, x, 0), ctx.points.at(y, x, 1), ctx.points.at(y, x, 2)};
      const Vec3 n{ctx.normals.at(y, x, 0), ctx.normals.at(y, x, 1), ctx.normals.at(y, x, 2)};
      const Vec3 l = normalized(o_p - xs);
      const Vec3 v = normalized(-xs);
      const Vec3 r = n * (2.0 * dot(n, l)) - l;
      ctx.n_dot_l.at(y, x, 0) = std::max(0.0, dot(n, l));
      ctx.r_dot_v.at(y, x, 0) = std::max(0.0, dot(r, v));
      ProjectorPoint pp = project_to_projector(xs, calib);  // throws behind-projector
      ctx.omega.at(y, x, 0) = pp.pixel.x;
      ctx.omega.at(y, x, 1) = pp.pixel.y;
      ctx.d_p.at(y, x, 0) = pp.depth;
      const bool in_fov = pp.pixel.x >= 0 && pp.pixel.x <= calib.prj_size.w - 1 &&
                          pp.pixel.y >= 0 && pp.pixel.y <= calib.prj_size.h - 1;
      ctx.fov.at(y, x, 0) = in_fov ? 1.0f : 0.0f;
    }
  ctx.visible = raycast_visibility(scene, calib);
  ctx.lit = Tensor<float>({h, w, 1});
  for (int64_t i = 0; i < ctx.lit.size(); ++i)
    ctx.lit.v[i] = (ctx.visible.v[i] > 0.5f && ctx.fov.v[i] > 0.5f) ? 1.0f : 0.0f;
  return ctx;
}

Tensor<double> render_capture(const SimContext& ctx, const Tensor<float>& i_p, Rng* noise_rng) {
  const CalibrationPair& calib = ctx.calib;
  require(i_p.shape == Shape{calib.prj_size.h, calib.prj_size.w, 3}, ErrorKind::shape,
          "render_capture: projector image must be " + std::to_string(calib.prj_size.h) + "x" +
              std::to_string(calib.prj_size.w) + "x3, got " + shape_str(i_p.shape));
  const int h = ctx.scene.depth_gt.shape[0], w = ctx.scene.depth_gt.shape[1];
  const int ph = calib.prj_size.h, pw = calib.prj_size.w;
  Tensor<double> out({h, w, 3});
  auto sample = [&](double sx, double sy, int k) -> double {
    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0, fy = sy - y0;
    auto px = [&](int yy, int xx) -> double {
      if (yy < 0 || yy >= ph || xx < 0 || xx >= pw) return 0.0;
      return static_cast<double>(i_p.at(yy, xx, k));
    };
    return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
           fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
  };
  const double inv_gamma = 1.0 / ctx.scene.gamma;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double vmask = ctx.visible.at(y, x, 0);
      const double ndl = ctx.n_dot_l.at(y, x, 0);
      const double rdv = ctx.r_dot_v.at(y, x, 0);
      const double spec = ctx.scene.spec_strength.at(y, x, 0);
      for (int k = 0; k < 3; ++k) {
        const double direct =
            sample(ctx.omega.at(y, x, 0), ctx.omega.at(y, x, 1), k) * vmask;
        double lin = ctx.scene.ambient[static_cast<size_t>(k)] +
                     ctx.scene.albedo.at(y, x, k) * direct * ndl + spec * direct * rdv;
        double val = std::pow(std::max(lin, 0.0), inv_gamma);
        if (noise_rng) val += ctx.scene.noise_std * noise_rng->normal();
        out.at(y, x, k) = std::clamp(val, 0.0, 1.0);
      }
    }
  return out;
}

Tensor<float> make_pattern(int h, int w, Rng& rng, bool gradient_sweep) {
  Tensor<float> img({h, w, 3});
  if (gradient_sweep) {
    const double ang = rng.uniform(0.0, 6.2832);
    const double cx = std::cos(ang), sy = std::sin(ang);
    const double phase = rng.uniform(0.0, 1.0);
    double rgb0[3], rgb1[3];
    for (int k = 0; k < 3; ++k) {
      rgb0[k] = rng.uniform(0.0, 0.45);
      rgb1[k] = rng.uniform(0.55, 1.0);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double u = (cx * x / w + sy * y / h + phase);
        u -= std::floor(u);
        for (int k = 0; k < 3; ++k)
          img.at(y, x, k) = static_cast<float>(rgb0[k] + (rgb1[k] - rgb0[k]) * u);
      }
    return img;
  }
  // Multi-scale colored noise: coarse random grids upsampled bilinearly.
  const int scales[3] = {4, 10, 24};
  const double weights[3] = {0.5, 0.3, 0.2};
  Tensor<double> acc({h, w, 3});
  for (int s = 0; s < 3; ++s) {
    const int gh = scales[s] + 1, gw = scales[s] + 1;
    Tensor<double> grid({gh, gw, 3});
    for (double& x : grid.v) x = rng.uniform();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double gx = static_cast<double>(x) / (w - 1) * (gw - 1);
        const double gy = static_cast<double>(y) / (h - 1) * (gh - 1);
        const int x0 = std::min(static_cast<int>(gx), gw - 2);
        const int y0 = std::min(static_cast<int>(gy), gh - 2);
        const double fx = gx - x0, fy = gy - y0;
        for (int k = 0; k < 3; ++k) {
          const double v = (1 - fy) * ((1 - fx) * grid.at(y0, x0, k) + fx * grid.at(y0, x0 + 1, k)) +
                           fy * ((1 - fx) * grid.at(y0 + 1, x0, k) + fx * grid.at(y0 + 1, x0 + 1, k));
          acc.at(y, x, k) += weights[s] * v;
        }
      }
  }
  for (int64_t i = 0; i < img.size(); ++i)
    img.v[i] = static_cast<float>(std::clamp(acc.v[i] * 1.15, 0.0, 1.0));
  return img;
}

Tensor<float> threshold_fov_mask(const Tensor<float>& white, const Tensor<float>& dark) {
  require(white.shape == dark.shape && white.shape[2] == 3, ErrorKind::shape,
          "threshold_fov_mask: expected matching [h,w,3]");
  Tensor<float> m({white.shape[0], white.shape[1], 1});
  const int64_t n = m.size();
  for (int64_t i = 0; i < n; ++i) {
    double diff = 0;
    for (int k = 0; k < 3; ++k) diff += white.v[i * 3 + k] - dark.v[i * 3 + k];
    m.v[i] = (diff / 3.0 > 0.05) ? 1.0f : 0.0f;
  }
  return m;
}

fs::path DatasetPaths::prj_train(int i) const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", i);
  return root / "prj/train" / buf;
}
fs::path DatasetPaths::cam_train(int i) const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", i);
  return root / "cam/train" / buf;
}
fs::path DatasetPaths::prj_test(int i) const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", i);
  return root / "prj/test" / buf;
}
fs::path DatasetPaths::cam_test(int i) const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", i);
  return root / "cam/test" / buf;
}

namespace {

// Round-trip through 8-bit quantization, like saving and reloading the PNG.
Tensor<float> quantize8(const Tensor<float>& img) {
  Tensor<float> q(img.shape);
  for (int64_t i = 0; i < img.size(); ++i) {
    float x = std::clamp(img.v[i], 0.0f, 1.0f);
    q.v[i] = static_cast<float>(std::lround(x * 255.0f)) / 255.0f;
  }
  return q;
}

Tensor<float> to_f32(const Tensor<double>& img) { return img.cast<float>(); }

}  // namespace

void generate_dataset(const SyntheticScene& scene, const CalibrationPair& calib, int n_train,
                      int n_test, uint64_t seed, const fs::path& out_dir) {
  require(n_train >= 1, ErrorKind::config, "generate_dataset: need at least one training pair");
  require(n_test >= 0, ErrorKind::config, "generate_dataset: negative test count");
  SimContext ctx = make_sim_context(scene, calib);
  DatasetPaths paths{out_dir};
  write_text_file(paths.calib_json(), calib.to_json());

  Rng root(seed);
  const int ph = calib.prj_size.h, pw = calib.prj_size.w;

  auto render_pair = [&](const Tensor<float>& pattern, uint64_t noise_stream) {
    Tensor<float> quant = quantize8(pattern);
    Rng noise = root.fork(noise_stream);
    Tensor<float> capture = quantize8(to_f32(render_capture(ctx, quant, &noise)));
    return std::pair<Tensor<float>, Tensor<float>>(std::move(quant), std::move(capture));
  };

  for (int i = 0; i < n_train; ++i) {
    Rng prng = root.fork(static_cast<uint64_t>(i));
    Tensor<float> pattern = make_pattern(ph, pw, prng, i % 4 == 3);
    auto [quant, capture] = render_pair(pattern, 100000 + static_cast<uint64_t>(i));
    write_png(paths.prj_train(i), quant);
    write_png(paths.cam_train(i), capture);
  }
  for (int i = 0; i < n_test; ++i) {
    Rng prng = root.fork(500000 + static_cast<uint64_t>(i));
    Tensor<float> pattern = make_pattern(ph, pw, prng, i % 4 == 1);
    auto [quant, capture] = render_pair(pattern, 600000 + static_cast<uint64_t>(i));
    write_png(paths.prj_test(i), quant);
    write_png(paths.cam_test(i), capture);
  }

  Tensor<float> white({ph, pw, 3}, 1.0f);
  Tensor<float> black({ph, pw, 3}, 0.0f);
  auto [white_q, s_img] = render_pair(white, 700001);
  auto [black_q, dark_img] = render_pair(black, 700002);
  (void)white_q;
  (void)black_q;
  write_png(paths.surface(), s_img);
  write_png(paths.dark(), dark_img);
  write_png(paths.mask(), threshold_fov_mask(s_img, dark_img));

  const double tnorm = calib.baseline_norm();
  Tensor<float> depth_norm({scene.depth_gt.shape[0], scene.depth_gt.shape[1], 1});
  for (int64_t i = 0; i < depth_norm.size(); ++i)
    depth_norm.v[i] = static_cast<float>(scene.depth_gt.v[i] / tnorm);
  write_pfm(paths.gt_depth(), depth_norm);
  write_pfm(paths.gt_normal(), to_f32(ctx.normals));
  write_png(paths.gt_mask(), ctx.lit);
}

}  // namespace dpc
