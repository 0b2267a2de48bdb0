#include "training.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "adam.hpp"
#include "image_io.hpp"
#include "json.hpp"
#include "losses.hpp"

namespace dpc {

Ablation parse_ablation(const std::string& name) {
  if (name == "full") return Ablation::full;
  if (name == "no_mask") return Ablation::no_mask;
  if (name == "no_rough") return Ablation::no_rough;
  if (name == "no_const") return Ablation::no_const;
  fail(ErrorKind::config, "unknown ablation mode \"" + name + "\"");
}

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_mask: return "no_mask";
    case Ablation::no_rough: return "no_rough";
    case Ablation::no_const: return "no_const";
  }
  return "full";
}

void TrainConfig::validate() const {
  require(lr_depth > 0 && lr_net > 0, ErrorKind::config, "train: learning rates must be positive");
  require(iterations >= 0, ErrorKind::config, "train: negative iteration count");
  require(batch_size >= 1, ErrorKind::config, "train: batch size must be at least 1");
  require(w_recon >= 0 && w_mask >= 0 && w_rough >= 0 && w_smooth_depth >= 0 &&
              w_smooth_grid >= 0 && w_smooth_normal >= 0,
          ErrorKind::config, "train: loss weights must be non-negative");
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorKind::parse, std::string("train config: invalid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::parse, "train config: expected a JSON object");
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "lr_depth") cfg.lr_depth = value.get<double>();
    else if (key == "lr_net") cfg.lr_net = value.get<double>();
    else if (key == "iterations") cfg.iterations = value.get<int>();
    else if (key == "batch_size") cfg.batch_size = value.get<int>();
    else if (key == "seed") cfg.seed = value.get<uint64_t>();
    else if (key == "w_recon") cfg.w_recon = value.get<double>();
    else if (key == "w_mask") cfg.w_mask = value.get<double>();
    else if (key == "w_rough") cfg.w_rough = value.get<double>();
    else if (key == "w_smooth_depth") cfg.w_smooth_depth = value.get<double>();
    else if (key == "w_smooth_grid") cfg.w_smooth_grid = value.get<double>();
    else if (key == "w_smooth_normal") cfg.w_smooth_normal = value.get<double>();
    else if (key == "ablation") cfg.ablation = parse_ablation(value.get<std::string>());
    else if (key == "loss_log") cfg.loss_log = value.get<std::string>();
    else fail(ErrorKind::config, "train config: unknown key \"" + key + "\"");
  }
  cfg.validate();
  return cfg;
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["lr_depth"] = lr_depth;
  j["lr_net"] = lr_net;
  j["iterations"] = iterations;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["w_recon"] = w_recon;
  j["w_mask"] = w_mask;
  j["w_rough"] = w_rough;
  j["w_smooth_depth"] = w_smooth_depth;
  j["w_smooth_grid"] = w_smooth_grid;
  j["w_smooth_normal"] = w_smooth_normal;
  j["ablation"] = ablation_name(ablation);
  if (!loss_log.empty()) j["loss_log"] = loss_log;
  return j.dump(2);
}

DepthField init_depth(const Tensor<float>& s_star, const CalibrationPair& calib) {
  require(s_star.shape == Shape{calib.cam_size.h, calib.cam_size.w, 1}, ErrorKind::shape,
          "init_depth: mask must match the camera size");
  const int h = calib.cam_size.h, w = calib.cam_size.w;
  int x0 = w, x1 = -1, y0 = h, y1 = -1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (s_star.at(y, x, 0) > 0.5f) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  require(x1 >= x0 && y1 >= y0, ErrorKind::task, "init_depth: empty projector FOV mask");

  const CalibrationPair nc = calib.normalized();
  const double sx = (nc.prj_size.w - 1) / std::max(1.0, static_cast<double>(x1 - x0));
  const double sy = (nc.prj_size.h - 1) / std::max(1.0, static_cast<double>(y1 - y0));

  DepthField field;
  field.inv_d = Tensor<float>({h, w, 1});
  std::vector<double> depths(static_cast<size_t>(h) * w, -1.0);
  std::vector<double> valid;
  valid.reserve(depths.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec2 xp{(x - x0) * sx, (y - y0) * sy};
      Vec3 pt;
      if (try_triangulate({static_cast<double>(x), static_cast<double>(y)}, xp, nc, &pt) &&
          std::isfinite(pt.z) && pt.z > 1e-6) {
        depths[static_cast<size_t>(y) * w + x] = pt.z;
        valid.push_back(pt.z);
      }
    }
  double median = 4.0;  // arbitrary mid-range depth when nothing triangulates
  if (!valid.empty()) {
    std::nth_element(valid.begin(), valid.begin() + static_cast<long>(valid.size() / 2),
                     valid.end());
    median = valid[valid.size() / 2];
  }
  for (int64_t i = 0; i < field.inv_d.size(); ++i) {
    const double z = depths[static_cast<size_t>(i)] > 0 ? depths[static_cast<size_t>(i)] : median;
    field.inv_d.v[i] = static_cast<float>(1.0 / z);
  }
  field.clamp_bounds();
  return field;
}

namespace {

double scalar(const Tape<float>& t, Tape<float>::Var v) {
  return static_cast<double>(t.val(v).v[0]);
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  const int n = ds.train_count();
  const int batch = std::min(cfg.batch_size, n);
  const bool use_mask = cfg.ablation != Ablation::no_mask;
  const bool use_rough_inputs = cfg.ablation != Ablation::no_rough;
  const bool use_rough_loss = cfg.ablation == Ablation::full || cfg.ablation == Ablation::no_mask;

  const CalibrationPair norm_calib = ds.calib.normalized();
  const auto consts = make_attribute_constants<float>(norm_calib);
  const SmoothWeights sw = make_smooth_weights(ds.prior.s);

  TrainResult result;
  Model& model = result.model;
  model.calib = ds.calib;
  model.prior = ds.prior;
  model.depth = init_depth(ds.prior.s_star, ds.calib);
  model.net = he_init(cfg.seed);

  AdamConfig<float> depth_opt;
  depth_opt.lr = cfg.lr_depth;
  AdamConfig<float> net_opt;
  net_opt.lr = cfg.lr_net;
  AdamState<float> depth_state;
  std::array<AdamState<float>, kNetLayerCount> w_states, b_states;

  Rng shuffle_rng = Rng(cfg.seed).fork(0x51f1e);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = order.size();  // forces a shuffle on first use

  const Tensor<float> zero_img({ds.calib.cam_size.h, ds.calib.cam_size.w, 3}, 0.0f);
  Tape<float> tape;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<int> batch_idx;
    batch_idx.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      if (cursor >= order.size()) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      batch_idx.push_back(order[cursor++]);
    }

    tape.clear();
    auto v_inv_d = tape.leaf(model.depth.inv_d, true);
    auto nv = net_leaves(tape, model.net, true);
    auto s_const = tape.constant(ds.prior.s);
    auto s_gray_const = tape.constant(ds.prior.s_gray);
    auto wx_const = tape.constant(sw.wx);
    auto wy_const = tape.constant(sw.wy);

    AttributeVars<float> attrs =
        use_mask ? compute_attributes(tape, v_inv_d, consts)
                 : compute_attributes(tape, v_inv_d, consts, MaskMode::forced, &ds.prior.s_star);
    auto sk1_out = surface_skip_forward(tape, nv, s_const);

    auto recon_sum = tape.scalar_const(0.0f);
    auto rough_sum = tape.scalar_const(0.0f);
    for (int idx : batch_idx) {
      auto ip = tape.constant(ds.prj_train[static_cast<size_t>(idx)]);
      auto ic = tape.constant(ds.cam_train[static_cast<size_t>(idx)]);
      auto ipp = warp_projector_image(tape, ip, attrs);
      Tape<float>::Var i_diff, i_spec;
      if (use_rough_inputs) {
        RoughShadings<float> rough = rough_shadings(tape, ipp, attrs, s_const, s_gray_const);
        i_diff = rough.diffuse;
        i_spec = rough.specular;
      } else {
        i_diff = tape.constant(zero_img);
        i_spec = tape.constant(zero_img);
      }
      auto pred = shading_forward(tape, nv, ipp, s_const, i_diff, i_spec, sk1_out);
      recon_sum = ops::add(tape, recon_sum, loss_recon(tape, pred, ic));
      if (use_rough_loss) rough_sum = ops::add(tape, rough_sum, loss_rough_term(tape, i_diff, ic));
    }

    auto l_recon = ops::mul_s(tape, recon_sum, 1.0 / batch);
    auto l_mask = use_mask ? loss_mask(tape, attrs.mask, tape.constant(ds.prior.s_star))
                           : tape.scalar_const(0.0f);
    auto l_rough = use_rough_loss ? ops::mul_s(tape, rough_sum, 1.0 / (2.0 * batch))
                                  : tape.scalar_const(0.0f);
    auto l_smooth = ops::add(
        tape,
        ops::add(tape,
                 ops::mul_s(tape, loss_smooth(tape, v_inv_d, wx_const, wy_const),
                            cfg.w_smooth_depth),
                 ops::mul_s(tape, loss_smooth(tape, attrs.omega, wx_const, wy_const),
                            cfg.w_smooth_grid)),
        ops::mul_s(tape, loss_smooth(tape, attrs.normal, wx_const, wy_const),
                   cfg.w_smooth_normal));
    auto total = ops::add(
        tape,
        ops::add(tape, ops::add(tape, ops::mul_s(tape, l_recon, cfg.w_recon),
                                ops::mul_s(tape, l_mask, cfg.w_mask)),
                 ops::mul_s(tape, l_rough, cfg.w_rough)),
        l_smooth);

    LossRow row{iter, scalar(tape, l_recon), scalar(tape, l_mask), scalar(tape, l_rough),
                scalar(tape, l_smooth), scalar(tape, total)};
    if (!std::isfinite(row.total)) {
      std::ostringstream os;
      os << "train: non-finite loss at iteration " << iter << " (recon=" << row.recon
         << " mask=" << row.mask << " rough=" << row.rough << " smooth=" << row.smooth << ")";
      fail(ErrorKind::numeric, os.str());
    }
    result.log.push_back(row);

    tape.backward(total);
    adam_step(model.depth.inv_d, tape.grad(v_inv_d), depth_state, depth_opt);
    model.depth.clamp_bounds();
    for (int i = 0; i < kNetLayerCount; ++i) {
      ConvBank& bk = model.net.banks[static_cast<size_t>(i)];
      adam_step(bk.w, tape.grad(nv.w[static_cast<size_t>(i)]), w_states[static_cast<size_t>(i)],
                net_opt);
      adam_step(bk.b, tape.grad(nv.b[static_cast<size_t>(i)]), b_states[static_cast<size_t>(i)],
                net_opt);
    }
  }

  if (!cfg.loss_log.empty()) write_loss_log(cfg.loss_log, result.log);
  return result;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRow>& rows) {
  atomic_write(path, [&](std::ostream& os) {
    os << "iter,L_recon,L_mask,L_rough,L_smooth,total\n";
    char buf[160];
    for (const LossRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.iter, r.recon, r.mask,
                    r.rough, r.smooth, r.total);
      os << buf;
    }
  });
}

}  // namespace dpc
