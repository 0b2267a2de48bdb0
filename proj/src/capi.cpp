#include "deprocams.h"

#include <cstdio>
#include <cstring>
#include <string>

#include "gradcheck.hpp"
#include "image_io.hpp"
#include "json.hpp"
#include "model.hpp"
#include "simulator.hpp"
#include "tasks.hpp"
#include "training.hpp"

namespace {

thread_local std::string g_last_error;

dpc_status to_status(dpc::ErrorKind kind) { return static_cast<dpc_status>(static_cast<int>(kind)); }

template <typename Fn>
dpc_status guarded(Fn&& fn) {
  try {
    fn();
    return DPC_OK;
  } catch (const dpc::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DPC_ERR_INTERNAL;
  }
}

dpc_status need(const char* what) {
  g_last_error = std::string(what) + " must not be NULL";
  return DPC_ERR_CONFIG;
}

}  // namespace

struct dpc_model {
  dpc::Model model;
  dpc::ModelRuntime runtime;
};

extern "C" {

const char* dpc_version(void) { return "deprocams 1.0.0"; }

const char* dpc_last_error(void) { return g_last_error.c_str(); }

dpc_status dpc_simulate(const char* scene_name, const char* out_dir, int train_count,
                        int test_count, uint64_t seed, const char* options_json) {
  if (!scene_name) return need("scene_name");
  if (!out_dir) return need("out_dir");
  return guarded([&] {
    int cam_h = 120, cam_w = 160, prj_h = 150, prj_w = 200;
    double gamma = -1, noise = -1;
    if (options_json && *options_json) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(options_json);
      } catch (const std::exception& e) {
        dpc::fail(dpc::ErrorKind::parse, std::string("options: invalid JSON: ") + e.what());
      }
      for (const auto& [key, value] : j.items()) {
        if (key == "cam_h") cam_h = value.get<int>();
        else if (key == "cam_w") cam_w = value.get<int>();
        else if (key == "prj_h") prj_h = value.get<int>();
        else if (key == "prj_w") prj_w = value.get<int>();
        else if (key == "gamma") gamma = value.get<double>();
        else if (key == "noise_std") noise = value.get<double>();
        else dpc::fail(dpc::ErrorKind::config, "options: unknown key \"" + key + "\"");
      }
    }
    dpc::CalibrationPair calib = dpc::default_calibration(cam_h, cam_w, prj_h, prj_w);
    dpc::SyntheticScene scene = dpc::make_scene(scene_name, calib);
    if (gamma >= 0) scene.gamma = gamma;
    if (noise >= 0) scene.noise_std = noise;
    scene.validate();
    dpc::generate_dataset(scene, calib, train_count, test_count, seed, out_dir);
  });
}

dpc_status dpc_train(const char* data_dir, const char* model_path, const char* config_json) {
  if (!data_dir) return need("data_dir");
  if (!model_path) return need("model_path");
  return guarded([&] {
    dpc::TrainConfig cfg;
    if (config_json && *config_json) cfg = dpc::TrainConfig::from_json(config_json);
    dpc::Dataset ds = dpc::load_dataset(data_dir, /*load_test=*/false);
    dpc::TrainResult result = dpc::train(ds, cfg);
    dpc::save_model(model_path, result.model);
  });
}

dpc_status dpc_model_open(const char* model_path, dpc_model** out_model) {
  if (!model_path) return need("model_path");
  if (!out_model) return need("out_model");
  *out_model = nullptr;
  return guarded([&] {
    auto* handle = new dpc_model;
    try {
      handle->model = dpc::load_model(model_path);
      handle->runtime = dpc::make_runtime(handle->model);
    } catch (...) {
      delete handle;
      throw;
    }
    *out_model = handle;
  });
}

void dpc_model_close(dpc_model* model) { delete model; }

dpc_status dpc_model_info(const dpc_model* model, char* buf, size_t buf_size) {
  if (!model) return need("model");
  if (!buf || buf_size == 0) return need("buf");
  return guarded([&] {
    nlohmann::json j;
    j["cam_size"] = {model->model.calib.cam_size.h, model->model.calib.cam_size.w};
    j["prj_size"] = {model->model.calib.prj_size.h, model->model.calib.prj_size.w};
    j["baseline_norm"] = model->model.calib.baseline_norm();
    j["layers"] = dpc::kNetLayerCount;
    std::string text = j.dump();
    dpc::require(text.size() + 1 <= buf_size, dpc::ErrorKind::config,
                 "model info buffer too small (need " + std::to_string(text.size() + 1) + ")");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

dpc_status dpc_relight(dpc_model* model, const char* pattern_png, const char* out_png) {
  if (!model) return need("model");
  if (!pattern_png) return need("pattern_png");
  if (!out_png) return need("out_png");
  return guarded([&] {
    dpc::Tensor<float> pattern = dpc::read_png(pattern_png);
    dpc::Tensor<float> pred = dpc::relight(model->runtime, pattern);
    dpc::write_png(out_png, pred);
  });
}

dpc_status dpc_compensate(dpc_model* model, const char* target_png, const char* out_png,
                          const char* config_json) {
  if (!model) return need("model");
  if (!target_png) return need("target_png");
  if (!out_png) return need("out_png");
  return guarded([&] {
    dpc::CompensationConfig cfg;
    if (config_json && *config_json) cfg = dpc::CompensationConfig::from_json(config_json);
    dpc::Tensor<float> target = dpc::read_png(target_png);
    dpc::CompensationResult result = dpc::compensate(model->runtime, target, cfg);
    dpc::write_png(out_png, result.image);
  });
}

dpc_status dpc_reconstruct(dpc_model* model, double t_norm, const char* out_prefix) {
  if (!model) return need("model");
  if (!out_prefix) return need("out_prefix");
  return guarded([&] {
    dpc::Reconstruction rec = dpc::export_reconstruction(model->runtime, t_norm);
    const std::string prefix(out_prefix);
    dpc::write_pfm(prefix + "depth.pfm", rec.depth);
    dpc::write_pfm(prefix + "normal.pfm", rec.normals);
    dpc::write_ply(prefix + "cloud.ply", rec.cloud);
  });
}

dpc_status dpc_evaluate(dpc_model* model, const char* data_dir, const char* out_csv) {
  if (!model) return need("model");
  if (!data_dir) return need("data_dir");
  if (!out_csv) return need("out_csv");
  return guarded([&] {
    dpc::Dataset ds = dpc::load_dataset(data_dir, /*load_test=*/true);
    dpc::EvalSummary summary = dpc::evaluate(model->runtime, ds);
    dpc::write_eval_csv(out_csv, summary);
  });
}

dpc_status dpc_gradcheck(uint64_t seed, int verbose) {
  return guarded([&] {
    dpc::GradCheckReport report = dpc::run_gradcheck(seed);
    if (verbose) {
      for (const auto& item : report.items)
        std::printf("%-28s max_rel_err=%.3e tol=%.0e checked=%d skipped=%d %s\n",
                    item.name.c_str(), item.max_rel_err, item.tolerance, item.checked,
                    item.skipped, item.pass ? "PASS" : "FAIL");
    }
    dpc::require(report.all_pass(), dpc::ErrorKind::numeric,
                 "gradient checks failed; rerun with verbose output for details");
  });
}

}  // extern "C"
