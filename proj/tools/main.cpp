// Command-line front end; talks to the core only through the public C API.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "deprocams.h"
#include "json.hpp"

namespace {

const char* status_name(dpc_status s) {
  switch (s) {
    case DPC_OK: return "ok";
    case DPC_ERR_IO: return "io";
    case DPC_ERR_PARSE: return "parse";
    case DPC_ERR_SHAPE: return "shape";
    case DPC_ERR_CONFIG: return "config";
    case DPC_ERR_GEOMETRY: return "geometry";
    case DPC_ERR_VERSION: return "version";
    case DPC_ERR_NUMERIC: return "numeric";
    case DPC_ERR_TASK: return "task";
    case DPC_ERR_INTERNAL: return "internal";
  }
  return "internal";
}

int finish(dpc_status s) {
  if (s != DPC_OK)
    std::fprintf(stderr, "error category=%s message=\"%s\"\n", status_name(s), dpc_last_error());
  return static_cast<int>(s);
}

// Optional JSON config file merged with command-line overrides.
std::string merge_config(const std::string& config_path, const nlohmann::json& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is.good()) {
      std::fprintf(stderr, "error category=io message=\"cannot open config %s\"\n",
                   config_path.c_str());
      std::exit(static_cast<int>(DPC_ERR_IO));
    }
    try {
      is >> j;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error category=parse message=\"config %s: %s\"\n", config_path.c_str(),
                   e.what());
      std::exit(static_cast<int>(DPC_ERR_PARSE));
    }
  }
  for (const auto& [key, value] : overrides.items()) j[key] = value;
  return j.dump();
}

struct ModelGuard {
  dpc_model* handle = nullptr;
  ~ModelGuard() { dpc_model_close(handle); }
};

bool parse_resolution(const std::string& text, nlohmann::json& opts) {
  // "CAMHxCAMW:PRJHxPRJW", e.g. 120x160:150x200
  int ch, cw, ph, pw;
  if (std::sscanf(text.c_str(), "%dx%d:%dx%d", &ch, &cw, &ph, &pw) != 4) return false;
  opts["cam_h"] = ch;
  opts["cam_w"] = cw;
  opts["prj_h"] = ph;
  opts["prj_w"] = pw;
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeProCams: joint depth + shading learning for projector-camera systems"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Render a synthetic scene dataset");
  std::string sim_scene = "plane", sim_out, sim_res;
  int sim_ntrain = 64, sim_ntest = 16;
  uint64_t sim_seed = 1;
  double sim_gamma = -1, sim_noise = -1;
  sim->add_option("--scene", sim_scene, "plane|slant30|step|sphere|waves");
  sim->add_option("--out", sim_out, "output dataset directory")->required();
  sim->add_option("--ntrain", sim_ntrain, "training pairs");
  sim->add_option("--ntest", sim_ntest, "test pairs");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--resolution", sim_res, "CAMHxCAMW:PRJHxPRJW (default 120x160:150x200)");
  sim->add_option("--gamma", sim_gamma, "camera response exponent");
  sim->add_option("--noise", sim_noise, "capture noise std");

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
  std::string tr_data, tr_out, tr_config, tr_ablation, tr_losslog;
  int tr_iters = -1;
  int64_t tr_seed = -1;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "output model checkpoint")->required();
  tr->add_option("--config", tr_config, "JSON config file");
  tr->add_option("--seed", tr_seed, "RNG seed override");
  tr->add_option("--iterations", tr_iters, "iteration count override");
  tr->add_option("--ablation", tr_ablation, "full|no_mask|no_rough|no_const");
  tr->add_option("--loss-log", tr_losslog, "per-iteration loss CSV");

  // relight
  auto* rel = app.add_subcommand("relight", "Predict the camera view of a projector image");
  std::string rel_model, rel_pattern, rel_out;
  rel->add_option("--model", rel_model, "model checkpoint")->required();
  rel->add_option("--pattern", rel_pattern, "projector image (PNG)")->required();
  rel->add_option("--out", rel_out, "output PNG")->required();

  // compensate
  auto* cmp = app.add_subcommand("compensate", "Solve for a compensation image");
  std::string cmp_model, cmp_target, cmp_out, cmp_config;
  int cmp_iters = -1;
  cmp->add_option("--model", cmp_model, "model checkpoint")->required();
  cmp->add_option("--target", cmp_target, "desired projector-sized image (PNG)")->required();
  cmp->add_option("--out", cmp_out, "output PNG")->required();
  cmp->add_option("--config", cmp_config, "JSON config file");
  cmp->add_option("--iterations", cmp_iters, "iteration count override");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "Export depth, normals and a point cloud");
  std::string rec_model, rec_prefix;
  double rec_tnorm = 1.0;
  rec->add_option("--model", rec_model, "model checkpoint")->required();
  rec->add_option("--out-prefix", rec_prefix, "output path prefix")->required();
  rec->add_option("--tnorm", rec_tnorm, "metric baseline length |t|");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Metrics on a dataset's test split");
  std::string ev_model, ev_data, ev_out;
  ev->add_option("--model", ev_model, "model checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--out", ev_out, "output CSV")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  if (sim->parsed()) {
    nlohmann::json opts = nlohmann::json::object();
    if (!sim_res.empty() && !parse_resolution(sim_res, opts)) {
      std::fprintf(stderr, "error category=config message=\"bad --resolution format\"\n");
      return static_cast<int>(DPC_ERR_CONFIG);
    }
    if (sim_gamma >= 0) opts["gamma"] = sim_gamma;
    if (sim_noise >= 0) opts["noise_std"] = sim_noise;
    std::string opts_text = opts.dump();
    return finish(dpc_simulate(sim_scene.c_str(), sim_out.c_str(), sim_ntrain, sim_ntest, sim_seed,
                               opts_text.c_str()));
  }
  if (tr->parsed()) {
    nlohmann::json overrides = nlohmann::json::object();
    if (tr_seed >= 0) overrides["seed"] = tr_seed;
    if (tr_iters >= 0) overrides["iterations"] = tr_iters;
    if (!tr_ablation.empty()) overrides["ablation"] = tr_ablation;
    if (!tr_losslog.empty()) overrides["loss_log"] = tr_losslog;
    std::string cfg = merge_config(tr_config, overrides);
    return finish(dpc_train(tr_data.c_str(), tr_out.c_str(), cfg.c_str()));
  }
  if (rel->parsed()) {
    ModelGuard m;
    dpc_status s = dpc_model_open(rel_model.c_str(), &m.handle);
    if (s != DPC_OK) return finish(s);
    return finish(dpc_relight(m.handle, rel_pattern.c_str(), rel_out.c_str()));
  }
  if (cmp->parsed()) {
    nlohmann::json overrides = nlohmann::json::object();
    if (cmp_iters >= 0) overrides["iterations"] = cmp_iters;
    std::string cfg = merge_config(cmp_config, overrides);
    ModelGuard m;
    dpc_status s = dpc_model_open(cmp_model.c_str(), &m.handle);
    if (s != DPC_OK) return finish(s);
    return finish(dpc_compensate(m.handle, cmp_target.c_str(), cmp_out.c_str(), cfg.c_str()));
  }
  if (rec->parsed()) {
    ModelGuard m;
    dpc_status s = dpc_model_open(rec_model.c_str(), &m.handle);
    if (s != DPC_OK) return finish(s);
    return finish(dpc_reconstruct(m.handle, rec_tnorm, rec_prefix.c_str()));
  }
  if (ev->parsed()) {
    ModelGuard m;
    dpc_status s = dpc_model_open(ev_model.c_str(), &m.handle);
    if (s != DPC_OK) return finish(s);
    return finish(dpc_evaluate(m.handle, ev_data.c_str(), ev_out.c_str()));
  }
  if (gc->parsed()) return finish(dpc_gradcheck(gc_seed, /*verbose=*/1));
  return 0;
}
