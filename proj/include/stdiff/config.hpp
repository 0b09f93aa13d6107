#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stdiff/denoiser.hpp"
#include "stdiff/metrics.hpp"
#include "stdiff/schedule.hpp"

// Run configuration: a nested key-value file (JSON) with strict key checking.
// The fully resolved form is persisted next to every run's artifacts.

namespace stdiff {

struct RunConfig {
  // dataset
  std::string dataset;
  std::vector<std::string> columns;  // empty = all numeric columns
  Eigen::Index window = 24;
  Eigen::Index stride = 1;
  // model
  Eigen::Index width = 16;
  std::string parameterization = "predict_x0";
  // diffusion
  int steps = 500;
  std::string schedule = "linear";
  Scalar beta_start = 1e-4;
  Scalar beta_end = 0.02;
  std::string sigma_mode = "posterior";
  // components
  LmaConfig lma;
  TrendConfig trend;
  SeasonalConfig seasonal;
  CorrectionConfig correction;
  // training
  int epochs = 50;
  int batch = 64;
  Scalar lr = 1e-3;
  // run
  std::uint64_t seed = 0;
  std::string out = "out";
  int trials = 5;
  MetricsConfig metrics;

  DenoiserConfig denoiser_config(Eigen::Index K) const {
    DenoiserConfig d;
    d.L = window;
    d.K = K;
    d.width = width;
    d.parameterization = parameterization == "predict_eps"
                             ? Parameterization::predict_eps
                             : Parameterization::predict_x0;
    d.lma = lma;
    d.trend = trend;
    d.seasonal = seasonal;
    d.correction = correction;
    return d;
  }

  NoiseSchedule make_schedule() const {
    return build_schedule(
        steps,
        schedule == "cosine" ? ScheduleKind::cosine : ScheduleKind::linear,
        beta_start, beta_end,
        sigma_mode == "beta_sqrt" ? SigmaMode::beta_sqrt : SigmaMode::posterior);
  }

  nlohmann::json resolved() const {
    nlohmann::json j;
    j["dataset"] = {{"path", dataset},
                    {"columns", columns},
                    {"window", window},
                    {"stride", stride}};
    j["model"] = {{"width", width}, {"parameterization", parameterization}};
    j["diffusion"] = {{"steps", steps},
                      {"schedule", schedule},
                      {"beta_start", beta_start},
                      {"beta_end", beta_end},
                      {"sigma_mode", sigma_mode}};
    j["lma"] = {{"kernels", lma.kernels},
                {"hidden", lma.hidden},
                {"global_weights", lma.global_weights},
                {"enabled", lma.enabled}};
    j["trend"] = {{"layers", trend.layers}, {"hidden_mult", trend.hidden_mult}};
    j["wavelet"] = {{"levels", seasonal.levels},
                    {"learnable", seasonal.learnable},
                    {"init", "db3"},
                    {"reg_weight", seasonal.reg_weight}};
    j["attention"] = {{"heads", seasonal.heads}, {"dk", seasonal.dk}};
    j["correction"] = {{"dk", correction.dk},
                       {"residual", correction.residual},
                       {"enabled", correction.enabled}};
    j["train"] = {{"epochs", epochs}, {"batch", batch}, {"lr", lr}};
    j["metrics"] = {{"iterations", metrics.iterations},
                    {"batch", metrics.batch},
                    {"lr", metrics.lr},
                    {"encoder_iterations", metrics.encoder_iterations}};
    j["seed"] = seed;
    j["out"] = out;
    j["trials"] = trials;
    return j;
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& scope,
                           std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw SpecError("config: '" + scope + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) known = true;
    if (!known)
      throw SpecError("config: unknown key '" +
                      (scope.empty() ? it.key() : scope + "." + it.key()) + "'");
  }
}

inline void require_one_of(const std::string& key, const std::string& value,
                           std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string msg = "config: " + key + " must be one of {";
  for (const char* a : allowed) msg += std::string(a) + " ";
  throw SpecError(msg + "}, got '" + value + "'");
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using nlohmann::json;
  RunConfig c;
  detail::reject_unknown(
      j, "",
      {"dataset", "model", "diffusion", "lma", "trend", "wavelet", "attention",
       "correction", "train", "metrics", "seed", "out", "trials"});

  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    detail::reject_unknown(d, "dataset", {"path", "columns", "window", "stride"});
    c.dataset = d.value("path", c.dataset);
    if (d.contains("columns"))
      c.columns = d["columns"].get<std::vector<std::string>>();
    c.window = d.value("window", c.window);
    c.stride = d.value("stride", c.stride);
    if (c.window < 2) throw SpecError("config: dataset.window must be >= 2");
    if (c.stride < 1) throw SpecError("config: dataset.stride must be >= 1");
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    detail::reject_unknown(m, "model", {"width", "parameterization"});
    c.width = m.value("width", c.width);
    c.parameterization = m.value("parameterization", c.parameterization);
    detail::require_one_of("model.parameterization", c.parameterization,
                           {"predict_x0", "predict_eps"});
    if (c.width < 1) throw SpecError("config: model.width must be >= 1");
  }
  if (j.contains("diffusion")) {
    const json& d = j["diffusion"];
    detail::reject_unknown(
        d, "diffusion",
        {"steps", "schedule", "beta_start", "beta_end", "sigma_mode"});
    c.steps = d.value("steps", c.steps);
    c.schedule = d.value("schedule", c.schedule);
    c.beta_start = d.value("beta_start", c.beta_start);
    c.beta_end = d.value("beta_end", c.beta_end);
    c.sigma_mode = d.value("sigma_mode", c.sigma_mode);
    detail::require_one_of("diffusion.schedule", c.schedule,
                           {"linear", "cosine"});
    detail::require_one_of("diffusion.sigma_mode", c.sigma_mode,
                           {"posterior", "beta_sqrt"});
    if (c.steps < 1) throw SpecError("config: diffusion.steps must be >= 1");
  }
  if (j.contains("lma")) {
    const json& l = j["lma"];
    detail::reject_unknown(l, "lma",
                           {"kernels", "hidden", "global_weights", "enabled"});
    if (l.contains("kernels"))
      c.lma.kernels = l["kernels"].get<std::vector<int>>();
    c.lma.hidden = l.value("hidden", c.lma.hidden);
    c.lma.global_weights = l.value("global_weights", c.lma.global_weights);
    c.lma.enabled = l.value("enabled", c.lma.enabled);
  }
  if (j.contains("trend")) {
    const json& t = j["trend"];
    detail::reject_unknown(t, "trend", {"layers", "hidden_mult"});
    c.trend.layers = t.value("layers", c.trend.layers);
    c.trend.hidden_mult = t.value("hidden_mult", c.trend.hidden_mult);
  }
  if (j.contains("wavelet")) {
    const json& w = j["wavelet"];
    detail::reject_unknown(w, "wavelet",
                           {"levels", "learnable", "init", "reg_weight"});
    c.seasonal.levels = w.value("levels", c.seasonal.levels);
    c.seasonal.learnable = w.value("learnable", c.seasonal.learnable);
    c.seasonal.reg_weight = w.value("reg_weight", c.seasonal.reg_weight);
    std::string init = w.value("init", std::string("db3"));
    detail::require_one_of("wavelet.init", init, {"db3"});
  }
  if (j.contains("attention")) {
    const json& a = j["attention"];
    detail::reject_unknown(a, "attention", {"heads", "dk"});
    c.seasonal.heads = a.value("heads", c.seasonal.heads);
    c.seasonal.dk = a.value("dk", c.seasonal.dk);
  }
  if (j.contains("correction")) {
    const json& r = j["correction"];
    detail::reject_unknown(r, "correction", {"dk", "residual", "enabled"});
    c.correction.dk = r.value("dk", c.correction.dk);
    c.correction.residual = r.value("residual", c.correction.residual);
    c.correction.enabled = r.value("enabled", c.correction.enabled);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    detail::reject_unknown(t, "train", {"epochs", "batch", "lr"});
    c.epochs = t.value("epochs", c.epochs);
    c.batch = t.value("batch", c.batch);
    c.lr = t.value("lr", c.lr);
    if (c.epochs < 0) throw SpecError("config: train.epochs must be >= 0");
    if (c.batch < 1) throw SpecError("config: train.batch must be >= 1");
  }
  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    detail::reject_unknown(m, "metrics",
                           {"iterations", "batch", "lr", "encoder_iterations"});
    c.metrics.iterations = m.value("iterations", c.metrics.iterations);
    c.metrics.batch = m.value("batch", c.metrics.batch);
    c.metrics.lr = m.value("lr", c.metrics.lr);
    c.metrics.encoder_iterations =
        m.value("encoder_iterations", c.metrics.encoder_iterations);
  }
  c.seed = j.value("seed", c.seed);
  c.out = j.value("out", c.out);
  c.trials = j.value("trials", c.trials);
  if (c.trials < 1) throw SpecError("config: trials must be >= 1");
  c.metrics.trials = c.trials;
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("config: parse failure: ") + e.what());
  }
  return parse_run_config(j);
}

}  // namespace stdiff
