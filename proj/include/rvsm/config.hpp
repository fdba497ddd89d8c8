#pragma once

#include "rvsm/serialize.hpp"

#include <set>
#include <string>

namespace rvsm {

/// Run-level configuration loaded from a single JSON file; CLI flags override.
struct RunConfig {
  KernelSpec kernel;
  TrainConfig train;
  double downsample_fraction = 1.0;

  void validate() const {
    kernel.validate();
    if (train.max_iterations <= 0 || train.irls_max_steps <= 0)
      throw invalid_input("config: iteration limits must be positive");
    if (!(train.convergence_tol > 0.0) || !(train.irls_tol > 0.0) || !(train.jitter > 0.0))
      throw invalid_input("config: tolerances and jitter must be positive");
    if (!(downsample_fraction > 0.0) || downsample_fraction > 1.0)
      throw invalid_input("config: downsample_fraction must be in (0, 1]");
  }
};

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known,
                                const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!known.contains(key))
      throw invalid_input("config: unknown key '" + key + "' in " + where);
}

}  // namespace detail

inline RunConfig run_config_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"kernel", "train", "downsample_fraction"}, "config root");
  RunConfig cfg;
  if (j.contains("kernel")) {
    detail::reject_unknown_keys(
        j.at("kernel"), {"family", "length_scale", "signal_variance", "include_bias"},
        "kernel");
    Json k = j.at("kernel");
    if (!k.contains("family")) k["family"] = "squared-exponential";
    if (!k.contains("length_scale")) k["length_scale"] = cfg.kernel.length_scale;
    if (!k.contains("signal_variance")) k["signal_variance"] = cfg.kernel.signal_variance;
    if (!k.contains("include_bias")) k["include_bias"] = cfg.kernel.include_bias;
    cfg.kernel = kernel_from_json(k);
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    detail::reject_unknown_keys(t,
                                {"max_iterations", "convergence_tol", "jitter",
                                 "irls_max_steps", "irls_tol", "rng_seed",
                                 "deterministic_policy"},
                                "train");
    cfg.train.max_iterations = t.value("max_iterations", cfg.train.max_iterations);
    cfg.train.convergence_tol = t.value("convergence_tol", cfg.train.convergence_tol);
    cfg.train.jitter = t.value("jitter", cfg.train.jitter);
    cfg.train.irls_max_steps = t.value("irls_max_steps", cfg.train.irls_max_steps);
    cfg.train.irls_tol = t.value("irls_tol", cfg.train.irls_tol);
    cfg.train.rng_seed = t.value("rng_seed", cfg.train.rng_seed);
    cfg.train.deterministic_policy =
        t.value("deterministic_policy", cfg.train.deterministic_policy);
  }
  cfg.downsample_fraction = j.value("downsample_fraction", cfg.downsample_fraction);
  cfg.validate();
  return cfg;
}

inline Json run_config_to_json(const RunConfig& cfg) {
  Json j;
  j["kernel"] = kernel_to_json(cfg.kernel);
  Json t;
  t["max_iterations"] = cfg.train.max_iterations;
  t["convergence_tol"] = cfg.train.convergence_tol;
  t["jitter"] = cfg.train.jitter;
  t["irls_max_steps"] = cfg.train.irls_max_steps;
  t["irls_tol"] = cfg.train.irls_tol;
  t["rng_seed"] = cfg.train.rng_seed;
  t["deterministic_policy"] = cfg.train.deterministic_policy;
  j["train"] = std::move(t);
  j["downsample_fraction"] = cfg.downsample_fraction;
  return j;
}

inline SyntheticSceneSpec scene_spec_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"blobs", "label_noise_rate", "rng_seed"}, "scene spec");
  SyntheticSceneSpec spec;
  for (const auto& b : j.at("blobs")) {
    detail::reject_unknown_keys(b, {"class_id", "center", "radius", "count"}, "blob");
    spec.class_blobs.push_back({b.at("class_id").get<int>(),
                                Point3(b.at("center").at(0).get<double>(),
                                       b.at("center").at(1).get<double>(),
                                       b.at("center").at(2).get<double>()),
                                b.at("radius").get<double>(), b.at("count").get<int>()});
  }
  spec.label_noise_rate = j.value("label_noise_rate", 0.0);
  spec.rng_seed = j.value("rng_seed", std::uint64_t{0});
  spec.validate();
  return spec;
}

}  // namespace rvsm
