#include "rvsm/config.hpp"
#include "rvsm/data_io.hpp"
#include "rvsm/metrics.hpp"
#include "rvsm/multiclass.hpp"
#include "rvsm/serialize.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 2;
constexpr int kExitNumericalFailure = 3;

void log_kv(const std::string& key, const std::string& value) {
  std::cerr << key << "=" << value << "\n";
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rvsm::invalid_input("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

rvsm::CloudFormat format_of(const std::string& path, const std::string& override_fmt) {
  if (override_fmt == "csv") return rvsm::CloudFormat::Csv;
  if (override_fmt == "ply") return rvsm::CloudFormat::Ply;
  return path.ends_with(".ply") ? rvsm::CloudFormat::Ply : rvsm::CloudFormat::Csv;
}

std::string sidecar_path(const std::string& cloud_path) {
  std::filesystem::path p(cloud_path);
  p.replace_extension();
  return p.string() + ".classes.json";
}

rvsm::RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return rvsm::RunConfig{};
  return rvsm::run_config_from_json(rvsm::read_json_file(path));
}

// precedence: flag > env RVSM_SEED > config
void apply_seed_overrides(rvsm::RunConfig& cfg, bool seed_set, std::uint64_t seed_flag) {
  if (const char* env = std::getenv("RVSM_SEED"))
    cfg.train.rng_seed = std::strtoull(env, nullptr, 10);
  if (seed_set) cfg.train.rng_seed = seed_flag;
}

std::vector<rvsm::Point3> parse_grid(const std::string& spec) {
  std::vector<std::array<double, 3>> axes;  // min, max, step
  std::stringstream ss(spec);
  std::string axis;
  while (std::getline(ss, axis, ',')) {
    std::stringstream as(axis);
    std::string a, b, c;
    if (!std::getline(as, a, ':') || !std::getline(as, b, ':') || !std::getline(as, c))
      throw rvsm::invalid_input("grid: expected min:max:step per axis");
    axes.push_back({std::stod(a), std::stod(b), std::stod(c)});
    if (!(axes.back()[2] > 0.0)) throw rvsm::invalid_input("grid: step must be > 0");
  }
  if (axes.size() != 3) throw rvsm::invalid_input("grid: need three axes");

  std::vector<std::vector<double>> coords(3);
  for (int d = 0; d < 3; ++d)
    for (double v = axes[d][0]; v <= axes[d][1] + 1e-12; v += axes[d][2])
      coords[d].push_back(v);

  std::vector<rvsm::Point3> points;
  for (double x : coords[0])
    for (double y : coords[1])
      for (double z : coords[2]) points.emplace_back(x, y, z);
  return points;
}

int cmd_gen(const std::string& spec_path, const std::string& out_train,
            const std::string& out_test, const std::string& out_truth,
            const std::string& fmt) {
  const rvsm::SyntheticSceneSpec spec =
      rvsm::scene_spec_from_json(rvsm::read_json_file(spec_path));
  const rvsm::SceneData scene = rvsm::generate_scene(spec);
  rvsm::save_cloud(scene.train, out_train, format_of(out_train, fmt));
  if (!out_test.empty()) rvsm::save_cloud(scene.test, out_test, format_of(out_test, fmt));
  if (!out_truth.empty())
    rvsm::save_cloud(scene.truth, out_truth, format_of(out_truth, fmt));

  const rvsm::ClassDictionary dict = rvsm::ClassDictionary::from_labels(scene.truth.labels);
  rvsm::write_json_file(rvsm::dictionary_to_json(dict), sidecar_path(out_train));
  log_kv("points_train", std::to_string(scene.train.size()));
  log_kv("points_test", std::to_string(scene.test.size()));
  log_kv("classes", std::to_string(dict.n_classes()));
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& cloud_path,
              const std::string& model_out, const std::string& fmt, bool seed_set,
              std::uint64_t seed_flag, double downsample_flag, bool allow_new_classes,
              int jobs) {
  rvsm::RunConfig cfg = load_run_config(config_path);
  apply_seed_overrides(cfg, seed_set, seed_flag);
  if (downsample_flag > 0.0) cfg.downsample_fraction = downsample_flag;
  cfg.validate();

  const std::string cloud_bytes = read_file_bytes(cloud_path);
  rvsm::LabeledPointCloud cloud = rvsm::load_cloud(cloud_path, format_of(cloud_path, fmt));

  rvsm::ClassDictionary dict;
  const std::string sidecar = sidecar_path(cloud_path);
  if (std::filesystem::exists(sidecar)) {
    dict = rvsm::dictionary_from_json(rvsm::read_json_file(sidecar));
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (dict.index_of(cloud.labels[i]) < 0) {
        if (!allow_new_classes)
          throw rvsm::invalid_input("label " + std::to_string(cloud.labels[i]) +
                                    " at point " + std::to_string(i) +
                                    " not in dictionary (use --allow-new-classes)");
        dict.classes.push_back({cloud.labels[i],
                                "class_" + std::to_string(cloud.labels[i]),
                                {128, 128, 128}});
      }
  } else {
    dict = rvsm::ClassDictionary::from_labels(cloud.labels);
  }
  if (dict.n_classes() < 2)
    throw rvsm::degenerate_data("training requires at least two classes");

  if (cfg.downsample_fraction < 1.0)
    cloud = rvsm::downsample_per_class(cloud, cfg.downsample_fraction, cfg.train.rng_seed);
  log_kv("n_train", std::to_string(cloud.size()));
  log_kv("seed", std::to_string(cfg.train.rng_seed));

  rvsm::MapTrainResult result = rvsm::train_map(cloud, dict, cfg.kernel, cfg.train, jobs);
  result.model.provenance.config_hash = fnv1a_hex(rvsm::run_config_to_json(cfg).dump());
  result.model.provenance.source_digest = fnv1a_hex(cloud_bytes);

  bool any_trained = false;
  for (std::size_t k = 0; k < dict.n_classes(); ++k) {
    const auto& bm = result.model.binary_models[k];
    std::ostringstream line;
    line << "class=" << dict.classes[k].id << " pos=" << result.report.positives[k]
         << " neg=" << result.report.negatives[k]
         << " relevance_vectors=" << bm.relevance_vectors.size()
         << " trained=" << (bm.trained ? 1 : 0);
    std::cout << line.str() << "\n";
    any_trained = any_trained || bm.trained;
  }
  if (!any_trained) throw rvsm::numerical_failure("no class could be trained");

  rvsm::write_json_file(rvsm::map_model_to_json(result.model), model_out);
  log_kv("model", model_out);
  return kExitOk;
}

int cmd_query(const std::string& model_path, const std::string& queries_path,
              const std::string& grid, const std::string& out_path,
              const std::string& fmt) {
  const rvsm::SemanticMapModel model =
      rvsm::map_model_from_json(rvsm::read_json_file(model_path));

  std::vector<rvsm::Point3> queries;
  if (!grid.empty()) {
    queries = parse_grid(grid);
  } else if (!queries_path.empty()) {
    queries = rvsm::load_cloud(queries_path, format_of(queries_path, "")).points;
  } else {
    throw rvsm::invalid_input("query: need --queries or --grid");
  }
  log_kv("n_queries", std::to_string(queries.size()));

  const rvsm::MapPosterior posterior = rvsm::query_map(model, queries);
  if (format_of(out_path, fmt) == rvsm::CloudFormat::Ply)
    rvsm::write_posterior_ply(posterior, model.dictionary, out_path);
  else
    rvsm::write_posterior_csv(posterior, model.dictionary, out_path);
  log_kv("output", out_path);
  return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& truth_path,
             const std::string& report_out, int grid_points) {
  const rvsm::SemanticMapModel model =
      rvsm::map_model_from_json(rvsm::read_json_file(model_path));
  const rvsm::LabeledPointCloud truth =
      rvsm::load_cloud(truth_path, format_of(truth_path, ""));
  const rvsm::MapPosterior posterior = rvsm::query_map(model, truth.points);
  const rvsm::EvalReport report =
      rvsm::evaluate_map(posterior, truth, model.dictionary, grid_points);
  std::cout << rvsm::render_report_table(report);
  if (!report_out.empty())
    rvsm::write_json_file(rvsm::eval_report_to_json(report), report_out);
  return kExitOk;
}

int cmd_bench(const std::string& model_path, const std::vector<std::size_t>& sizes,
              bool assert_linear) {
  const rvsm::SemanticMapModel model =
      rvsm::map_model_from_json(rvsm::read_json_file(model_path));

  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::vector<double> per_query_ns;
  for (std::size_t n_q : sizes) {
    std::vector<rvsm::Point3> queries(n_q);
    for (auto& q : queries) q = rvsm::Point3(coord(rng), coord(rng), coord(rng));
    // repeat small batches so every size measures comparable total work
    const std::size_t repeats = std::max<std::size_t>(1, 100000 / std::max<std::size_t>(n_q, 1));
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < repeats; ++r) {
      const rvsm::MapPosterior posterior = rvsm::query_map(model, queries);
      if (posterior.hard_labels.empty()) std::abort();
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() /
        static_cast<double>(repeats * n_q);
    per_query_ns.push_back(ns);
    std::cout << "n_q=" << n_q << " per_query_ns=" << ns << "\n";
  }

  if (assert_linear && per_query_ns.size() > 1) {
    double mean = 0.0;
    for (double v : per_query_ns) mean += v;
    mean /= static_cast<double>(per_query_ns.size());
    for (double v : per_query_ns)
      if (std::abs(v - mean) > 0.25 * mean) {
        log_kv("linearity", "violated");
        return kExitNumericalFailure;
      }
    log_kv("linearity", "ok");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse Bayesian relevance vector semantic mapping"};
  app.require_subcommand(1);

  std::string config_path, cloud_path, model_path, model_out, out_path, report_out;
  std::string queries_path, grid, spec_path, out_train, out_test, out_truth, fmt;
  std::uint64_t seed_flag = 0;
  double downsample_flag = 0.0;
  bool allow_new_classes = false, assert_linear = false;
  int jobs = 0, grid_points = 99;
  std::vector<std::size_t> sizes{1000, 10000, 100000};

  auto* train = app.add_subcommand("train", "Train a semantic map from a labeled cloud");
  train->add_option("--config", config_path, "Run config JSON");
  train->add_option("--cloud", cloud_path, "Labeled point cloud (csv or ply)")->required();
  train->add_option("--out", model_out, "Output model JSON")->required();
  train->add_option("--format", fmt, "Cloud format override: csv|ply");
  auto* seed_opt = train->add_option("--seed", seed_flag, "RNG seed override");
  train->add_option("--downsample", downsample_flag, "Per-class downsample fraction");
  train->add_flag("--allow-new-classes", allow_new_classes,
                  "Extend the dictionary with unseen labels");
  train->add_option("--jobs", jobs, "Parallel class-training degree");

  auto* query = app.add_subcommand("query", "Query a trained map");
  query->add_option("--model", model_path, "Model JSON")->required();
  query->add_option("--queries", queries_path, "Query points file");
  query->add_option("--grid", grid, "Axis-aligned grid xmin:xmax:step,y...,z...");
  query->add_option("--out", out_path, "Output file")->required();
  query->add_option("--format", fmt, "Output format: csv|ply");

  auto* eval = app.add_subcommand("eval", "Evaluate a map against ground truth");
  eval->add_option("--model", model_path, "Model JSON")->required();
  eval->add_option("--truth", cloud_path, "Ground-truth labeled cloud")->required();
  eval->add_option("--report", report_out, "Output report JSON");
  eval->add_option("--grid-points", grid_points, "Sensitivity threshold grid size");

  auto* bench = app.add_subcommand("bench", "Benchmark query cost over a size ladder");
  bench->add_option("--model", model_path, "Model JSON")->required();
  bench->add_option("--sizes", sizes, "Query counts to time");
  bench->add_flag("--assert", assert_linear, "Fail unless per-query cost is flat (+/-25%)");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic labeled scene");
  gen->add_option("--spec", spec_path, "Scene spec JSON")->required();
  gen->add_option("--out-train", out_train, "Training cloud output")->required();
  gen->add_option("--out-test", out_test, "Held-out test cloud output");
  gen->add_option("--out-truth", out_truth, "Clean-label truth cloud output");
  gen->add_option("--format", fmt, "Cloud format: csv|ply");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train)
      return cmd_train(config_path, cloud_path, model_out, fmt, seed_opt->count() > 0,
                       seed_flag, downsample_flag, allow_new_classes, jobs);
    if (*query) return cmd_query(model_path, queries_path, grid, out_path, fmt);
    if (*eval) return cmd_eval(model_path, cloud_path, report_out, grid_points);
    if (*bench) return cmd_bench(model_path, sizes, assert_linear);
    if (*gen) return cmd_gen(spec_path, out_train, out_test, out_truth, fmt);
  } catch (const rvsm::numerical_failure& e) {
    log_kv("error", e.what());
    return kExitNumericalFailure;
  } catch (const std::exception& e) {
    log_kv("error", e.what());
    return kExitInputError;
  }
  return kExitOk;
}
