#include "rvsm/multiclass.hpp"

#include "rvsm/metrics.hpp"
#include "rvsm/serialize.hpp"
#include "scene_fixtures.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace rvsm;

namespace {

ClassDictionary three_class_dict() {
  ClassDictionary dict;
  dict.classes = {{0, "floor", {100, 100, 100}},
                  {1, "wall", {200, 50, 50}},
                  {2, "furniture", {50, 50, 200}}};
  return dict;
}

KernelSpec bench_kernel() {
  KernelSpec kernel;
  kernel.length_scale = 0.5;
  return kernel;
}

}  // namespace

TEST_CASE("split_one_vs_rest builds binary targets") {
  LabeledPointCloud cloud;
  cloud.points = {Point3(0, 0, 0), Point3(1, 0, 0), Point3(2, 0, 0)};
  cloud.labels = {7, 9, 7};

  const OneVsRestSplit a = split_one_vs_rest(cloud, 7);
  CHECK(a.set.targets(0) == 1.0);
  CHECK(a.set.targets(1) == 0.0);
  CHECK(a.set.targets(2) == 1.0);
  CHECK(a.positives == 2);
  CHECK(a.negatives == 1);

  const OneVsRestSplit b = split_one_vs_rest(cloud, 9);
  CHECK(b.set.targets(0) == 0.0);
  CHECK(b.set.targets(1) == 1.0);
  CHECK(b.set.targets(2) == 0.0);
  CHECK(a.positives + a.negatives == static_cast<int>(cloud.size()));

  CHECK_THROWS_AS(split_one_vs_rest(cloud, 3), degenerate_data);
}

TEST_CASE("train_map separates a three-class scene") {
  const SceneData scene = generate_scene(fixtures::three_class_spec(60, 0.0, 21));
  TrainConfig cfg;
  cfg.rng_seed = 4;
  const MapTrainResult result =
      train_map(scene.train, three_class_dict(), bench_kernel(), cfg);
  REQUIRE(result.model.binary_models.size() == 3);

  for (std::size_t k = 0; k < 3; ++k) {
    REQUIRE(result.model.binary_models[k].trained);
    Vec scores(static_cast<Eigen::Index>(scene.test.size()));
    Vec truth(static_cast<Eigen::Index>(scene.test.size()));
    for (std::size_t i = 0; i < scene.test.size(); ++i) {
      scores(static_cast<Eigen::Index>(i)) =
          predict_binary(result.model.binary_models[k], scene.test.points[i]);
      truth(static_cast<Eigen::Index>(i)) =
          scene.test.labels[i] == static_cast<int>(k) ? 1.0 : 0.0;
    }
    CHECK(auc(scores, truth) > 0.99);
  }
}

TEST_CASE("two-class map agrees with the thresholded binary classifier") {
  const SceneData scene = generate_scene(fixtures::two_cluster_spec(25, 31));
  ClassDictionary dict;
  dict.classes = {{0, "a", {255, 0, 0}}, {1, "b", {0, 255, 0}}};
  TrainConfig cfg;
  cfg.rng_seed = 12;
  cfg.convergence_tol = 1e-9;
  cfg.irls_tol = 1e-10;
  cfg.max_iterations = 5000;
  const MapTrainResult map = train_map(scene.train, dict, bench_kernel(), cfg);
  const MapPosterior posterior = query_map(map.model, scene.test.points);

  TrainConfig binary_cfg = cfg;
  binary_cfg.rng_seed = mix_seed(cfg.rng_seed, 1);
  const TrainResult binary =
      train_binary(fixtures::binary_from_cloud(scene.train, 1), bench_kernel(), binary_cfg, 1);

  for (std::size_t i = 0; i < scene.test.size(); ++i) {
    const int expected = predict_binary(binary.model, scene.test.points[i]) > 0.5 ? 1 : 0;
    CHECK(posterior.hard_labels[i] == expected);
  }
}

TEST_CASE("train_map with the same seed serializes identically") {
  const SceneData scene = generate_scene(fixtures::three_class_spec(30, 0.1, 8));
  TrainConfig cfg;
  cfg.rng_seed = 19;
  const MapTrainResult a = train_map(scene.train, three_class_dict(), bench_kernel(), cfg);
  const MapTrainResult b = train_map(scene.train, three_class_dict(), bench_kernel(), cfg);
  CHECK(map_model_to_json(a.model).dump() == map_model_to_json(b.model).dump());
}

TEST_CASE("parallel and sequential training agree") {
  const SceneData scene = generate_scene(fixtures::three_class_spec(30, 0.1, 9));
  TrainConfig cfg;
  cfg.rng_seed = 23;
  const MapTrainResult seq =
      train_map(scene.train, three_class_dict(), bench_kernel(), cfg, 1);
  const MapTrainResult par =
      train_map(scene.train, three_class_dict(), bench_kernel(), cfg, 3);
  CHECK(map_model_to_json(seq.model).dump() == map_model_to_json(par.model).dump());
}

TEST_CASE("query_map rows normalize and argmax breaks ties low") {
  const SceneData scene = generate_scene(fixtures::three_class_spec(40, 0.0, 14));
  TrainConfig cfg;
  cfg.rng_seed = 6;
  const MapTrainResult map = train_map(scene.train, three_class_dict(), bench_kernel(), cfg);

  std::vector<Point3> queries = scene.test.points;
  queries.emplace_back(50.0, 50.0, 50.0);  // far from everything
  const MapPosterior posterior = query_map(map.model, queries);
  REQUIRE(posterior.class_probs.rows() == static_cast<Eigen::Index>(queries.size()));
  for (Eigen::Index i = 0; i < posterior.class_probs.rows(); ++i) {
    CHECK(posterior.class_probs.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
    Eigen::Index argmax = 0;
    posterior.class_probs.row(i).maxCoeff(&argmax);
    CHECK(posterior.class_probs(i, argmax) ==
          posterior.class_probs(
              i, map.model.dictionary.index_of(posterior.hard_labels[i])));
    for (Eigen::Index k = 0; k < 3; ++k) {
      CHECK(posterior.class_probs(i, k) >= 0.0);
      CHECK(posterior.class_probs(i, k) <= 1.0);
    }
  }

  // a deep class point gets its own label with margin
  const MapPosterior deep = query_map(map.model, {Point3(0, 0, 0)});
  CHECK(deep.hard_labels[0] == 0);
  CHECK(deep.class_probs(0, 0) > 1.0 / 3.0 + 0.2);
}

TEST_CASE("query_map on an empty list returns an empty posterior") {
  const SceneData scene = generate_scene(fixtures::two_cluster_spec(15, 2));
  ClassDictionary dict;
  dict.classes = {{0, "a", {1, 2, 3}}, {1, "b", {4, 5, 6}}};
  TrainConfig cfg;
  cfg.rng_seed = 1;
  const MapTrainResult map = train_map(scene.train, dict, bench_kernel(), cfg);
  const MapPosterior posterior = query_map(map.model, {});
  CHECK(posterior.points.empty());
  CHECK(posterior.class_probs.rows() == 0);
  CHECK(posterior.hard_labels.empty());
}

TEST_CASE("permuting the dictionary permutes columns with identical probabilities") {
  const SceneData scene = generate_scene(fixtures::three_class_spec(30, 0.0, 17));
  TrainConfig cfg;
  cfg.rng_seed = 29;
  ClassDictionary dict = three_class_dict();
  ClassDictionary permuted;
  permuted.classes = {dict.classes[2], dict.classes[0], dict.classes[1]};

  const MapTrainResult a = train_map(scene.train, dict, bench_kernel(), cfg);
  const MapTrainResult b = train_map(scene.train, permuted, bench_kernel(), cfg);
  const MapPosterior pa = query_map(a.model, scene.test.points);
  const MapPosterior pb = query_map(b.model, scene.test.points);

  // normalization sums the per-class scores in dictionary order, so the
  // normalized probabilities can differ by summation rounding only
  for (Eigen::Index i = 0; i < pa.class_probs.rows(); ++i) {
    CHECK(pa.class_probs(i, 0) == Catch::Approx(pb.class_probs(i, 1)).margin(1e-12));
    CHECK(pa.class_probs(i, 1) == Catch::Approx(pb.class_probs(i, 2)).margin(1e-12));
    CHECK(pa.class_probs(i, 2) == Catch::Approx(pb.class_probs(i, 0)).margin(1e-12));
    CHECK(pa.hard_labels[i] == pb.hard_labels[i]);
  }
}

TEST_CASE("a class missing from the cloud becomes untrainable with floor probability") {
  const SceneData scene = generate_scene(fixtures::two_cluster_spec(20, 3));
  ClassDictionary dict;
  dict.classes = {{0, "a", {1, 1, 1}}, {1, "b", {2, 2, 2}}, {5, "ghost", {9, 9, 9}}};
  TrainConfig cfg;
  cfg.rng_seed = 2;
  const MapTrainResult map = train_map(scene.train, dict, bench_kernel(), cfg);
  CHECK_FALSE(map.model.binary_models[2].trained);
  const MapPosterior posterior = query_map(map.model, {Point3(0, 0, 0), Point3(2, 0, 0)});
  for (int i = 0; i < 2; ++i) {
    CHECK(posterior.hard_labels[i] != 5);
    CHECK(posterior.class_probs(i, 2) < 1e-3);
    CHECK(posterior.class_probs.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("probabilities vary continuously on a refined grid") {
  const SceneData scene = generate_scene(fixtures::two_cluster_spec(40, 23));
  ClassDictionary dict;
  dict.classes = {{0, "a", {1, 1, 1}}, {1, "b", {2, 2, 2}}};
  TrainConfig cfg;
  cfg.rng_seed = 31;
  const MapTrainResult map = train_map(scene.train, dict, bench_kernel(), cfg);

  const double coarse_step = 0.2, fine_step = 0.1;
  auto probs_on_line = [&](double step) {
    std::vector<double> p;
    for (double x = -0.5; x <= 2.5 + 1e-9; x += step)
      p.push_back(query_map(map.model, {Point3(x, 0, 0)}).class_probs(0, 0));
    return p;
  };
  const std::vector<double> coarse = probs_on_line(coarse_step);
  const std::vector<double> fine = probs_on_line(fine_step);
  double coarse_max_diff = 0.0, fine_max_diff = 0.0;
  for (std::size_t i = 1; i < coarse.size(); ++i)
    coarse_max_diff = std::max(coarse_max_diff, std::abs(coarse[i] - coarse[i - 1]));
  for (std::size_t i = 1; i < fine.size(); ++i)
    fine_max_diff = std::max(fine_max_diff, std::abs(fine[i] - fine[i - 1]));
  CHECK(fine_max_diff <= coarse_max_diff + 0.1);
}

TEST_CASE("downsample_per_class keeps the ceiling count per class") {
  LabeledPointCloud cloud;
  for (int i = 0; i < 200; ++i) {
    cloud.points.emplace_back(i, 0, 0);
    cloud.labels.push_back(0);
    cloud.weights.push_back(1.0);
  }
  for (int i = 0; i < 55; ++i) {
    cloud.points.emplace_back(i, 1, 0);
    cloud.labels.push_back(1);
    cloud.weights.push_back(1.0);
  }

  const LabeledPointCloud ds = downsample_per_class(cloud, 0.01, 5);
  std::size_t c0 = 0, c1 = 0;
  for (int label : ds.labels) (label == 0 ? c0 : c1)++;
  CHECK(c0 == 2);  // ceil(0.01 * 200)
  CHECK(c1 == 1);  // ceil(0.01 * 55)

  // identity at fraction 1
  const LabeledPointCloud full = downsample_per_class(cloud, 1.0, 5);
  CHECK(full.size() == cloud.size());

  // retained order is stable
  double prev = -1.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != 0) continue;
    CHECK(ds.points[i].x() > prev);
    prev = ds.points[i].x();
  }

  CHECK_THROWS_AS(downsample_per_class(cloud, 0.0, 5), invalid_input);
  CHECK_THROWS_AS(downsample_per_class(cloud, 1.5, 5), invalid_input);
}

TEST_CASE("downsample fraction is honored within ceiling rounding") {
  const SceneData scene = generate_scene(fixtures::three_class_spec(150, 0.0, 3));
  const double fraction = 0.1;
  const LabeledPointCloud ds = downsample_per_class(scene.train, fraction, 11);
  for (int class_id : scene.train.present_classes()) {
    std::size_t total = 0, kept = 0;
    for (std::size_t i = 0; i < scene.train.size(); ++i)
      if (scene.train.labels[i] == class_id) ++total;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == class_id) ++kept;
    CHECK(kept == static_cast<std::size_t>(std::ceil(fraction * total)));
  }
}

TEST_CASE("binary model serialization round trip is identity") {
  const SceneData scene = generate_scene(fixtures::two_cluster_spec(20, 37));
  TrainConfig cfg;
  cfg.rng_seed = 41;
  const TrainResult result =
      train_binary(fixtures::binary_from_cloud(scene.train, 1), bench_kernel(), cfg, 1);
  const Json j = binary_model_to_json(result.model);
  const BinaryRvmModel back = binary_model_from_json(j);
  CHECK(back.class_id == result.model.class_id);
  CHECK(back.kernel == result.model.kernel);
  CHECK(back.relevance_vectors.size() == result.model.relevance_vectors.size());
  CHECK((back.weights - result.model.weights).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.covariance - result.model.covariance).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(binary_model_to_json(back).dump() == j.dump());
}
