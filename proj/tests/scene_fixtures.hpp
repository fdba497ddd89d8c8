#pragma once

#include "rvsm/data_io.hpp"
#include "rvsm/multiclass.hpp"
#include "rvsm/sparse_bayes.hpp"

#include <random>
#include <vector>

namespace fixtures {

/// Two well-separated clusters, class ids 0 and 1.
inline rvsm::SyntheticSceneSpec two_cluster_spec(int count = 50, std::uint64_t seed = 7) {
  rvsm::SyntheticSceneSpec spec;
  spec.class_blobs = {{0, rvsm::Point3(0.0, 0.0, 0.0), 0.4, count},
                      {1, rvsm::Point3(2.0, 0.0, 0.0), 0.4, count}};
  spec.rng_seed = seed;
  return spec;
}

/// The standard three-blob benchmark scene.
inline rvsm::SyntheticSceneSpec three_class_spec(int count = 300, double noise = 0.1,
                                                 std::uint64_t seed = 42) {
  rvsm::SyntheticSceneSpec spec;
  spec.class_blobs = {{0, rvsm::Point3(0.0, 0.0, 0.0), 0.5, count},
                      {1, rvsm::Point3(2.0, 0.0, 0.0), 0.5, count},
                      {2, rvsm::Point3(1.0, 1.8, 0.0), 0.5, count}};
  spec.label_noise_rate = noise;
  spec.rng_seed = seed;
  return spec;
}

inline rvsm::TrainingSet binary_from_cloud(const rvsm::LabeledPointCloud& cloud,
                                           int positive_class) {
  rvsm::TrainingSet ts;
  ts.inputs = cloud.points;
  ts.targets.resize(static_cast<Eigen::Index>(cloud.size()));
  for (std::size_t i = 0; i < cloud.size(); ++i)
    ts.targets(static_cast<Eigen::Index>(i)) = cloud.labels[i] == positive_class ? 1.0 : 0.0;
  return ts;
}

/// Random small binary instance for oracle comparisons; labels follow the
/// sign of the x coordinate so the two classes are spatially separable.
inline rvsm::TrainingSet random_instance(int n_t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  rvsm::TrainingSet ts;
  ts.targets.resize(n_t);
  for (int i = 0; i < n_t; ++i) {
    ts.inputs.emplace_back(coord(rng), coord(rng), coord(rng));
    ts.targets(i) = ts.inputs.back().x() > 0.0 ? 1.0 : 0.0;
  }
  // guarantee both classes by mirroring the first point if needed
  if (ts.targets.minCoeff() == ts.targets.maxCoeff()) {
    ts.inputs[0].x() = -ts.inputs[0].x();
    ts.targets(0) = 1.0 - ts.targets(0);
  }
  return ts;
}

}  // namespace fixtures
