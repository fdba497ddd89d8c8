#pragma once

#include "rvsm/common.hpp"
#include "rvsm/data_io.hpp"
#include "rvsm/sparse_bayes.hpp"

#include <algorithm>
#include <array>
#include <future>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace rvsm {

inline constexpr double kUntrainableFloor = 1e-6;

struct ClassDictionary {
  struct Entry {
    int id;
    std::string name;
    std::array<int, 3> color;
  };
  std::vector<Entry> classes;

  std::size_t n_classes() const { return classes.size(); }

  int index_of(int class_id) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i].id == class_id) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    if (classes.size() < 2) throw invalid_input("ClassDictionary: need >= 2 classes");
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (std::size_t j = i + 1; j < classes.size(); ++j)
        if (classes[i].id == classes[j].id)
          throw invalid_input("ClassDictionary: duplicate class id " +
                              std::to_string(classes[i].id));
  }

  static ClassDictionary from_labels(const std::vector<int>& labels) {
    static constexpr std::array<std::array<int, 3>, 8> palette = {{{230, 25, 75},
                                                                   {60, 180, 75},
                                                                   {0, 130, 200},
                                                                   {245, 130, 48},
                                                                   {145, 30, 180},
                                                                   {255, 225, 25},
                                                                   {70, 240, 240},
                                                                   {128, 128, 128}}};
    std::vector<int> ids(labels);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    ClassDictionary dict;
    for (std::size_t i = 0; i < ids.size(); ++i)
      dict.classes.push_back(
          {ids[i], "class_" + std::to_string(ids[i]), palette[i % palette.size()]});
    return dict;
  }
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string source_digest;
};

/// One-vs-rest bundle of binary models; immutable after training.
struct SemanticMapModel {
  std::vector<BinaryRvmModel> binary_models;  // aligned with dictionary order
  ClassDictionary dictionary;
  KernelSpec kernel;
  Provenance provenance;
};

struct MapPosterior {
  std::vector<Point3> points;
  Mat class_probs;              // n_q x n_c, rows sum to 1
  std::vector<int> hard_labels; // class ids, argmax per row (ties -> lowest index)
};

struct OneVsRestSplit {
  TrainingSet set;
  int positives = 0;
  int negatives = 0;
};

inline OneVsRestSplit split_one_vs_rest(const LabeledPointCloud& cloud, int class_id) {
  cloud.validate();
  OneVsRestSplit split;
  split.set.inputs = cloud.points;
  split.set.targets.resize(static_cast<Eigen::Index>(cloud.size()));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const bool pos = cloud.labels[i] == class_id;
    split.set.targets(static_cast<Eigen::Index>(i)) = pos ? 1.0 : 0.0;
    (pos ? split.positives : split.negatives)++;
  }
  if (split.positives == 0)
    throw degenerate_data("split_one_vs_rest: class " + std::to_string(class_id) +
                          " not present in cloud");
  return split;
}

struct MapTrainReport {
  std::vector<TrainReport> per_class;      // aligned with dictionary order
  std::vector<int> positives, negatives;
  std::vector<bool> trainable;
};

struct MapTrainResult {
  SemanticMapModel model;
  MapTrainReport report;
};

/// Trains one binary model per dictionary class. Per-class seeds derive from
/// the class id so results are invariant to dictionary order.
inline MapTrainResult train_map(const LabeledPointCloud& cloud, const ClassDictionary& dict,
                                const KernelSpec& kernel, const TrainConfig& cfg,
                                int jobs = 0) {
  cloud.validate();
  dict.validate();
  kernel.validate();
  const std::size_t n_c = dict.n_classes();
  if (jobs <= 0) jobs = static_cast<int>(n_c);

  MapTrainResult result;
  result.model.dictionary = dict;
  result.model.kernel = kernel;
  result.model.provenance.seed = cfg.rng_seed;
  result.model.binary_models.resize(n_c);
  result.report.per_class.resize(n_c);
  result.report.positives.assign(n_c, 0);
  result.report.negatives.assign(n_c, 0);
  result.report.trainable.assign(n_c, false);

  auto train_one = [&](std::size_t k) {
    const int class_id = dict.classes[k].id;
    TrainConfig class_cfg = cfg;
    class_cfg.rng_seed = mix_seed(cfg.rng_seed, static_cast<std::uint64_t>(class_id));
    try {
      OneVsRestSplit split = split_one_vs_rest(cloud, class_id);
      result.report.positives[k] = split.positives;
      result.report.negatives[k] = split.negatives;
      TrainResult tr = train_binary(split.set, kernel, class_cfg, class_id);
      result.model.binary_models[k] = std::move(tr.model);
      result.report.per_class[k] = std::move(tr.report);
      result.report.trainable[k] = true;
    } catch (const std::exception&) {
      BinaryRvmModel untrained;
      untrained.kernel = kernel;
      untrained.class_id = class_id;
      untrained.trained = false;
      result.model.binary_models[k] = std::move(untrained);
    }
  };

  if (jobs <= 1 || n_c <= 1) {
    for (std::size_t k = 0; k < n_c; ++k) train_one(k);
  } else {
    std::vector<std::future<void>> futures;
    for (std::size_t k = 0; k < n_c; ++k)
      futures.push_back(std::async(std::launch::async, train_one, k));
    for (auto& f : futures) f.get();
  }
  return result;
}

inline MapPosterior query_map(const SemanticMapModel& model,
                              const std::vector<Point3>& queries) {
  const std::size_t n_c = model.dictionary.n_classes();
  const std::size_t n_q = queries.size();
  MapPosterior posterior;
  posterior.points = queries;
  posterior.class_probs.resize(static_cast<Eigen::Index>(n_q), static_cast<Eigen::Index>(n_c));
  posterior.hard_labels.resize(n_q);
  for (std::size_t i = 0; i < n_q; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n_c; ++k) {
      const BinaryRvmModel& bm = model.binary_models[k];
      const double p = bm.trained ? predict_binary(bm, queries[i]) : kUntrainableFloor;
      posterior.class_probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = p;
      sum += p;
    }
    sum = std::max(sum, static_cast<double>(n_c) * kUntrainableFloor);
    int best = 0;
    for (std::size_t k = 0; k < n_c; ++k) {
      auto& cell = posterior.class_probs(static_cast<Eigen::Index>(i),
                                         static_cast<Eigen::Index>(k));
      cell /= sum;
      if (cell > posterior.class_probs(static_cast<Eigen::Index>(i), best)) {
        best = static_cast<int>(k);
      }
    }
    posterior.hard_labels[i] = model.dictionary.classes[best].id;
  }
  return posterior;
}

/// Keeps ceil(fraction * count) points per class (at least 1), uniformly at
/// random under the seed, preserving original point order.
inline LabeledPointCloud downsample_per_class(const LabeledPointCloud& cloud, double fraction,
                                              std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw invalid_input("downsample_per_class: fraction must be in (0, 1]");
  cloud.validate();

  std::vector<char> keep(cloud.size(), 0);
  for (int class_id : cloud.present_classes()) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.labels[i] == class_id) idx.push_back(i);
    const std::size_t n_keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size()))));
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(class_id)));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < std::min(n_keep, idx.size()); ++i) keep[idx[i]] = 1;
  }

  LabeledPointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!keep[i]) continue;
    out.points.push_back(cloud.points[i]);
    out.labels.push_back(cloud.labels[i]);
    out.weights.push_back(i < cloud.weights.size() ? cloud.weights[i] : 1.0);
  }
  return out;
}

}  // namespace rvsm
