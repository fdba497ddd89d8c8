#pragma once

#include "rvsm/common.hpp"
#include "rvsm/data_io.hpp"
#include "rvsm/kernel.hpp"
#include "rvsm/metrics.hpp"
#include "rvsm/multiclass.hpp"
#include "rvsm/sparse_bayes.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace rvsm {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

inline Json kernel_to_json(const KernelSpec& spec) {
  Json j;
  j["family"] = "squared-exponential";
  j["length_scale"] = spec.length_scale;
  j["signal_variance"] = spec.signal_variance;
  j["include_bias"] = spec.include_bias;
  return j;
}

inline KernelSpec kernel_from_json(const Json& j) {
  KernelSpec spec;
  const std::string family = j.at("family").get<std::string>();
  if (family != "squared-exponential")
    throw invalid_input("kernel: unknown family " + family);
  spec.family = KernelFamily::SquaredExponential;
  spec.length_scale = j.at("length_scale").get<double>();
  spec.signal_variance = j.at("signal_variance").get<double>();
  spec.include_bias = j.at("include_bias").get<bool>();
  spec.validate();
  return spec;
}

inline Json binary_model_to_json(const BinaryRvmModel& model) {
  Json j;
  j["version"] = kModelFormatVersion;
  j["class_id"] = model.class_id;
  j["kernel"] = kernel_to_json(model.kernel);
  Json rvs = Json::array();
  for (const auto& rv : model.relevance_vectors)
    rvs.push_back(Json::array({rv.x(), rv.y(), rv.z()}));
  j["relevance_vectors"] = std::move(rvs);
  Json weights = Json::array();
  for (Eigen::Index i = 0; i < model.weights.size(); ++i) weights.push_back(model.weights(i));
  j["weights"] = std::move(weights);
  // row-major lower triangle
  Json cov = Json::array();
  for (Eigen::Index r = 0; r < model.covariance.rows(); ++r)
    for (Eigen::Index c = 0; c <= r; ++c) cov.push_back(model.covariance(r, c));
  j["covariance"] = std::move(cov);
  j["trained_flag"] = model.trained;
  return j;
}

inline BinaryRvmModel binary_model_from_json(const Json& j) {
  if (j.at("version").get<int>() != kModelFormatVersion)
    throw invalid_input("model: unsupported format version");
  BinaryRvmModel model;
  model.class_id = j.at("class_id").get<int>();
  model.kernel = kernel_from_json(j.at("kernel"));
  for (const auto& rv : j.at("relevance_vectors"))
    model.relevance_vectors.emplace_back(rv.at(0).get<double>(), rv.at(1).get<double>(),
                                         rv.at(2).get<double>());
  const auto& weights = j.at("weights");
  model.weights.resize(static_cast<Eigen::Index>(weights.size()));
  for (std::size_t i = 0; i < weights.size(); ++i)
    model.weights(static_cast<Eigen::Index>(i)) = weights[i].get<double>();
  const Eigen::Index n = model.weights.size();
  const auto& cov = j.at("covariance");
  if (cov.size() != static_cast<std::size_t>(n * (n + 1) / 2))
    throw invalid_input("model: covariance triangle size mismatch");
  model.covariance.resize(n, n);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c <= r; ++c) {
      model.covariance(r, c) = cov[k++].get<double>();
      model.covariance(c, r) = model.covariance(r, c);
    }
  model.trained = j.at("trained_flag").get<bool>();
  return model;
}

inline Json dictionary_to_json(const ClassDictionary& dict) {
  Json arr = Json::array();
  for (const auto& entry : dict.classes) {
    Json e;
    e["id"] = entry.id;
    e["name"] = entry.name;
    e["color"] = Json::array({entry.color[0], entry.color[1], entry.color[2]});
    arr.push_back(std::move(e));
  }
  return arr;
}

inline ClassDictionary dictionary_from_json(const Json& arr) {
  ClassDictionary dict;
  for (const auto& e : arr)
    dict.classes.push_back({e.at("id").get<int>(), e.at("name").get<std::string>(),
                            {e.at("color").at(0).get<int>(), e.at("color").at(1).get<int>(),
                             e.at("color").at(2).get<int>()}});
  dict.validate();
  return dict;
}

inline Json map_model_to_json(const SemanticMapModel& model) {
  Json j;
  j["version"] = kModelFormatVersion;
  j["kernel"] = kernel_to_json(model.kernel);
  j["dictionary"] = dictionary_to_json(model.dictionary);
  Json prov;
  prov["seed"] = model.provenance.seed;
  prov["config_hash"] = model.provenance.config_hash;
  prov["source_digest"] = model.provenance.source_digest;
  j["provenance"] = std::move(prov);
  Json models = Json::array();
  for (const auto& bm : model.binary_models) models.push_back(binary_model_to_json(bm));
  j["models"] = std::move(models);
  return j;
}

inline SemanticMapModel map_model_from_json(const Json& j) {
  if (j.at("version").get<int>() != kModelFormatVersion)
    throw invalid_input("model: unsupported format version");
  SemanticMapModel model;
  model.kernel = kernel_from_json(j.at("kernel"));
  model.dictionary = dictionary_from_json(j.at("dictionary"));
  model.provenance.seed = j.at("provenance").at("seed").get<std::uint64_t>();
  model.provenance.config_hash = j.at("provenance").at("config_hash").get<std::string>();
  model.provenance.source_digest = j.at("provenance").at("source_digest").get<std::string>();
  for (const auto& m : j.at("models"))
    model.binary_models.push_back(binary_model_from_json(m));
  if (model.binary_models.size() != model.dictionary.n_classes())
    throw invalid_input("model: model count does not match dictionary");
  return model;
}

inline void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw invalid_input(std::string("JSON parse error in ") + path + ": " + e.what());
  }
}

inline Json eval_report_to_json(const EvalReport& report) {
  Json j;
  Json per_class = Json::array();
  for (const auto& row : report.per_class) {
    Json e;
    e["class_id"] = row.class_id;
    e["name"] = row.name;
    if (row.auc) e["auc"] = *row.auc; else e["auc"] = nullptr;
    if (row.mean_sensitivity) e["mean_sensitivity"] = *row.mean_sensitivity;
    else e["mean_sensitivity"] = nullptr;
    e["support"] = row.support;
    per_class.push_back(std::move(e));
  }
  j["per_class"] = std::move(per_class);
  j["averages"] = Json{{"auc", report.average_auc},
                       {"sensitivity", report.average_sensitivity}};
  j["threshold_grid"] = "uniform interior grid, " +
                        std::to_string(report.threshold_grid_points) +
                        " points in (0,1)";
  return j;
}

/// CSV export: x,y,z,p_1..p_nc,label
inline void write_posterior_csv(const MapPosterior& posterior, const ClassDictionary& dict,
                                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("cannot open " + path + " for writing");
  out << "x,y,z";
  for (std::size_t k = 0; k < dict.n_classes(); ++k) out << ",p_" << dict.classes[k].id;
  out << ",label\n";
  for (std::size_t i = 0; i < posterior.points.size(); ++i) {
    out << detail::fmt_double(posterior.points[i].x()) << ','
        << detail::fmt_double(posterior.points[i].y()) << ','
        << detail::fmt_double(posterior.points[i].z());
    for (Eigen::Index k = 0; k < posterior.class_probs.cols(); ++k)
      out << ',' << detail::fmt_double(posterior.class_probs(static_cast<Eigen::Index>(i), k));
    out << ',' << posterior.hard_labels[i] << '\n';
  }
}

/// PLY export with per-vertex dictionary color and label scalar.
inline void write_posterior_ply(const MapPosterior& posterior, const ClassDictionary& dict,
                                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("cannot open " + path + " for writing");
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << posterior.points.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property int label\nend_header\n";
  for (std::size_t i = 0; i < posterior.points.size(); ++i) {
    double xyz[3] = {posterior.points[i].x(), posterior.points[i].y(),
                     posterior.points[i].z()};
    const int label = posterior.hard_labels[i];
    const int idx = dict.index_of(label);
    unsigned char rgb[3] = {0, 0, 0};
    if (idx >= 0)
      for (int c = 0; c < 3; ++c)
        rgb[c] = static_cast<unsigned char>(dict.classes[idx].color[c]);
    std::int32_t label32 = label;
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
    out.write(reinterpret_cast<const char*>(&label32), sizeof(label32));
  }
}

}  // namespace rvsm
