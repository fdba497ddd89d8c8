#pragma once

#include "rvsm/common.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace rvsm {

struct LabeledPointCloud {
  std::vector<Point3> points;
  std::vector<int> labels;
  std::vector<double> weights;  // reserved; defaults to 1

  std::size_t size() const { return points.size(); }

  void validate() const {
    if (points.size() != labels.size())
      throw invalid_input("LabeledPointCloud: points/labels length mismatch");
    for (std::size_t i = 0; i < points.size(); ++i)
      if (!finite(points[i]))
        throw invalid_input("LabeledPointCloud: non-finite point at index " +
                            std::to_string(i));
  }

  std::vector<int> present_classes() const {
    std::vector<int> ids(labels);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }
};

enum class CloudFormat { Csv, Ply };

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok, std::size_t line, const char* col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    if (!std::isfinite(v))
      throw invalid_input("load_cloud: non-finite " + std::string(col) + " on line " +
                          std::to_string(line));
    return v;
  } catch (const invalid_input&) {
    throw;
  } catch (const std::exception&) {
    throw invalid_input("load_cloud: cannot parse " + std::string(col) + " on line " +
                        std::to_string(line));
  }
}

}  // namespace detail

inline void save_cloud_csv(const LabeledPointCloud& cloud, const std::string& path) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("save_cloud: cannot open " + path);
  out << "x,y,z,label\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << detail::fmt_double(cloud.points[i].x()) << ','
        << detail::fmt_double(cloud.points[i].y()) << ','
        << detail::fmt_double(cloud.points[i].z()) << ',' << cloud.labels[i] << '\n';
  }
}

inline LabeledPointCloud load_cloud_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("load_cloud: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw invalid_input("load_cloud: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,z,label")
    throw invalid_input("load_cloud: expected header x,y,z,label in " + path);

  LabeledPointCloud cloud;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tx, ty, tz, tl;
    if (!std::getline(ss, tx, ',') || !std::getline(ss, ty, ',') ||
        !std::getline(ss, tz, ',') || !std::getline(ss, tl))
      throw invalid_input("load_cloud: malformed row on line " + std::to_string(lineno));
    Point3 p(detail::parse_double(tx, lineno, "x"), detail::parse_double(ty, lineno, "y"),
             detail::parse_double(tz, lineno, "z"));
    int label;
    try {
      label = std::stoi(tl);
    } catch (const std::exception&) {
      throw invalid_input("load_cloud: cannot parse label on line " + std::to_string(lineno));
    }
    cloud.points.push_back(p);
    cloud.labels.push_back(label);
    cloud.weights.push_back(1.0);
  }
  return cloud;
}

// PLY with double x/y/z so round-trips are exact; binary little-endian on write,
// ascii or binary little-endian (float or double coordinates) accepted on read.
inline void save_cloud_ply(const LabeledPointCloud& cloud, const std::string& path) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("save_cloud: cannot open " + path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property int label\nend_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double xyz[3] = {cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z()};
    std::int32_t label = cloud.labels[i];
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    out.write(reinterpret_cast<const char*>(&label), sizeof(label));
  }
}

inline LabeledPointCloud load_cloud_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("load_cloud: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
    throw invalid_input("load_cloud: not a PLY file: " + path);

  bool binary = false;
  std::size_t count = 0;
  struct Prop { std::string type, name; };
  std::vector<Prop> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "format") {
      std::string f;
      ss >> f;
      if (f == "binary_little_endian") binary = true;
      else if (f == "ascii") binary = false;
      else throw invalid_input("load_cloud: unsupported PLY format " + f);
    } else if (kw == "element") {
      std::string name;
      ss >> name >> count;
      in_vertex = (name == "vertex");
      if (!in_vertex) throw invalid_input("load_cloud: unsupported PLY element " + name);
    } else if (kw == "property" && in_vertex) {
      Prop p;
      ss >> p.type >> p.name;
      props.push_back(p);
    } else if (kw == "end_header") {
      break;
    }
  }

  int ix = -1, iy = -1, iz = -1, il = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (props[i].name == "x") ix = static_cast<int>(i);
    else if (props[i].name == "y") iy = static_cast<int>(i);
    else if (props[i].name == "z") iz = static_cast<int>(i);
    else if (props[i].name == "label") il = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0 || il < 0)
    throw invalid_input("load_cloud: PLY must have x, y, z and label vertex properties");

  auto prop_size = [](const std::string& t) -> std::size_t {
    if (t == "double" || t == "float64") return 8;
    if (t == "float" || t == "float32" || t == "int" || t == "int32" ||
        t == "uint" || t == "uint32")
      return 4;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    throw invalid_input("load_cloud: unsupported PLY property type " + t);
  };

  LabeledPointCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t e = 0; e < count; ++e) {
    std::vector<double> vals(props.size());
    if (binary) {
      for (std::size_t p = 0; p < props.size(); ++p) {
        char buf[8];
        const std::size_t sz = prop_size(props[p].type);
        if (!in.read(buf, static_cast<std::streamsize>(sz)))
          throw invalid_input("load_cloud: truncated PLY at element " + std::to_string(e));
        const std::string& t = props[p].type;
        if (t == "double" || t == "float64") {
          double v;
          std::memcpy(&v, buf, 8);
          vals[p] = v;
        } else if (t == "float" || t == "float32") {
          float v;
          std::memcpy(&v, buf, 4);
          vals[p] = v;
        } else if (t == "int" || t == "int32") {
          std::int32_t v;
          std::memcpy(&v, buf, 4);
          vals[p] = v;
        } else if (t == "uint" || t == "uint32") {
          std::uint32_t v;
          std::memcpy(&v, buf, 4);
          vals[p] = v;
        } else if (t == "short" || t == "int16") {
          std::int16_t v;
          std::memcpy(&v, buf, 2);
          vals[p] = v;
        } else if (t == "ushort" || t == "uint16") {
          std::uint16_t v;
          std::memcpy(&v, buf, 2);
          vals[p] = v;
        } else if (t == "char" || t == "int8") {
          vals[p] = static_cast<std::int8_t>(buf[0]);
        } else {
          vals[p] = static_cast<std::uint8_t>(buf[0]);
        }
      }
    } else {
      if (!std::getline(in, line))
        throw invalid_input("load_cloud: truncated PLY at element " + std::to_string(e));
      std::stringstream ss(line);
      for (std::size_t p = 0; p < props.size(); ++p)
        if (!(ss >> vals[p]))
          throw invalid_input("load_cloud: malformed PLY element " + std::to_string(e));
    }
    Point3 pt(vals[ix], vals[iy], vals[iz]);
    if (!finite(pt))
      throw invalid_input("load_cloud: non-finite coordinate at element " + std::to_string(e));
    cloud.points.push_back(pt);
    cloud.labels.push_back(static_cast<int>(vals[il]));
    cloud.weights.push_back(1.0);
  }
  return cloud;
}

inline void save_cloud(const LabeledPointCloud& cloud, const std::string& path,
                       CloudFormat format) {
  format == CloudFormat::Csv ? save_cloud_csv(cloud, path) : save_cloud_ply(cloud, path);
}

inline LabeledPointCloud load_cloud(const std::string& path, CloudFormat format) {
  return format == CloudFormat::Csv ? load_cloud_csv(path) : load_cloud_ply(path);
}

/// Blobby synthetic scene standing in for real labeled point clouds.
struct SyntheticSceneSpec {
  struct Blob {
    int class_id;
    Point3 center;
    double radius;
    int count;
  };
  std::vector<Blob> class_blobs;
  double label_noise_rate = 0.0;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (class_blobs.empty()) throw invalid_input("SyntheticSceneSpec: no blobs");
    for (const auto& b : class_blobs) {
      if (!(b.radius > 0.0)) throw invalid_input("SyntheticSceneSpec: radius must be > 0");
      if (b.count <= 0) throw invalid_input("SyntheticSceneSpec: count must be > 0");
    }
    if (label_noise_rate < 0.0 || label_noise_rate >= 0.5)
      throw invalid_input("SyntheticSceneSpec: noise rate must be in [0, 0.5)");
  }
};

struct SceneData {
  LabeledPointCloud train;  // noisy labels
  LabeledPointCloud test;   // held-out, clean labels
  LabeledPointCloud truth;  // train locations, clean labels
};

inline SceneData generate_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<int> class_ids;
  for (const auto& b : spec.class_blobs) class_ids.push_back(b.class_id);
  std::sort(class_ids.begin(), class_ids.end());
  class_ids.erase(std::unique(class_ids.begin(), class_ids.end()), class_ids.end());

  auto sample_in_ball = [&](const Point3& center, double radius) {
    Point3 dir(gauss(rng), gauss(rng), gauss(rng));
    if (dir.norm() < 1e-12) dir = Point3(1, 0, 0);
    dir.normalize();
    const double r = radius * std::cbrt(unit(rng));
    return Point3(center + r * dir);
  };

  SceneData scene;
  for (const auto& blob : spec.class_blobs) {
    for (int i = 0; i < blob.count; ++i) {
      const Point3 p = sample_in_ball(blob.center, blob.radius);
      int label = blob.class_id;
      scene.truth.points.push_back(p);
      scene.truth.labels.push_back(label);
      scene.truth.weights.push_back(1.0);
      if (spec.label_noise_rate > 0.0 && unit(rng) < spec.label_noise_rate &&
          class_ids.size() > 1) {
        std::uniform_int_distribution<std::size_t> other(0, class_ids.size() - 2);
        std::size_t k = other(rng);
        const auto self =
            std::lower_bound(class_ids.begin(), class_ids.end(), label) - class_ids.begin();
        if (k >= static_cast<std::size_t>(self)) ++k;
        label = class_ids[k];
      }
      scene.train.points.push_back(p);
      scene.train.labels.push_back(label);
      scene.train.weights.push_back(1.0);
    }
    for (int i = 0; i < blob.count; ++i) {
      scene.test.points.push_back(sample_in_ball(blob.center, blob.radius));
      scene.test.labels.push_back(blob.class_id);
      scene.test.weights.push_back(1.0);
    }
  }
  return scene;
}

}  // namespace rvsm
