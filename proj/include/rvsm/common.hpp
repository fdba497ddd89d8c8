#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rvsm {

using Point3 = Eigen::Vector3d;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Bad user-supplied data (non-finite coordinates, empty containers, ...).
class invalid_input : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training data that cannot support a binary classifier (single class, ...).
class degenerate_data : public invalid_input {
 public:
  using invalid_input::invalid_input;
};

/// Linear algebra gave up even after regularization.
class numerical_failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// IRLS did not reach the stationarity tolerance; carries the last iterate.
class mode_search_failure : public numerical_failure {
 public:
  mode_search_failure(const std::string& what, Vec last_iterate)
      : numerical_failure(what), last_mu(std::move(last_iterate)) {}
  Vec last_mu;
};

/// Metric is undefined for the given truth vector (e.g. one class only).
class undefined_metric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool finite(const Point3& p) {
  return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z());
}

/// splitmix64 step; used to derive independent per-class RNG seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace rvsm
