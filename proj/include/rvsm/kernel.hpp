#pragma once

#include "rvsm/common.hpp"

#include <cmath>
#include <vector>

namespace rvsm {

enum class KernelFamily { SquaredExponential };

/// Kernel defining the basis map; immutable after construction.
struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  double length_scale = 0.3;    // meters
  double signal_variance = 1.0;
  bool include_bias = true;

  void validate() const {
    if (!(length_scale > 0.0) || !std::isfinite(length_scale))
      throw invalid_input("KernelSpec: length_scale must be positive");
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
      throw invalid_input("KernelSpec: signal_variance must be positive");
  }

  bool operator==(const KernelSpec&) const = default;
};

inline double kernel_eval(const KernelSpec& spec, const Point3& a, const Point3& b) {
  if (!finite(a) || !finite(b))
    throw invalid_input("kernel_eval: non-finite input point");
  const double d2 = (a - b).squaredNorm();
  return spec.signal_variance * std::exp(-d2 / (2.0 * spec.length_scale * spec.length_scale));
}

/// phi(x) = [1, k(x,c_1), ..., k(x,c_n)] (leading 1 only with bias).
inline Vec basis_vector(const KernelSpec& spec, const Point3& x,
                        const std::vector<Point3>& centers) {
  if (centers.empty()) throw invalid_input("basis_vector: empty centers");
  const int offset = spec.include_bias ? 1 : 0;
  Vec phi(static_cast<int>(centers.size()) + offset);
  if (spec.include_bias) phi(0) = 1.0;
  for (std::size_t j = 0; j < centers.size(); ++j)
    phi(offset + static_cast<int>(j)) = kernel_eval(spec, x, centers[j]);
  return phi;
}

/// n_t x n_b design matrix; row i is basis_vector(inputs[i]).
inline Mat design_matrix(const KernelSpec& spec, const std::vector<Point3>& inputs,
                         const std::vector<Point3>& centers) {
  if (inputs.empty()) throw invalid_input("design_matrix: empty inputs");
  if (centers.empty()) throw invalid_input("design_matrix: empty centers");
  const int offset = spec.include_bias ? 1 : 0;
  Mat phi(static_cast<int>(inputs.size()), static_cast<int>(centers.size()) + offset);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    phi.row(static_cast<int>(i)) = basis_vector(spec, inputs[i], centers).transpose();
  return phi;
}

}  // namespace rvsm
