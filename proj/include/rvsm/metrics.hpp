#pragma once

#include "rvsm/common.hpp"
#include "rvsm/data_io.hpp"
#include "rvsm/multiclass.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rvsm {

/// Mann-Whitney AUC with half-credit ties; O(n log n) via rank averaging.
inline double auc(const Vec& scores, const Vec& truth) {
  if (scores.size() != truth.size())
    throw invalid_input("auc: scores/truth length mismatch");
  const Eigen::Index n = scores.size();
  std::size_t n_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (truth(i) == 1.0) ++n_pos;
  const std::size_t n_neg = static_cast<std::size_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw undefined_metric("auc: both classes must be present in truth");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });

  // tie groups share the average rank
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (truth(order[k]) == 1.0) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1.0);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Recall averaged over thresholds tau_i = i/(G+1), i = 1..G; positive iff
/// score > tau.
inline double mean_sensitivity(const Vec& scores, const Vec& truth, int grid_points = 99) {
  if (scores.size() != truth.size())
    throw invalid_input("mean_sensitivity: scores/truth length mismatch");
  if (grid_points < 1) throw invalid_input("mean_sensitivity: grid_points must be >= 1");
  std::vector<double> pos_scores;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (truth(i) == 1.0) pos_scores.push_back(scores(i));
  if (pos_scores.empty())
    throw undefined_metric("mean_sensitivity: no positives in truth");

  double total = 0.0;
  for (int g = 1; g <= grid_points; ++g) {
    const double tau = static_cast<double>(g) / (grid_points + 1.0);
    std::size_t tp = 0;
    for (double s : pos_scores)
      if (s > tau) ++tp;
    total += static_cast<double>(tp) / static_cast<double>(pos_scores.size());
  }
  return total / grid_points;
}

struct EvalReport {
  struct PerClass {
    int class_id;
    std::string name;
    std::optional<double> auc;
    std::optional<double> mean_sensitivity;
    int support;
  };
  std::vector<PerClass> per_class;
  double average_auc = 0.0;
  double average_sensitivity = 0.0;
  int threshold_grid_points = 99;
};

/// One-vs-rest AUC and threshold-averaged sensitivity per class, plus the
/// unweighted class averages. Classes with undefined metrics are flagged and
/// excluded from the averages.
inline EvalReport evaluate_map(const MapPosterior& posterior, const LabeledPointCloud& truth,
                               const ClassDictionary& dict, int grid_points = 99) {
  if (posterior.points.size() != truth.size())
    throw invalid_input("evaluate_map: posterior/truth length mismatch");

  EvalReport report;
  report.threshold_grid_points = grid_points;
  double auc_sum = 0.0, sens_sum = 0.0;
  int counted = 0;
  for (std::size_t k = 0; k < dict.n_classes(); ++k) {
    const int class_id = dict.classes[k].id;
    Vec t(static_cast<Eigen::Index>(truth.size()));
    int support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool pos = truth.labels[i] == class_id;
      t(static_cast<Eigen::Index>(i)) = pos ? 1.0 : 0.0;
      support += pos ? 1 : 0;
    }
    const Vec scores = posterior.class_probs.col(static_cast<Eigen::Index>(k));
    EvalReport::PerClass row{class_id, dict.classes[k].name, std::nullopt, std::nullopt,
                             support};
    try {
      row.auc = auc(scores, t);
      row.mean_sensitivity = mean_sensitivity(scores, t, grid_points);
      auc_sum += *row.auc;
      sens_sum += *row.mean_sensitivity;
      ++counted;
    } catch (const undefined_metric&) {
      // flagged by the empty optionals; excluded from averages
    }
    report.per_class.push_back(std::move(row));
  }
  if (counted > 0) {
    report.average_auc = auc_sum / counted;
    report.average_sensitivity = sens_sum / counted;
  }
  return report;
}

/// Aligned plaintext table: one row per class plus the Average row.
inline std::string render_report_table(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %8s %8s %12s\n", "class", "AUC", "Sens",
                "support");
  out << line;
  for (const auto& row : report.per_class) {
    if (row.auc) {
      std::snprintf(line, sizeof(line), "%-16s %8.3f %8.3f %12d\n", row.name.c_str(),
                    *row.auc, *row.mean_sensitivity, row.support);
    } else {
      std::snprintf(line, sizeof(line), "%-16s %8s %8s %12d\n", row.name.c_str(), "n/a",
                    "n/a", row.support);
    }
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-16s %8.3f %8.3f %12s\n", "Average",
                report.average_auc, report.average_sensitivity, "");
  out << line;
  return out.str();
}

}  // namespace rvsm
