#include "pamkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "pamkit/error.hpp"

namespace pamkit {
namespace {

void check_nonempty(const std::vector<double>& positives, const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) {
    throw NumericError("auc: needs at least one positive and one negative");
  }
}

}  // namespace

double auc_binary(const std::vector<double>& positives, const std::vector<double>& negatives) {
  check_nonempty(positives, negatives);
  // Pool scores tagged by membership, sort, assign average ranks to ties.
  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(positives.size() + negatives.size());
  for (double s : positives) pooled.emplace_back(s, 1);
  for (double s : negatives) pooled.emplace_back(s, 0);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    // 1-based ranks i+1 .. j averaged over the tie group.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (pooled[t].second == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }

  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_binary_bruteforce(const std::vector<double>& positives,
                             const std::vector<double>& negatives) {
  check_nonempty(positives, negatives);
  double won = 0.0;
  for (double p : positives) {
    for (double n : negatives) {
      if (p > n) won += 1.0;
      else if (p == n) won += 0.5;
    }
  }
  return won / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

double auc_binary_trapezoid(const std::vector<double>& positives,
                            const std::vector<double>& negatives) {
  check_nonempty(positives, negatives);
  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(positives.size() + negatives.size());
  for (double s : positives) pooled.emplace_back(s, 1);
  for (double s : negatives) pooled.emplace_back(s, 0);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  double tp = 0.0, fp = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    // Sweep the threshold across one tied score group at a time.
    std::size_t j = i;
    double d_tp = 0.0, d_fp = 0.0;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) {
      if (pooled[j].second == 1) d_tp += 1.0;
      else d_fp += 1.0;
      ++j;
    }
    area += (d_fp / nn) * (tp / np + 0.5 * d_tp / np);
    tp += d_tp;
    fp += d_fp;
    i = j;
  }
  return area;
}

MacroAuc auc_roc_macro(const std::vector<ScoredExample>& scored, int num_classes) {
  if (num_classes < 2) throw NumericError("auc: need at least 2 classes");
  for (const ScoredExample& ex : scored) {
    if (static_cast<int>(ex.scores.size()) != num_classes) {
      throw NumericError("auc: scored example has " + std::to_string(ex.scores.size()) +
                         " scores, expected " + std::to_string(num_classes));
    }
    if (ex.true_class < 0 || ex.true_class >= num_classes) {
      throw NumericError("auc: true class index out of range");
    }
  }

  MacroAuc out;
  out.per_class.resize(num_classes);
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> pos, neg;
    for (const ScoredExample& ex : scored) {
      (ex.true_class == c ? pos : neg).push_back(ex.scores[c]);
    }
    if (pos.empty() || neg.empty()) {
      throw NumericError("auc: class " + std::to_string(c) +
                         " has no positives or no negatives; AUC undefined");
    }
    out.per_class[c] = auc_binary(pos, neg);
    sum += out.per_class[c];
  }
  out.macro = sum / static_cast<double>(num_classes);
  return out;
}

double error_reduction(double auc_better, double auc_worse) {
  if (!(auc_better > 0.0 && auc_better <= 1.0 && auc_worse > 0.0 && auc_worse <= 1.0)) {
    throw NumericError("error_reduction: AUC values must lie in (0, 1]");
  }
  if (auc_better == 1.0) {
    throw NumericError("error_reduction: better model has zero error; reduction is infinite");
  }
  return ((1.0 - auc_worse) - (1.0 - auc_better)) / (1.0 - auc_better) * 100.0;
}

}  // namespace pamkit
