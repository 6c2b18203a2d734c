#pragma once

#include <string>
#include <vector>

namespace pamkit {

/// Class probabilities for one test example plus its true class index.
/// Probe outputs satisfy scores >= 0 and sum to 1 within 1e-6; the AUC
/// functions only use score order, so transformed scores are accepted too.
struct ScoredExample {
  std::vector<double> scores;
  int true_class = 0;
};

/// One-vs-rest AUC from the rank statistic: fraction of (positive, negative)
/// pairs where the positive outscores the negative, ties counted 0.5.
/// Computed via average ranks, which is exact in f64 at these sizes.
double auc_binary(const std::vector<double>& positives, const std::vector<double>& negatives);

/// Same quantity by brute-force pair counting; oracle for auc_binary.
double auc_binary_bruteforce(const std::vector<double>& positives,
                             const std::vector<double>& negatives);

/// Same quantity by trapezoidal integration of the empirical ROC curve,
/// grouping tied scores into single threshold steps.
double auc_binary_trapezoid(const std::vector<double>& positives,
                            const std::vector<double>& negatives);

struct MacroAuc {
  std::vector<double> per_class;
  double macro = 0.0;
};

/// Per-class one-vs-rest AUC plus the macro (unweighted) mean over classes.
/// Throws NumericError naming the first class with no positives or no
/// negatives in the scored set.
MacroAuc auc_roc_macro(const std::vector<ScoredExample>& scored, int num_classes);

/// How much lower the better model's AUC error (1 - AUC) is, as a percent of
/// its own error: ((1-auc_worse) - (1-auc_better)) / (1-auc_better) * 100.
/// Throws NumericError when auc_better == 1 (infinite reduction) or either
/// value lies outside (0, 1].
double error_reduction(double auc_better, double auc_worse);

}  // namespace pamkit
