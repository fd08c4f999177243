#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmfx/vendor_json_fwd.hpp"

namespace mmfx {

struct ConfusionRates {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  // 0/0 cases are reported as 0 with the matching flag cleared.
  bool precision_defined = true, recall_defined = true, f1_defined = true;
};

// Standard threshold metrics; score >= threshold predicts positive.
ConfusionRates confusion_and_rates(const std::vector<double>& scores, const std::vector<int>& labels,
                                   double threshold = 0.5);

struct RocPoint {
  double fpr = 0.0, tpr = 0.0, threshold = 0.0;
};

struct AucResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // swept from high to low threshold, (0,0) .. (1,1)
};

// AUC via the Mann-Whitney statistic (midranks, ties count 1/2), cross-checked
// against the trapezoidal area of the swept ROC; the two must agree to 1e-12.
// Throws NumericError when labels are single-class.
AucResult auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

struct McNemarResult {
  long b = 0;  // A correct, B wrong
  long c = 0;  // A wrong, B correct
  double p_value = 1.0;
};

// Exact binomial two-sided McNemar test: p = min(1, 2*P(X <= min(b,c))) with
// X ~ Binomial(b+c, 1/2); p = 1 when b + c = 0.
McNemarResult mcnemar(const std::vector<int>& preds_a, const std::vector<int>& preds_b,
                      const std::vector<int>& labels);

using MetricFn = std::function<double(const std::vector<double>&, const std::vector<int>&)>;

struct BootstrapCi {
  double lo = 0.0, hi = 0.0, point = 0.0;
};

// Seeded percentile bootstrap. Resamples on which metric_fn throws (e.g.
// single-class AUC) are redrawn, up to 100 retries each.
BootstrapCi bootstrap_ci(const MetricFn& metric_fn, const std::vector<double>& scores, const std::vector<int>& labels,
                         int n_resamples = 1000, double alpha = 0.05, uint64_t seed = 0);

struct EvalReport {
  long n = 0;
  ConfusionRates rates;
  double auc = 0.0;
  std::vector<RocPoint> roc;
  double threshold = 0.5;
  double youden_threshold = 0.5;
  std::optional<BootstrapCi> auc_ci, f1_ci, accuracy_ci;
  std::optional<McNemarResult> mcnemar_vs_comparator;

  nlohmann::json to_json() const;
};

// One-stop evaluation; CIs computed when ci_resamples > 0.
EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5,
                           int ci_resamples = 0, uint64_t ci_seed = 0);

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& points);

}  // namespace mmfx
