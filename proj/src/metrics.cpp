#include "mmfx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "mmfx/errors.hpp"
#include "mmfx/rng.hpp"

namespace mmfx {

namespace {

void check_labels(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("metrics: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                     " labels");
  if (scores.empty()) throw InputError("metrics: empty inputs");
  for (int l : labels)
    if (l != 0 && l != 1) throw InputError("metrics: labels must be 0 or 1");
}

}  // namespace

ConfusionRates confusion_and_rates(const std::vector<double>& scores, const std::vector<int>& labels,
                                   double threshold) {
  check_labels(scores, labels);
  ConfusionRates r;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i] == 1)
      ++r.tp;
    else if (pred && labels[i] == 0)
      ++r.fp;
    else if (!pred && labels[i] == 1)
      ++r.fn;
    else
      ++r.tn;
  }
  const double n = static_cast<double>(scores.size());
  r.accuracy = (r.tp + r.tn) / n;
  if (r.tp + r.fp > 0)
    r.precision = static_cast<double>(r.tp) / (r.tp + r.fp);
  else
    r.precision_defined = false;
  if (r.tp + r.fn > 0)
    r.recall = static_cast<double>(r.tp) / (r.tp + r.fn);
  else
    r.recall_defined = false;
  if (r.precision_defined && r.recall_defined && r.precision + r.recall > 0.0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  else
    r.f1_defined = false;
  return r;
}

AucResult auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_labels(scores, labels);
  long n_pos = std::count(labels.begin(), labels.end(), 1);
  long n_neg = static_cast<long>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw NumericError("auc_roc: AUC undefined, labels contain a single class");

  // Mann-Whitney with midranks.
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    i = j;
  }
  const double auc_mw =
      (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) / (static_cast<double>(n_pos) * n_neg);

  // Threshold-swept ROC (descending scores, ties grouped) and trapezoid area.
  AucResult res;
  res.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  long tp = 0, fp = 0;
  double area = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
  for (size_t i = order.size(); i > 0;) {
    size_t j = i;
    while (j > 0 && scores[order[j - 1]] == scores[order[i - 1]]) --j;
    for (size_t k = j; k < i; ++k) {
      if (labels[order[k]] == 1)
        ++tp;
      else
        ++fp;
    }
    const double fpr = static_cast<double>(fp) / n_neg;
    const double tpr = static_cast<double>(tp) / n_pos;
    area += 0.5 * (fpr - prev_fpr) * (tpr + prev_tpr);
    res.points.push_back({fpr, tpr, scores[order[j]]});
    prev_fpr = fpr;
    prev_tpr = tpr;
    i = j;
  }
  if (std::abs(area - auc_mw) > 1e-12)
    throw NumericError("auc_roc: rank and trapezoid estimates disagree by " + std::to_string(std::abs(area - auc_mw)));
  res.auc = auc_mw;
  return res;
}

namespace {

// P(X <= k) for X ~ Binomial(n, 1/2), via log-space terms.
double binomial_half_cdf(long k, long n) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  double sum = 0.0;
  for (long i = 0; i <= k; ++i) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                            static_cast<double>(n) * std::log(2.0);
    sum += std::exp(log_term);
  }
  return std::min(1.0, sum);
}

}  // namespace

McNemarResult mcnemar(const std::vector<int>& preds_a, const std::vector<int>& preds_b,
                      const std::vector<int>& labels) {
  if (preds_a.size() != labels.size() || preds_b.size() != labels.size())
    throw ShapeError("mcnemar: prediction/label lengths disagree");
  McNemarResult r;
  for (size_t i = 0; i < labels.size(); ++i) {
    const bool a_ok = preds_a[i] == labels[i];
    const bool b_ok = preds_b[i] == labels[i];
    if (a_ok && !b_ok) ++r.b;
    if (!a_ok && b_ok) ++r.c;
  }
  const long n = r.b + r.c;
  if (n == 0) {
    r.p_value = 1.0;
    return r;
  }
  r.p_value = std::min(1.0, 2.0 * binomial_half_cdf(std::min(r.b, r.c), n));
  return r;
}

BootstrapCi bootstrap_ci(const MetricFn& metric_fn, const std::vector<double>& scores, const std::vector<int>& labels,
                         int n_resamples, double alpha, uint64_t seed) {
  check_labels(scores, labels);
  if (scores.size() < 10) throw InputError("bootstrap_ci: need at least 10 samples");
  if (n_resamples < 1 || alpha <= 0.0 || alpha >= 1.0) throw ConfigError("bootstrap_ci: bad n_resamples/alpha");

  BootstrapCi ci;
  ci.point = metric_fn(scores, labels);

  const size_t n = scores.size();
  std::vector<double> stats;
  stats.reserve(static_cast<size_t>(n_resamples));
  for (int b = 0; b < n_resamples; ++b) {
    // Per-resample stream keyed by index: order-independent, parallel-safe.
    Rng rng(seed, 100 + static_cast<uint64_t>(b));
    double value = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      std::vector<double> s(n);
      std::vector<int> l(n);
      for (size_t i = 0; i < n; ++i) {
        const size_t j = rng.uniform_int(n);
        s[i] = scores[j];
        l[i] = labels[j];
      }
      try {
        value = metric_fn(s, l);
        ok = true;
      } catch (const Error&) {
        // degenerate resample (e.g. single class): redraw
      }
    }
    if (!ok)
      throw NumericError("bootstrap_ci: resample " + std::to_string(b) +
                         " kept failing after 100 retries; use a larger sample");
    stats.push_back(value);
  }

  std::sort(stats.begin(), stats.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(stats.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return (1.0 - frac) * stats[lo] + frac * stats[hi];
  };
  ci.lo = quantile(alpha / 2.0);
  ci.hi = quantile(1.0 - alpha / 2.0);
  return ci;
}

EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels, double threshold,
                           int ci_resamples, uint64_t ci_seed) {
  EvalReport rep;
  rep.n = static_cast<long>(scores.size());
  rep.threshold = threshold;
  rep.rates = confusion_and_rates(scores, labels, threshold);
  AucResult auc = auc_roc(scores, labels);
  rep.auc = auc.auc;
  rep.roc = auc.points;

  double best_youden = -1.0;
  for (const auto& pt : rep.roc) {
    const double youden = pt.tpr - pt.fpr;
    if (youden > best_youden && std::isfinite(pt.threshold)) {
      best_youden = youden;
      rep.youden_threshold = pt.threshold;
    }
  }

  if (ci_resamples > 0) {
    rep.auc_ci = bootstrap_ci([](const std::vector<double>& s, const std::vector<int>& l) { return auc_roc(s, l).auc; },
                              scores, labels, ci_resamples, 0.05, ci_seed);
    rep.f1_ci = bootstrap_ci(
        [threshold](const std::vector<double>& s, const std::vector<int>& l) {
          return confusion_and_rates(s, l, threshold).f1;
        },
        scores, labels, ci_resamples, 0.05, ci_seed + 1);
    rep.accuracy_ci = bootstrap_ci(
        [threshold](const std::vector<double>& s, const std::vector<int>& l) {
          return confusion_and_rates(s, l, threshold).accuracy;
        },
        scores, labels, ci_resamples, 0.05, ci_seed + 2);
  }
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"n", n},
                      {"tp", rates.tp},
                      {"tn", rates.tn},
                      {"fp", rates.fp},
                      {"fn", rates.fn},
                      {"accuracy", rates.accuracy},
                      {"precision", rates.precision},
                      {"recall", rates.recall},
                      {"f1", rates.f1},
                      {"precision_defined", rates.precision_defined},
                      {"recall_defined", rates.recall_defined},
                      {"f1_defined", rates.f1_defined},
                      {"auc_roc", auc},
                      {"threshold", threshold},
                      {"youden_threshold", youden_threshold}};
  auto ci_json = [](const BootstrapCi& ci) { return nlohmann::json{{"lo", ci.lo}, {"hi", ci.hi}, {"point", ci.point}}; };
  if (auc_ci) j["auc_roc_ci95"] = ci_json(*auc_ci);
  if (f1_ci) j["f1_ci95"] = ci_json(*f1_ci);
  if (accuracy_ci) j["accuracy_ci95"] = ci_json(*accuracy_ci);
  if (mcnemar_vs_comparator)
    j["mcnemar"] = {{"b", mcnemar_vs_comparator->b},
                    {"c", mcnemar_vs_comparator->c},
                    {"p_value", mcnemar_vs_comparator->p_value}};
  return j;
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << "fpr,tpr,threshold\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.fpr, p.tpr, p.threshold);
    out << buf;
  }
}

}  // namespace mmfx
