#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmfx/dataset.hpp"
#include "mmfx/metrics.hpp"
#include "mmfx/model.hpp"
#include "mmfx/trainer.hpp"

namespace mmfx {

struct AblationRun {
  std::string method;
  FusionKind kind = FusionKind::kConcat;
  EvalReport report;                // test-split metrics
  std::vector<double> test_scores;  // malignant probabilities
  std::vector<double> test_scores_withheld;  // same, with clinical inputs zeroed
  std::vector<int> test_preds;      // thresholded at 0.5
  std::vector<int> test_labels;
  double mcnemar_p_vs_concat = 1.0;
  TrainResult training;
};

struct AblationResult {
  std::vector<AblationRun> runs;  // image_only, clinical_only, concat, co, cross
  const AblationRun& by_method(const std::string& method) const;
};

// Trains and evaluates the five fusion strategies under identical shared
// hyperparameters (only fusion_kind differs). Runs are independent and
// deterministic per (seed, method), so they may execute on parallel threads;
// results come back in fixed method order either way.
AblationResult run_ablation(const Dataset& data, const FusionConfig& shared_cfg, const TrainConfig& tcfg,
                            uint64_t seed, int jobs = 1);

// Helper shared by ablate/eval: malignant-probability scores over a split.
std::vector<double> score_split(ModelBundle& model, const Dataset& data, const std::vector<int>& idx,
                                bool withhold_clinical = false);

void write_ablation_csv(const std::string& path, const AblationResult& result);

}  // namespace mmfx
