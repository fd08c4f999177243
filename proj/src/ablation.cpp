#include "mmfx/ablation.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <thread>

namespace mmfx {

const AblationRun& AblationResult::by_method(const std::string& method) const {
  for (const auto& r : runs)
    if (r.method == method) return r;
  throw Error("ablation has no run for method '" + method + "'");
}

std::vector<double> score_split(ModelBundle& model, const Dataset& data, const std::vector<int>& idx,
                                bool withhold_clinical) {
  std::vector<double> scores;
  scores.reserve(idx.size());
  ForwardOptions opt;
  opt.withhold_clinical = withhold_clinical;
  for (int i : idx) {
    const Sample& s = data.samples[static_cast<size_t>(i)];
    scores.push_back(model.forward_sample(nullptr, s.image, s.clinical, opt).probs.at(0, 1));
  }
  return scores;
}

namespace {

struct MethodSpec {
  const char* method;
  FusionKind kind;
};

constexpr MethodSpec kMethods[] = {
    {"image_only", FusionKind::kImageOnly},
    {"clinical_only", FusionKind::kClinicalOnly},
    {"concat", FusionKind::kConcat},
    {"co_attention", FusionKind::kCoAttention},
    {"cross_attention", FusionKind::kCrossAttentionImgFromClin},
};

}  // namespace

AblationResult run_ablation(const Dataset& data, const FusionConfig& shared_cfg, const TrainConfig& tcfg,
                            uint64_t seed, int jobs) {
  if (data.train_idx.empty() || data.val_idx.empty() || data.test_idx.empty())
    throw InputError("ablation needs non-empty train/val/test splits");

  const int n_methods = static_cast<int>(std::size(kMethods));
  AblationResult result;
  result.runs.resize(static_cast<size_t>(n_methods));

  auto run_one = [&](int mi) {
    AblationRun run;
    run.method = kMethods[mi].method;
    run.kind = kMethods[mi].kind;

    FusionConfig cfg = shared_cfg;
    cfg.fusion_kind = run.kind;
    Rng init_rng(seed, 40 + static_cast<uint64_t>(mi));
    ModelBundle model(cfg, data.vocab, init_rng);

    run.training = train(model, data, data.train_idx, data.val_idx, tcfg, seed);

    run.test_scores = score_split(model, data, data.test_idx);
    run.test_scores_withheld = score_split(model, data, data.test_idx, /*withhold_clinical=*/true);
    run.test_labels.reserve(data.test_idx.size());
    for (int i : data.test_idx) run.test_labels.push_back(data.samples[static_cast<size_t>(i)].label);
    run.test_preds.reserve(run.test_scores.size());
    for (double s : run.test_scores) run.test_preds.push_back(s >= 0.5 ? 1 : 0);
    run.report = evaluate_scores(run.test_scores, run.test_labels);
    result.runs[static_cast<size_t>(mi)] = std::move(run);
  };

  if (jobs <= 1) {
    for (int mi = 0; mi < n_methods; ++mi) run_one(mi);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    const int n_workers = std::min(jobs, n_methods);
    for (int t = 0; t < n_workers; ++t)
      workers.emplace_back([&] {
        for (int mi = next.fetch_add(1); mi < n_methods; mi = next.fetch_add(1)) run_one(mi);
      });
    for (auto& w : workers) w.join();
  }

  const AblationRun& concat_run = result.by_method("concat");
  for (auto& run : result.runs) {
    McNemarResult mc = mcnemar(run.test_preds, concat_run.test_preds, run.test_labels);
    run.mcnemar_p_vs_concat = mc.p_value;
    run.report.mcnemar_vs_comparator = mc;
  }
  return result;
}

void write_ablation_csv(const std::string& path, const AblationResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << "method,auc_roc,f1,accuracy,precision,recall,mcnemar_p_vs_concat\n";
  char buf[256];
  for (const auto& r : result.runs) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6g\n", r.method.c_str(), r.report.auc,
                  r.report.rates.f1, r.report.rates.accuracy, r.report.rates.precision, r.report.rates.recall,
                  r.mcnemar_p_vs_concat);
    out << buf;
  }
}

}  // namespace mmfx
