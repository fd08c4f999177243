#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "mmfx/ablation.hpp"
#include "mmfx/check_suite.hpp"
#include "mmfx/dataset.hpp"
#include "mmfx/explain.hpp"
#include "mmfx/image_io.hpp"
#include "mmfx/json_util.hpp"
#include "mmfx/metrics.hpp"
#include "mmfx/model.hpp"
#include "mmfx/synth.hpp"
#include "mmfx/trainer.hpp"

namespace fs = std::filesystem;
using namespace mmfx;

namespace {

constexpr const char* kToolVersion = "mmfx 1.0.0";

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void write_run_manifest(const std::string& out_dir, const std::string& command, const nlohmann::json& config,
                        uint64_t seed, const nlohmann::json& input_hashes, double wall_seconds,
                        const char* filename = "manifest.json") {
  nlohmann::json j = {{"kind", "mmfx_run"},  {"command", command},          {"config", config},
                      {"seed", seed},        {"input_hashes", input_hashes}, {"tool_version", kToolVersion},
                      {"wall_clock_seconds", wall_seconds}};
  write_json_file((fs::path(out_dir) / filename).string(), j);
}

FusionConfig load_model_config(const std::string& path) {
  if (path.empty()) return FusionConfig{};
  return FusionConfig::from_json(load_json_file(path));
}

TrainConfig load_train_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return TrainConfig::from_json(load_json_file(path));
}

double dataset_mean_intensity(const Dataset& data, const std::vector<int>& idx) {
  double sum = 0.0;
  long count = 0;
  for (int i : idx) {
    for (double v : data.samples[static_cast<size_t>(i)].image.data) sum += v;
    count += data.samples[static_cast<size_t>(i)].image.size();
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

int cmd_synth(const std::string& config_path, uint64_t seed, const std::string& out_dir) {
  Timer timer;
  SynthConfig cfg = config_path.empty() ? SynthConfig{} : SynthConfig::from_json(load_json_file(config_path));
  generate_dataset(cfg, seed, out_dir);
  nlohmann::json manifest = load_json_file((fs::path(out_dir) / "manifest.json").string());
  nlohmann::json hashes = nlohmann::json::object();
  if (!config_path.empty()) hashes["synth_config"] = fnv1a64_file_hex(config_path);
  // the dataset's own manifest.json is the primary artifact here
  write_run_manifest(out_dir, "synth", cfg.to_json(), seed, hashes, timer.seconds(), "run_manifest.json");
  std::printf("dataset=%s samples=%d bayes_auc=%.4f\n", out_dir.c_str(), cfg.n_samples,
              manifest.at("bayes_auc").get<double>());
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& model_cfg_path, const std::string& train_cfg_path,
              uint64_t seed, const std::string& out_dir, int freeze_epochs) {
  Timer timer;
  Dataset data = load_dataset(data_path);
  if (data.train_idx.empty() || data.val_idx.empty())
    throw InputError("dataset manifest has no train/val splits");

  FusionConfig mcfg = load_model_config(model_cfg_path);
  TrainConfig tcfg = load_train_config(train_cfg_path);
  if (freeze_epochs >= 0) tcfg.freeze_epochs = freeze_epochs;
  tcfg.validate();

  const Tensor& first = data.samples[0].image;
  if (mcfg.uses_image() && (first.dim(1) != mcfg.backbone.input_h || first.dim(2) != mcfg.backbone.input_w))
    throw ConfigError("backbone expects " + std::to_string(mcfg.backbone.input_h) + "x" +
                      std::to_string(mcfg.backbone.input_w) + " images but dataset has " + first.shape_str());

  fs::create_directories(out_dir);
  Rng init_rng(seed, 0);
  ModelBundle model(mcfg, data.vocab, init_rng);
  TrainResult tr = train(model, data, data.train_idx, data.val_idx, tcfg, seed);

  model.save((fs::path(out_dir) / "checkpoint.mmfx").string());
  write_history_csv((fs::path(out_dir) / "history.csv").string(), tr.history);

  nlohmann::json hashes = {{"dataset_manifest", fnv1a64_file_hex(data_path)}};
  if (!model_cfg_path.empty()) hashes["model_config"] = fnv1a64_file_hex(model_cfg_path);
  if (!train_cfg_path.empty()) hashes["train_config"] = fnv1a64_file_hex(train_cfg_path);
  nlohmann::json config = {{"model", mcfg.to_json()}, {"train", tcfg.to_json()}, {"data", data_path}};
  write_run_manifest(out_dir, "train", config, seed, hashes, timer.seconds());

  const EpochStats& last = tr.history.back();
  std::printf("run_dir=%s epochs=%zu best_epoch=%d best_val_loss=%.6f last_val_auc=%.4f\n", out_dir.c_str(),
              tr.history.size(), tr.best_epoch, tr.best_val_loss, last.val_auc);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path, const std::string& out_dir,
             const std::string& split, double threshold, int ci_resamples, uint64_t seed, bool withhold_clinical) {
  Timer timer;
  ModelBundle model = ModelBundle::load(checkpoint);
  Dataset data = load_dataset(data_path);
  if (model.vocabulary().total_dim() != data.vocab.total_dim())
    throw ConfigError("checkpoint vocabulary dimension does not match dataset");

  std::vector<int> idx = data.indices_of_split(split);
  if (idx.empty()) throw InputError("split '" + split + "' is empty");

  std::vector<double> scores = score_split(model, data, idx, withhold_clinical);
  std::vector<int> labels;
  labels.reserve(idx.size());
  for (int i : idx) labels.push_back(data.samples[static_cast<size_t>(i)].label);

  EvalReport report = evaluate_scores(scores, labels, threshold, ci_resamples, seed);
  fs::create_directories(out_dir);
  write_json_file((fs::path(out_dir) / "metrics.json").string(), report.to_json());
  write_roc_csv((fs::path(out_dir) / "roc.csv").string(), report.roc);

  nlohmann::json config = {{"checkpoint", checkpoint}, {"data", data_path},           {"split", split},
                           {"threshold", threshold},   {"ci_resamples", ci_resamples}, {"withhold_clinical", withhold_clinical}};
  nlohmann::json hashes = {{"dataset_manifest", fnv1a64_file_hex(data_path)}, {"checkpoint", fnv1a64_file_hex(checkpoint)}};
  write_run_manifest(out_dir, "eval", config, seed, hashes, timer.seconds());

  std::printf("split=%s n=%ld auc=%.4f f1=%.4f accuracy=%.4f precision=%.4f recall=%.4f\n", split.c_str(), report.n,
              report.auc, report.rates.f1, report.rates.accuracy, report.rates.precision, report.rates.recall);
  return 0;
}

int cmd_explain(const std::string& checkpoint, const std::string& data_path, const std::string& sample_id,
                const std::string& method, const std::string& out_dir, const std::string& cls_name,
                const std::string& scheme, std::optional<uint64_t> seed, int n_samples, int n_perturbations, int grid,
                int top_k) {
  Timer timer;
  if (method != "gradcam" && method != "shap" && method != "kernelshap" && method != "lime")
    throw InputError("unknown method '" + method + "' (expected gradcam, shap, kernelshap or lime)");
  const bool needs_seed = method == "kernelshap" || method == "lime";
  if (needs_seed && !seed.has_value()) throw InputError("method '" + method + "' draws samples and requires --seed");

  ModelBundle model = ModelBundle::load(checkpoint);
  Dataset data = load_dataset(data_path);
  const Sample* sample = data.find(sample_id);
  if (!sample) throw InputError("sample '" + sample_id + "' not found in dataset");

  int cls;
  if (cls_name == "malignant")
    cls = 1;
  else if (cls_name == "benign")
    cls = 0;
  else
    throw InputError("class must be 'benign' or 'malignant'");

  fs::create_directories(out_dir);
  std::vector<std::string> field_names(kClinicalFieldNames.begin(), kClinicalFieldNames.end());

  if (method == "gradcam") {
    GradCamMap map = grad_cam(model, sample->image, sample->clinical, cls);
    write_heatmap_csv((fs::path(out_dir) / "gradcam_raw.csv").string(), map.raw, map.u, map.v);
    double mx = 0.0;
    for (double v : map.upsampled) mx = std::max(mx, v);
    Tensor norm({map.h, map.w}, map.upsampled);
    if (mx > 0.0)
      for (double& v : norm.data) v /= mx;
    write_ppm((fs::path(out_dir) / "gradcam_overlay.ppm").string(), overlay_heatmap(sample->image, norm));
    nlohmann::json j = {{"method", "gradcam"}, {"class", cls},   {"sample", sample_id},
                        {"u", map.u},          {"v", map.v},     {"h", map.h},
                        {"w", map.w},          {"raw_max", mx > 0.0 ? mx : 0.0},
                        {"channel_weights", map.channel_weights}};
    write_json_file((fs::path(out_dir) / "attribution.json").string(), j);
  } else {
    MaskableModel masked(model, sample->image, sample->clinical);
    if (method == "shap" || method == "kernelshap" || (method == "lime" && scheme == "clinical")) {
      SetFn f = masked.clinical_masker();
      nlohmann::json j;
      if (method == "shap") {
        ShapleyAttribution a = shapley_exact(f, kNumClinicalFields);
        j = shapley_to_json(a, field_names, cls);
      } else if (method == "kernelshap") {
        ShapleyAttribution a = kernel_shap(f, kNumClinicalFields, n_samples, *seed);
        j = shapley_to_json(a, field_names, cls);
      } else {
        const double sigma = 0.75 * std::sqrt(static_cast<double>(kNumClinicalFields));
        const int k = top_k > 0 ? top_k : kNumClinicalFields;
        LimeExplanation e = lime_explain(f, kNumClinicalFields, n_perturbations, sigma, k, 1e-3, *seed);
        j = lime_to_json(e, field_names, cls, "clinical_mask");
      }
      j["sample"] = sample_id;
      write_json_file((fs::path(out_dir) / "attribution.json").string(), j);
    } else {
      // lime over image segments
      const int h = sample->image.dim(1), w = sample->image.dim(2);
      std::vector<int> seg = superpixel_segments(h, w, grid);
      const int n_segments = grid * grid;
      const std::vector<int>& fill_idx = data.train_idx.empty() ? data.indices_of_split("all") : data.train_idx;
      const double fill = dataset_mean_intensity(data, fill_idx);
      SetFn f = masked.image_segment_masker(seg, n_segments, fill);
      const double sigma = 0.75 * std::sqrt(static_cast<double>(n_segments));
      const int k = top_k > 0 ? std::min(top_k, n_segments) : std::min(4, n_segments);
      LimeExplanation e = lime_explain(f, n_segments, n_perturbations, sigma, k, 1e-3, *seed);
      std::vector<std::string> seg_names;
      for (int s = 0; s < n_segments; ++s) seg_names.push_back("segment_" + std::to_string(s));
      nlohmann::json j = lime_to_json(e, seg_names, cls, "image_segments");
      j["sample"] = sample_id;
      j["grid"] = grid;
      j["fill"] = fill;
      write_json_file((fs::path(out_dir) / "attribution.json").string(), j);

      // overlay: positive coefficients tint the segment by relative weight
      double cmax = 0.0;
      for (double c : e.coefficients) cmax = std::max(cmax, std::abs(c));
      Tensor map = Tensor::zeros({h, w});
      if (cmax > 0.0)
        for (int i = 0; i < h * w; ++i)
          map[i] = std::max(0.0, e.coefficients[static_cast<size_t>(seg[static_cast<size_t>(i)])]) / cmax;
      write_ppm((fs::path(out_dir) / "lime_overlay.ppm").string(), overlay_heatmap(sample->image, map));
    }
  }

  nlohmann::json config = {{"checkpoint", checkpoint}, {"data", data_path}, {"sample", sample_id},
                           {"method", method},         {"class", cls_name}, {"scheme", scheme}};
  write_run_manifest(out_dir, "explain", config, seed.value_or(0), nlohmann::json::object(), timer.seconds());
  std::printf("method=%s sample=%s out=%s\n", method.c_str(), sample_id.c_str(), out_dir.c_str());
  return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& model_cfg_path, const std::string& train_cfg_path,
               uint64_t seed, const std::string& out_dir, int jobs) {
  Timer timer;
  Dataset data = load_dataset(data_path);
  FusionConfig mcfg = load_model_config(model_cfg_path);
  TrainConfig tcfg = load_train_config(train_cfg_path);

  fs::create_directories(out_dir);
  AblationResult result = run_ablation(data, mcfg, tcfg, seed, jobs);
  write_ablation_csv((fs::path(out_dir) / "ablation.csv").string(), result);
  for (const auto& run : result.runs)
    write_json_file((fs::path(out_dir) / ("metrics_" + run.method + ".json")).string(), run.report.to_json());

  nlohmann::json hashes = {{"dataset_manifest", fnv1a64_file_hex(data_path)}};
  nlohmann::json config = {{"model", mcfg.to_json()}, {"train", tcfg.to_json()}, {"data", data_path}, {"jobs", jobs}};
  write_run_manifest(out_dir, "ablate", config, seed, hashes, timer.seconds());

  for (const auto& run : result.runs)
    std::printf("method=%s auc=%.4f f1=%.4f accuracy=%.4f mcnemar_p_vs_concat=%.4g\n", run.method.c_str(),
                run.report.auc, run.report.rates.f1, run.report.rates.accuracy, run.mcnemar_p_vs_concat);
  return 0;
}

int cmd_gradcheck(uint64_t seed, int n_seeds, double h, double tol) {
  SuiteResult result = run_gradcheck_suite(seed, n_seeds, h, tol);
  for (const auto& row : result.rows)
    std::printf("check=%-24s max_rel_err=%.3e status=%s\n", row.name.c_str(), row.max_rel_err,
                row.pass ? "pass" : "FAIL");
  std::printf("gradcheck=%s checks=%zu seeds=%d h=%g tol=%g\n", result.pass ? "pass" : "FAIL", result.rows.size(),
              n_seeds, h, tol);
  return result.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal fusion classifier with explainability"};
  app.require_subcommand(1);

  // synth
  std::string synth_config, synth_out;
  uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
  synth->add_option("--config", synth_config, "synth config JSON");
  synth->add_option("--seed", synth_seed, "RNG seed")->required();
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  std::string train_data, train_model_cfg, train_train_cfg, train_out;
  uint64_t train_seed = 0;
  int train_freeze = -1;
  auto* train_cmd = app.add_subcommand("train", "train a fusion model");
  train_cmd->add_option("--data", train_data, "dataset manifest.json")->required();
  train_cmd->add_option("--model-config", train_model_cfg, "model config JSON");
  train_cmd->add_option("--train-config", train_train_cfg, "train config JSON");
  train_cmd->add_option("--seed", train_seed, "RNG seed")->required();
  train_cmd->add_option("--out", train_out, "run directory")->required();
  train_cmd->add_option("--freeze-epochs", train_freeze, "freeze backbone for the first N epochs");

  // eval
  std::string eval_ckpt, eval_data, eval_out, eval_split = "test";
  double eval_threshold = 0.5;
  int eval_ci = 1000;
  uint64_t eval_seed = 0;
  bool eval_withhold = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint.mmfx")->required();
  eval_cmd->add_option("--data", eval_data, "dataset manifest.json")->required();
  eval_cmd->add_option("--out", eval_out, "output directory")->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test|all (default test)");
  eval_cmd->add_option("--threshold", eval_threshold, "decision threshold (default 0.5)");
  eval_cmd->add_option("--ci-resamples", eval_ci, "bootstrap resamples for CIs (0 disables)");
  eval_cmd->add_option("--seed", eval_seed, "bootstrap seed (default 0)");
  eval_cmd->add_flag("--withhold-clinical", eval_withhold, "zero all clinical inputs at eval time");

  // explain
  std::string ex_ckpt, ex_data, ex_sample, ex_method, ex_out, ex_class = "malignant", ex_scheme = "clinical";
  std::optional<uint64_t> ex_seed;
  uint64_t ex_seed_raw = 0;
  int ex_nsamples = 500, ex_nperturb = 1000, ex_grid = 4, ex_topk = 0;
  auto* explain_cmd = app.add_subcommand("explain", "explain one prediction");
  explain_cmd->add_option("--checkpoint", ex_ckpt, "checkpoint.mmfx")->required();
  explain_cmd->add_option("--data", ex_data, "dataset manifest.json")->required();
  explain_cmd->add_option("--sample", ex_sample, "sample id")->required();
  explain_cmd->add_option("--method", ex_method, "gradcam|shap|kernelshap|lime")->required();
  explain_cmd->add_option("--out", ex_out, "output directory")->required();
  explain_cmd->add_option("--class", ex_class, "benign|malignant (default malignant)");
  explain_cmd->add_option("--scheme", ex_scheme, "lime scheme: clinical|image (default clinical)");
  auto* ex_seed_opt = explain_cmd->add_option("--seed", ex_seed_raw, "RNG seed (kernelshap/lime)");
  explain_cmd->add_option("--n-samples", ex_nsamples, "kernelshap coalition samples (default 500)");
  explain_cmd->add_option("--n-perturbations", ex_nperturb, "lime perturbations (default 1000)");
  explain_cmd->add_option("--grid", ex_grid, "lime image segmentation grid (default 4)");
  explain_cmd->add_option("--top-k", ex_topk, "lime sparsity (default: all clinical / 4 segments)");

  // ablate
  std::string ab_data, ab_model_cfg, ab_train_cfg, ab_out;
  uint64_t ab_seed = 0;
  int ab_jobs = 1;
  auto* ablate_cmd = app.add_subcommand("ablate", "fusion-strategy ablation sweep");
  ablate_cmd->add_option("--data", ab_data, "dataset manifest.json")->required();
  ablate_cmd->add_option("--model-config", ab_model_cfg, "shared model config JSON");
  ablate_cmd->add_option("--train-config", ab_train_cfg, "shared train config JSON");
  ablate_cmd->add_option("--seed", ab_seed, "RNG seed")->required();
  ablate_cmd->add_option("--out", ab_out, "output directory")->required();
  ablate_cmd->add_option("--jobs", ab_jobs, "parallel training jobs (default 1)");

  // gradcheck
  uint64_t gc_seed = 1;
  int gc_seeds = 5;
  double gc_h = 1e-5, gc_tol = 1e-4;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "run the gradient-check suite");
  gradcheck_cmd->add_option("--seed", gc_seed, "base seed (default 1)");
  gradcheck_cmd->add_option("--seeds", gc_seeds, "number of seeds per check (default 5)");
  gradcheck_cmd->add_option("--step", gc_h, "finite-difference step (default 1e-5)");
  gradcheck_cmd->add_option("--tol", gc_tol, "max relative error (default 1e-4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_config, synth_seed, synth_out);
    if (train_cmd->parsed())
      return cmd_train(train_data, train_model_cfg, train_train_cfg, train_seed, train_out, train_freeze);
    if (eval_cmd->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_out, eval_split, eval_threshold, eval_ci, eval_seed, eval_withhold);
    if (explain_cmd->parsed()) {
      if (ex_seed_opt->count() > 0) ex_seed = ex_seed_raw;
      return cmd_explain(ex_ckpt, ex_data, ex_sample, ex_method, ex_out, ex_class, ex_scheme, ex_seed, ex_nsamples,
                         ex_nperturb, ex_grid, ex_topk);
    }
    if (ablate_cmd->parsed()) return cmd_ablate(ab_data, ab_model_cfg, ab_train_cfg, ab_seed, ab_out, ab_jobs);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc_seed, gc_seeds, gc_h, gc_tol);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
