#include "mmfx/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "mmfx/image_io.hpp"
#include "mmfx/json_util.hpp"
#include "mmfx/rng.hpp"
#include "mmfx/tensor.hpp"

namespace fs = std::filesystem;

namespace mmfx {

nlohmann::json SynthConfig::to_json() const {
  return {{"n_samples", n_samples},
          {"image_h", image_h},
          {"image_w", image_w},
          {"noise_std", noise_std},
          {"pixel_noise_std", pixel_noise_std},
          {"interaction_weight", interaction_weight},
          {"image_weight", image_weight},
          {"clinical_weight", clinical_weight},
          {"logit_scale", logit_scale},
          {"missing_clinical_rate", missing_clinical_rate},
          {"n_distractors", n_distractors},
          {"train_frac", train_frac},
          {"val_frac", val_frac}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  require_keys(j, "synth config",
               {"n_samples", "image_h", "image_w", "noise_std", "pixel_noise_std", "interaction_weight",
                "image_weight", "clinical_weight", "logit_scale", "missing_clinical_rate", "n_distractors",
                "train_frac", "val_frac"});
  SynthConfig c;
  c.n_samples = j.value("n_samples", c.n_samples);
  c.image_h = j.value("image_h", c.image_h);
  c.image_w = j.value("image_w", c.image_w);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.pixel_noise_std = j.value("pixel_noise_std", c.pixel_noise_std);
  c.interaction_weight = j.value("interaction_weight", c.interaction_weight);
  c.image_weight = j.value("image_weight", c.image_weight);
  c.clinical_weight = j.value("clinical_weight", c.clinical_weight);
  c.logit_scale = j.value("logit_scale", c.logit_scale);
  c.missing_clinical_rate = j.value("missing_clinical_rate", c.missing_clinical_rate);
  c.n_distractors = j.value("n_distractors", c.n_distractors);
  c.train_frac = j.value("train_frac", c.train_frac);
  c.val_frac = j.value("val_frac", c.val_frac);
  c.validate();
  return c;
}

void SynthConfig::validate() const {
  if (n_samples < 1) throw ConfigError("synth config: n_samples must be >= 1");
  if (image_h < 8 || image_w < 8) throw ConfigError("synth config: images must be at least 8x8");
  if (noise_std < 0.0 || pixel_noise_std < 0.0) throw ConfigError("synth config: noise stds must be >= 0");
  if (interaction_weight < 0.0 || image_weight < 0.0 || clinical_weight < 0.0)
    throw ConfigError("synth config: modality weights must be >= 0");
  if (interaction_weight + image_weight + clinical_weight <= 0.0)
    throw ConfigError("synth config: modality weights must not all be zero");
  if (logit_scale <= 0.0) throw ConfigError("synth config: logit_scale must be positive");
  if (missing_clinical_rate < 0.0 || missing_clinical_rate > 1.0)
    throw ConfigError("synth config: missing_clinical_rate must be in [0,1]");
  if (n_distractors < 0) throw ConfigError("synth config: n_distractors must be >= 0");
  if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
    throw ConfigError("synth config: split fractions must be >= 0 and sum to <= 1");
}

void SynthConfig::normalized_weights(double* w_img, double* w_clin, double* w_x) const {
  const double total = interaction_weight + image_weight + clinical_weight;
  *w_img = image_weight / total;
  *w_clin = clinical_weight / total;
  *w_x = interaction_weight / total;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// mass_shape categories read as malignant-leaning (z_clin = +1).
const std::vector<int> kMalignantShapeIdx = {3, 4, 5, 6};

bool shape_is_malignant_leaning(int idx) {
  return std::find(kMalignantShapeIdx.begin(), kMalignantShapeIdx.end(), idx) != kMalignantShapeIdx.end();
}

struct Blob {
  double cy, cx;
  double sigma;
  double amplitude;
};

constexpr double kSharpSigma = 1.2;
constexpr double kDiffuseSigma = 3.0;
constexpr double kPrimaryAmplitude = 0.9;
constexpr double kDistractorAmplitude = 0.5;

// The primary (brightest) blob carries z_img through its sharpness; the
// distractors have random sharpness at lower peak intensity, so aggregate
// intensity statistics are a noisy readout of z_img.
std::vector<Blob> sample_blobs(int h, int w, double z_img, int n_distractors, Rng& rng) {
  const double my = h / 4.0, mx = w / 4.0;
  std::vector<Blob> blobs;
  Blob primary;
  primary.cy = rng.uniform(my, h - 1 - my);
  primary.cx = rng.uniform(mx, w - 1 - mx);
  primary.sigma = z_img > 0 ? kSharpSigma : kDiffuseSigma;
  primary.amplitude = kPrimaryAmplitude;
  blobs.push_back(primary);
  for (int d = 0; d < n_distractors; ++d) {
    Blob b;
    // keep distractors clear of the primary lesion (deterministic rejection)
    for (int attempt = 0; attempt < 64; ++attempt) {
      b.cy = rng.uniform(3.0, h - 4.0);
      b.cx = rng.uniform(3.0, w - 4.0);
      const double dy = b.cy - primary.cy, dx = b.cx - primary.cx;
      if (dy * dy + dx * dx >= 64.0) break;
    }
    b.sigma = rng.bernoulli(0.5) ? kSharpSigma : kDiffuseSigma;
    b.amplitude = kDistractorAmplitude;
    blobs.push_back(b);
  }
  return blobs;
}

Tensor render_image(int h, int w, const std::vector<Blob>& blobs, double pixel_noise_std, Rng& rng) {
  Tensor img = Tensor::zeros({1, h, w});
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double v = 0.12;
      for (const Blob& b : blobs) {
        const double d2 = (r - b.cy) * (r - b.cy) + (c - b.cx) * (c - b.cx);
        v += b.amplitude * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
      }
      if (pixel_noise_std > 0.0) v += rng.normal(0.0, pixel_noise_std);
      img[r * w + c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

// E_eps sigmoid(logit_scale*combo + noise_std*eps), the observable posterior.
double posterior(double combo, const SynthConfig& cfg, Rng& rng, int n_eps = 20000) {
  if (cfg.noise_std == 0.0) return sigmoid(cfg.logit_scale * combo);
  double s = 0.0;
  for (int i = 0; i < n_eps; ++i) s += sigmoid(cfg.logit_scale * combo + cfg.noise_std * rng.normal());
  return s / n_eps;
}

}  // namespace

SplitIndices split_dataset(const std::vector<int>& labels, double train_frac, double val_frac, uint64_t seed) {
  if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0 + 1e-12)
    throw ConfigError("split: fractions must be >= 0 and sum to <= 1");
  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  for (const auto& [cls, idx] : by_class)
    if (idx.size() < 2)
      throw InputError("split: class " + std::to_string(cls) + " has fewer than 2 samples");

  SplitIndices out;
  int stream = 20;
  for (auto& [cls, idx] : by_class) {
    Rng rng(seed, static_cast<uint64_t>(stream++));
    rng.shuffle(idx);
    const size_t n = idx.size();
    const size_t n_train = static_cast<size_t>(std::floor(train_frac * static_cast<double>(n) + 1e-9));
    const size_t n_val = static_cast<size_t>(std::floor(val_frac * static_cast<double>(n) + 1e-9));
    for (size_t i = 0; i < n; ++i) {
      if (i < n_train)
        out.train.push_back(idx[i]);
      else if (i < n_train + n_val)
        out.val.push_back(idx[i]);
      else
        out.test.push_back(idx[i]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

double estimate_bayes_auc(const SynthConfig& cfg, uint64_t seed, int n_draws) {
  double w_img, w_clin, w_x;
  cfg.normalized_weights(&w_img, &w_clin, &w_x);
  Rng rng(seed, 30);

  // Four (z_img, z_clin) combos; the posterior is the best achievable score.
  double combo_score[4];
  double combo_logit[4];
  int k = 0;
  for (int zi = -1; zi <= 1; zi += 2) {
    for (int zc = -1; zc <= 1; zc += 2) {
      const double combo = w_img * zi + w_clin * zc + w_x * zi * zc;
      combo_logit[k] = combo;
      combo_score[k] = posterior(combo, cfg, rng);
      ++k;
    }
  }

  long pos[4] = {0, 0, 0, 0}, neg[4] = {0, 0, 0, 0};
  for (int i = 0; i < n_draws; ++i) {
    const int ci = static_cast<int>(rng.uniform_int(4));
    double logit = cfg.logit_scale * combo_logit[ci];
    if (cfg.noise_std > 0.0) logit += cfg.noise_std * rng.normal();
    if (rng.bernoulli(sigmoid(logit)))
      ++pos[ci];
    else
      ++neg[ci];
  }

  double num = 0.0;
  long n_pos = 0, n_neg = 0;
  for (int a = 0; a < 4; ++a) {
    n_pos += pos[a];
    n_neg += neg[a];
    for (int b = 0; b < 4; ++b) {
      if (combo_score[a] > combo_score[b])
        num += static_cast<double>(pos[a]) * neg[b];
      else if (combo_score[a] == combo_score[b])
        num += 0.5 * static_cast<double>(pos[a]) * neg[b];
    }
  }
  if (n_pos == 0 || n_neg == 0) throw NumericError("estimate_bayes_auc: degenerate label draw");
  return num / (static_cast<double>(n_pos) * n_neg);
}

void generate_dataset(const SynthConfig& cfg, uint64_t seed, const std::string& out_dir) {
  cfg.validate();
  double w_img, w_clin, w_x;
  cfg.normalized_weights(&w_img, &w_clin, &w_x);

  fs::create_directories(fs::path(out_dir) / "images");
  const ClinicalVocabulary vocab = ClinicalVocabulary::defaults();

  Rng clin_rng(seed, 10), img_rng(seed, 11), label_rng(seed, 12), missing_rng(seed, 13);

  std::vector<ClinicalRecord> records;
  nlohmann::json sample_list = nlohmann::json::array();
  std::vector<int> labels;

  for (int i = 0; i < cfg.n_samples; ++i) {
    char id_buf[16];
    std::snprintf(id_buf, sizeof(id_buf), "s%05d", i);
    const std::string id = id_buf;

    ClinicalRecord rec;
    rec.patient_id = id;
    std::array<int, kNumClinicalFields> cat_idx{};
    for (int f = 0; f < kNumClinicalFields; ++f) {
      cat_idx[static_cast<size_t>(f)] = static_cast<int>(clin_rng.uniform_int(static_cast<uint64_t>(vocab.field_dim(f))));
      rec.fields[static_cast<size_t>(f)] = vocab.categories(f)[static_cast<size_t>(cat_idx[static_cast<size_t>(f)])];
    }
    const double z_clin = shape_is_malignant_leaning(cat_idx[1]) ? 1.0 : -1.0;
    const double z_img = img_rng.bernoulli(0.5) ? 1.0 : -1.0;

    std::vector<Blob> blobs = sample_blobs(cfg.image_h, cfg.image_w, z_img, cfg.n_distractors, img_rng);
    Tensor img = render_image(cfg.image_h, cfg.image_w, blobs, cfg.pixel_noise_std, img_rng);

    double logit = cfg.logit_scale * (w_img * z_img + w_clin * z_clin + w_x * z_img * z_clin);
    if (cfg.noise_std > 0.0) logit += cfg.noise_std * label_rng.normal();
    const int label = label_rng.bernoulli(sigmoid(logit)) ? 1 : 0;
    rec.label = label == 1 ? Label::kMalignant : Label::kBenign;

    if (cfg.missing_clinical_rate > 0.0 && missing_rng.bernoulli(cfg.missing_clinical_rate)) {
      const Label keep = rec.label;
      rec = rec.withheld();
      rec.patient_id = id;
      rec.label = keep;
    }

    const std::string image_rel = "images/" + id + ".pgm";
    write_pgm((fs::path(out_dir) / image_rel).string(), img);
    records.push_back(rec);
    labels.push_back(label);
    sample_list.push_back({{"id", id}, {"image", image_rel}, {"label", label == 1 ? "malignant" : "benign"}});
  }

  write_clinical_csv((fs::path(out_dir) / "clinical.csv").string(), records);

  SplitIndices split = split_dataset(labels, cfg.train_frac, cfg.val_frac, seed);
  auto ids_of = [&](const std::vector<int>& idx) {
    nlohmann::json arr = nlohmann::json::array();
    for (int i : idx) arr.push_back(sample_list[static_cast<size_t>(i)].at("id"));
    return arr;
  };

  const double bayes_auc = estimate_bayes_auc(cfg, seed);
  Rng post_rng(seed, 31);
  nlohmann::json posterior_table = nlohmann::json::object();
  for (int zi = -1; zi <= 1; zi += 2)
    for (int zc = -1; zc <= 1; zc += 2) {
      const double combo = w_img * zi + w_clin * zc + w_x * zi * zc;
      const std::string key = std::string("img") + (zi > 0 ? "+1" : "-1") + "_clin" + (zc > 0 ? "+1" : "-1");
      posterior_table[key] = posterior(combo, cfg, post_rng);
    }

  nlohmann::json malignant_shapes = nlohmann::json::array();
  for (int idx : kMalignantShapeIdx) malignant_shapes.push_back(vocab.categories(1)[static_cast<size_t>(idx)]);

  nlohmann::json manifest = {
      {"kind", "mmfx_dataset"},
      {"seed", seed},
      {"config", cfg.to_json()},
      {"vocabulary", vocab.to_json()},
      {"clinical_csv", "clinical.csv"},
      {"samples", sample_list},
      {"splits", {{"train", ids_of(split.train)}, {"val", ids_of(split.val)}, {"test", ids_of(split.test)}}},
      {"bayes_auc", bayes_auc},
      {"bayes_factors",
       {{"weights", {{"image", w_img}, {"clinical", w_clin}, {"interaction", w_x}}},
        {"logit_scale", cfg.logit_scale},
        {"noise_std", cfg.noise_std},
        {"malignant_leaning_mass_shapes", malignant_shapes},
        {"posterior_by_combo", posterior_table}}}};
  write_json_file((fs::path(out_dir) / "manifest.json").string(), manifest);
}

}  // namespace mmfx
