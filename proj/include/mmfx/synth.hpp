#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmfx/clinical.hpp"
#include "mmfx/vendor_json_fwd.hpp"

namespace mmfx {

// Seeded generator of paired (image, clinical, label) samples with a
// controllable cross-modal interaction. The generative process:
//   z_img  in {-1,+1}  -> sharpness of the primary (brightest) blob; the
//                         image also contains n_distractors dimmer blobs of
//                         random sharpness, so globally pooled intensity
//                         statistics are a noisy readout of z_img while the
//                         primary lesion's local content stays clean
//   z_clin in {-1,+1}  -> +-1 coding of mass_shape (half its categories are
//                         malignant-leaning); other fields are distractors
//   P(label = malignant) = sigmoid(logit_scale * (w_img*z_img + w_clin*z_clin
//                          + w_x*z_img*z_clin) + N(0, noise_std))
// with (w_img, w_clin, w_x) the normalized modality weights. The Bayes
// ceiling (AUC of the true posterior) is estimated by Monte Carlo and stored
// in the manifest.
struct SynthConfig {
  int n_samples = 2000;
  int image_h = 32;
  int image_w = 32;
  double noise_std = 0.0;          // label logit noise
  double pixel_noise_std = 0.08;   // image background noise
  double interaction_weight = 0.7; // lambda_x
  double image_weight = 0.2;       // lambda_img
  double clinical_weight = 0.1;    // lambda_clin
  double logit_scale = 5.0;
  double missing_clinical_rate = 0.0;  // blank ALL clinical fields at this rate
  int n_distractors = 3;
  double train_frac = 0.64;
  double val_frac = 0.16;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
  void validate() const;
  // weights scaled to sum to 1
  void normalized_weights(double* w_img, double* w_clin, double* w_x) const;
};

struct SplitIndices {
  std::vector<int> train, val, test;
};

// Stratified-by-label split into train/val/test (test gets the remainder).
SplitIndices split_dataset(const std::vector<int>& labels, double train_frac, double val_frac, uint64_t seed);

// Writes images/NNN.pgm, clinical.csv and manifest.json under out_dir.
// Byte-identical output for identical (config, seed).
void generate_dataset(const SynthConfig& cfg, uint64_t seed, const std::string& out_dir);

// Monte Carlo estimate of the best achievable AUC given both latent factors.
double estimate_bayes_auc(const SynthConfig& cfg, uint64_t seed, int n_draws = 1000000);

}  // namespace mmfx
