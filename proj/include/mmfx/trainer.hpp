#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmfx/dataset.hpp"
#include "mmfx/model.hpp"
#include "mmfx/rng.hpp"
#include "mmfx/tensor.hpp"
#include "mmfx/vendor_json_fwd.hpp"

namespace mmfx {

struct AugmentConfig {
  bool hflip = true;
  double rotation_deg = 30.0;
  bool random_crop = true;
  int crop_margin = 4;

  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& j);
};

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 32;
  int max_epochs = 100;
  int early_stop_patience = 15;
  int plateau_patience = 10;
  double plateau_factor = 0.1;
  double l2_coeff = 1e-4;
  double min_delta = 1e-6;
  double bait_switch_fraction = 0.1;
  int freeze_epochs = 0;  // backbone params skipped for the first N epochs
  AugmentConfig augment;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// He normal: N(0, sqrt(2/fan_in)) i.i.d.
Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng);

// Adam moments. Beta/eps are the standard defaults; only the learning rate is
// externally tuned.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One bias-corrected Adam update over `params` using `grads` (same names).
// Gradients are expected to already include any L2 term. Missing gradient =
// parameter off the loss path this step = exact zero gradient. NaN gradient
// aborts, naming the parameter.
void adam_step(std::vector<Parameter>& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr);

struct ScheduleDecision {
  double lr = 0.0;
  bool decayed = false;
  bool stop = false;
};

// Plateau schedule over the validation-loss history: an epoch improves when it
// beats the best seen so far by more than min_delta. After plateau_patience
// non-improving epochs the lr decays by plateau_factor (and the plateau
// counter resets); after early_stop_patience non-improving epochs training
// stops.
ScheduleDecision lr_schedule_update(const std::vector<double>& val_losses, double current_lr, const TrainConfig& cfg);

// Training-time augmentation: horizontal flip (p=0.5), rotation by
// U(-rotation_deg, +rotation_deg) with bilinear resampling and zero fill,
// then a random (h-margin)x(w-margin) crop re-padded to size with zeros.
Tensor augment_image(const Tensor& image, const AugmentConfig& cfg, Rng& rng);

Tensor hflip_image(const Tensor& image);
Tensor rotate_image_bilinear(const Tensor& image, double radians);  // zero fill outside

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

// Full optimization loop: seeded shuffling, augmentation, modality dropout and
// bait-and-switch withholding, cross-entropy + L2, Adam, plateau decay, early
// stopping. Restores the best-validation-loss weights before returning.
TrainResult train(ModelBundle& model, const Dataset& data, const std::vector<int>& train_idx,
                  const std::vector<int>& val_idx, const TrainConfig& cfg, uint64_t seed);

// history.csv rows: epoch,train_loss,val_loss,val_auc,lr (17 significant
// digits, bit-stable for a fixed run).
void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace mmfx
