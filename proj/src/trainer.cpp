#include "mmfx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mmfx/json_util.hpp"
#include "mmfx/metrics.hpp"
#include "mmfx/ops.hpp"

namespace mmfx {

nlohmann::json AugmentConfig::to_json() const {
  return {{"hflip", hflip}, {"rotation_deg", rotation_deg}, {"random_crop", random_crop}, {"crop_margin", crop_margin}};
}

AugmentConfig AugmentConfig::from_json(const nlohmann::json& j) {
  require_keys(j, "augment config", {"hflip", "rotation_deg", "random_crop", "crop_margin"});
  AugmentConfig a;
  a.hflip = j.value("hflip", a.hflip);
  a.rotation_deg = j.value("rotation_deg", a.rotation_deg);
  a.random_crop = j.value("random_crop", a.random_crop);
  a.crop_margin = j.value("crop_margin", a.crop_margin);
  return a;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"plateau_patience", plateau_patience},
          {"plateau_factor", plateau_factor},
          {"l2_coeff", l2_coeff},
          {"min_delta", min_delta},
          {"bait_switch_fraction", bait_switch_fraction},
          {"freeze_epochs", freeze_epochs},
          {"augment", augment.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  require_keys(j, "train config",
               {"lr", "batch_size", "max_epochs", "early_stop_patience", "plateau_patience", "plateau_factor",
                "l2_coeff", "min_delta", "bait_switch_fraction", "freeze_epochs", "augment"});
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
  c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
  c.l2_coeff = j.value("l2_coeff", c.l2_coeff);
  c.min_delta = j.value("min_delta", c.min_delta);
  c.bait_switch_fraction = j.value("bait_switch_fraction", c.bait_switch_fraction);
  c.freeze_epochs = j.value("freeze_epochs", c.freeze_epochs);
  if (j.contains("augment")) c.augment = AugmentConfig::from_json(j.at("augment"));
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (lr < 0.0) throw ConfigError("train config: lr must be >= 0");
  if (batch_size < 1 || max_epochs < 1) throw ConfigError("train config: batch_size/max_epochs must be >= 1");
  if (early_stop_patience < 1 || plateau_patience < 1)
    throw ConfigError("train config: patience values must be >= 1");
  if (plateau_factor <= 0.0 || plateau_factor >= 1.0) throw ConfigError("train config: plateau_factor must be in (0,1)");
  if (l2_coeff < 0.0 || min_delta < 0.0) throw ConfigError("train config: l2_coeff/min_delta must be >= 0");
  if (bait_switch_fraction < 0.0 || bait_switch_fraction > 1.0)
    throw ConfigError("train config: bait_switch_fraction must be in [0,1]");
  if (freeze_epochs < 0) throw ConfigError("train config: freeze_epochs must be >= 0");
}

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
  if (fan_in < 1) throw ConfigError("he_init: fan_in must be >= 1");
  Tensor t = Tensor::zeros(std::move(shape));
  const double stddev = std::sqrt(2.0 / fan_in);
  for (int i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

void adam_step(std::vector<Parameter>& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto it = grads.find(p.name);
    if (it == grads.end()) continue;  // frozen this step
    const Tensor& g = it->second;
    if (g.shape != p.value.shape)
      throw ShapeError("adam_step: gradient shape " + g.shape_str() + " vs parameter " + p.value.shape_str() +
                       " for '" + p.name + "'");
    for (int i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i])) throw NumericError("NaN gradient for parameter '" + p.name + "'");

    auto& m = state.m.try_emplace(p.name, Tensor::zeros(p.value.shape)).first->second;
    auto& v = state.v.try_emplace(p.name, Tensor::zeros(p.value.shape)).first->second;
    for (int i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

ScheduleDecision lr_schedule_update(const std::vector<double>& val_losses, double current_lr,
                                    const TrainConfig& cfg) {
  if (val_losses.empty()) throw Error("lr_schedule_update: history is empty");
  double best = val_losses[0];
  int since_improve = 0;
  int since_event = 0;  // epochs since last improvement or decay
  bool decayed = false;
  for (size_t i = 1; i < val_losses.size(); ++i) {
    decayed = false;
    if (val_losses[i] < best - cfg.min_delta) {
      best = val_losses[i];
      since_improve = 0;
      since_event = 0;
    } else {
      ++since_improve;
      ++since_event;
    }
    if (since_event >= cfg.plateau_patience) {
      decayed = true;
      since_event = 0;
    }
  }
  ScheduleDecision d;
  d.decayed = decayed;
  d.lr = decayed ? current_lr * cfg.plateau_factor : current_lr;
  d.stop = since_improve >= cfg.early_stop_patience;
  return d;
}

Tensor hflip_image(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1) throw ShapeError("hflip_image: expected [1 x h x w]");
  const int h = image.dim(1), w = image.dim(2);
  Tensor out = Tensor::zeros({1, h, w});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out[r * w + c] = image[r * w + (w - 1 - c)];
  return out;
}

Tensor rotate_image_bilinear(const Tensor& image, double radians) {
  if (image.rank() != 3 || image.dim(0) != 1) throw ShapeError("rotate_image_bilinear: expected [1 x h x w]");
  const int h = image.dim(1), w = image.dim(2);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double ct = std::cos(radians), st = std::sin(radians);
  Tensor out = Tensor::zeros({1, h, w});
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double dy = r - cy, dx = c - cx;
      const double sy = cy + dy * ct - dx * st;
      const double sx = cx + dy * st + dx * ct;
      const int iy = static_cast<int>(std::floor(sy)), ix = static_cast<int>(std::floor(sx));
      const double fy = sy - iy, fx = sx - ix;
      auto pix = [&](int y, int x) -> double {
        return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : image[y * w + x];
      };
      out[r * w + c] = (1 - fy) * (1 - fx) * pix(iy, ix) + (1 - fy) * fx * pix(iy, ix + 1) +
                       fy * (1 - fx) * pix(iy + 1, ix) + fy * fx * pix(iy + 1, ix + 1);
    }
  }
  return out;
}

Tensor augment_image(const Tensor& image, const AugmentConfig& cfg, Rng& rng) {
  if (image.rank() != 3 || image.dim(0) != 1) throw ShapeError("augment_image: expected [1 x h x w]");
  const int h = image.dim(1), w = image.dim(2);
  Tensor out = image.detached();
  if (cfg.hflip && rng.bernoulli(0.5)) out = hflip_image(out);
  if (cfg.rotation_deg > 0.0) {
    const double theta = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * M_PI / 180.0;
    out = rotate_image_bilinear(out, theta);
  }
  if (cfg.random_crop && cfg.crop_margin > 0) {
    const int m = cfg.crop_margin;
    if (h <= m || w <= m) throw ConfigError("augment_image: crop margin too large for image");
    const int oy = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(m + 1)));
    const int ox = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(m + 1)));
    Tensor padded = Tensor::zeros({1, h, w});
    // (h-m)x(w-m) window at (oy,ox), re-centred with m/2 zero border.
    for (int r = 0; r < h - m; ++r)
      for (int c = 0; c < w - m; ++c) padded[(r + m / 2) * w + (c + m / 2)] = out[(r + oy) * w + (c + ox)];
    out = std::move(padded);
  }
  return out;
}

namespace {

struct EvalStats {
  double loss = 0.0;
  double auc = std::numeric_limits<double>::quiet_NaN();
};

EvalStats evaluate(ModelBundle& model, const Dataset& data, const std::vector<int>& idx) {
  EvalStats st;
  std::vector<double> scores;
  std::vector<int> labels;
  double loss_sum = 0.0;
  for (int i : idx) {
    const Sample& s = data.samples[static_cast<size_t>(i)];
    SampleForward f = model.forward_sample(nullptr, s.image, s.clinical, {});
    const double p_true = std::max(f.probs.at(0, s.label), 1e-300);
    loss_sum += -std::log(p_true);
    scores.push_back(f.probs.at(0, 1));
    labels.push_back(s.label);
  }
  st.loss = loss_sum / static_cast<double>(idx.size());
  try {
    st.auc = auc_roc(scores, labels).auc;
  } catch (const NumericError&) {
    // single-class validation split: AUC undefined
  }
  return st;
}

}  // namespace

TrainResult train(ModelBundle& model, const Dataset& data, const std::vector<int>& train_idx,
                  const std::vector<int>& val_idx, const TrainConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (train_idx.empty()) throw InputError("train: empty training split");
  if (val_idx.empty()) throw InputError("train: empty validation split");
  for (int i : train_idx)
    for (int j : val_idx)
      if (i == j) throw InputError("train: train and validation splits overlap at sample index " + std::to_string(i));

  Rng shuffle_rng(seed, 1), augment_rng(seed, 2), dropout_rng(seed, 3), bait_rng(seed, 4);

  // Deterministic bait-and-switch designation: a fixed fraction of training
  // samples has all clinical fields withheld for the whole run.
  std::set<int> withheld;
  if (cfg.bait_switch_fraction > 0.0 && model.config().uses_clinical()) {
    std::vector<int> pool = train_idx;
    bait_rng.shuffle(pool);
    const size_t n_withheld = static_cast<size_t>(cfg.bait_switch_fraction * static_cast<double>(pool.size()));
    withheld.insert(pool.begin(), pool.begin() + static_cast<long>(n_withheld));
  }

  AdamState adam;
  double lr = cfg.lr;
  TrainResult result;
  std::vector<double> val_losses;
  std::vector<std::vector<double>> best_values;
  double best_val_loss = std::numeric_limits<double>::infinity();

  const bool needs_image = model.config().uses_image();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<int> order = train_idx;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Tape tape;
      std::vector<Tensor> logit_rows;
      std::vector<int> labels;
      for (size_t k = start; k < end; ++k) {
        const Sample& s = data.samples[static_cast<size_t>(order[k])];
        Tensor img = needs_image ? augment_image(s.image, cfg.augment, augment_rng) : s.image;
        ForwardOptions opt;
        opt.train = true;
        opt.rng = &dropout_rng;
        opt.withhold_clinical = withheld.count(order[k]) > 0;
        SampleForward f = model.forward_sample(&tape, img, s.clinical, opt);
        logit_rows.push_back(f.logits);
        labels.push_back(s.label);
      }
      Tensor logits = stack_rows(logit_rows);
      Tensor loss = softmax_cross_entropy(logits, labels);
      tape.backward(loss);

      const bool frozen_backbone = epoch <= cfg.freeze_epochs;
      std::map<std::string, Tensor> grads;
      for (auto& p : model.params()) {
        if (!p.trainable) continue;
        if (frozen_backbone && p.name.rfind("backbone.", 0) == 0) continue;
        Tensor g = tape.grad_of(p.value);
        if (cfg.l2_coeff > 0.0)
          for (int i = 0; i < g.size(); ++i) g[i] += cfg.l2_coeff * p.value[i];
        grads.emplace(p.name, std::move(g));
      }
      model.detach_params();
      adam_step(model.params(), grads, adam, lr);
      loss_sum += loss[0];
      ++batches;
    }

    EvalStats val = evaluate(model, data, val_idx);
    val_losses.push_back(val.loss);
    result.history.push_back({epoch, loss_sum / batches, val.loss, val.auc, lr});

    if (val.loss < best_val_loss - cfg.min_delta || best_values.empty()) {
      best_val_loss = val.loss;
      result.best_epoch = epoch;
      best_values.clear();
      for (const auto& p : model.params()) best_values.push_back(p.value.data);
    }

    ScheduleDecision dec = lr_schedule_update(val_losses, lr, cfg);
    lr = dec.lr;
    if (dec.stop) {
      result.stopped_early = true;
      break;
    }
  }

  // Restore the best validation-loss weights.
  for (size_t i = 0; i < model.params().size(); ++i) model.params()[i].value.data = best_values[i];
  model.detach_params();
  result.best_val_loss = best_val_loss;
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << "epoch,train_loss,val_loss,val_auc,lr\n";
  char buf[256];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", h.epoch, h.train_loss, h.val_loss, h.val_auc,
                  h.lr);
    out << buf;
  }
}

}  // namespace mmfx
