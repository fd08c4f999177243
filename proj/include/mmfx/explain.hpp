#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmfx/model.hpp"
#include "mmfx/tensor.hpp"
#include "mmfx/vendor_json_fwd.hpp"

namespace mmfx {

// Coalition value function: f(present) is the model output with exactly the
// features flagged in `present` kept and the rest masked out.
using SetFn = std::function<double(const std::vector<bool>& present)>;

// ---- Grad-CAM ----

struct GradCamMap {
  int cls = 1;
  int u = 0, v = 0;
  std::vector<double> raw;  // [u*v], all >= 0
  int h = 0, w = 0;
  std::vector<double> upsampled;  // [h*w], bilinear enlargement of raw
  std::vector<double> channel_weights;
};

// Class-discriminative heatmap over the backbone's last conv maps: channel
// weights are spatial means of d(logit_cls)/d(map), the raw map is the
// ReLU'd weighted channel sum, then bilinearly upsampled to the input size.
GradCamMap grad_cam(ModelBundle& model, const Tensor& image, const std::vector<double>& clinical_vec, int cls);

// The pure map construction from given activations [c x u x v] and the class
// score's gradients w.r.t. them. grad_cam() is this applied to a model.
GradCamMap grad_cam_from_maps(const Tensor& maps, const Tensor& map_grads, int out_h, int out_w, int cls);

std::vector<double> bilinear_resize(const std::vector<double>& src, int src_h, int src_w, int dst_h, int dst_w);

void write_heatmap_csv(const std::string& path, const std::vector<double>& map, int h, int w);

// ---- Shapley ----

struct ShapleyAttribution {
  std::vector<double> phi;
  double f_full = 0.0;
  double f_empty = 0.0;
  std::string method;  // "exact" or "kernel"
  int n_samples = 0;
  uint64_t seed = 0;
  double efficiency_residual = 0.0;
};

// Exact Shapley values by full coalition enumeration (2^M model evaluations,
// M <= 20).
ShapleyAttribution shapley_exact(const SetFn& f, int num_features);

// KernelSHAP: weighted least squares over coalitions under the Shapley
// kernel, with the empty and full coalitions pinned as constraints. When
// n_samples covers all 2^M - 2 proper coalitions they are enumerated exactly
// (which reproduces the exact values); otherwise coalition sizes are sampled
// proportionally to the kernel mass.
ShapleyAttribution kernel_shap(const SetFn& f, int num_features, int n_samples, uint64_t seed);

struct GlobalImportanceEntry {
  int feature = 0;
  double mean_abs_phi = 0.0;
};

// Mean |phi| per feature over a set of attributions, sorted descending
// (ties keep feature order).
std::vector<GlobalImportanceEntry> global_importance(const std::vector<ShapleyAttribution>& attributions);

// ---- LIME ----

struct LimeExplanation {
  double intercept = 0.0;
  std::vector<double> coefficients;  // sparsified to at most top_k nonzeros
  std::vector<int> kept;             // indices of the retained features
  double r2 = 0.0;                   // weighted fit quality of the reported surrogate
  double sigma = 0.0;
  double lambda = 0.0;
  int n_perturbations = 0;
  uint64_t seed = 0;
};

// Local surrogate: uniform binary perturbations z', locality weights
// exp(-D^2/sigma^2) with D the normalized Hamming distance from the full
// instance, weighted ridge fit (intercept unpenalized), hard top-k sparsity.
LimeExplanation lime_explain(const SetFn& f, int num_features, int n_perturbations, double sigma, int top_k,
                             double lambda, uint64_t seed);

// Regular grid segmentation: grid x grid rectangular segments, ids row-major;
// the last row/column of segments absorbs any remainder.
std::vector<int> superpixel_segments(int h, int w, int grid);

// ---- model masking ----

// Binds a model to one (image, clinical) instance and exposes coalition value
// functions. Masking clinical field j zeroes its one-hot block (the missing-
// value convention); masking an image segment fills it with `fill`.
class MaskableModel {
 public:
  MaskableModel(ModelBundle& model, Tensor image, std::vector<double> clinical_vec);

  double predict(const Tensor& image, const std::vector<double>& clinical_vec) const;
  double full_prediction() const;

  SetFn clinical_masker() const;  // num_features = 5 clinical fields
  SetFn image_segment_masker(const std::vector<int>& segmentation, int n_segments, double fill) const;

 private:
  const ModelBundle* model_;
  Tensor image_;
  std::vector<double> clinical_;
};

nlohmann::json shapley_to_json(const ShapleyAttribution& a, const std::vector<std::string>& feature_names, int cls);
nlohmann::json lime_to_json(const LimeExplanation& e, const std::vector<std::string>& feature_names, int cls,
                            const std::string& scheme);

}  // namespace mmfx
