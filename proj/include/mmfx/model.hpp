#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmfx/clinical.hpp"
#include "mmfx/ops.hpp"
#include "mmfx/rng.hpp"
#include "mmfx/tensor.hpp"
#include "mmfx/vendor_json_fwd.hpp"

namespace mmfx {

enum class FusionKind {
  kImageOnly,
  kClinicalOnly,
  kConcat,
  kCoAttention,
  kCrossAttentionImgFromClin,
  kCrossAttentionClinFromImg,
};

enum class ImageTokenMode { kGlobal, kSpatial };
enum class ClinicalTokenMode { kGlobal, kPerField };

std::string to_string(FusionKind k);
FusionKind fusion_kind_from_string(const std::string& s);

// Small residual conv net: stem conv, then one downsampling residual block
// per entry of block_channels (stride-2 4x4 conv -> ReLU -> 3x3 conv, plus a
// 2x2 stride-2 projection skip; even kernels keep the strided output sizes
// exact). The final post-ReLU feature maps feed both GAP and Grad-CAM.
struct BackboneConfig {
  int input_h = 32;
  int input_w = 32;
  int stem_channels = 8;
  std::vector<int> block_channels = {16, 32};

  int feature_channels() const { return block_channels.empty() ? stem_channels : block_channels.back(); }
  int feature_h() const { return input_h >> block_channels.size(); }
  int feature_w() const { return input_w >> block_channels.size(); }

  nlohmann::json to_json() const;
  static BackboneConfig from_json(const nlohmann::json& j);
};

struct FusionConfig {
  FusionKind fusion_kind = FusionKind::kCrossAttentionImgFromClin;
  int d = 100;
  int d_k = 100;
  ImageTokenMode image_token_mode = ImageTokenMode::kSpatial;
  ClinicalTokenMode clinical_token_mode = ClinicalTokenMode::kPerField;
  double modality_dropout_p = 0.3;
  int classifier_hidden = 64;
  double classifier_dropout = 0.5;
  double ln_eps = 1e-5;
  // Multiplier on the He std for the attention projections (they are not
  // ReLU-activated, so their init scale is a free knob; larger values break
  // the query/key symmetry faster).
  double attn_init_scale = 2.0;
  BackboneConfig backbone;

  bool uses_image() const { return fusion_kind != FusionKind::kClinicalOnly; }
  bool uses_clinical() const { return fusion_kind != FusionKind::kImageOnly; }
  bool uses_attention() const {
    return fusion_kind == FusionKind::kCoAttention || fusion_kind == FusionKind::kCrossAttentionImgFromClin ||
           fusion_kind == FusionKind::kCrossAttentionClinFromImg;
  }
  int fused_dim() const {
    return (fusion_kind == FusionKind::kConcat || fusion_kind == FusionKind::kCoAttention) ? 2 * d : d;
  }

  nlohmann::json to_json() const;
  static FusionConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// Non-owning view of one attention head's parameters. Pointers must reference
// the tensors that were watched on the active tape for gradients to flow.
struct AttentionParams {
  const Tensor* wq_img = nullptr;
  const Tensor* wk_img = nullptr;
  const Tensor* wv_img = nullptr;
  const Tensor* wo_img = nullptr;
  const Tensor* wq_clin = nullptr;
  const Tensor* wk_clin = nullptr;
  const Tensor* wv_clin = nullptr;
  const Tensor* wo_clin = nullptr;
  const Tensor* ln_gamma_img = nullptr;
  const Tensor* ln_beta_img = nullptr;
  const Tensor* ln_gamma_clin = nullptr;
  const Tensor* ln_beta_clin = nullptr;
  int d_k = 0;
  double ln_eps = 1e-5;
};

enum class CrossDirection { kImageFromClinical, kClinicalFromImage };

// Scaled dot-product attention update of the query tokens against the context
// tokens, with residual connection and layer norm:
//   alpha = softmax(Q K^T / sqrt(d_k)), out = LN(queries + (alpha V) W_o).
// If alpha_out is non-null the row-stochastic attention matrix is stored.
Tensor attend_update(const Tensor& queries, const Tensor& context, const Tensor& wq, const Tensor& wk,
                     const Tensor& wv, const Tensor& wo, const Tensor& ln_gamma, const Tensor& ln_beta, int d_k,
                     double ln_eps, Tensor* alpha_out = nullptr);

// Symmetric bidirectional attention: both modalities attend over each other
// and both are updated.
std::pair<Tensor, Tensor> co_attention(const Tensor& img_tokens, const Tensor& clin_tokens, const AttentionParams& p,
                                       Tensor* alpha_img_out = nullptr, Tensor* alpha_clin_out = nullptr);

// One-directional attention: only the query modality is updated.
Tensor cross_attention(const Tensor& img_tokens, const Tensor& clin_tokens, const AttentionParams& p,
                       CrossDirection dir, Tensor* alpha_out = nullptr);

// k = [image_embedding || clinical_embedding], image half first.
Tensor fuse_concat(const Tensor& img_vec, const Tensor& clin_vec);

Tensor project_image(const Tensor& tokens, const Tensor& w, const Tensor& b);     // ReLU(tokens W + b)
Tensor project_clinical(const Tensor& tokens, const Tensor& w, const Tensor& b);  // same form

struct ModalityDropoutOutcome {
  bool dropped_image = false;
  bool dropped_clinical = false;
};

// With probability p zeroes exactly one modality's tokens (picked uniformly);
// never both. Training-time only.
ModalityDropoutOutcome modality_dropout(Tensor& img_tokens, Tensor& clin_tokens, double p, Rng& rng);

// Result of one sample's forward pass. Tensors are on the tape that ran the
// pass (when one was supplied), so gradients of the logits w.r.t. the feature
// maps and parameters are available.
struct SampleForward {
  Tensor logits;        // [1 x 2], pre-softmax
  Tensor probs;         // [1 x 2]
  Tensor feature_maps;  // backbone's last conv maps [c x u x v]; empty for clinical-only
  ModalityDropoutOutcome dropout;
};

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;              // required when train is true
  bool withhold_clinical = false;  // zero the clinical input vector (all fields missing)
};

// The full classifier bundle: backbone, projections, fusion head, classifier.
class ModelBundle {
 public:
  ModelBundle(FusionConfig cfg, ClinicalVocabulary vocab, Rng& rng);

  const FusionConfig& config() const { return cfg_; }
  const ClinicalVocabulary& vocabulary() const { return vocab_; }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;

  // Registers all trainable parameters on the tape (idempotent per tape).
  void watch_params(Tape& tape);
  // Clears tape handles; required before const sharing across threads.
  void detach_params();

  SampleForward forward_sample(Tape* tape, const Tensor& image, const std::vector<double>& clinical_vec,
                               const ForwardOptions& opt = {});

  // Malignant-class probability of one sample, pure forward. Parameters must
  // be detached; safe to call concurrently on a shared const bundle.
  double predict_malignant(const Tensor& image, const std::vector<double>& clinical_vec) const;

  // Checkpoint I/O, little-endian binary, magic "MMFX". Bit-exact round-trip.
  void save(const std::string& path) const;
  static ModelBundle load(const std::string& path);

  AttentionParams attention_params() const;

 private:
  ModelBundle() = default;
  void build_params(Rng& rng);
  Parameter& add_weight(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng, double scale = 1.0);
  Parameter& add_const(const std::string& name, std::vector<int> shape, double value);

  Tensor backbone_forward(const Tensor& image, Tensor* feature_maps_out);
  Tensor clinical_token_inputs(const std::vector<double>& clinical_vec) const;

  FusionConfig cfg_;
  ClinicalVocabulary vocab_ = ClinicalVocabulary::defaults();
  std::vector<Parameter> params_;
};

}  // namespace mmfx
