#include "mmfx/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "mmfx/json_util.hpp"
#include "mmfx/trainer.hpp"

namespace mmfx {

std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::kImageOnly: return "image_only";
    case FusionKind::kClinicalOnly: return "clinical_only";
    case FusionKind::kConcat: return "concat";
    case FusionKind::kCoAttention: return "co_attention";
    case FusionKind::kCrossAttentionImgFromClin: return "cross_attention_img_from_clin";
    case FusionKind::kCrossAttentionClinFromImg: return "cross_attention_clin_from_img";
  }
  return "?";
}

FusionKind fusion_kind_from_string(const std::string& s) {
  if (s == "image_only") return FusionKind::kImageOnly;
  if (s == "clinical_only") return FusionKind::kClinicalOnly;
  if (s == "concat") return FusionKind::kConcat;
  if (s == "co_attention") return FusionKind::kCoAttention;
  if (s == "cross_attention_img_from_clin") return FusionKind::kCrossAttentionImgFromClin;
  if (s == "cross_attention_clin_from_img") return FusionKind::kCrossAttentionClinFromImg;
  throw ConfigError("unknown fusion_kind '" + s + "'");
}

nlohmann::json BackboneConfig::to_json() const {
  return {{"input_h", input_h}, {"input_w", input_w}, {"stem_channels", stem_channels}, {"block_channels", block_channels}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
  require_keys(j, "backbone config", {"input_h", "input_w", "stem_channels", "block_channels"});
  BackboneConfig b;
  b.input_h = j.value("input_h", b.input_h);
  b.input_w = j.value("input_w", b.input_w);
  b.stem_channels = j.value("stem_channels", b.stem_channels);
  b.block_channels = j.value("block_channels", b.block_channels);
  return b;
}

nlohmann::json FusionConfig::to_json() const {
  return {{"fusion_kind", to_string(fusion_kind)},
          {"d", d},
          {"d_k", d_k},
          {"image_token_mode", image_token_mode == ImageTokenMode::kSpatial ? "spatial" : "global"},
          {"clinical_token_mode", clinical_token_mode == ClinicalTokenMode::kPerField ? "per_field" : "global"},
          {"modality_dropout_p", modality_dropout_p},
          {"classifier_hidden", classifier_hidden},
          {"classifier_dropout", classifier_dropout},
          {"ln_eps", ln_eps},
          {"attn_init_scale", attn_init_scale},
          {"backbone", backbone.to_json()}};
}

FusionConfig FusionConfig::from_json(const nlohmann::json& j) {
  require_keys(j, "model config",
               {"fusion_kind", "d", "d_k", "image_token_mode", "clinical_token_mode", "modality_dropout_p",
                "classifier_hidden", "classifier_dropout", "ln_eps", "attn_init_scale", "backbone"});
  FusionConfig c;
  if (j.contains("fusion_kind")) c.fusion_kind = fusion_kind_from_string(j.at("fusion_kind").get<std::string>());
  c.d = j.value("d", c.d);
  c.d_k = j.value("d_k", c.d);  // defaults to d when unset
  if (!j.contains("d_k") && j.contains("d")) c.d_k = c.d;
  if (j.contains("image_token_mode")) {
    std::string m = j.at("image_token_mode").get<std::string>();
    if (m == "spatial")
      c.image_token_mode = ImageTokenMode::kSpatial;
    else if (m == "global")
      c.image_token_mode = ImageTokenMode::kGlobal;
    else
      throw ConfigError("image_token_mode must be 'spatial' or 'global', got '" + m + "'");
  }
  if (j.contains("clinical_token_mode")) {
    std::string m = j.at("clinical_token_mode").get<std::string>();
    if (m == "per_field")
      c.clinical_token_mode = ClinicalTokenMode::kPerField;
    else if (m == "global")
      c.clinical_token_mode = ClinicalTokenMode::kGlobal;
    else
      throw ConfigError("clinical_token_mode must be 'per_field' or 'global', got '" + m + "'");
  }
  c.modality_dropout_p = j.value("modality_dropout_p", c.modality_dropout_p);
  c.classifier_hidden = j.value("classifier_hidden", c.classifier_hidden);
  c.classifier_dropout = j.value("classifier_dropout", c.classifier_dropout);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  c.attn_init_scale = j.value("attn_init_scale", c.attn_init_scale);
  if (j.contains("backbone")) c.backbone = BackboneConfig::from_json(j.at("backbone"));
  c.validate();
  return c;
}

void FusionConfig::validate() const {
  if (d < 1 || d_k < 1) throw ConfigError("latent dims d, d_k must be >= 1");
  if (modality_dropout_p < 0.0 || modality_dropout_p >= 1.0) throw ConfigError("modality_dropout_p must be in [0,1)");
  if (classifier_dropout < 0.0 || classifier_dropout >= 1.0) throw ConfigError("classifier_dropout must be in [0,1)");
  if (classifier_hidden < 1) throw ConfigError("classifier_hidden must be >= 1");
  if (ln_eps <= 0.0) throw ConfigError("ln_eps must be positive");
  if (attn_init_scale <= 0.0) throw ConfigError("attn_init_scale must be positive");
  if (backbone.stem_channels < 1) throw ConfigError("backbone stem_channels must be >= 1");
  int h = backbone.input_h, w = backbone.input_w;
  for (size_t i = 0; i < backbone.block_channels.size(); ++i) {
    if (backbone.block_channels[i] < 1) throw ConfigError("backbone block channels must be >= 1");
    if (h % 2 != 0 || w % 2 != 0 || h < 4 || w < 4)
      throw ConfigError("backbone input size " + std::to_string(backbone.input_h) + "x" +
                        std::to_string(backbone.input_w) + " cannot be downsampled " +
                        std::to_string(backbone.block_channels.size()) + " times");
    h /= 2;
    w /= 2;
  }
}

Tensor attend_update(const Tensor& queries, const Tensor& context, const Tensor& wq, const Tensor& wk,
                     const Tensor& wv, const Tensor& wo, const Tensor& ln_gamma, const Tensor& ln_beta, int d_k,
                     double ln_eps, Tensor* alpha_out) {
  Tensor q = matmul(queries, wq);
  Tensor k = matmul(context, wk);
  Tensor v = matmul(context, wv);
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d_k)));
  Tensor alpha = softmax_rows(scores);
  if (alpha_out) *alpha_out = alpha;
  Tensor attended = matmul(alpha, v);
  Tensor updated = add(queries, matmul(attended, wo));
  return layer_norm(updated, ln_gamma, ln_beta, ln_eps);
}

namespace {

void require_attn(const Tensor* t, const char* name) {
  if (!t) throw Error(std::string("attention parameters missing ") + name);
}

}  // namespace

std::pair<Tensor, Tensor> co_attention(const Tensor& img_tokens, const Tensor& clin_tokens, const AttentionParams& p,
                                       Tensor* alpha_img_out, Tensor* alpha_clin_out) {
  Tensor e_hat = cross_attention(img_tokens, clin_tokens, p, CrossDirection::kImageFromClinical, alpha_img_out);
  Tensor c_hat = cross_attention(img_tokens, clin_tokens, p, CrossDirection::kClinicalFromImage, alpha_clin_out);
  return {std::move(e_hat), std::move(c_hat)};
}

Tensor cross_attention(const Tensor& img_tokens, const Tensor& clin_tokens, const AttentionParams& p,
                       CrossDirection dir, Tensor* alpha_out) {
  if (img_tokens.rank() != 2 || clin_tokens.rank() != 2 || img_tokens.cols() != clin_tokens.cols())
    throw ShapeError("attention: token matrices disagree, " + img_tokens.shape_str() + " vs " +
                     clin_tokens.shape_str());
  if (dir == CrossDirection::kImageFromClinical) {
    require_attn(p.wq_img, "wq_img");
    require_attn(p.wk_clin, "wk_clin");
    require_attn(p.wv_clin, "wv_clin");
    require_attn(p.wo_img, "wo_img");
    return attend_update(img_tokens, clin_tokens, *p.wq_img, *p.wk_clin, *p.wv_clin, *p.wo_img, *p.ln_gamma_img,
                         *p.ln_beta_img, p.d_k, p.ln_eps, alpha_out);
  }
  require_attn(p.wq_clin, "wq_clin");
  require_attn(p.wk_img, "wk_img");
  require_attn(p.wv_img, "wv_img");
  require_attn(p.wo_clin, "wo_clin");
  return attend_update(clin_tokens, img_tokens, *p.wq_clin, *p.wk_img, *p.wv_img, *p.wo_clin, *p.ln_gamma_clin,
                       *p.ln_beta_clin, p.d_k, p.ln_eps, alpha_out);
}

Tensor fuse_concat(const Tensor& img_vec, const Tensor& clin_vec) {
  if (img_vec.rank() != 1 || clin_vec.rank() != 1 || img_vec.size() != clin_vec.size())
    throw ShapeError("fuse_concat: embeddings disagree, " + img_vec.shape_str() + " vs " + clin_vec.shape_str());
  return concat(img_vec, clin_vec);
}

Tensor project_image(const Tensor& tokens, const Tensor& w, const Tensor& b) {
  return relu(matmul_bias(tokens, w, b));
}

Tensor project_clinical(const Tensor& tokens, const Tensor& w, const Tensor& b) {
  return relu(matmul_bias(tokens, w, b));
}

ModalityDropoutOutcome modality_dropout(Tensor& img_tokens, Tensor& clin_tokens, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("modality_dropout: p must be in [0,1)");
  ModalityDropoutOutcome out;
  if (rng.uniform01() < p) {
    if (rng.uniform01() < 0.5) {
      img_tokens = scale(img_tokens, 0.0);
      out.dropped_image = true;
    } else {
      clin_tokens = scale(clin_tokens, 0.0);
      out.dropped_clinical = true;
    }
  }
  return out;
}

// ---- ModelBundle ----

ModelBundle::ModelBundle(FusionConfig cfg, ClinicalVocabulary vocab, Rng& rng)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.validate();
  build_params(rng);
}

Parameter& ModelBundle::add_weight(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng,
                                   double scale) {
  Tensor t = he_init(std::move(shape), fan_in, rng);
  if (scale != 1.0)
    for (int i = 0; i < t.size(); ++i) t[i] *= scale;
  params_.emplace_back(name, std::move(t));
  return params_.back();
}

Parameter& ModelBundle::add_const(const std::string& name, std::vector<int> shape, double value) {
  params_.emplace_back(name, Tensor::full(std::move(shape), value));
  return params_.back();
}

void ModelBundle::build_params(Rng& rng) {
  const FusionConfig& c = cfg_;
  const int d = c.d, dk = c.d_k;

  if (c.uses_image()) {
    const BackboneConfig& b = c.backbone;
    add_weight("backbone.stem.kernel", {b.stem_channels, 1, 3, 3}, 9, rng);
    add_const("backbone.stem.bias", {b.stem_channels}, 0.0);
    int prev = b.stem_channels;
    for (size_t i = 0; i < b.block_channels.size(); ++i) {
      const int ch = b.block_channels[i];
      const std::string base = "backbone.block" + std::to_string(i);
      add_weight(base + ".conv1.kernel", {ch, prev, 4, 4}, prev * 16, rng);
      add_const(base + ".conv1.bias", {ch}, 0.0);
      add_weight(base + ".conv2.kernel", {ch, ch, 3, 3}, ch * 9, rng);
      add_const(base + ".conv2.bias", {ch}, 0.0);
      add_weight(base + ".skip.kernel", {ch, prev, 2, 2}, prev * 4, rng);
      prev = ch;
    }
    add_weight("proj.image.weight", {b.feature_channels(), d}, b.feature_channels(), rng);
    add_const("proj.image.bias", {d}, 0.0);
  }

  if (c.uses_clinical()) {
    add_weight("proj.clinical.weight", {vocab_.total_dim(), d}, vocab_.total_dim(), rng);
    add_const("proj.clinical.bias", {d}, 0.0);
  }

  const bool img_query = c.fusion_kind == FusionKind::kCoAttention ||
                         c.fusion_kind == FusionKind::kCrossAttentionImgFromClin;
  const bool clin_query = c.fusion_kind == FusionKind::kCoAttention ||
                          c.fusion_kind == FusionKind::kCrossAttentionClinFromImg;
  const double as = c.attn_init_scale;
  if (img_query) {
    add_weight("attn.image.wq", {d, dk}, d, rng, as);
    add_weight("attn.clinical.wk", {d, dk}, d, rng, as);
    add_weight("attn.clinical.wv", {d, dk}, d, rng, as);
    add_weight("attn.image.wo", {dk, d}, dk, rng, as);
    add_const("attn.image.ln_gamma", {d}, 1.0);
    add_const("attn.image.ln_beta", {d}, 0.0);
  }
  if (clin_query) {
    add_weight("attn.clinical.wq", {d, dk}, d, rng, as);
    add_weight("attn.image.wk", {d, dk}, d, rng, as);
    add_weight("attn.image.wv", {d, dk}, d, rng, as);
    add_weight("attn.clinical.wo", {dk, d}, dk, rng, as);
    add_const("attn.clinical.ln_gamma", {d}, 1.0);
    add_const("attn.clinical.ln_beta", {d}, 0.0);
  }

  add_weight("classifier.hidden.weight", {c.fused_dim(), c.classifier_hidden}, c.fused_dim(), rng);
  add_const("classifier.hidden.bias", {c.classifier_hidden}, 0.0);
  add_weight("classifier.out.weight", {c.classifier_hidden, 2}, c.classifier_hidden, rng);
  add_const("classifier.out.bias", {2}, 0.0);
}

Parameter& ModelBundle::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw Error("no parameter named '" + name + "'");
}

const Parameter& ModelBundle::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw Error("no parameter named '" + name + "'");
}

void ModelBundle::watch_params(Tape& tape) {
  for (auto& p : params_)
    if (p.trainable) tape.watch(p.value);
}

void ModelBundle::detach_params() {
  for (auto& p : params_) {
    p.value.tape = nullptr;
    p.value.node = -1;
  }
}

AttentionParams ModelBundle::attention_params() const {
  AttentionParams a;
  a.d_k = cfg_.d_k;
  a.ln_eps = cfg_.ln_eps;
  auto maybe = [this](const char* name) -> const Tensor* {
    for (const auto& p : params_)
      if (p.name == name) return &p.value;
    return nullptr;
  };
  a.wq_img = maybe("attn.image.wq");
  a.wk_img = maybe("attn.image.wk");
  a.wv_img = maybe("attn.image.wv");
  a.wo_img = maybe("attn.image.wo");
  a.wq_clin = maybe("attn.clinical.wq");
  a.wk_clin = maybe("attn.clinical.wk");
  a.wv_clin = maybe("attn.clinical.wv");
  a.wo_clin = maybe("attn.clinical.wo");
  a.ln_gamma_img = maybe("attn.image.ln_gamma");
  a.ln_beta_img = maybe("attn.image.ln_beta");
  a.ln_gamma_clin = maybe("attn.clinical.ln_gamma");
  a.ln_beta_clin = maybe("attn.clinical.ln_beta");
  return a;
}

Tensor ModelBundle::backbone_forward(const Tensor& image, Tensor* feature_maps_out) {
  const BackboneConfig& b = cfg_.backbone;
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) != b.input_h || image.dim(2) != b.input_w)
    throw ShapeError("backbone: expected image [1x" + std::to_string(b.input_h) + "x" + std::to_string(b.input_w) +
                     "], got " + image.shape_str());

  Tensor x = relu(bias_channels(conv2d(image, param("backbone.stem.kernel").value, 1, 1),
                                param("backbone.stem.bias").value));
  for (size_t i = 0; i < b.block_channels.size(); ++i) {
    const std::string base = "backbone.block" + std::to_string(i);
    Tensor a = relu(bias_channels(conv2d(x, param(base + ".conv1.kernel").value, 2, 1),
                                  param(base + ".conv1.bias").value));
    Tensor y = bias_channels(conv2d(a, param(base + ".conv2.kernel").value, 1, 1),
                             param(base + ".conv2.bias").value);
    Tensor skip = conv2d(x, param(base + ".skip.kernel").value, 2, 0);
    x = relu(add(y, skip));
  }
  check_finite(x, "backbone feature maps");
  if (feature_maps_out) *feature_maps_out = x;
  return global_avg_pool(x);
}

Tensor ModelBundle::clinical_token_inputs(const std::vector<double>& clinical_vec) const {
  const int dc = vocab_.total_dim();
  if (static_cast<int>(clinical_vec.size()) != dc)
    throw ShapeError("clinical vector has length " + std::to_string(clinical_vec.size()) + ", vocabulary expects " +
                     std::to_string(dc));
  if (cfg_.clinical_token_mode == ClinicalTokenMode::kGlobal) return Tensor({1, dc}, clinical_vec);
  // per_field: token j sees only its own one-hot block.
  Tensor rows = Tensor::zeros({kNumClinicalFields, dc});
  for (int f = 0; f < kNumClinicalFields; ++f) {
    const int off = vocab_.block_offset(f), len = vocab_.field_dim(f);
    for (int j = 0; j < len; ++j) rows.at(f, off + j) = clinical_vec[static_cast<size_t>(off + j)];
  }
  return rows;
}

SampleForward ModelBundle::forward_sample(Tape* tape, const Tensor& image, const std::vector<double>& clinical_vec,
                                          const ForwardOptions& opt) {
  if (opt.train && opt.rng == nullptr) throw Error("forward_sample: training mode requires an rng");
  if (tape)
    watch_params(*tape);
  else
    detach_params();

  SampleForward out;
  Tensor img_tokens, clin_tokens;

  if (cfg_.uses_image()) {
    Tensor fmaps;
    Tensor pooled = backbone_forward(image, &fmaps);
    out.feature_maps = fmaps;
    const int cf = cfg_.backbone.feature_channels();
    Tensor cells;
    if (cfg_.image_token_mode == ImageTokenMode::kSpatial) {
      const int uv = cfg_.backbone.feature_h() * cfg_.backbone.feature_w();
      cells = transpose(reshape(fmaps, {cf, uv}));  // [n_e x c_f]
    } else {
      cells = reshape(pooled, {1, cf});
    }
    img_tokens = project_image(cells, param("proj.image.weight").value, param("proj.image.bias").value);
    check_finite(img_tokens, "image projection");
  }

  if (cfg_.uses_clinical()) {
    std::vector<double> cv = clinical_vec;
    if (opt.withhold_clinical) std::fill(cv.begin(), cv.end(), 0.0);
    Tensor token_inputs = clinical_token_inputs(cv);
    clin_tokens = project_clinical(token_inputs, param("proj.clinical.weight").value, param("proj.clinical.bias").value);
    check_finite(clin_tokens, "clinical projection");
  }

  if (opt.train && cfg_.uses_image() && cfg_.uses_clinical() && cfg_.modality_dropout_p > 0.0)
    out.dropout = modality_dropout(img_tokens, clin_tokens, cfg_.modality_dropout_p, *opt.rng);

  Tensor fused;
  switch (cfg_.fusion_kind) {
    case FusionKind::kImageOnly:
      fused = mean_rows(img_tokens);
      break;
    case FusionKind::kClinicalOnly:
      fused = mean_rows(clin_tokens);
      break;
    case FusionKind::kConcat:
      fused = fuse_concat(mean_rows(img_tokens), mean_rows(clin_tokens));
      break;
    case FusionKind::kCoAttention: {
      auto [e_hat, c_hat] = co_attention(img_tokens, clin_tokens, attention_params());
      fused = fuse_concat(mean_rows(e_hat), mean_rows(c_hat));
      break;
    }
    case FusionKind::kCrossAttentionImgFromClin:
      fused = mean_rows(cross_attention(img_tokens, clin_tokens, attention_params(), CrossDirection::kImageFromClinical));
      break;
    case FusionKind::kCrossAttentionClinFromImg:
      fused = mean_rows(cross_attention(img_tokens, clin_tokens, attention_params(), CrossDirection::kClinicalFromImage));
      break;
  }
  check_finite(fused, "fusion head");

  Tensor z = reshape(fused, {1, cfg_.fused_dim()});
  Tensor hidden = relu(matmul_bias(z, param("classifier.hidden.weight").value, param("classifier.hidden.bias").value));
  if (opt.train && cfg_.classifier_dropout > 0.0) {
    const double keep = 1.0 - cfg_.classifier_dropout;
    Tensor mask = Tensor::zeros({1, cfg_.classifier_hidden});
    for (int i = 0; i < mask.size(); ++i) mask[i] = opt.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    hidden = mul_elem(hidden, mask);
  }
  out.logits = matmul_bias(hidden, param("classifier.out.weight").value, param("classifier.out.bias").value);
  check_finite(out.logits, "classifier logits");
  out.probs = softmax_rows(out.logits);
  return out;
}

double ModelBundle::predict_malignant(const Tensor& image, const std::vector<double>& clinical_vec) const {
  for (const auto& p : params_)
    if (p.value.on_tape()) throw Error("predict_malignant: call detach_params() before shared const evaluation");
  // No tape and no training branches: forward_sample only mutates tape
  // handles, which detached parameters do not reach.
  auto* self = const_cast<ModelBundle*>(this);
  SampleForward f = self->forward_sample(nullptr, image, clinical_vec, {});
  return f.probs.at(0, 1);
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[4] = {'M', 'M', 'F', 'X'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void ModelBundle::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);

  nlohmann::json meta = {{"fusion", cfg_.to_json()}, {"vocabulary", vocab_.to_json()}};
  const std::string meta_str = meta.dump();
  put_u32(out, static_cast<uint32_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  put_u32(out, static_cast<uint32_t>(params_.size()));
  for (const auto& p : params_) {
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const uint8_t tr = p.trainable ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&tr), 1);
    put_u32(out, static_cast<uint32_t>(p.value.shape.size()));
    for (int dim : p.value.shape) put_u32(out, static_cast<uint32_t>(dim));
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
  }
  if (!out) throw InputError("write failed for checkpoint " + path);
}

ModelBundle ModelBundle::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw InputError(path + ": not an MMFX checkpoint");
  const uint32_t version = get_u32(in);
  if (version != kVersion) throw InputError(path + ": unsupported checkpoint version " + std::to_string(version));

  const uint32_t meta_len = get_u32(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), meta_len);
  if (!in) throw InputError(path + ": truncated checkpoint metadata");
  nlohmann::json meta = nlohmann::json::parse(meta_str);
  require_keys(meta, "checkpoint metadata", {"fusion", "vocabulary"});

  ModelBundle m;
  m.cfg_ = FusionConfig::from_json(meta.at("fusion"));
  m.vocab_ = ClinicalVocabulary::from_json(meta.at("vocabulary"));
  Rng scratch(0);
  m.build_params(scratch);  // structure only; values are overwritten below

  const uint32_t n = get_u32(in);
  if (n != m.params_.size())
    throw InputError(path + ": checkpoint has " + std::to_string(n) + " parameters, config implies " +
                     std::to_string(m.params_.size()));
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint8_t tr = 1;
    in.read(reinterpret_cast<char*>(&tr), 1);
    const uint32_t rank = get_u32(in);
    std::vector<int> shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(get_u32(in));
    Parameter& p = m.param(name);
    if (p.value.shape != shape)
      throw InputError(path + ": parameter '" + name + "' has shape mismatch vs config");
    in.read(reinterpret_cast<char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
    p.trainable = tr != 0;
    if (!in) throw InputError(path + ": truncated parameter payload for '" + name + "'");
  }
  return m;
}

}  // namespace mmfx
