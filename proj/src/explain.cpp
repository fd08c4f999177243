#include "mmfx/explain.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "mmfx/ops.hpp"
#include "mmfx/rng.hpp"

namespace mmfx {

// ---- Grad-CAM ----

std::vector<double> bilinear_resize(const std::vector<double>& src, int src_h, int src_w, int dst_h, int dst_w) {
  std::vector<double> dst(static_cast<size_t>(dst_h) * dst_w);
  const double sy = static_cast<double>(src_h) / dst_h;
  const double sx = static_cast<double>(src_w) / dst_w;
  for (int r = 0; r < dst_h; ++r) {
    // half-pixel centers, clamped at the borders
    double fy = (r + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int c = 0; c < dst_w; ++c) {
      double fx = (c + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      dst[static_cast<size_t>(r) * dst_w + c] =
          (1 - wy) * (1 - wx) * src[static_cast<size_t>(y0) * src_w + x0] +
          (1 - wy) * wx * src[static_cast<size_t>(y0) * src_w + x1] +
          wy * (1 - wx) * src[static_cast<size_t>(y1) * src_w + x0] +
          wy * wx * src[static_cast<size_t>(y1) * src_w + x1];
    }
  }
  return dst;
}

GradCamMap grad_cam_from_maps(const Tensor& maps, const Tensor& map_grads, int out_h, int out_w, int cls) {
  if (maps.rank() != 3 || maps.shape != map_grads.shape)
    throw ShapeError("grad_cam: activations " + maps.shape_str() + " and gradients " + map_grads.shape_str() +
                     " disagree");
  const int c = maps.dim(0), u = maps.dim(1), v = maps.dim(2);
  const double inv_z = 1.0 / (u * v);

  GradCamMap map;
  map.cls = cls;
  map.u = u;
  map.v = v;
  map.h = out_h;
  map.w = out_w;
  map.channel_weights.resize(static_cast<size_t>(c));
  for (int k = 0; k < c; ++k) {
    double s = 0.0;
    for (int i = 0; i < u * v; ++i) s += map_grads[k * u * v + i];
    map.channel_weights[static_cast<size_t>(k)] = s * inv_z;
  }
  map.raw.assign(static_cast<size_t>(u) * v, 0.0);
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < u * v; ++i)
      map.raw[static_cast<size_t>(i)] += map.channel_weights[static_cast<size_t>(k)] * maps[k * u * v + i];
  for (double& x : map.raw) x = std::max(0.0, x);
  map.upsampled = bilinear_resize(map.raw, u, v, out_h, out_w);
  return map;
}

GradCamMap grad_cam(ModelBundle& model, const Tensor& image, const std::vector<double>& clinical_vec, int cls) {
  if (cls < 0 || cls > 1) throw Error("grad_cam: class index " + std::to_string(cls) + " out of range");
  if (!model.config().uses_image()) throw Error("grad_cam: model has no image pathway");

  Tape tape;
  SampleForward f = model.forward_sample(&tape, image, clinical_vec, {});
  Tensor y_c = select(f.logits, cls);  // pre-softmax class score
  tape.backward(y_c);
  Tensor g = tape.grad_of(f.feature_maps);
  model.detach_params();
  return grad_cam_from_maps(f.feature_maps.detached(), g, image.dim(1), image.dim(2), cls);
}

void write_heatmap_csv(const std::string& path, const std::vector<double>& map, int h, int w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  char buf[64];
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", map[static_cast<size_t>(r) * w + c]);
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
}

// ---- Shapley ----

namespace {

// 1 / (M * binom(M-1, s)), the coalition weight |S|!(M-|S|-1)!/M!.
double exact_coalition_weight(int s, int m) {
  double binom = 1.0;
  for (int i = 1; i <= s; ++i) binom *= static_cast<double>(m - 1 - s + i) / i;
  return 1.0 / (m * binom);
}

double binom_double(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b *= static_cast<double>(n - k + i) / i;
  return b;
}

}  // namespace

ShapleyAttribution shapley_exact(const SetFn& f, int num_features) {
  const int m = num_features;
  if (m < 1) throw ConfigError("shapley_exact: need at least one feature");
  if (m > 20)
    throw ConfigError("shapley_exact: " + std::to_string(m) +
                      " features would need 2^" + std::to_string(m) + " evaluations; use kernel_shap");

  const size_t n_sets = size_t{1} << m;
  std::vector<double> value(n_sets);
  std::vector<bool> present(static_cast<size_t>(m));
  for (size_t mask = 0; mask < n_sets; ++mask) {
    for (int i = 0; i < m; ++i) present[static_cast<size_t>(i)] = (mask >> i) & 1;
    value[mask] = f(present);
  }

  std::vector<double> weight_by_size(static_cast<size_t>(m));
  for (int s = 0; s < m; ++s) weight_by_size[static_cast<size_t>(s)] = exact_coalition_weight(s, m);

  ShapleyAttribution out;
  out.method = "exact";
  out.phi.assign(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    const size_t bit = size_t{1} << i;
    for (size_t mask = 0; mask < n_sets; ++mask) {
      if (mask & bit) continue;
      const int s = std::popcount(mask);
      out.phi[static_cast<size_t>(i)] += weight_by_size[static_cast<size_t>(s)] * (value[mask | bit] - value[mask]);
    }
  }
  out.f_empty = value[0];
  out.f_full = value[n_sets - 1];
  double sum = std::accumulate(out.phi.begin(), out.phi.end(), 0.0);
  out.efficiency_residual = std::abs(sum - (out.f_full - out.f_empty));
  return out;
}

ShapleyAttribution kernel_shap(const SetFn& f, int num_features, int n_samples, uint64_t seed) {
  const int m = num_features;
  if (m < 1) throw ConfigError("kernel_shap: need at least one feature");
  if (n_samples < m + 2) throw ConfigError("kernel_shap: n_samples must be at least M+2");

  std::vector<bool> present(static_cast<size_t>(m));
  auto eval_mask = [&](uint64_t mask) {
    for (int i = 0; i < m; ++i) present[static_cast<size_t>(i)] = (mask >> i) & 1;
    return f(present);
  };

  ShapleyAttribution out;
  out.method = "kernel";
  out.n_samples = n_samples;
  out.seed = seed;
  out.f_empty = eval_mask(0);
  out.f_full = eval_mask((uint64_t{1} << m) - 1);
  const double delta = out.f_full - out.f_empty;

  if (m == 1) {
    out.phi = {delta};
    return out;
  }

  // Rows: (coalition mask, weight). Coalition sizes are enumerated exactly in
  // paired order (1 and M-1, then 2 and M-2, ...) while the sample budget
  // covers them, with the per-subset Shapley kernel weight
  // (M-1) / (C(M,s) * s * (M-s)); whatever budget remains is spent on Monte
  // Carlo draws over the leftover sizes, sampled proportionally to the
  // remaining kernel mass. Covering every proper coalition reproduces the
  // exact Shapley values.
  std::map<uint64_t, double> rows;
  const uint64_t full_mask = (uint64_t{1} << m) - 1;
  auto kernel_weight = [m](int s) { return (m - 1.0) / (binom_double(m, s) * s * (m - s)); };

  std::vector<bool> size_enumerated(static_cast<size_t>(m), false);
  long budget = n_samples;
  for (int s = 1; s <= m / 2; ++s) {
    const int spair = m - s;
    const double count = binom_double(m, s);
    const double group = spair != s ? 2.0 * count : count;
    if (group > static_cast<double>(budget)) break;
    // enumerate all subsets of size s via combination stepping
    std::vector<int> idx(static_cast<size_t>(s));
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      uint64_t mask = 0;
      for (int i : idx) mask |= uint64_t{1} << i;
      rows[mask] = kernel_weight(s);
      if (spair != s) rows[full_mask ^ mask] = kernel_weight(spair);
      int pos = s - 1;
      while (pos >= 0 && idx[static_cast<size_t>(pos)] == m - s + pos) --pos;
      if (pos < 0) break;
      ++idx[static_cast<size_t>(pos)];
      for (int i = pos + 1; i < s; ++i) idx[static_cast<size_t>(i)] = idx[static_cast<size_t>(i - 1)] + 1;
    }
    budget -= static_cast<long>(group);
    size_enumerated[static_cast<size_t>(s)] = true;
    size_enumerated[static_cast<size_t>(spair)] = true;
  }

  std::vector<double> size_mass(static_cast<size_t>(m), 0.0);
  double mass_remaining = 0.0;
  for (int s = 1; s < m; ++s) {
    if (size_enumerated[static_cast<size_t>(s)]) continue;
    size_mass[static_cast<size_t>(s)] = (m - 1.0) / (static_cast<double>(s) * (m - s));
    mass_remaining += size_mass[static_cast<size_t>(s)];
  }
  if (mass_remaining > 0.0 && budget > 0) {
    Rng rng(seed);
    std::map<uint64_t, double> counts;
    std::vector<int> order(static_cast<size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    for (long n = 0; n < budget; ++n) {
      double r = rng.uniform01() * mass_remaining;
      int s = 0;
      for (int cand = 1; cand < m; ++cand) {
        if (size_enumerated[static_cast<size_t>(cand)]) continue;
        s = cand;
        r -= size_mass[static_cast<size_t>(cand)];
        if (r <= 0.0) break;
      }
      // uniform s-subset via partial Fisher-Yates
      for (int i = 0; i < s; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(m - i)));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
      }
      uint64_t mask = 0;
      for (int i = 0; i < s; ++i) mask |= uint64_t{1} << order[static_cast<size_t>(i)];
      counts[mask] += 1.0;
    }
    const double per_draw = mass_remaining / static_cast<double>(budget);
    for (const auto& [mask, c] : counts) rows[mask] += c * per_draw;
  }

  // Solve the constrained weighted least squares by eliminating the last
  // feature: phi_last = delta - sum(others).
  const int q = m - 1;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd x(q);
  for (const auto& [mask, weight] : rows) {
    const double z_last = (mask >> (m - 1)) & 1 ? 1.0 : 0.0;
    for (int i = 0; i < q; ++i) x[i] = (((mask >> i) & 1) ? 1.0 : 0.0) - z_last;
    const double y = eval_mask(mask) - out.f_empty - z_last * delta;
    ata.noalias() += weight * x * x.transpose();
    atb.noalias() += weight * y * x;
  }

  Eigen::LDLT<Eigen::MatrixXd> solver(ata);
  Eigen::VectorXd sol = solver.solve(atb);
  if (solver.info() != Eigen::Success || !sol.allFinite() || (ata * sol - atb).norm() > 1e-6 * (1.0 + atb.norm()))
    throw NumericError("kernel_shap: singular regression system; raise n_samples");

  out.phi.assign(static_cast<size_t>(m), 0.0);
  double sum_q = 0.0;
  for (int i = 0; i < q; ++i) {
    out.phi[static_cast<size_t>(i)] = sol[i];
    sum_q += sol[i];
  }
  out.phi[static_cast<size_t>(m - 1)] = delta - sum_q;
  const double sum = std::accumulate(out.phi.begin(), out.phi.end(), 0.0);
  out.efficiency_residual = std::abs(sum - delta);
  return out;
}

std::vector<GlobalImportanceEntry> global_importance(const std::vector<ShapleyAttribution>& attributions) {
  if (attributions.empty()) throw InputError("global_importance: no attributions");
  const size_t m = attributions[0].phi.size();
  for (const auto& a : attributions)
    if (a.phi.size() != m) throw ShapeError("global_importance: attributions disagree on feature count");

  std::vector<GlobalImportanceEntry> out(m);
  for (size_t i = 0; i < m; ++i) {
    out[i].feature = static_cast<int>(i);
    double s = 0.0;
    for (const auto& a : attributions) s += std::abs(a.phi[i]);
    out[i].mean_abs_phi = s / static_cast<double>(attributions.size());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const GlobalImportanceEntry& a, const GlobalImportanceEntry& b) {
                     return a.mean_abs_phi > b.mean_abs_phi;
                   });
  return out;
}

// ---- LIME ----

LimeExplanation lime_explain(const SetFn& f, int num_features, int n_perturbations, double sigma, int top_k,
                             double lambda, uint64_t seed) {
  const int m = num_features;
  if (m < 1) throw ConfigError("lime_explain: need at least one feature");
  if (n_perturbations < 2) throw ConfigError("lime_explain: need at least two perturbations");
  if (sigma <= 0.0) throw ConfigError("lime_explain: sigma must be positive");
  if (top_k < 1 || top_k > m) throw ConfigError("lime_explain: top_k must be in [1, M]");

  Rng rng(seed);
  std::vector<std::vector<bool>> zs(static_cast<size_t>(n_perturbations));
  for (auto& z : zs) {
    z.resize(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) z[static_cast<size_t>(i)] = rng.bernoulli(0.5);
  }
  bool all_same = true;
  for (const auto& z : zs) all_same &= (z == zs[0]);
  if (all_same) throw NumericError("lime_explain: degenerate perturbation set (all draws identical)");

  std::vector<double> y(static_cast<size_t>(n_perturbations)), w(static_cast<size_t>(n_perturbations));
  for (int j = 0; j < n_perturbations; ++j) {
    const auto& z = zs[static_cast<size_t>(j)];
    y[static_cast<size_t>(j)] = f(z);
    int masked = 0;
    for (int i = 0; i < m; ++i) masked += z[static_cast<size_t>(i)] ? 0 : 1;
    const double dist = static_cast<double>(masked) / m;  // normalized Hamming from the full instance
    w[static_cast<size_t>(j)] = std::exp(-(dist * dist) / (sigma * sigma));
  }

  // Weighted ridge on [1, z'] with the intercept unpenalized.
  const int p = m + 1;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd x(p);
  for (int j = 0; j < n_perturbations; ++j) {
    x[0] = 1.0;
    for (int i = 0; i < m; ++i) x[i + 1] = zs[static_cast<size_t>(j)][static_cast<size_t>(i)] ? 1.0 : 0.0;
    ata.noalias() += w[static_cast<size_t>(j)] * x * x.transpose();
    atb.noalias() += w[static_cast<size_t>(j)] * y[static_cast<size_t>(j)] * x;
  }
  for (int i = 1; i < p; ++i) ata(i, i) += lambda;

  Eigen::LDLT<Eigen::MatrixXd> solver(ata);
  Eigen::VectorXd beta = solver.solve(atb);
  if (solver.info() != Eigen::Success || !beta.allFinite())
    throw NumericError("lime_explain: surrogate fit failed; raise n_perturbations or lambda");

  LimeExplanation out;
  out.intercept = beta[0];
  out.coefficients.assign(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) out.coefficients[static_cast<size_t>(i)] = beta[i + 1];

  // Hard sparsity: keep the top_k coefficients by magnitude.
  std::vector<int> idx(static_cast<size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::abs(out.coefficients[static_cast<size_t>(a)]) > std::abs(out.coefficients[static_cast<size_t>(b)]);
  });
  idx.resize(static_cast<size_t>(top_k));
  std::sort(idx.begin(), idx.end());
  std::vector<double> sparse(static_cast<size_t>(m), 0.0);
  for (int i : idx) sparse[static_cast<size_t>(i)] = out.coefficients[static_cast<size_t>(i)];
  out.coefficients = std::move(sparse);
  out.kept = std::move(idx);

  // Weighted R^2 of the reported (sparsified) surrogate.
  double w_sum = 0.0, y_mean = 0.0;
  for (int j = 0; j < n_perturbations; ++j) {
    w_sum += w[static_cast<size_t>(j)];
    y_mean += w[static_cast<size_t>(j)] * y[static_cast<size_t>(j)];
  }
  y_mean /= w_sum;
  double ss_res = 0.0, ss_tot = 0.0;
  for (int j = 0; j < n_perturbations; ++j) {
    double pred = out.intercept;
    for (int i = 0; i < m; ++i)
      if (zs[static_cast<size_t>(j)][static_cast<size_t>(i)]) pred += out.coefficients[static_cast<size_t>(i)];
    ss_res += w[static_cast<size_t>(j)] * (y[static_cast<size_t>(j)] - pred) * (y[static_cast<size_t>(j)] - pred);
    ss_tot += w[static_cast<size_t>(j)] * (y[static_cast<size_t>(j)] - y_mean) * (y[static_cast<size_t>(j)] - y_mean);
  }
  out.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  out.sigma = sigma;
  out.lambda = lambda;
  out.n_perturbations = n_perturbations;
  out.seed = seed;
  return out;
}

std::vector<int> superpixel_segments(int h, int w, int grid) {
  if (grid < 1) throw ConfigError("superpixel_segments: grid must be >= 1");
  if (grid > h || grid > w) throw ConfigError("superpixel_segments: grid exceeds image size");
  const int bh = h / grid, bw = w / grid;
  std::vector<int> seg(static_cast<size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    const int sr = std::min(r / bh, grid - 1);
    for (int c = 0; c < w; ++c) {
      const int sc = std::min(c / bw, grid - 1);
      seg[static_cast<size_t>(r) * w + c] = sr * grid + sc;
    }
  }
  return seg;
}

// ---- MaskableModel ----

MaskableModel::MaskableModel(ModelBundle& model, Tensor image, std::vector<double> clinical_vec)
    : model_(&model), image_(std::move(image)), clinical_(std::move(clinical_vec)) {
  model.detach_params();
}

double MaskableModel::predict(const Tensor& image, const std::vector<double>& clinical_vec) const {
  return model_->predict_malignant(image, clinical_vec);
}

double MaskableModel::full_prediction() const { return predict(image_, clinical_); }

SetFn MaskableModel::clinical_masker() const {
  const ClinicalVocabulary* vocab = &model_->vocabulary();
  const Tensor image = image_;
  const std::vector<double> clinical = clinical_;
  const MaskableModel* self = this;
  return [self, vocab, image, clinical](const std::vector<bool>& present) {
    if (static_cast<int>(present.size()) != kNumClinicalFields)
      throw ShapeError("clinical masker expects one flag per clinical field");
    std::vector<double> masked = clinical;
    for (int fidx = 0; fidx < kNumClinicalFields; ++fidx) {
      if (present[static_cast<size_t>(fidx)]) continue;
      const int off = vocab->block_offset(fidx);
      for (int j = 0; j < vocab->field_dim(fidx); ++j) masked[static_cast<size_t>(off + j)] = 0.0;
    }
    return self->predict(image, masked);
  };
}

SetFn MaskableModel::image_segment_masker(const std::vector<int>& segmentation, int n_segments, double fill) const {
  if (image_.rank() != 3 || segmentation.size() != image_.data.size())
    throw ShapeError("image_segment_masker: segmentation does not match image");
  const Tensor image = image_;
  const std::vector<double> clinical = clinical_;
  const std::vector<int> seg = segmentation;
  const MaskableModel* self = this;
  return [self, image, clinical, seg, n_segments, fill](const std::vector<bool>& present) {
    if (static_cast<int>(present.size()) != n_segments)
      throw ShapeError("image masker expects one flag per segment");
    Tensor masked = image.detached();
    for (size_t i = 0; i < seg.size(); ++i)
      if (!present[static_cast<size_t>(seg[i])]) masked[static_cast<int>(i)] = fill;
    return self->predict(masked, clinical);
  };
}

nlohmann::json shapley_to_json(const ShapleyAttribution& a, const std::vector<std::string>& feature_names, int cls) {
  nlohmann::json j = {{"method", a.method == "exact" ? "shap" : "kernelshap"},
                      {"class", cls},
                      {"phi", a.phi},
                      {"field_names", feature_names},
                      {"f_full", a.f_full},
                      {"f_empty", a.f_empty},
                      {"efficiency_residual", a.efficiency_residual}};
  if (a.method == "kernel") {
    j["n_samples"] = a.n_samples;
    j["seed"] = a.seed;
  }
  return j;
}

nlohmann::json lime_to_json(const LimeExplanation& e, const std::vector<std::string>& feature_names, int cls,
                            const std::string& scheme) {
  return {{"method", "lime"},
          {"scheme", scheme},
          {"class", cls},
          {"intercept", e.intercept},
          {"coefficients", e.coefficients},
          {"field_names", feature_names},
          {"kept", e.kept},
          {"r2", e.r2},
          {"sigma", e.sigma},
          {"lambda", e.lambda},
          {"n_perturbations", e.n_perturbations},
          {"seed", e.seed}};
}

}  // namespace mmfx
