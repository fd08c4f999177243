#include "mmfx/check_suite.hpp"

#include <cmath>
#include <functional>

#include "mmfx/grad_check.hpp"
#include "mmfx/model.hpp"
#include "mmfx/ops.hpp"
#include "mmfx/rng.hpp"
#include "mmfx/trainer.hpp"

namespace mmfx {

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Random values pushed away from zero so finite differences never straddle
// the ReLU kink.
Tensor random_tensor_off_zero(std::vector<int> shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (int i = 0; i < t.size(); ++i) t[i] += t[i] >= 0.0 ? 0.05 : -0.05;
  return t;
}

// Reduces an op output to a scalar against fixed random weights, so every
// output element contributes a distinct gradient path.
Tensor weighted_sum(const Tensor& out, const Tensor& weights) { return sum_all(mul_elem(out, weights)); }

struct Check {
  std::string name;
  std::function<GradCheckReport(uint64_t seed, double h, double tol)> run;
};

GradCheckReport check_params(const LossFn& f, std::vector<Parameter*> params, double h, double tol) {
  return grad_check(f, params, h, tol);
}

GradCheckReport model_loss_check(FusionKind kind, uint64_t seed, double h, double tol) {
  FusionConfig cfg;
  cfg.fusion_kind = kind;
  cfg.d = 10;
  cfg.d_k = 10;
  cfg.image_token_mode = ImageTokenMode::kSpatial;
  cfg.clinical_token_mode = ClinicalTokenMode::kPerField;
  cfg.classifier_hidden = 16;
  cfg.backbone = BackboneConfig{12, 12, 4, {6, 8}};

  Rng init_rng(seed, 50);
  ClinicalVocabulary vocab = ClinicalVocabulary::defaults();
  auto model = std::make_shared<ModelBundle>(cfg, vocab, init_rng);

  // a 2-sample batch: random images, random one-hot clinical vectors
  Rng data_rng(seed, 51);
  auto images = std::make_shared<std::vector<Tensor>>();
  auto clinicals = std::make_shared<std::vector<std::vector<double>>>();
  auto labels = std::make_shared<std::vector<int>>();
  for (int s = 0; s < 2; ++s) {
    images->push_back(random_tensor({1, 12, 12}, data_rng, 0.5));
    ClinicalRecord rec;
    rec.patient_id = "g" + std::to_string(s);
    for (int f = 0; f < kNumClinicalFields; ++f)
      rec.fields[static_cast<size_t>(f)] =
          vocab.categories(f)[data_rng.uniform_int(static_cast<uint64_t>(vocab.field_dim(f)))];
    clinicals->push_back(encode_record(rec, vocab));
    labels->push_back(static_cast<int>(data_rng.uniform_int(2)));
  }

  LossFn f = [model, images, clinicals, labels](Tape* tape) {
    std::vector<Tensor> rows;
    for (size_t s = 0; s < images->size(); ++s) {
      SampleForward fw = model->forward_sample(tape, (*images)[s], (*clinicals)[s], {});
      rows.push_back(fw.logits);
    }
    return softmax_cross_entropy(stack_rows(rows), *labels);
  };

  std::vector<Parameter*> params;
  for (auto& p : model->params()) params.push_back(&p);
  return grad_check(f, params, h, tol);
}

std::vector<Check> build_checks() {
  std::vector<Check> checks;

  checks.push_back({"matmul_bias", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 1);
                      Parameter a("A", random_tensor({3, 4}, rng));
                      Parameter w("W", random_tensor({4, 5}, rng));
                      Parameter b("b", random_tensor({5}, rng));
                      Tensor wt = random_tensor({3, 5}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(a.value);
                          t->watch(w.value);
                          t->watch(b.value);
                        }
                        return weighted_sum(matmul_bias(a.value, w.value, b.value), wt);
                      };
                      return check_params(f, {&a, &w, &b}, h, tol);
                    }});

  checks.push_back({"transpose", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 2);
                      Parameter x("X", random_tensor({3, 4}, rng));
                      Tensor wt = random_tensor({4, 3}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) t->watch(x.value);
                        return weighted_sum(transpose(x.value), wt);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"scale", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 3);
                      Parameter x("X", random_tensor({3, 4}, rng));
                      Tensor wt = random_tensor({3, 4}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) t->watch(x.value);
                        return weighted_sum(scale(x.value, -1.7), wt);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"add", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 4);
                      Parameter x("X", random_tensor({3, 4}, rng));
                      Parameter y("Y", random_tensor({3, 4}, rng));
                      Tensor wt = random_tensor({3, 4}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(x.value);
                          t->watch(y.value);
                        }
                        return weighted_sum(add(x.value, y.value), wt);
                      };
                      return check_params(f, {&x, &y}, h, tol);
                    }});

  checks.push_back({"mul_elem", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 5);
                      Parameter x("X", random_tensor({3, 4}, rng));
                      Parameter y("Y", random_tensor({3, 4}, rng));
                      Tensor wt = random_tensor({3, 4}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(x.value);
                          t->watch(y.value);
                        }
                        return weighted_sum(mul_elem(x.value, y.value), wt);
                      };
                      return check_params(f, {&x, &y}, h, tol);
                    }});

  checks.push_back({"relu", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 6);
                      Parameter x("X", random_tensor_off_zero({3, 4}, rng));
                      Tensor wt = random_tensor({3, 4}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) t->watch(x.value);
                        return weighted_sum(relu(x.value), wt);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"softmax_rows", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 7);
                      Parameter x("X", random_tensor({3, 4}, rng));
                      Tensor wt = random_tensor({3, 4}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) t->watch(x.value);
                        return weighted_sum(softmax_rows(x.value), wt);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"layer_norm", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 8);
                      Parameter x("X", random_tensor({4, 6}, rng));
                      Parameter g("gamma", random_tensor({6}, rng));
                      Parameter b("beta", random_tensor({6}, rng));
                      Tensor wt = random_tensor({4, 6}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(x.value);
                          t->watch(g.value);
                          t->watch(b.value);
                        }
                        return weighted_sum(layer_norm(x.value, g.value, b.value, 1e-5), wt);
                      };
                      return check_params(f, {&x, &g, &b}, h, tol);
                    }});

  checks.push_back({"conv2d_s1", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 9);
                      Parameter x("X", random_tensor({2, 6, 6}, rng));
                      Parameter k("K", random_tensor({3, 2, 3, 3}, rng));
                      Tensor wt = random_tensor({3, 6, 6}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(x.value);
                          t->watch(k.value);
                        }
                        return weighted_sum(conv2d(x.value, k.value, 1, 1), wt);
                      };
                      return check_params(f, {&x, &k}, h, tol);
                    }});

  checks.push_back({"conv2d_s2", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 10);
                      Parameter x("X", random_tensor({2, 6, 6}, rng));
                      Parameter k("K", random_tensor({3, 2, 4, 4}, rng));
                      Tensor wt = random_tensor({3, 3, 3}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(x.value);
                          t->watch(k.value);
                        }
                        return weighted_sum(conv2d(x.value, k.value, 2, 1), wt);
                      };
                      return check_params(f, {&x, &k}, h, tol);
                    }});

  checks.push_back({"bias_channels", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 11);
                      Parameter x("X", random_tensor({3, 4, 4}, rng));
                      Parameter b("b", random_tensor({3}, rng));
                      Tensor wt = random_tensor({3, 4, 4}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(x.value);
                          t->watch(b.value);
                        }
                        return weighted_sum(bias_channels(x.value, b.value), wt);
                      };
                      return check_params(f, {&x, &b}, h, tol);
                    }});

  checks.push_back({"global_avg_pool", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 12);
                      Parameter x("X", random_tensor({3, 4, 4}, rng));
                      Tensor wt = random_tensor({3}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) t->watch(x.value);
                        return weighted_sum(global_avg_pool(x.value), wt);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"mean_rows", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 13);
                      Parameter x("X", random_tensor({5, 3}, rng));
                      Tensor wt = random_tensor({3}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) t->watch(x.value);
                        return weighted_sum(mean_rows(x.value), wt);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"reshape", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 14);
                      Parameter x("X", random_tensor({3, 4}, rng));
                      Tensor wt = random_tensor({2, 6}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) t->watch(x.value);
                        return weighted_sum(reshape(x.value, {2, 6}), wt);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"concat", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 15);
                      Parameter a("A", random_tensor({4}, rng));
                      Parameter b("B", random_tensor({3}, rng));
                      Tensor wt = random_tensor({7}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(a.value);
                          t->watch(b.value);
                        }
                        return weighted_sum(concat(a.value, b.value), wt);
                      };
                      return check_params(f, {&a, &b}, h, tol);
                    }});

  checks.push_back({"stack_rows", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 16);
                      Parameter a("A", random_tensor({4}, rng));
                      Parameter b("B", random_tensor({4}, rng));
                      Parameter c("C", random_tensor({4}, rng));
                      Tensor wt = random_tensor({3, 4}, rng);
                      LossFn f = [&, wt](Tape* t) {
                        if (t) {
                          t->watch(a.value);
                          t->watch(b.value);
                          t->watch(c.value);
                        }
                        return weighted_sum(stack_rows({a.value, b.value, c.value}), wt);
                      };
                      return check_params(f, {&a, &b, &c}, h, tol);
                    }});

  checks.push_back({"select", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 17);
                      Parameter x("X", random_tensor({2, 3}, rng));
                      LossFn f = [&](Tape* t) {
                        if (t) t->watch(x.value);
                        return select(x.value, 4);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"sum_all", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 18);
                      Parameter x("X", random_tensor({3, 4}, rng));
                      LossFn f = [&](Tape* t) {
                        if (t) t->watch(x.value);
                        return sum_all(mul_elem(x.value, x.value));
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"softmax_cross_entropy", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 19);
                      Parameter x("logits", random_tensor({4, 3}, rng));
                      std::vector<int> labels = {0, 2, 1, 2};
                      LossFn f = [&, labels](Tape* t) {
                        if (t) t->watch(x.value);
                        return softmax_cross_entropy(x.value, labels);
                      };
                      return check_params(f, {&x}, h, tol);
                    }});

  checks.push_back({"cross_attention_head", [](uint64_t seed, double h, double tol) {
                      Rng rng(seed, 20);
                      const int d = 6, dk = 5;
                      Parameter e("E", random_tensor({4, d}, rng));
                      Parameter c("C", random_tensor({3, d}, rng));
                      Parameter wq("wq", random_tensor({d, dk}, rng));
                      Parameter wk("wk", random_tensor({d, dk}, rng));
                      Parameter wv("wv", random_tensor({d, dk}, rng));
                      Parameter wo("wo", random_tensor({dk, d}, rng));
                      Parameter g("gamma", random_tensor({d}, rng));
                      Parameter be("beta", random_tensor({d}, rng));
                      Tensor wt = random_tensor({4, d}, rng);
                      std::vector<Parameter*> params = {&e, &c, &wq, &wk, &wv, &wo, &g, &be};
                      LossFn f = [&, wt](Tape* t) {
                        if (t)
                          for (Parameter* p : {&e, &c, &wq, &wk, &wv, &wo, &g, &be}) t->watch(p->value);
                        AttentionParams ap;
                        ap.wq_img = &wq.value;
                        ap.wk_clin = &wk.value;
                        ap.wv_clin = &wv.value;
                        ap.wo_img = &wo.value;
                        ap.ln_gamma_img = &g.value;
                        ap.ln_beta_img = &be.value;
                        ap.d_k = dk;
                        return weighted_sum(cross_attention(e.value, c.value, ap, CrossDirection::kImageFromClinical), wt);
                      };
                      return check_params(f, params, h, tol);
                    }});

  checks.push_back({"model_concat", [](uint64_t seed, double h, double tol) {
                      return model_loss_check(FusionKind::kConcat, seed, h, tol);
                    }});
  checks.push_back({"model_co_attention", [](uint64_t seed, double h, double tol) {
                      return model_loss_check(FusionKind::kCoAttention, seed, h, tol);
                    }});
  checks.push_back({"model_cross_attention", [](uint64_t seed, double h, double tol) {
                      return model_loss_check(FusionKind::kCrossAttentionImgFromClin, seed, h, tol);
                    }});

  return checks;
}

}  // namespace

SuiteResult run_gradcheck_suite(uint64_t seed_base, int n_seeds, double h, double tol) {
  SuiteResult result;
  result.pass = true;
  for (const auto& check : build_checks()) {
    SuiteRow row;
    row.name = check.name;
    row.pass = true;
    for (int s = 0; s < n_seeds; ++s) {
      GradCheckReport rep = check.run(seed_base + static_cast<uint64_t>(s), h, tol);
      row.max_rel_err = std::max(row.max_rel_err, rep.worst());
      row.pass = row.pass && rep.pass;
    }
    result.pass = result.pass && row.pass;
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace mmfx
