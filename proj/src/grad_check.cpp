#include "mmfx/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mmfx {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& r : rows) w = std::max(w, r.max_rel_err);
  return w;
}

namespace {

void detach_all(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    p->value.tape = nullptr;
    p->value.node = -1;
  }
}

}  // namespace

GradCheckReport grad_check(const LossFn& f, const std::vector<Parameter*>& params, double h, double tol) {
  GradCheckReport report;
  report.h = h;
  report.tol = tol;

  detach_all(params);
  Tape tape;
  Tensor loss = f(&tape);
  tape.backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) {
    if (p->value.on_tape())
      analytic.push_back(tape.grad_of(p->value));
    else
      analytic.push_back(Tensor::zeros(p->value.shape));  // never watched: off the graph
  }
  detach_all(params);

  auto rel_err = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2}); };

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    GradCheckRow row;
    row.name = p->name;
    for (int i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      auto eval_at = [&](double x) {
        p->value[i] = x;
        const double v = f(nullptr)[0];
        p->value[i] = orig;
        return v;
      };
      const double lp = eval_at(orig + h);
      const double lm = eval_at(orig - h);
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[pi][i];
      if (!std::isfinite(fd) || !std::isfinite(an)) {
        row.has_nan = true;
        break;
      }
      double err = rel_err(an, fd);
      if (err > tol) {
        // Distinguish a ReLU-style kink inside [p-h, p+h] from a wrong
        // gradient: at a kink the one-sided differences disagree with each
        // other, and the central difference converges again at a smaller
        // step. A wrong backward rule mismatches at every step size.
        const double l0 = eval_at(orig);
        const double d_plus = (lp - l0) / h;
        const double d_minus = (l0 - lm) / h;
        if (rel_err(d_plus, d_minus) > 0.1) {
          const double h2 = h / 64.0;
          const double fd2 = (eval_at(orig + h2) - eval_at(orig - h2)) / (2.0 * h2);
          if (std::isfinite(fd2)) err = rel_err(an, fd2);
        }
      }
      row.max_rel_err = std::max(row.max_rel_err, err);
    }
    row.pass = !row.has_nan && row.max_rel_err <= tol;
    report.rows.push_back(std::move(row));
  }

  report.pass = std::all_of(report.rows.begin(), report.rows.end(), [](const GradCheckRow& r) { return r.pass; });
  return report;
}

}  // namespace mmfx
