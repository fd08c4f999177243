#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mmfx/tensor.hpp"

namespace mmfx {

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  bool has_nan = false;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double h = 0.0;
  double tol = 0.0;
  bool pass = false;
  double worst() const;
};

// Scalar loss builder. When given a tape it must watch the parameters it uses
// and return a loss tensor recorded on that tape; with tape == nullptr it
// must evaluate the same function as a plain forward pass. It must be
// deterministic (dropout off).
using LossFn = std::function<Tensor(Tape*)>;

// Compares analytic gradients against central finite differences
// (f(p+h) - f(p-h)) / 2h, element by element. The relative error denominator
// is floored at 0.01 so that near-zero gradient pairs compare absolutely
// instead of amplifying finite-difference noise. A NaN in either gradient
// fails the parameter outright.
//
// A perturbation that straddles a ReLU kink makes the central difference
// meaningless; such elements are detected through disagreeing one-sided
// differences and re-measured at h/64 (a wrong backward rule still fails,
// since it mismatches at every step size).
GradCheckReport grad_check(const LossFn& f, const std::vector<Parameter*>& params, double h = 1e-5,
                           double tol = 1e-4);

}  // namespace mmfx
