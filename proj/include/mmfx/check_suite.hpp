#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmfx {

struct SuiteRow {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
  bool pass = false;
};

// Gradient checks for every differentiable primitive and for the full model
// loss under all three fusion heads (spatial image tokens, per-field clinical
// tokens). Each check runs n_seeds times; a row reports the worst seed.
SuiteResult run_gradcheck_suite(uint64_t seed_base = 1, int n_seeds = 5, double h = 1e-5, double tol = 1e-4);

}  // namespace mmfx
