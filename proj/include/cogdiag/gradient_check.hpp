#pragma once

#include <map>
#include <string>
#include <vector>

#include "cogdiag/optimizer.hpp"

namespace cogdiag {

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  bool all_pass = true;
};

// Flat gradients keyed by parameter name.
using GradMap = std::map<std::string, std::vector<double>>;

// One reverse pass of the loss at the current parameter values.
GradMap analytic_gradients(ParameterStore& params, const LossBuilder& loss);

// Central differences, perturbing one coordinate at a time.
GradMap fd_gradients(ParameterStore& params, const LossBuilder& loss, double step);

// Relative error |a - b| / max(1, |b|) per coordinate, worst per block.
GradCheckReport compare_gradients(const GradMap& analytic, const GradMap& fd, double tol);

// Analytic-vs-finite-difference agreement for every parameter.
GradCheckReport gradient_check(ParameterStore& params, const LossBuilder& loss,
                               double step = 1e-5, double tol = 1e-4);

}  // namespace cogdiag
