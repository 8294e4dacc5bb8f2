#include "cogdiag/gradient_check.hpp"

#include <cmath>

#include "cogdiag/errors.hpp"
#include "cogdiag/tape.hpp"

namespace cogdiag {

namespace {

double eval_loss(ParameterStore& params, const LossBuilder& loss) {
  Tape tape;
  LeafMap leaves = register_leaves(tape, params);
  Var out = loss(tape, leaves);
  return tape.value(out)[0];
}

}  // namespace

GradMap analytic_gradients(ParameterStore& params, const LossBuilder& loss) {
  Tape tape;
  LeafMap leaves = register_leaves(tape, params);
  Var out = loss(tape, leaves);
  tape.backward(out);
  GradMap grads;
  for (const auto& e : params.entries()) {
    const Tensor& g = tape.grad(leaves.at(e.name));
    grads[e.name] = std::vector<double>(g.data().begin(), g.data().end());
  }
  return grads;
}

GradMap fd_gradients(ParameterStore& params, const LossBuilder& loss, double step) {
  if (step <= 0.0) throw ConfigError("finite-difference step must be positive");
  GradMap grads;
  for (auto& e : params.entries()) {
    std::vector<double> g(e.value.size(), 0.0);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double keep = e.value[i];
      e.value[i] = keep + step;
      const double hi = eval_loss(params, loss);
      e.value[i] = keep - step;
      const double lo = eval_loss(params, loss);
      e.value[i] = keep;
      g[i] = (hi - lo) / (2.0 * step);
    }
    grads[e.name] = std::move(g);
  }
  return grads;
}

GradCheckReport compare_gradients(const GradMap& analytic, const GradMap& fd, double tol) {
  GradCheckReport report;
  for (const auto& [name, fg] : fd) {
    auto it = analytic.find(name);
    if (it == analytic.end() || it->second.size() != fg.size())
      throw ContractError("gradient maps disagree on parameter " + name);
    GradCheckBlock block;
    block.name = name;
    for (std::size_t i = 0; i < fg.size(); ++i) {
      const double denom = std::max(1.0, std::abs(fg[i]));
      const double rel = std::abs(it->second[i] - fg[i]) / denom;
      if (rel > block.max_rel_err) block.max_rel_err = rel;
    }
    block.pass = block.max_rel_err <= tol;
    report.all_pass = report.all_pass && block.pass;
    report.blocks.push_back(std::move(block));
  }
  return report;
}

GradCheckReport gradient_check(ParameterStore& params, const LossBuilder& loss, double step,
                               double tol) {
  GradMap a = analytic_gradients(params, loss);
  GradMap f = fd_gradients(params, loss, step);
  return compare_gradients(a, f, tol);
}

}  // namespace cogdiag
