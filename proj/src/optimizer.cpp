#include "cogdiag/optimizer.hpp"

#include <cmath>

#include "cogdiag/errors.hpp"

namespace cogdiag {

Tensor& ParameterStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ContractError("parameter registered twice: " + name);
  index_[name] = entries_.size();
  entries_.push_back({name, std::move(init)});
  return entries_.back().value;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].value;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].value;
}

bool ParameterStore::contains(const std::string& name) const { return index_.count(name) > 0; }

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

LeafMap register_leaves(Tape& tape, const ParameterStore& params) {
  LeafMap leaves;
  for (const auto& e : params.entries()) leaves.emplace(e.name, tape.leaf(e.value, true));
  return leaves;
}

AdamOptimizer::AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {
  if (cfg_.lr <= 0.0 || cfg_.eps <= 0.0 || cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 ||
      cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
    throw ConfigError("invalid Adam configuration");
}

void AdamOptimizer::step(ParameterStore& params, const Tape& tape, const LeafMap& leaves) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& e : params.entries()) {
    auto it = leaves.find(e.name);
    if (it == leaves.end()) continue;
    const Tensor& g = tape.grad(it->second);
    if (!g.same_shape(e.value))
      throw ShapeError("gradient shape " + g.shape_str() + " does not match parameter " + e.name);
    auto mit = m_.find(e.name);
    if (mit == m_.end()) {
      Tensor z = g.rank() == 1 ? Tensor::zeros(g.size()) : Tensor::zeros(g.rows(), g.cols());
      mit = m_.emplace(e.name, z).first;
      v_.emplace(e.name, std::move(z));
    }
    Tensor& m = mit->second;
    Tensor& v = v_.at(e.name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      e.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    if (!e.value.all_finite()) throw NumericError("Adam produced a non-finite parameter: " + e.name);
  }
}

}  // namespace cogdiag
