#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cogdiag/tape.hpp"
#include "cogdiag/tensor.hpp"

namespace cogdiag {

// Named trainable tensors in a fixed registration order. The order is
// the iteration, serialization, and update order, so runs are
// reproducible and checkpoints round-trip exactly.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;

  struct Entry {
    std::string name;
    Tensor value;
  };
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Maps parameter names to the tape leaves created for one forward pass.
using LeafMap = std::unordered_map<std::string, Var>;

// Registers every parameter as a grad-requiring leaf on the tape.
LeafMap register_leaves(Tape& tape, const ParameterStore& params);

// Builds a scalar loss for the current parameter values.
using LossBuilder = std::function<Var(Tape&, const LeafMap&)>;

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by parameter name
// and created lazily; one shared step counter covers all parameters.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {});

  // Applies one update from the gradients recorded on the tape. Skips
  // parameters absent from the leaf map.
  void step(ParameterStore& params, const Tape& tape, const LeafMap& leaves);

  std::size_t steps_taken() const { return step_; }

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::unordered_map<std::string, Tensor> m_;
  std::unordered_map<std::string, Tensor> v_;
};

}  // namespace cogdiag
