#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "promptrec/tensor.hpp"

namespace promptrec {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

// Adam with bias correction. Parameters that do not require gradients are
// never touched, whatever their .grad holds.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});
  Adam(const std::vector<Tensor>& params, AdamConfig config);

  // Registers zero-initialized moments for a parameter.
  void add(const Tensor& param);
  bool has_state(const Tensor& param) const;
  const AdamState& state(const Tensor& param) const;

  // Throws ContractError when a trainable parameter has no registered state.
  void step(const std::vector<Tensor>& params);

  const AdamConfig& config() const noexcept { return config_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }

 private:
  AdamConfig config_;
  std::unordered_map<const TensorImpl*, AdamState> states_;
};

}  // namespace promptrec
