#include "promptrec/adam.hpp"

#include <cmath>

#include "promptrec/errors.hpp"

namespace promptrec {

Adam::Adam(AdamConfig config) : config_(config) {}

Adam::Adam(const std::vector<Tensor>& params, AdamConfig config) : config_(config) {
  for (const auto& p : params) {
    if (p.requires_grad()) add(p);
  }
}

void Adam::add(const Tensor& param) {
  AdamState s;
  s.m.assign(param.numel(), 0.0);
  s.v.assign(param.numel(), 0.0);
  states_[param.impl()] = std::move(s);
}

bool Adam::has_state(const Tensor& param) const { return states_.count(param.impl()) != 0; }

const AdamState& Adam::state(const Tensor& param) const {
  auto it = states_.find(param.impl());
  if (it == states_.end()) throw ContractError("adam: no state for parameter of shape " + shape_str(param.shape()));
  return it->second;
}

void Adam::step(const std::vector<Tensor>& params) {
  const auto& c = config_;
  for (auto p : params) {
    if (!p.requires_grad()) continue;
    auto it = states_.find(p.impl());
    if (it == states_.end()) {
      throw ContractError("adam: missing state for trainable parameter of shape " + shape_str(p.shape()));
    }
    AdamState& s = it->second;
    s.t += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g[i];
      s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      w[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace promptrec
