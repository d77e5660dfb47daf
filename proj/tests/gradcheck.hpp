#pragma once

// Central finite-difference checks for scalar functions of leaf tensors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "promptrec/tensor.hpp"

namespace promptrec::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-4;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<param>[<index>] analytic=.. numeric=.."
};

// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from
// turning round-off into large relative errors.
inline double rel_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// `loss` rebuilds the scalar from `params` on every call.
inline GradCheck check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                 double h = kFdStep) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor l = loss();
  backward(l);
  GradCheck out;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double saved = p.data()[i];
      double up, down;
      {
        NoGradGuard ng;
        p.data()[i] = saved + h;
        up = loss().item();
        p.data()[i] = saved - h;
        down = loss().item();
        p.data()[i] = saved;
      }
      const double numeric = (up - down) / (2 * h);
      const double err = rel_error(analytic[i], numeric);
      ++out.checked;
      if (err >= out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = "param " + std::to_string(pi) + "[" + std::to_string(i) + "] analytic=" +
                    std::to_string(analytic[i]) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace promptrec::testing
