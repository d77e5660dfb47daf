#pragma once

#include <random>
#include <span>
#include <vector>

#include "promptrec/tensor.hpp"

namespace promptrec {

struct AugmentationConfig {
  double gamma1 = 0.2;  // prompt-feature mask ratio
  double gamma2 = 0.2;  // behavior mask ratio
  void validate() const;
};

struct CLConfig {
  bool enabled = true;
  double tau = 0.5;
  double lambda = 0.1;
  void validate() const;
};

// Zeroes floor(gamma1 * numel) uniformly chosen coordinates of the feature
// vector; masked coordinates pass no gradient.
Tensor prompt_aug(const Tensor& features, double gamma1, std::mt19937_64& rng);

// Replaces floor(gamma2 * |seq|) uniformly chosen positions by kMaskItem.
std::vector<int> behavior_aug(std::span<const int> seq, double gamma2, std::mt19937_64& rng);

// InfoNCE over N paired rows with cosine similarity. Row u of `originals` is
// contrasted against every row of `augmented` (its own positive included);
// the result is the mean over users of
//   -log( exp(cos(o_u, a_u)/tau) / sum_v exp(cos(o_u, a_v)/tau) ).
// Zero-norm rows raise NumericError.
Tensor info_nce(const Tensor& originals, const Tensor& augmented, double tau);

}  // namespace promptrec
