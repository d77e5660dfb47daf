#include "promptrec/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptrec/encoder.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/ops.hpp"

namespace promptrec {

void AugmentationConfig::validate() const {
  if (gamma1 < 0.0 || gamma1 > 1.0) throw ConfigError("gamma1 must lie in [0, 1]");
  if (gamma2 < 0.0 || gamma2 > 1.0) throw ConfigError("gamma2 must lie in [0, 1]");
}

void CLConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
}

namespace {

std::vector<std::size_t> choose_positions(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(k);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), k, rng);
  return picked;
}

}  // namespace

Tensor prompt_aug(const Tensor& features, double gamma1, std::mt19937_64& rng) {
  if (gamma1 < 0.0 || gamma1 > 1.0) throw ContractError("prompt_aug: gamma1 outside [0, 1]");
  const std::size_t n = features.numel();
  const auto k = static_cast<std::size_t>(std::floor(gamma1 * static_cast<double>(n)));
  if (k == 0) return features;
  std::vector<double> pattern(n, 1.0);
  for (auto i : choose_positions(n, k, rng)) pattern[i] = 0.0;
  return mask(features, pattern);
}

std::vector<int> behavior_aug(std::span<const int> seq, double gamma2, std::mt19937_64& rng) {
  if (gamma2 < 0.0 || gamma2 > 1.0) throw ContractError("behavior_aug: gamma2 outside [0, 1]");
  std::vector<int> out(seq.begin(), seq.end());
  const auto k = static_cast<std::size_t>(std::floor(gamma2 * static_cast<double>(seq.size())));
  if (k == 0) return out;
  for (auto i : choose_positions(seq.size(), k, rng)) out[i] = kMaskItem;
  return out;
}

Tensor info_nce(const Tensor& originals, const Tensor& augmented, double tau) {
  if (!(tau > 0.0)) throw ContractError("info_nce: tau must be positive");
  if (originals.shape() != augmented.shape()) {
    throw DimensionError("info_nce: " + shape_str(originals.shape()) + " vs " + shape_str(augmented.shape()));
  }
  const std::size_t n = originals.rows();
  Tensor sims = scale(matmul_nt(l2_normalize_rows(originals), l2_normalize_rows(augmented)), 1.0 / tau);
  Tensor logp = log_softmax_rows(sims);
  std::vector<std::size_t> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = i * n + i;
  return scale(mean(take(logp, diag)), -1.0);
}

}  // namespace promptrec
