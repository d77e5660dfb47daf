#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "common.hpp"
#include "gradcheck.hpp"
#include "promptrec/contrastive.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/ops.hpp"
#include "promptrec/pretrain.hpp"

using namespace promptrec;
using namespace promptrec::testing;

namespace {

// Plain-double InfoNCE for cross-checking.
double info_nce_oracle(const Tensor& o, const Tensor& a, double tau) {
  const std::size_t n = o.rows(), d = o.cols();
  auto norm = [&](const Tensor& t, std::size_t r) {
    double s = 0;
    for (std::size_t c = 0; c < d; ++c) s += t.at(r, c) * t.at(r, c);
    return std::sqrt(s);
  };
  double total = 0;
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<double> logits(n);
    for (std::size_t v = 0; v < n; ++v) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += o.at(u, c) * a.at(v, c);
      logits[v] = dot / (norm(o, u) * norm(a, v)) / tau;
    }
    double z = 0;
    for (double l : logits) z += std::exp(l);
    total += -(logits[u] - std::log(z));
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("BPR loss closed forms") {
  NoGradGuard ng;
  auto zero = Tensor::zeros({4, 1});
  CHECK(std::abs(bpr_loss(zero, zero).item() - std::log(2.0)) < 1e-12);
  auto pos = Tensor::from({3, 1}, {2.0, -1.0, 0.5});
  auto neg = Tensor::from({3, 1}, {0.0, 1.0, 0.5});
  const double expect = (std::log1p(std::exp(-2.0)) + std::log1p(std::exp(2.0)) + std::log(2.0)) / 3;
  CHECK(bpr_loss(pos, neg).item() == doctest::Approx(expect).epsilon(1e-14));
  auto far = Tensor::from({1, 1}, {800.0});
  CHECK(std::isfinite(bpr_loss(Tensor::zeros({1, 1}), far).item()));
  CHECK(bpr_loss(Tensor::zeros({1, 1}), far).item() == doctest::Approx(800.0));
}

TEST_CASE("BPR loss argument checks") {
  CHECK_THROWS_AS(bpr_loss(Tensor::zeros({2, 1}), Tensor::zeros({3, 1})), DimensionError);
  CHECK_THROWS_AS(bpr_loss(Tensor(), Tensor()), ContractError);
}

TEST_CASE("InfoNCE closed forms") {
  NoGradGuard ng;
  std::mt19937_64 rng(4);
  auto one = random_tensor({1, 5}, rng);
  CHECK(std::abs(info_nce(one, random_tensor({1, 5}, rng), 0.5).item()) < 1e-12);

  auto o = Tensor::from({2, 2}, {1.0, 0.0, -1.0, 0.0});
  auto a = Tensor::from({2, 2}, {3.0, 0.0, -0.5, 0.0});
  const double e = std::exp(1.0), ei = std::exp(-1.0);
  CHECK(std::abs(info_nce(o, a, 1.0).item() - (-std::log(e / (e + ei)))) < 1e-9);
}

TEST_CASE("InfoNCE matches the brute-force oracle and its gradient") {
  std::mt19937_64 rng(5);
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = 1 + rng() % 4, d = 2 + rng() % 6;
    const double tau = 0.1 + 0.2 * (rng() % 5);
    auto o = random_tensor({n, d}, rng);
    auto a = random_tensor({n, d}, rng);
    NoGradGuard ng;
    CHECK(info_nce(o, a, tau).item() == doctest::Approx(info_nce_oracle(o, a, tau)).epsilon(1e-12));
  }
  auto o = random_tensor({4, 6}, rng);
  auto a = random_tensor({4, 6}, rng);
  const auto r = check_gradients([&] { return info_nce(o, a, 0.5); }, {o, a});
  INFO(r.worst);
  CHECK(r.max_rel_error < kFdTolerance);
}

TEST_CASE("InfoNCE rejects zero rows and bad temperatures") {
  NoGradGuard ng;
  auto o = Tensor::from({2, 2}, {0.0, 0.0, 1.0, 1.0});
  auto a = Tensor::from({2, 2}, {1.0, 0.0, 1.0, 1.0});
  CHECK_THROWS_AS(info_nce(o, a, 0.5), NumericError);
  CHECK_THROWS_AS(info_nce(a, a, 0.0), ContractError);
  CHECK_THROWS_AS(info_nce(a, Tensor::zeros({3, 2}), 0.5), DimensionError);
}

TEST_CASE("prompt feature masking zeroes floor(gamma1 * d) coordinates") {
  std::mt19937_64 rng(6);
  auto x = Tensor::full({1, 10}, 2.0, true);
  for (double g : {0.0, 0.2, 0.35, 1.0}) {
    auto y = prompt_aug(x, g, rng);
    const auto zeros = std::count(y.data().begin(), y.data().end(), 0.0);
    CHECK(zeros == static_cast<long>(std::floor(g * 10)));
  }
  Tape::current().clear();
  CHECK_THROWS_AS(prompt_aug(x, 1.5, rng), ContractError);
}

TEST_CASE("behavior masking replaces floor(gamma2 * |s|) positions and keeps the rest") {
  std::mt19937_64 rng(7);
  std::vector<int> s{4, 8, 15, 16, 23, 42, 7, 9, 11, 13};
  for (double g : {0.0, 0.2, 0.5}) {
    auto m = behavior_aug(s, g, rng);
    REQUIRE(m.size() == s.size());
    std::size_t masked = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (m[i] == kMaskItem) ++masked;
      else CHECK(m[i] == s[i]);
    }
    CHECK(masked == static_cast<std::size_t>(std::floor(g * 10)));
  }
}

TEST_CASE("crop keeps a contiguous window and reorder permutes one") {
  std::mt19937_64 rng(8);
  std::vector<int> s{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  for (int c = 0; c < 50; ++c) {
    auto crop = crop_reorder_augment(s, SeqAugment::Crop, 0.3, rng);
    REQUIRE(crop.size() == 7);
    for (std::size_t i = 1; i < crop.size(); ++i) CHECK(crop[i] == crop[i - 1] + 1);
    auto re = crop_reorder_augment(s, SeqAugment::Reorder, 0.3, rng);
    CHECK(std::multiset<int>(re.begin(), re.end()) == std::multiset<int>(s.begin(), s.end()));
    std::size_t first = s.size(), last = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (re[i] != s[i]) {
        first = std::min(first, i);
        last = std::max(last, i);
      }
    }
    if (first <= last) CHECK(last - first + 1 <= 3);
  }
  std::vector<int> single{5};
  CHECK(crop_reorder_augment(single, SeqAugment::Crop, 0.9, rng) == single);
  CHECK(crop_reorder_augment(single, SeqAugment::Reorder, 0.9, rng) == single);
  CHECK_THROWS_AS(crop_reorder_augment(s, SeqAugment::Mask, -0.1, rng), ContractError);
}

TEST_CASE("negative sampling avoids clicked items") {
  std::mt19937_64 rng(9);
  std::vector<int> clicked{0, 2, 3, 5};
  for (int i = 0; i < 500; ++i) {
    const int n = sample_negative(clicked, 6, rng);
    CHECK((n == 1 || n == 4));
  }
  std::vector<int> all{0, 1, 2};
  CHECK_THROWS_AS(sample_negative(all, 3, rng), DataError);
}

TEST_CASE("examples per sequence") {
  CHECK(pretrain_examples(0, 50) == 0);
  CHECK(pretrain_examples(1, 50) == 0);
  CHECK(pretrain_examples(2, 50) == 1);
  CHECK(pretrain_examples(30, 50) == 29);
  CHECK(pretrain_examples(80, 50) == 50);
}

TEST_CASE("pre-training lowers the loss and is deterministic for a seed") {
  std::mt19937_64 rng(10);
  std::vector<std::vector<int>> seqs;
  for (int u = 0; u < 40; ++u) {
    std::vector<int> s;
    int cur = static_cast<int>(rng() % 20);
    for (int t = 0; t < 8; ++t) {
      s.push_back(cur);
      cur = (cur + 1) % 20;  // a deterministic successor the encoder can learn
    }
    seqs.push_back(s);
  }
  PretrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 32;
  cfg.lr = 1e-2;
  cfg.holdout_fraction = 0;
  cfg.seed = 3;
  PretrainCurves c1, c2;
  const auto enc = tiny_encoder(20, 8, 1, 2, 8);
  const auto s1 = pretrain(seqs, enc, cfg, &c1);
  const auto s2 = pretrain(seqs, enc, cfg, &c2);
  CHECK(c1.examples_per_epoch == 40 * 7);
  CHECK(c1.train_loss.back() < 0.5 * c1.train_loss.front());
  CHECK(serialize_checkpoint(s1) == serialize_checkpoint(s2));
  CHECK(s1.meta_or("kind", "") == "pretrained");

  cfg.cl_flavor = true;
  cfg.epochs = 3;
  PretrainCurves c3;
  pretrain(seqs, enc, cfg, &c3);
  CHECK(c3.cl_loss.size() == 3);

  cfg.epochs = 0;
  CHECK_THROWS_AS(pretrain(seqs, enc, cfg), ConfigError);
}
