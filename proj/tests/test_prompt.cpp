#include <doctest.h>

#include <random>

#include "common.hpp"
#include "gradcheck.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/ops.hpp"
#include "promptrec/pretrain.hpp"
#include "promptrec/prompt.hpp"

using namespace promptrec;
using namespace promptrec::testing;

namespace {

const ProfileSchema kSchema{{2, 3}, {}};

std::vector<UserProfile> profiles() { return {{{0, 2}}, {{1, kMissingAttr}}, {{1, 0}}, {{0, 1}}}; }

std::vector<TuneUser> users() { return {{0, {1, 4, 2}}, {1, {7}}, {2, {3, 3, 9, 5}}, {3, {}}}; }

ModelState prompted(std::uint64_t seed = 1, EncoderConfig enc = tiny_encoder()) {
  return build_model(tiny_backbone(seed, enc), kSchema, {}, ModelKind::Prompted, seed + 100);
}

// Ranking loss over every prefix of every user, built from public pieces.
Tensor ranking_loss(const ModelState& state, const std::vector<TuneUser>& us, const std::vector<int>& negs) {
  Recommender rec(state);
  auto feats = profile_feature_fn(profiles());
  std::vector<Tensor> pos, neg;
  std::size_t k = 0;
  for (const auto& u : us) {
    if (u.clicks.empty()) continue;
    auto x = feats(rec, u.user);
    auto reprs = rec.prefix_reprs(x, std::span<const int>(u.clicks.data(), u.clicks.size() - 1));
    std::vector<int> ng(u.clicks.size());
    for (auto& n : ng) n = negs[k++ % negs.size()];
    pos.push_back(row_sums(mul(reprs, rec.encoder().embed_items(u.clicks))));
    neg.push_back(row_sums(mul(reprs, rec.encoder().embed_items(ng))));
  }
  return bpr_loss(concat_rows(pos), concat_rows(neg));
}

Tensor contrastive_loss(const ModelState& state, const std::vector<TuneUser>& us) {
  Recommender rec(state);
  auto feats = profile_feature_fn(profiles());
  std::vector<Tensor> xs;
  std::vector<std::vector<int>> seqs;
  for (const auto& u : us) {
    xs.push_back(feats(rec, u.user));
    seqs.push_back(u.clicks);
  }
  std::mt19937_64 rng(17);  // fixed views across finite-difference probes
  return cl_loss(cl_step_views(rec, xs, seqs, {0.5, 0.5}, rng), 0.5);
}

void expect_fd(const std::function<Tensor()>& f, const ModelState& state) {
  const auto r = check_gradients(f, state.tensors());
  INFO(r.worst);
  CHECK(r.checked == state.total_count());
  CHECK(r.max_rel_error < kFdTolerance);
}

}  // namespace

TEST_CASE("prompted model adds generator and profile learner groups with the expected sizes") {
  const auto s = prompted();
  const std::size_t d = 8, d1 = 2 * d;
  CHECK(s.count(ParamGroup::PromptGenerator) == d1 * d + d + d * d + d);
  CHECK(s.count(ParamGroup::ProfileLearner) == (3 + 4) * d + d1 * d + d + d * d + d);
  CHECK(s.meta_or("kind", "") == "prompted");
  const auto f = build_model(tiny_backbone(1), kSchema, {}, ModelKind::FineTune, 5);
  CHECK_FALSE(f.has_group(ParamGroup::PromptGenerator));
  CHECK(f.has_group(ParamGroup::ProfileLearner));
}

TEST_CASE("tuning modes report the exact trainable fraction") {
  auto s = prompted();
  const std::size_t theta = s.count(ParamGroup::Backbone);
  const std::size_t rest = s.count(ParamGroup::PromptGenerator) + s.count(ParamGroup::ProfileLearner);
  auto light = apply_mode(s, TuningMode::Light);
  CHECK(light.trainable == rest);
  CHECK(light.total == theta + rest);
  CHECK(light.fraction == static_cast<double>(rest) / static_cast<double>(theta + rest));
  auto full = apply_mode(s, TuningMode::Full);
  CHECK(full.trainable == full.total);
  CHECK(full.fraction == 1.0);

  auto pre = tiny_backbone(2);
  CHECK_THROWS_AS(apply_mode(pre, TuningMode::Light), CheckpointError);
  CHECK_THROWS_AS(build_model(s, kSchema, {}, ModelKind::Prompted, 1), CheckpointError);
}

TEST_CASE("light tuning leaves every backbone byte untouched") {
  auto s = prompted(3);
  const auto before = group_bytes(s, ParamGroup::Backbone);
  const auto prompt_before = group_bytes(s, ParamGroup::PromptGenerator);
  TuneConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.lr = 1e-2;
  TuneCurves curves;
  tune(s, users(), profile_feature_fn(profiles()), cfg, &curves);
  CHECK(group_bytes(s, ParamGroup::Backbone) == before);
  CHECK(group_bytes(s, ParamGroup::PromptGenerator) != prompt_before);
  CHECK(curves.mode.fraction == static_cast<double>(curves.mode.trainable) / static_cast<double>(curves.mode.total));
  CHECK(curves.lcl.size() == 3);
  CHECK(s.meta_or("mode", "") == "light");

  auto f = prompted(3);
  cfg.mode = TuningMode::Full;
  tune(f, users(), profile_feature_fn(profiles()), cfg);
  CHECK(group_bytes(f, ParamGroup::Backbone) != before);
}

TEST_CASE("prefix rows hold the prompt-conditioned user vector plus the attribute vector") {
  const auto s = prompted(4);
  Recommender rec(s);
  NoGradGuard ng;
  auto x = rec.profile_features(profiles()[0]);
  std::vector<int> items{1, 4, 2};
  auto rows = rec.prefix_reprs(x, items);
  REQUIRE(rows.rows() == 4);
  auto h = rec.encoder().encode(rec.encoder().embed_sequence(rec.generate_prompt(x), items)).last_layer();
  auto ua = rec.profile_repr(x);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t c = 0; c < 8; ++c) CHECK(rows.at(t, c) == doctest::Approx(h.at(t, c) + ua.at(0, c)).epsilon(1e-14));
  }
  auto zero_shot = rec.user_repr(x, {});
  for (std::size_t c = 0; c < 8; ++c) CHECK(zero_shot.at(0, c) == rows.at(0, c));
}

TEST_CASE("missing attributes use their own embedding row and bad values are rejected") {
  const auto s = prompted(5);
  Recommender rec(s);
  NoGradGuard ng;
  auto x = rec.profile_features({{1, kMissingAttr}});
  const auto& table = s.at("attr1.emb");
  for (std::size_t c = 0; c < 8; ++c) CHECK(x.at(0, 8 + c) == table.at(3, c));
  CHECK_THROWS_AS(rec.profile_features({{2, 0}}), IndexError);
  CHECK_THROWS_AS(rec.profile_features({{0}}), ContractError);
}

TEST_CASE("composed tuning losses pass the finite-difference check") {
  const auto enc = tiny_encoder(10, 4, 2, 2, 6);
  const auto s = build_model(tiny_backbone(6, enc), kSchema, {1, 4, 4, 0, false}, ModelKind::Prompted, 9);
  const std::vector<int> negs{0, 6, 8, 1};
  const auto us = users();
  SUBCASE("ranking loss") { expect_fd([&] { return ranking_loss(s, us, negs); }, s); }
  SUBCASE("contrastive loss") { expect_fd([&] { return contrastive_loss(s, us); }, s); }
  SUBCASE("combined loss") {
    expect_fd([&] { return add(ranking_loss(s, us, negs), scale(contrastive_loss(s, us), 0.1)); }, s);
  }
  SUBCASE("fine-tune ranking loss") {
    const auto f = build_model(tiny_backbone(6, enc), kSchema, {1, 4, 4, 0, false}, ModelKind::FineTune, 9);
    expect_fd([&] { return ranking_loss(f, us, negs); }, f);
  }
}

TEST_CASE("tuning is deterministic and lowers the ranking loss") {
  TuneConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.lr = 1e-2;
  cfg.mode = TuningMode::Full;
  auto a = prompted(7), b = prompted(7);
  TuneCurves ca;
  tune(a, users(), profile_feature_fn(profiles()), cfg, &ca);
  tune(b, users(), profile_feature_fn(profiles()), cfg);
  CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  CHECK(ca.lp.back() < ca.lp.front());
  CHECK(ca.examples_per_epoch == 3 + 1 + 4 + 0);  // one example per click, the first one zero-shot
}

TEST_CASE("contrastive tuning needs a prompted model") {
  auto f = build_model(tiny_backbone(8), kSchema, {}, ModelKind::FineTune, 1);
  TuneConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(tune(f, users(), profile_feature_fn(profiles()), cfg), ConfigError);
  cfg.cl.enabled = false;
  CHECK_NOTHROW(tune(f, users(), profile_feature_fn(profiles()), cfg));
  cfg.cl.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("kind and mode names round-trip") {
  for (auto k : {ModelKind::Pretrained, ModelKind::FineTune, ModelKind::Prompted}) CHECK(parse_kind(kind_name(k)) == k);
  for (auto m : {TuningMode::Light, TuningMode::Full}) CHECK(parse_mode(mode_name(m)) == m);
  CHECK_THROWS_AS(parse_mode("medium"), ConfigError);
  CHECK_THROWS_AS(parse_kind("other"), CheckpointError);
}
