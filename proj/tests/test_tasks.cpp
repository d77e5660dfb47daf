#include <doctest.h>

#include <sstream>

#include "common.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/tasks.hpp"

using namespace promptrec;
using namespace promptrec::testing;

namespace {

InteractionLog parse(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in);
}

}  // namespace

TEST_CASE("source embeddings are detached and fall back for users without source history") {
  auto source = tiny_backbone(41, tiny_encoder(3, 8, 1, 2, 8));
  const auto src_log = parse("alice\ts0\t1\nalice\ts1\t2\nbob\ts2\t1\n");
  const auto tgt_log = parse("bob\tt0\t1\ncarol\tt1\t1\nalice\tt0\t4\n");
  const auto emb = source_embeddings(source, src_log, tgt_log.users);
  CHECK(emb.dim == 8);
  CHECK(emb.fallbacks == 1);
  CHECK(emb.by_user[tgt_log.users.find("carol")].defined() == false);
  const auto& a = emb.by_user[tgt_log.users.find("alice")];
  CHECK_FALSE(a.requires_grad());
  std::vector<int> alice_items{src_log.items.find("s0"), src_log.items.find("s1")};
  const auto direct = source_user_embedding(source, alice_items);
  for (std::size_t c = 0; c < 8; ++c) CHECK(a.at(0, c) == direct.at(0, c));

  const auto model = make_cross_domain_model(source, tgt_log.items.size(), ModelKind::Prompted, {}, 5);
  Recommender rec(model);
  const auto feats = source_feature_fn(emb);
  const auto carol = feats(rec, static_cast<std::size_t>(tgt_log.users.find("carol")));
  const auto fallback = rec.default_source();
  for (std::size_t c = 0; c < 8; ++c) CHECK(carol.at(0, c) == fallback.at(0, c));
  CHECK(model.at("item_emb").rows() == tgt_log.items.size());
}

TEST_CASE("cross-domain tuning trains in full mode only and never touches the source") {
  auto source = tiny_backbone(42, tiny_encoder(3, 8, 1, 2, 8));
  const auto before = serialize_checkpoint(source);
  const auto src_log = parse("u1\ts0\t1\nu2\ts1\t1\n");
  const auto tgt_log = parse("u1\tt0\t1\nu1\tt1\t2\nu2\tt1\t1\nu2\tt2\t2\n");
  const auto emb = source_embeddings(source, src_log, tgt_log.users);
  auto model = make_cross_domain_model(source, tgt_log.items.size(), ModelKind::Prompted, {}, 5);
  const auto seqs = tgt_log.sequences();
  std::vector<TuneUser> users{{0, seqs[0]}, {1, seqs[1]}};
  TuneConfig cfg;
  cfg.epochs = 2;
  CHECK_THROWS_AS(tune_cross_domain(model, users, emb, cfg), ConfigError);
  cfg.mode = TuningMode::Full;
  tune_cross_domain(model, users, emb, cfg);
  CHECK(serialize_checkpoint(source) == before);
  CHECK_THROWS_AS(check_disjoint_items(src_log.items, parse("u\ts1\t1\n").items), DataError);
}

TEST_CASE("profile models never read the attribute they predict") {
  const auto pre = tiny_backbone(43);
  ProfileSchema schema{{2, 3, 2}, {}};
  const auto m = build_profile_model(pre, schema, 1, {}, 7);
  CHECK(schema_from_meta(m).inputs() == std::vector<std::size_t>{0, 2});
  CHECK_FALSE(m.has("attr1.emb"));
  CHECK(m.has("head.w"));
  ProfileSchema leaky{{2, 3, 2}, {0, 1}};
  CHECK_THROWS_AS(build_profile_model(pre, leaky, 1, {}, 7), ContractError);
}

TEST_CASE("profile examples label known values and skip missing ones") {
  const std::vector<std::vector<int>> seqs{{1}, {2, 3}, {4}};
  const std::vector<UserProfile> profiles{{{0, 1}}, {{1, kMissingAttr}}, {{1, 0}}};
  const auto ex = profile_examples(seqs, profiles, {0, 1, 2}, 1, 1);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].label == 1);
  CHECK(ex[1].user == 2);
  CHECK(ex[1].label == 0);
}

TEST_CASE("the profile head learns a separable attribute") {
  const auto pre = tiny_backbone(44, tiny_encoder(12, 8, 1, 2, 8));
  ProfileSchema schema{{2, 2}, {}};
  auto m = build_profile_model(pre, schema, 1, {}, 3);
  std::vector<std::vector<int>> seqs;
  std::vector<UserProfile> profiles;
  std::vector<int> users;
  for (int u = 0; u < 40; ++u) {
    const int label = u % 2;
    seqs.push_back(label ? std::vector<int>{1, 2, 3} : std::vector<int>{7, 8, 9});
    profiles.push_back({{u % 3 == 0 ? 0 : 1, label}});
    users.push_back(u);
  }
  const auto ex = profile_examples(seqs, profiles, users, 1, 1);
  TuneConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 8;
  cfg.lr = 1e-2;
  cfg.cl.enabled = false;
  const auto curve = train_profile_head(m, ex, profile_feature_fn(profiles), cfg);
  CHECK(curve.back() < curve.front());
  const auto report = evaluate_profile(m, profile_feature_fn(profiles), ex);
  CHECK(report.accuracy == 1.0);
  CHECK(report.count == 40);
}
