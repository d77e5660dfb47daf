#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "promptrec/errors.hpp"
#include "promptrec/synthetic.hpp"
#include "promptrec/tasks.hpp"

using namespace promptrec;

namespace {

InteractionLog parse(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in);
}

}  // namespace

TEST_CASE("interactions are ordered by timestamp, then by line, per user") {
  const auto log = parse("u1\tb\t20\nu2\ta\t5\nu1\ta\t10\n\nu1\tc\t20\nu1\ta\t10\n");
  REQUIRE(log.users.size() == 2);
  REQUIRE(log.items.size() == 3);
  const auto seqs = log.sequences();
  const int a = log.items.find("a"), b = log.items.find("b"), c = log.items.find("c");
  CHECK(seqs[log.users.find("u1")] == std::vector<int>{a, b, c});
  CHECK(seqs[log.users.find("u2")] == std::vector<int>{a});
  CHECK(log.records.size() == 4);  // the repeated (u1, a, 10) row is kept once
}

TEST_CASE("malformed interaction lines name their line number") {
  for (const auto& [text, line] : std::vector<std::pair<std::string, std::size_t>>{
           {"u1\ta\t1\nu1\ta\n", 2}, {"u1\ta\tsoon\n", 1}, {"u1\ta\t1\n\nu2\tb\t3\textra\n", 3}, {"\ta\t1\n", 1}}) {
    try {
      parse(text);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == line);
      CHECK(e.exit_code() == 4);
    }
  }
  CHECK_THROWS_AS(load_interactions("/nonexistent/log.tsv"), DataError);
}

TEST_CASE("interaction logs round-trip through their text form") {
  const auto log = parse("x\tp\t3\ny\tq\t1\nx\tq\t2\n");
  std::ostringstream out;
  write_interactions(log, out);
  std::istringstream back_in(out.str());
  const auto back = parse_interactions(back_in);
  auto named = [](const InteractionLog& l) {
    std::map<std::string, std::vector<std::string>> out;
    const auto seqs = l.sequences();
    for (std::size_t u = 0; u < seqs.size(); ++u) {
      for (int i : seqs[u]) out[l.users.name(static_cast<int>(u))].push_back(l.items.name(i));
    }
    return out;
  };
  CHECK(named(back) == named(log));
}

TEST_CASE("profiles map raw values to first-appearance indices with ? as missing") {
  const auto log = parse("u1\ta\t1\nu2\ta\t1\nu3\ta\t1\n");
  std::istringstream in("u2\tF\tstudent\nu1\tM\t?\nghost\tM\tretired\n");
  const auto p = parse_profiles(in, log.users);
  CHECK(p.schema.vocab_sizes == std::vector<std::size_t>{2, 2});
  CHECK(p.vocab[0] == std::vector<std::string>{"F", "M"});
  CHECK(p.profiles[log.users.find("u2")].attrs == std::vector<int>{0, 0});
  CHECK(p.profiles[log.users.find("u1")].attrs == std::vector<int>{1, kMissingAttr});
  CHECK(p.profiles[log.users.find("u3")].attrs == std::vector<int>{kMissingAttr, kMissingAttr});
  CHECK(p.unmatched_users == 1);

  std::istringstream ragged("u1\tM\tx\nu2\tF\n");
  CHECK_THROWS_AS(parse_profiles(ragged, log.users), ParseError);
  std::istringstream dup("u1\tM\tx\nu1\tF\ty\n");
  CHECK_THROWS_AS(parse_profiles(dup, log.users), ParseError);
}

TEST_CASE("warm/cold and train/test splits") {
  std::vector<std::vector<int>> seqs;
  for (std::size_t n : {12, 3, 10, 9, 1, 0, 15, 4}) seqs.emplace_back(n, 1);
  const auto wc = split_warm_cold(seqs, 10);
  CHECK(wc.warm == std::vector<int>{0, 2, 6});
  CHECK(wc.cold == std::vector<int>{1, 3, 4, 7});  // users without clicks belong to neither side

  std::vector<int> cold(50);
  for (int i = 0; i < 50; ++i) cold[i] = 2 * i;
  const auto a = split_cold_train_test(cold, 0.8, 5);
  const auto b = split_cold_train_test(cold, 0.8, 5);
  const auto c = split_cold_train_test(cold, 0.8, 6);
  CHECK(a.train.size() == 40);
  CHECK(a.test.size() == 10);
  CHECK(a.train == b.train);
  CHECK(a.train != c.train);
  std::set<int> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 50);
  CHECK(std::is_sorted(a.train.begin(), a.train.end()));
  CHECK_THROWS_AS(split_cold_train_test({1}, 0.8, 1), DataError);
}

TEST_CASE("zero-shot and few-shot streams") {
  const std::vector<std::vector<int>> seqs{{5, 6, 7}, {8}, {}};
  CHECK_THROWS_AS(extract_zero_shot(seqs, {0, 2}), DataError);
  const auto s = extract_zero_shot(seqs, {0, 1});
  REQUIRE(s.zero_shot.size() == 2);
  CHECK(s.zero_shot[0].item == 5);
  CHECK(s.zero_shot[1].item == 8);
  REQUIRE(s.few_shot.size() == 2);
  CHECK(s.few_shot[0].prefix == std::vector<int>{5});
  CHECK(s.few_shot[0].target == 6);
  CHECK(s.few_shot[1].prefix == std::vector<int>{5, 6});
}

TEST_CASE("k-shot cropping keeps the earliest clicks") {
  const std::vector<std::vector<int>> seqs{{1, 2, 3, 4}, {9}};
  CHECK(crop_for_kshot(seqs, 2) == std::vector<std::vector<int>>{{1, 2}, {9}});
  CHECK_THROWS_AS(crop_for_kshot(seqs, 0), ConfigError);
  const auto log = parse("u\ta\t1\nu\tb\t2\nu\tc\t3\n");
  const auto cropped = crop_for_kshot(log, 1);
  CHECK(cropped.sequences() == std::vector<std::vector<int>>{{log.items.find("a")}});
}

TEST_CASE("synthetic data is seeded, attribute-driven and round-trips through files") {
  SyntheticConfig cfg;
  cfg.warm_users = 200;
  cfg.cold_users = 60;
  cfg.num_items = 120;
  cfg.target_items = 40;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  REQUIRE(a.users.size() == 260);
  CHECK(a.log().sequences() == b.log().sequences());
  cfg.seed = 8;
  CHECK(generate_synthetic(cfg).log().sequences() != a.log().sequences());

  std::size_t cold = 0;
  for (const auto& u : a.users) {
    if (u.items.size() < 10) ++cold;
    CHECK((u.items.size() >= 1 && u.items.size() <= 30));
    CHECK(!u.target_items.empty());
  }
  CHECK(cold == 60);
  CHECK(cluster_purity(a) > 0.7);

  // Users following their attributes share a primary cluster when their
  // attributes agree.
  std::map<std::vector<int>, std::set<int>> primaries;
  for (const auto& u : a.users) primaries[u.attrs].insert(u.primary);
  std::size_t consistent = 0;
  for (const auto& [attrs, set] : primaries) consistent += set.size() <= 3;
  CHECK(consistent == primaries.size());

  std::ostringstream inter, prof;
  write_interactions(a, inter);
  write_profiles(a, prof);
  std::istringstream in(inter.str()), pin(prof.str());
  const auto log = parse_interactions(in);
  CHECK(log.sequences() == a.log().sequences());
  const auto p = parse_profiles(pin, log.users);
  CHECK(p.schema.num_attrs() == 3);
  CHECK(p.unmatched_users == 0);

  check_disjoint_items(a.log().items, a.target_log().items);
  SyntheticConfig bad = cfg;
  bad.num_clusters = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
