#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "common.hpp"
#include "gradcheck.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/ops.hpp"
#include "promptrec/pretrain.hpp"

using namespace promptrec;
using namespace promptrec::testing;

namespace {

bool rows_identical(const Tensor& a, const Tensor& b, std::size_t rows) {
  const std::size_t n = rows * a.cols();
  return a.cols() == b.cols() && std::memcmp(a.data().data(), b.data().data(), n * sizeof(double)) == 0;
}

std::vector<int> random_items(std::size_t len, int num_items, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, num_items - 1);
  std::vector<int> v(len);
  for (auto& x : v) x = pick(rng);
  return v;
}

}  // namespace

TEST_CASE("hidden rows never depend on later positions (200 random cases)") {
  const auto state = tiny_backbone(21);
  SequenceEncoder enc(state);
  std::mt19937_64 rng(99);
  NoGradGuard ng;
  std::size_t failures = 0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t len = 2 + rng() % 7;
    auto seq = random_items(len, 12, rng);
    const std::size_t cut = 1 + rng() % (len - 1);
    auto changed = seq;
    for (std::size_t j = cut; j < len; ++j) changed[j] = static_cast<int>(rng() % 12);
    changed[cut] = (seq[cut] + 1) % 12;
    const auto h1 = enc.encode(enc.embed_sequence(std::nullopt, seq));
    const auto h2 = enc.encode(enc.embed_sequence(std::nullopt, changed));
    for (std::size_t l = 0; l < h1.layers.size(); ++l) {
      if (!rows_identical(h1.layers[l], h2.layers[l], cut)) ++failures;
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("encoding a prefix reproduces the leading rows of the full encoding (200 random cases)") {
  const auto state = tiny_backbone(22);
  SequenceEncoder enc(state);
  std::mt19937_64 rng(7);
  NoGradGuard ng;
  std::size_t failures = 0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t len = 1 + rng() % 8;
    auto seq = random_items(len, 12, rng);
    const std::size_t t = 1 + rng() % len;
    std::optional<Tensor> prompt;
    if (c % 2 == 1 && len < 8) prompt = random_tensor({1, 8}, rng);
    const std::size_t t_eff = std::min(t, static_cast<std::size_t>(7));
    const std::span<const int> prefix(seq.data(), t_eff);
    const std::size_t full_len = prompt ? std::min<std::size_t>(len, 7) : len;
    const std::span<const int> full(seq.data(), full_len);
    if (t_eff > full_len) continue;
    const auto hf = enc.encode(enc.embed_sequence(prompt, full));
    const auto hp = enc.encode(enc.embed_sequence(prompt, prefix));
    if (!rows_identical(hf.last_layer(), hp.last_layer(), hp.length())) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("attention is causal and row-stochastic") {
  const auto state = tiny_backbone(23);
  SequenceEncoder enc(state);
  enc.keep_attention = true;
  std::vector<int> seq{1, 4, 2, 7, 3};
  NoGradGuard ng;
  enc.encode(enc.embed_sequence(std::nullopt, seq));
  REQUIRE_FALSE(enc.attention().empty());
  for (const auto& a : enc.attention()) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < a.cols(); ++j) {
        s += a.at(i, j);
        if (j > i) CHECK(a.at(i, j) == 0.0);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("masked items embed as the zero vector and pass no gradient") {
  auto state = tiny_backbone(24);
  SequenceEncoder enc(state);
  std::vector<int> ids{3, kMaskItem, 5};
  auto rows = enc.embed_items(ids);
  for (std::size_t c = 0; c < rows.cols(); ++c) CHECK(rows.at(1, c) == 0.0);
  state.zero_grad();
  auto l = sum(mul(rows, rows));
  backward(l);
  const auto g = enc.item_table().grad();
  for (std::size_t c = 0; c < 8; ++c) CHECK(g[0 * 8 + c] == 0.0);
  CHECK(g[3 * 8] != 0.0);
}

TEST_CASE("sequences longer than the encoder are rejected") {
  const auto state = tiny_backbone(25);
  SequenceEncoder enc(state);
  std::vector<int> seq(9, 1);
  CHECK_THROWS_AS(enc.embed_sequence(std::nullopt, seq), ContractError);
  CHECK(truncate_recent(seq, 8).size() == 8);
}

TEST_CASE("next-item BPR loss through the encoder passes the finite-difference check") {
  auto state = tiny_backbone(26, tiny_encoder(10, 4, 2, 2, 6));
  SequenceEncoder enc(state);
  std::vector<int> seq{1, 3, 5, 2, 8, 0};
  std::vector<int> pos{3, 5, 2, 8, 0};
  std::vector<int> neg{7, 7, 4, 9, 6};
  auto loss = [&] {
    auto h = enc.encode(enc.embed_sequence(std::nullopt, std::span<const int>(seq.data(), 5))).last_layer();
    auto ps = row_sums(mul(h, enc.embed_items(pos)));
    auto ns = row_sums(mul(h, enc.embed_items(neg)));
    return bpr_loss(ps, ns);
  };
  const auto r = check_gradients(loss, state.tensors());
  INFO(r.worst);
  CHECK(r.checked == state.total_count());
  CHECK(r.max_rel_error < kFdTolerance);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject corrupted files") {
  auto state = tiny_backbone(27);
  state.meta()["stage"] = "test";
  const auto bytes = serialize_checkpoint(state);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.encoder() == state.encoder());
  CHECK(back.meta() == state.meta());
  CHECK(serialize_checkpoint(back) == bytes);
  for (auto g : {ParamGroup::Backbone, ParamGroup::PromptGenerator}) CHECK(group_bytes(back, g) == group_bytes(state, g));

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), CheckpointError);
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), CheckpointError);
  auto bad_version = bytes;
  bad_version[4] = 99;
  CHECK_THROWS_AS(deserialize_checkpoint(bad_version), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/promptrec.ckpt"), CheckpointError);
}

TEST_CASE("encoder config validation") {
  auto c = tiny_encoder();
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_encoder();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_encoder();
  c.num_items = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
