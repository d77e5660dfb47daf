#include "promptrec/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptrec/contrastive.hpp"
#include "promptrec/encoder.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/ops.hpp"

namespace promptrec {

Tensor bpr_loss(const Tensor& pos_scores, const Tensor& neg_scores) {
  if (!pos_scores.defined() || !neg_scores.defined()) throw ContractError("bpr_loss: empty batch");
  if (pos_scores.shape() != neg_scores.shape()) {
    throw DimensionError("bpr_loss: " + shape_str(pos_scores.shape()) + " vs " + shape_str(neg_scores.shape()));
  }
  return scale(mean(log_sigmoid(sub(pos_scores, neg_scores))), -1.0);
}

int sample_negative(std::span<const int> clicked, int num_items, std::mt19937_64& rng) {
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < clicked.size(); ++i) {
    if (clicked[i] >= 0 && clicked[i] < num_items && (i == 0 || clicked[i] != clicked[i - 1])) ++distinct;
  }
  if (distinct >= static_cast<std::size_t>(num_items)) {
    throw DataError("sample_negative: user clicked every one of " + std::to_string(num_items) + " items");
  }
  std::uniform_int_distribution<int> dist(0, num_items - 1);
  for (;;) {
    const int candidate = dist(rng);
    if (!std::binary_search(clicked.begin(), clicked.end(), candidate)) return candidate;
  }
}

std::vector<int> crop_reorder_augment(std::span<const int> seq, SeqAugment op, double ratio, std::mt19937_64& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw ContractError("crop_reorder_augment: ratio outside [0, 1]");
  std::vector<int> out(seq.begin(), seq.end());
  const std::size_t n = seq.size();
  if (n <= 1) return out;
  switch (op) {
    case SeqAugment::Mask:
      return behavior_aug(seq, ratio, rng);
    case SeqAugment::Crop: {
      auto len = static_cast<std::size_t>(std::ceil((1.0 - ratio) * static_cast<double>(n)));
      len = std::clamp<std::size_t>(len, 1, n);
      std::uniform_int_distribution<std::size_t> start(0, n - len);
      const auto s = start(rng);
      return {out.begin() + static_cast<std::ptrdiff_t>(s), out.begin() + static_cast<std::ptrdiff_t>(s + len)};
    }
    case SeqAugment::Reorder: {
      auto len = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n)));
      len = std::min(len, n);
      if (len < 2) return out;
      std::uniform_int_distribution<std::size_t> start(0, n - len);
      const auto s = start(rng);
      std::shuffle(out.begin() + static_cast<std::ptrdiff_t>(s), out.begin() + static_cast<std::ptrdiff_t>(s + len),
                   rng);
      return out;
    }
  }
  return out;
}

void PretrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (negatives == 0) throw ConfigError("negatives must be at least 1");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw ConfigError("holdout_fraction must lie in [0, 1)");
  for (double r : {mask_ratio, crop_ratio, reorder_ratio}) {
    if (r < 0.0 || r > 1.0) throw ConfigError("augmentation ratios must lie in [0, 1]");
  }
  if (cl_flavor && !(cl_tau > 0.0)) throw ConfigError("cl_tau must be positive");
  if (cl_lambda < 0.0) throw ConfigError("cl_lambda must be non-negative");
}

std::size_t pretrain_examples(std::size_t sequence_length, std::size_t max_seq_len) {
  const std::size_t usable = std::min(sequence_length, max_seq_len + 1);
  return usable < 2 ? 0 : usable - 1;
}

namespace {

struct WarmUser {
  std::vector<int> seq;      // most recent max_seq_len + 1 clicks
  std::vector<int> clicked;  // sorted distinct clicks over the whole history
};

// Score differences (pos - neg) for every prefix of one sequence, one row per
// (position, negative) pair.
Tensor sequence_margins(const SequenceEncoder& enc, const WarmUser& u, std::span<const int> negatives,
                        std::size_t k, std::mt19937_64* dropout_rng) {
  const std::size_t T = u.seq.size() - 1;
  std::span<const int> input(u.seq.data(), T);
  std::span<const int> targets(u.seq.data() + 1, T);
  Tensor h = enc.encode(enc.embed_sequence(std::nullopt, input), dropout_rng).last_layer();
  Tensor pos = row_sums(mul(h, enc.embed_items(targets)));
  std::vector<Tensor> diffs;
  for (std::size_t j = 0; j < k; ++j) {
    Tensor neg = row_sums(mul(h, enc.embed_items(negatives.subspan(j * T, T))));
    diffs.push_back(sub(pos, neg));
  }
  return diffs.size() == 1 ? diffs.front() : concat_rows(diffs);
}

std::vector<int> draw_negatives(const WarmUser& u, std::size_t k, int num_items, std::mt19937_64& rng) {
  std::vector<int> negs(k * (u.seq.size() - 1));
  for (auto& n : negs) n = sample_negative(u.clicked, num_items, rng);
  return negs;
}

Tensor view_repr(const SequenceEncoder& enc, const std::vector<int>& seq) {
  return SequenceEncoder::user_representation(enc.encode(enc.embed_sequence(std::nullopt, seq)));
}

}  // namespace

ModelState pretrain(const std::vector<std::vector<int>>& warm_sequences, const EncoderConfig& encoder,
                    const PretrainConfig& cfg, PretrainCurves* curves) {
  cfg.validate();
  encoder.validate();
  ModelState state(encoder);
  std::mt19937_64 init_rng(cfg.seed);
  SequenceEncoder::init_params(state, init_rng);
  state.meta()["kind"] = "pretrained";
  pretrain_in_place(state, warm_sequences, cfg, curves);
  return state;
}

void pretrain_in_place(ModelState& state, const std::vector<std::vector<int>>& warm_sequences,
                       const PretrainConfig& cfg, PretrainCurves* curves) {
  cfg.validate();
  const auto& ecfg = state.encoder();
  const int num_items = static_cast<int>(ecfg.num_items);

  std::vector<WarmUser> users;
  for (const auto& s : warm_sequences) {
    if (pretrain_examples(s.size(), ecfg.max_seq_len) == 0) continue;
    WarmUser u;
    u.seq = truncate_recent(s, ecfg.max_seq_len + 1);
    u.clicked = s;
    std::sort(u.clicked.begin(), u.clicked.end());
    u.clicked.erase(std::unique(u.clicked.begin(), u.clicked.end()), u.clicked.end());
    for (int id : u.clicked) {
      if (id < 0 || id >= num_items) throw DataError("warm sequence holds item id outside the item table");
    }
    users.push_back(std::move(u));
  }
  if (users.empty()) throw DataError("pretrain: warm split has no sequence with at least two clicks");

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 cl_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x165667b19e3779f9ULL);
  std::mt19937_64* drop = ecfg.dropout > 0.0 ? &dropout_rng : nullptr;

  std::vector<std::size_t> order(users.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(users.size())));
  std::vector<std::size_t> val_users(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train_users(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::vector<std::vector<int>> val_negs;
  for (auto u : val_users) val_negs.push_back(draw_negatives(users[u], cfg.negatives, num_items, rng));

  PretrainCurves local;
  PretrainCurves& out = curves ? *curves : local;
  out = PretrainCurves{};
  for (auto u : train_users) out.examples_per_epoch += users[u].seq.size() - 1;

  const std::vector<Tensor> params = state.trainable();
  Adam adam(params, AdamConfig{cfg.lr});
  std::vector<std::vector<double>> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  const SeqAugment ops[] = {SeqAugment::Mask, SeqAugment::Crop, SeqAugment::Reorder};
  const double ratios[] = {cfg.mask_ratio, cfg.crop_ratio, cfg.reorder_ratio};

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_users.begin(), train_users.end(), rng);
    double loss_sum = 0.0, cl_sum = 0.0;
    std::size_t cl_batches = 0;
    std::size_t cursor = 0;
    while (cursor < train_users.size()) {
      std::vector<std::size_t> batch;
      std::size_t examples = 0;
      while (cursor < train_users.size() && examples < cfg.batch_size) {
        batch.push_back(train_users[cursor]);
        examples += users[train_users[cursor]].seq.size() - 1;
        ++cursor;
      }
      Tape::current().clear();
      state.zero_grad();
      SequenceEncoder enc(state);
      std::vector<Tensor> margins;
      for (auto u : batch) {
        const auto negs = draw_negatives(users[u], cfg.negatives, num_items, rng);
        margins.push_back(sequence_margins(enc, users[u], negs, cfg.negatives, drop));
      }
      Tensor m = margins.size() == 1 ? margins.front() : concat_rows(margins);
      Tensor loss = bpr_loss(m, Tensor::zeros(m.shape()));
      loss_sum += loss.item() * static_cast<double>(examples);
      if (cfg.cl_flavor && cfg.cl_lambda > 0.0) {
        std::vector<Tensor> view_a, view_b;
        for (auto u : batch) {
          const auto& seq = users[u].seq;
          std::uniform_int_distribution<int> pick(0, 2);
          const int a = pick(cl_rng), b = pick(cl_rng);
          view_a.push_back(view_repr(enc, crop_reorder_augment(seq, ops[a], ratios[a], cl_rng)));
          view_b.push_back(view_repr(enc, crop_reorder_augment(seq, ops[b], ratios[b], cl_rng)));
        }
        Tensor cl = info_nce(concat_rows(view_a), concat_rows(view_b), cfg.cl_tau);
        cl_sum += cl.item();
        ++cl_batches;
        loss = add(loss, scale(cl, cfg.cl_lambda));
      }
      backward(loss);
      adam.step(params);
    }
    out.train_loss.push_back(loss_sum / static_cast<double>(out.examples_per_epoch));
    if (cfg.cl_flavor && cl_batches) out.cl_loss.push_back(cl_sum / static_cast<double>(cl_batches));
    out.epochs_run = epoch + 1;

    if (val_users.empty()) {
      out.best_epoch = epoch + 1;
      continue;
    }
    double val = 0.0;
    std::size_t val_examples = 0;
    {
      NoGradGuard no_grad;
      SequenceEncoder enc(state);
      for (std::size_t i = 0; i < val_users.size(); ++i) {
        const auto& u = users[val_users[i]];
        Tensor m = sequence_margins(enc, u, val_negs[i], cfg.negatives, nullptr);
        val += bpr_loss(m, Tensor::zeros(m.shape())).item() * static_cast<double>(m.numel());
        val_examples += m.numel();
      }
    }
    val /= static_cast<double>(val_examples);
    out.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      out.best_epoch = epoch + 1;
      stale = 0;
      best.clear();
      for (const auto& p : params) best.emplace_back(p.data().begin(), p.data().end());
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  if (!best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i];
      std::copy(best[i].begin(), best[i].end(), p.data().begin());
    }
  }
  Tape::current().clear();
  state.zero_grad();
}

}  // namespace promptrec
