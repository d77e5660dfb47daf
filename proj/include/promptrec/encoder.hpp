#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "promptrec/model_state.hpp"
#include "promptrec/tensor.hpp"

namespace promptrec {

// Item id embedded as the constant zero vector (behavior masking).
inline constexpr int kMaskItem = -1;

// Per-layer hidden matrices; layers[0] is the embedded input, layers.back()
// is H^L. Every entry is [T x d].
struct HiddenStates {
  std::vector<Tensor> layers;
  const Tensor& last_layer() const { return layers.back(); }
  std::size_t length() const { return layers.front().rows(); }
};

// Uniform(-1/sqrt(fan), 1/sqrt(fan)) matrix, the initializer used for every
// embedding table and linear weight in the project.
Tensor init_uniform(Shape shape, std::size_t fan, std::mt19937_64& rng, bool requires_grad = true);

// Keeps the most recent `max_len` items.
std::vector<int> truncate_recent(std::span<const int> items, std::size_t max_len);

// Causal self-attention encoder bound to the backbone tensors of a ModelState.
//
// Block layout (post-norm):  X = LN1(X + MHA(X)),  X = LN2(X + FFN(X))
// with a causal mask so row i attends only to rows <= i.
class SequenceEncoder {
 public:
  // Adds item/position embeddings and all block weights to `state`.
  static void init_params(ModelState& state, std::mt19937_64& rng);

  explicit SequenceEncoder(const ModelState& state);

  const EncoderConfig& config() const noexcept { return cfg_; }
  const Tensor& item_table() const noexcept { return item_emb_; }

  // Item rows for ids; kMaskItem rows are exact zeros and pass no gradient.
  Tensor embed_items(std::span<const int> ids) const;

  // Prompt rows (if any) followed by embedded items, plus positional
  // embeddings 0..T-1 counting prompt rows first.
  Tensor embed_sequence(const std::optional<Tensor>& prompt_rows, std::span<const int> items) const;

  // `rng` enables dropout when the configured rate is positive.
  HiddenStates encode(const Tensor& tokens, std::mt19937_64* rng = nullptr) const;

  // Row T-1 of H^L as a [1 x d] tensor.
  static Tensor user_representation(const HiddenStates& states);

  // [1 x k] dot products against the item table.
  Tensor score(const Tensor& user_repr, std::span<const int> item_ids) const;

  // Attention probabilities of the last forward pass for one layer/head; only
  // recorded when `keep_attention` is set.
  bool keep_attention = false;
  const std::vector<Tensor>& attention() const noexcept { return attention_; }

 private:
  struct Block {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_gain, ln1_bias;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor ln2_gain, ln2_bias;
  };

  Tensor attend(const Block& block, const Tensor& x, std::mt19937_64* rng) const;

  EncoderConfig cfg_;
  Tensor item_emb_;
  Tensor pos_emb_;
  std::vector<Block> blocks_;
  mutable std::vector<Tensor> attention_;
};

}  // namespace promptrec
