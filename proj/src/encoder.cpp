#include "promptrec/encoder.hpp"

#include <cmath>

#include "promptrec/errors.hpp"
#include "promptrec/ops.hpp"

namespace promptrec {

Tensor init_uniform(Shape shape, std::size_t fan, std::mt19937_64& rng, bool requires_grad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

std::vector<int> truncate_recent(std::span<const int> items, std::size_t max_len) {
  if (items.size() <= max_len) return {items.begin(), items.end()};
  return {items.end() - static_cast<std::ptrdiff_t>(max_len), items.end()};
}

namespace {
std::string layer_key(std::size_t l, const char* name) { return "encoder.layer" + std::to_string(l) + "." + name; }
}  // namespace

void SequenceEncoder::init_params(ModelState& state, std::mt19937_64& rng) {
  const auto& c = state.encoder();
  c.validate();
  const std::size_t d = c.model_dim, h = c.ffn_hidden;
  state.add("item_emb", ParamGroup::Backbone, init_uniform({c.num_items, d}, d, rng));
  state.add("pos_emb", ParamGroup::Backbone, init_uniform({c.max_seq_len, d}, d, rng));
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      state.add(layer_key(l, w), ParamGroup::Backbone, init_uniform({d, d}, d, rng));
      std::string b = w;
      b[0] = 'b';
      state.add(layer_key(l, b.c_str()), ParamGroup::Backbone, Tensor::zeros({d}, true));
    }
    state.add(layer_key(l, "ln1_gain"), ParamGroup::Backbone, Tensor::full({d}, 1.0, true));
    state.add(layer_key(l, "ln1_bias"), ParamGroup::Backbone, Tensor::zeros({d}, true));
    state.add(layer_key(l, "ffn_w1"), ParamGroup::Backbone, init_uniform({d, h}, d, rng));
    state.add(layer_key(l, "ffn_b1"), ParamGroup::Backbone, Tensor::zeros({h}, true));
    state.add(layer_key(l, "ffn_w2"), ParamGroup::Backbone, init_uniform({h, d}, h, rng));
    state.add(layer_key(l, "ffn_b2"), ParamGroup::Backbone, Tensor::zeros({d}, true));
    state.add(layer_key(l, "ln2_gain"), ParamGroup::Backbone, Tensor::full({d}, 1.0, true));
    state.add(layer_key(l, "ln2_bias"), ParamGroup::Backbone, Tensor::zeros({d}, true));
  }
}

SequenceEncoder::SequenceEncoder(const ModelState& state) : cfg_(state.encoder()) {
  cfg_.validate();
  item_emb_ = state.at("item_emb");
  pos_emb_ = state.at("pos_emb");
  if (item_emb_.rows() != cfg_.num_items || item_emb_.cols() != cfg_.model_dim) {
    throw CheckpointError("item_emb shape " + shape_str(item_emb_.shape()) + " disagrees with encoder config");
  }
  if (pos_emb_.rows() != cfg_.max_seq_len || pos_emb_.cols() != cfg_.model_dim) {
    throw CheckpointError("pos_emb shape " + shape_str(pos_emb_.shape()) + " disagrees with encoder config");
  }
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    auto get = [&](const char* n) { return state.at(layer_key(l, n)); };
    blocks_.push_back(Block{get("wq"), get("bq"), get("wk"), get("bk"), get("wv"), get("bv"), get("wo"), get("bo"),
                            get("ln1_gain"), get("ln1_bias"), get("ffn_w1"), get("ffn_b1"), get("ffn_w2"),
                            get("ffn_b2"), get("ln2_gain"), get("ln2_bias")});
  }
}

Tensor SequenceEncoder::embed_items(std::span<const int> ids) const {
  std::vector<int> safe(ids.begin(), ids.end());
  std::vector<double> pattern;
  bool any_masked = false;
  for (int& id : safe) {
    if (id == kMaskItem) {
      id = 0;
      any_masked = true;
    }
  }
  Tensor rows = embedding_lookup(item_emb_, safe);
  if (!any_masked) return rows;
  const std::size_t d = cfg_.model_dim;
  pattern.assign(ids.size() * d, 1.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == kMaskItem) std::fill_n(pattern.begin() + static_cast<std::ptrdiff_t>(i * d), d, 0.0);
  }
  return mask(rows, pattern);
}

Tensor SequenceEncoder::embed_sequence(const std::optional<Tensor>& prompt_rows, std::span<const int> items) const {
  std::vector<Tensor> parts;
  if (prompt_rows) {
    if (prompt_rows->cols() != cfg_.model_dim) {
      throw DimensionError("prompt rows " + shape_str(prompt_rows->shape()) + " do not match model_dim " +
                           std::to_string(cfg_.model_dim));
    }
    parts.push_back(*prompt_rows);
  }
  if (!items.empty()) parts.push_back(embed_items(items));
  if (parts.empty()) throw ContractError("embed_sequence: empty sequence (no prompt and no items)");
  Tensor tokens = parts.size() == 1 ? parts.front() : concat_rows(parts);
  const std::size_t T = tokens.rows();
  if (T > cfg_.max_seq_len) {
    throw ContractError("sequence of length " + std::to_string(T) + " exceeds max_seq_len " +
                        std::to_string(cfg_.max_seq_len));
  }
  return add(tokens, slice_rows(pos_emb_, 0, T));
}

Tensor SequenceEncoder::attend(const Block& b, const Tensor& x, std::mt19937_64* rng) const {
  const std::size_t T = x.rows();
  const std::size_t heads = cfg_.num_heads;
  const std::size_t dh = cfg_.model_dim / heads;
  Tensor q = add_bias(matmul(x, b.wq), b.bq);
  Tensor k = add_bias(matmul(x, b.wk), b.bk);
  Tensor v = add_bias(matmul(x, b.wv), b.bv);

  std::vector<double> causal(T * T, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i + 1; j < T; ++j) causal[i * T + j] = kMaskedLogit;
  }
  const Tensor causal_mask = Tensor::from({T, T}, std::move(causal));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor probs = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), causal_mask);
    if (keep_attention) attention_.push_back(probs.detach());
    if (rng && cfg_.dropout > 0.0) probs = dropout(probs, cfg_.dropout, *rng);
    head_out.push_back(matmul(probs, vh));
  }
  Tensor merged = heads == 1 ? head_out.front() : concat_cols(head_out);
  return add_bias(matmul(merged, b.wo), b.bo);
}

HiddenStates SequenceEncoder::encode(const Tensor& tokens, std::mt19937_64* rng) const {
  const std::size_t T = tokens.rows();
  if (T == 0 || T > cfg_.max_seq_len) {
    throw ContractError("encode: sequence length " + std::to_string(T) + " outside [1, " +
                        std::to_string(cfg_.max_seq_len) + "]");
  }
  if (tokens.cols() != cfg_.model_dim) {
    throw DimensionError("encode: tokens " + shape_str(tokens.shape()) + " vs model_dim " +
                         std::to_string(cfg_.model_dim));
  }
  if (keep_attention) attention_.clear();
  HiddenStates states;
  Tensor x = tokens;
  if (rng && cfg_.dropout > 0.0) x = dropout(x, cfg_.dropout, *rng);
  states.layers.push_back(x);
  for (const auto& b : blocks_) {
    Tensor a = attend(b, x, rng);
    if (rng && cfg_.dropout > 0.0) a = dropout(a, cfg_.dropout, *rng);
    x = layer_norm(add(x, a), b.ln1_gain, b.ln1_bias);
    Tensor f = add_bias(matmul(relu(add_bias(matmul(x, b.ffn_w1), b.ffn_b1)), b.ffn_w2), b.ffn_b2);
    if (rng && cfg_.dropout > 0.0) f = dropout(f, cfg_.dropout, *rng);
    x = layer_norm(add(x, f), b.ln2_gain, b.ln2_bias);
    states.layers.push_back(x);
  }
  return states;
}

Tensor SequenceEncoder::user_representation(const HiddenStates& states) {
  if (states.layers.empty()) throw ContractError("user_representation: no hidden states");
  const Tensor& h = states.last_layer();
  return slice_rows(h, h.rows() - 1, 1);
}

Tensor SequenceEncoder::score(const Tensor& user_repr, std::span<const int> item_ids) const {
  return matmul_nt(user_repr, embedding_lookup(item_emb_, item_ids));
}

}  // namespace promptrec
