#pragma once

#include <random>

#include "promptrec/encoder.hpp"
#include "promptrec/model_state.hpp"

namespace promptrec::testing {

inline EncoderConfig tiny_encoder(std::uint32_t items = 12, std::uint32_t d = 8, std::uint32_t layers = 2,
                                  std::uint32_t heads = 2, std::uint32_t max_len = 8) {
  EncoderConfig c;
  c.num_layers = layers;
  c.model_dim = d;
  c.num_heads = heads;
  c.max_seq_len = max_len;
  c.ffn_hidden = 2 * d;
  c.num_items = items;
  return c;
}

// A freshly initialized backbone tagged as pre-trained.
inline ModelState tiny_backbone(std::uint64_t seed, EncoderConfig c = tiny_encoder()) {
  ModelState s(c);
  std::mt19937_64 rng(seed);
  SequenceEncoder::init_params(s, rng);
  s.meta()["kind"] = "pretrained";
  return s;
}

}  // namespace promptrec::testing
