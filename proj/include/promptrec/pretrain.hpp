#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "promptrec/adam.hpp"
#include "promptrec/model_state.hpp"
#include "promptrec/tensor.hpp"

namespace promptrec {

// mean over pairs of -log sigmoid(pos - neg). Shapes must agree.
Tensor bpr_loss(const Tensor& pos_scores, const Tensor& neg_scores);

// Uniform draw from [0, num_items) minus `clicked` (sorted ascending), by
// rejection. DataError when every item is clicked.
int sample_negative(std::span<const int> clicked, int num_items, std::mt19937_64& rng);

enum class SeqAugment { Mask, Crop, Reorder };

// Crop keeps a random window of ceil((1 - ratio) |seq|) items, reorder
// shuffles a random window of ceil(ratio |seq|) items, mask zero-masks
// floor(ratio |seq|) positions. Length-1 inputs come back unchanged.
std::vector<int> crop_reorder_augment(std::span<const int> seq, SeqAugment op, double ratio, std::mt19937_64& rng);

struct PretrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 256;  // training examples per optimizer step
  double lr = 1e-3;
  std::size_t negatives = 1;
  std::uint64_t seed = 1;
  double holdout_fraction = 0.05;  // warm users held out for early stopping
  std::size_t patience = 3;

  // Contrastive-augmented flavor: two augmented views per sequence, InfoNCE.
  bool cl_flavor = false;
  double cl_lambda = 0.1;
  double cl_tau = 0.5;
  double mask_ratio = 0.2;
  double crop_ratio = 0.2;
  double reorder_ratio = 0.2;

  void validate() const;
};

struct PretrainCurves {
  std::vector<double> train_loss;  // epoch-mean L_o
  std::vector<double> cl_loss;     // epoch-mean L_CL (cl flavor only)
  std::vector<double> val_loss;    // held-out BPR loss (when a holdout exists)
  std::size_t examples_per_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
};

// Number of (prefix, next item) examples one sequence yields.
std::size_t pretrain_examples(std::size_t sequence_length, std::size_t max_seq_len);

// Next-item BPR training of a freshly initialized backbone on warm sequences
// (dense item ids in [0, encoder.num_items)).
ModelState pretrain(const std::vector<std::vector<int>>& warm_sequences, const EncoderConfig& encoder,
                    const PretrainConfig& cfg, PretrainCurves* curves = nullptr);

// Continues training an existing backbone in place.
void pretrain_in_place(ModelState& state, const std::vector<std::vector<int>>& warm_sequences,
                       const PretrainConfig& cfg, PretrainCurves* curves = nullptr);

}  // namespace promptrec
