#pragma once

// Personalized prompt generation, prompt-enhanced user representations, the
// light/full tuning regimes and the tuning loop.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "promptrec/contrastive.hpp"
#include "promptrec/encoder.hpp"
#include "promptrec/model_state.hpp"
#include "promptrec/tensor.hpp"

namespace promptrec {

// Attribute value marking "unknown"; embeds through a reserved per-attribute row.
inline constexpr int kMissingAttr = -1;

struct UserProfile {
  std::vector<int> attrs;  // one slot per attribute, kMissingAttr when unknown
};

struct ProfileSchema {
  std::vector<std::size_t> vocab_sizes;  // per attribute, excluding the missing row
  std::vector<std::size_t> input_attrs;  // attributes that feed x_u; empty means all

  std::size_t num_attrs() const noexcept { return vocab_sizes.size(); }
  std::vector<std::size_t> inputs() const;
};

// How a model turns (features, behaviors) into a user vector.
//   Pretrained: u = u_o over behaviors only (zero vector with no behaviors)
//   FineTune:   u = u_a + u_o, profiles enter only as side information
//   Prompted:   u = u_a + u_s with the generated prompt prefixed
enum class ModelKind { Pretrained, FineTune, Prompted };
enum class TuningMode { Light, Full };

const char* kind_name(ModelKind k);
ModelKind parse_kind(const std::string& s);
const char* mode_name(TuningMode m);
TuningMode parse_mode(const std::string& s);

struct PromptConfig {
  std::size_t prompt_len = 1;
  std::size_t attr_dim = 0;    // 0: model_dim
  std::size_t ppg_hidden = 0;  // 0: model_dim
  // When nonzero, x_u is an external vector of this width (cross-domain)
  // instead of concatenated attribute embeddings.
  std::size_t source_dim = 0;
  bool raw_prompt = false;  // source vector used as the prompt as-is
};

// Adds prompt generator / profile learner tensors (as `kind` requires) to a
// clone of the pre-trained state. Parameters are seeded by `seed`.
ModelState build_model(const ModelState& pretrained, const ProfileSchema& schema, const PromptConfig& cfg,
                       ModelKind kind, std::uint64_t seed);

struct ModeReport {
  std::size_t trainable = 0;
  std::size_t total = 0;
  double fraction = 0.0;
};

// Light trains every group except the backbone, Full trains everything.
// CheckpointError when a group the model kind needs is absent.
ModeReport apply_mode(ModelState& state, TuningMode mode);

class Recommender {
 public:
  explicit Recommender(const ModelState& state);

  ModelKind kind() const noexcept { return kind_; }
  const SequenceEncoder& encoder() const noexcept { return encoder_; }
  std::size_t prompt_len() const noexcept { return kind_ == ModelKind::Prompted ? prompt_len_ : 0; }
  std::size_t feature_dim() const noexcept { return d1_; }
  bool uses_features() const noexcept { return kind_ != ModelKind::Pretrained; }
  const ProfileSchema& schema() const noexcept { return schema_; }

  // x_u = [a_1 || ... || a_m] over the schema's input attributes, [1 x d1].
  Tensor profile_features(const UserProfile& profile) const;
  // Stand-in source vector for users without source behaviors.
  Tensor default_source() const;

  // P^u = W2 sigmoid(W1 x + b1) + b2 reshaped to [n x d].
  Tensor generate_prompt(const Tensor& x) const;
  // u_a, [1 x d].
  Tensor profile_repr(const Tensor& x) const;

  // Rows t = 0..|items| hold the user vector after seeing items[0..t).
  // `behavioral_last` receives the encoder's last row without u_a (u_s or u_o).
  Tensor prefix_reprs(const Tensor& x, std::span<const int> items, std::mt19937_64* dropout_rng = nullptr,
                      Tensor* behavioral_last = nullptr) const;

  // Behavioral representation of the full sequence with an explicit prompt
  // (contrastive views). Prompted kind only.
  Tensor behavior_repr(const Tensor& prompt, std::span<const int> items) const;

  // u for the whole sequence, suffix-truncated to fit the encoder, [1 x d].
  Tensor user_repr(const Tensor& x, std::span<const int> items) const;

  // Dot products against the item table, [1 x k].
  Tensor score(const Tensor& user, std::span<const int> item_ids) const { return encoder_.score(user, item_ids); }

 private:
  ModelKind kind_;
  SequenceEncoder encoder_;
  ProfileSchema schema_;
  std::size_t prompt_len_ = 0;
  std::size_t d1_ = 0;
  bool raw_prompt_ = false;
  std::vector<Tensor> attr_tables_;
  Tensor ppg_w1_, ppg_b1_, ppg_w2_, ppg_b2_;
  Tensor prof_w1_, prof_b1_, prof_w2_, prof_b2_;
  Tensor default_source_;
};

// Schema and prompt settings recorded in a model's meta entries.
ProfileSchema schema_from_meta(const ModelState& state);
PromptConfig prompt_config_from_meta(const ModelState& state);

// Feature vector x_u for a user index, built inside the caller's tape.
using FeatureFn = std::function<Tensor(const Recommender&, std::size_t user)>;

// Feature function over a profile table indexed by user.
FeatureFn profile_feature_fn(const std::vector<UserProfile>& profiles);

struct TuneUser {
  std::size_t user = 0;
  std::vector<int> clicks;  // time-ordered item ids
};

struct TuneConfig {
  TuningMode mode = TuningMode::Light;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::size_t negatives = 1;
  std::uint64_t seed = 1;
  bool include_zero_shot = true;  // the empty-prefix example for the first click
  bool last_only = false;         // only the final click of each user as a target
  AugmentationConfig aug;
  CLConfig cl;

  void validate() const;
};

struct TuneCurves {
  std::vector<double> lp;    // epoch-mean ranking loss
  std::vector<double> lcl;   // epoch-mean contrastive loss (when on)
  std::vector<double> lall;  // epoch-mean combined loss
  std::size_t examples_per_epoch = 0;
  ModeReport mode;
};

// Original and augmented behavioral representations for a batch of users;
// each tensor stacks one row per user.
struct CLViews {
  Tensor original;
  Tensor prompt_masked;
  Tensor behavior_masked;
};

CLViews cl_step_views(const Recommender& rec, const std::vector<Tensor>& features,
                      const std::vector<std::vector<int>>& sequences, const AugmentationConfig& aug,
                      std::mt19937_64& rng, const std::vector<Tensor>* originals = nullptr);

// Mean of InfoNCE over the two augmented view sets.
Tensor cl_loss(const CLViews& views, double tau);

// Minimizes L_p + lambda L_CL on the given users in place.
void tune(ModelState& state, const std::vector<TuneUser>& users, const FeatureFn& features, const TuneConfig& cfg,
          TuneCurves* curves = nullptr);

}  // namespace promptrec
