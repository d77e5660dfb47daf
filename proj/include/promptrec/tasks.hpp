#pragma once

// Cross-domain prompts from source-domain user vectors, and attribute
// prediction with a classifier head on the prompted user representation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptrec/data.hpp"
#include "promptrec/evaluation.hpp"
#include "promptrec/prompt.hpp"

namespace promptrec {

// ---- cross-domain ----

// u_o of the frozen source model over the user's source clicks, [1 x d_src].
// No gradient ever reaches the source tensors.
Tensor source_user_embedding(const ModelState& source, std::span<const int> source_items);

struct SourceEmbeddings {
  std::vector<Tensor> by_user;  // indexed by target user; undefined when the user has no source history
  std::size_t dim = 0;
  std::size_t fallbacks = 0;    // users served by the learned default vector
};

// Source vectors for every target user, matched by user id string.
SourceEmbeddings source_embeddings(const ModelState& source, const InteractionLog& source_log,
                                   const IdMap& target_users);

FeatureFn source_feature_fn(const SourceEmbeddings& embeddings);

// DataError when an item id appears in both vocabularies.
void check_disjoint_items(const IdMap& source_items, const IdMap& target_items);

// Source backbone with a freshly initialized item table for the target domain,
// plus prompt/profile tensors fed by source vectors.
ModelState make_cross_domain_model(const ModelState& source, std::size_t target_items, ModelKind kind,
                                   const PromptConfig& prompt, std::uint64_t seed);

// Tunes in full mode; light mode is rejected because the target item table is
// new and must be learned.
void tune_cross_domain(ModelState& state, const std::vector<TuneUser>& users, const SourceEmbeddings& embeddings,
                       const TuneConfig& cfg, TuneCurves* curves = nullptr);

// ---- profile prediction ----

struct ProfileExample {
  std::size_t user = 0;
  std::vector<int> clicks;
  int label = 0;
};

// Prompted model whose prompts read every attribute except `target_attr`, with
// a linear head "head.w" [d x 1], "head.b" [1]. ContractError when the schema
// lists the target among its inputs.
ModelState build_profile_model(const ModelState& pretrained, ProfileSchema schema, std::size_t target_attr,
                               const PromptConfig& prompt, std::uint64_t seed);

// Examples for users whose target attribute is known; label = (value == positive).
std::vector<ProfileExample> profile_examples(const std::vector<std::vector<int>>& sequences,
                                             const std::vector<UserProfile>& profiles, const std::vector<int>& users,
                                             std::size_t target_attr, int positive_value);

// sigmoid(w . u_p + b) per example.
std::vector<double> predict_profile(const ModelState& state, const FeatureFn& features,
                                    const std::vector<ProfileExample>& examples);

// Binary cross-entropy over the examples; the trainable set follows cfg.mode.
// Returns epoch-mean losses.
std::vector<double> train_profile_head(ModelState& state, const std::vector<ProfileExample>& examples,
                                       const FeatureFn& features, const TuneConfig& cfg);

ClassificationReport evaluate_profile(const ModelState& state, const FeatureFn& features,
                                      const std::vector<ProfileExample>& examples);

}  // namespace promptrec
