#pragma once

// End-to-end pipelines driven by a Config: dataset assembly, pre-training,
// tuning, evaluation, cross-domain and profile runs. The CLI and the
// acceptance suite both go through these.

#include <string>
#include <vector>

#include "promptrec/config.hpp"
#include "promptrec/data.hpp"
#include "promptrec/evaluation.hpp"
#include "promptrec/pretrain.hpp"
#include "promptrec/prompt.hpp"
#include "promptrec/synthetic.hpp"
#include "promptrec/tasks.hpp"

namespace promptrec {

struct Dataset {
  InteractionLog log;
  ProfileData profiles;
  std::vector<std::vector<int>> full;       // every user's clicks
  std::vector<std::vector<int>> sequences;  // as used for tuning/eval (cold users k-shot cropped)
  DatasetSplits splits;

  int num_items() const noexcept { return static_cast<int>(log.items.size()); }
  FeatureFn features() const { return profile_feature_fn(profiles.profiles); }
  std::vector<std::vector<int>> warm_sequences() const;
  std::vector<TuneUser> tune_users() const;
};

Dataset make_dataset(InteractionLog log, ProfileData profiles, const Config& cfg);
// Reads `interactions` and `profiles` from the config.
Dataset load_dataset(const Config& cfg);
// In-memory synthetic dataset (same content as gen-data would write).
Dataset synthetic_dataset(const SyntheticData& data, const Config& cfg);

SyntheticConfig synthetic_config(const Config& cfg);
EncoderConfig encoder_config(const Config& cfg, std::size_t num_items);
PretrainConfig pretrain_config(const Config& cfg);
TuneConfig tune_config(const Config& cfg);
PromptConfig prompt_config(const Config& cfg);

ModelState run_pretrain(const Dataset& ds, const Config& cfg, PretrainCurves* curves = nullptr);

// From a pre-trained checkpoint, builds the model named by `kind` and tunes
// it; an already tuned checkpoint keeps training as it is.
ModelState run_tune(const Dataset& ds, const ModelState& start, const Config& cfg, TuneCurves* curves = nullptr);

std::vector<EvalCase> eval_cases(const Dataset& ds, const Config& cfg, EvalSplit split);
MetricsReport run_eval(const Dataset& ds, const ModelState& state, const Config& cfg, EvalSplit split);

struct CrossDomainResult {
  MetricsReport prompted;     // source vectors through the prompt generator
  MetricsReport side_info;    // source vectors through the profile learner only
  MetricsReport target_only;  // fresh model trained on the target domain alone
  std::size_t fallbacks = 0;
  ModelState prompted_state;
  TuneCurves curves;
};

// Target users are split train/test with split_ratio; evaluation uses the
// configured split over target test users.
CrossDomainResult run_cross_domain(const ModelState& source, const InteractionLog& source_log,
                                   const InteractionLog& target_log, const Config& cfg);

struct ProfileResult {
  ClassificationReport test;
  std::vector<double> curve;
  ModelState state;
};

ProfileResult run_profile(const Dataset& ds, const ModelState& pretrained, const Config& cfg);

}  // namespace promptrec
