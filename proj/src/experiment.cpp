#include "promptrec/experiment.hpp"

#include <algorithm>
#include <sstream>

#include "promptrec/errors.hpp"
#include "promptrec/log.hpp"

namespace promptrec {

std::vector<std::vector<int>> Dataset::warm_sequences() const {
  std::vector<std::vector<int>> out;
  out.reserve(splits.warm.size());
  for (int u : splits.warm) out.push_back(full[static_cast<std::size_t>(u)]);
  return out;
}

std::vector<TuneUser> Dataset::tune_users() const {
  std::vector<TuneUser> out;
  out.reserve(splits.cold_train.size());
  for (int u : splits.cold_train) out.push_back({static_cast<std::size_t>(u), sequences[static_cast<std::size_t>(u)]});
  return out;
}

Dataset make_dataset(InteractionLog log, ProfileData profiles, const Config& cfg) {
  Dataset ds;
  ds.log = std::move(log);
  ds.profiles = std::move(profiles);
  ds.full = ds.log.sequences();
  ds.splits = make_splits(ds.full, cfg.get_size("cold_threshold"), cfg.get_double("split_ratio"), cfg.get_u64("seed"));
  ds.sequences = ds.full;
  if (const auto k = cfg.get_size("kshot"); k > 0) {
    for (const auto* group : {&ds.splits.cold_train, &ds.splits.cold_test}) {
      for (int u : *group) {
        auto& s = ds.sequences[static_cast<std::size_t>(u)];
        if (s.size() > k) s.resize(k);
      }
    }
  }
  return ds;
}

Dataset load_dataset(const Config& cfg) {
  if (cfg.get("interactions").empty()) throw ConfigError("set 'interactions' to an interaction file");
  auto log = load_interactions(cfg.get("interactions"));
  ProfileData profiles;
  if (!cfg.get("profiles").empty()) {
    profiles = load_profiles(cfg.get("profiles"), log.users);
  } else {
    profiles.profiles.resize(log.users.size());
  }
  return make_dataset(std::move(log), std::move(profiles), cfg);
}

Dataset synthetic_dataset(const SyntheticData& data, const Config& cfg) {
  std::stringstream ps;
  write_profiles(data, ps);
  auto log = data.log();
  auto profiles = parse_profiles(ps, log.users);
  return make_dataset(std::move(log), std::move(profiles), cfg);
}

SyntheticConfig synthetic_config(const Config& cfg) {
  SyntheticConfig s;
  s.warm_users = cfg.get_size("gen_warm_users");
  s.cold_users = cfg.get_size("gen_cold_users");
  s.num_items = cfg.get_size("gen_num_items");
  s.num_clusters = cfg.get_size("gen_num_clusters");
  s.vocab_sizes = cfg.get_sizes("gen_vocab_sizes");
  s.warm_min_len = cfg.get_size("gen_warm_min_len");
  s.warm_max_len = cfg.get_size("gen_warm_max_len");
  s.cold_min_len = cfg.get_size("gen_cold_min_len");
  s.cold_max_len = cfg.get_size("gen_cold_max_len");
  s.concentration = cfg.get_double("gen_concentration");
  s.profile_strength = cfg.get_double("gen_profile_strength");
  s.missing_rate = cfg.get_double("gen_missing_rate");
  s.target_items = cfg.get_size("gen_target_items");
  s.target_min_len = cfg.get_size("gen_target_min_len");
  s.target_max_len = cfg.get_size("gen_target_max_len");
  s.seed = cfg.get_u64("seed");
  s.validate();
  return s;
}

namespace {

std::uint32_t narrow(std::size_t v, const char* key) {
  if (v > 0xffffffffULL) throw ConfigError(std::string(key) + " is too large");
  return static_cast<std::uint32_t>(v);
}

std::uint64_t model_seed(const Config& cfg) { return cfg.get_u64("seed") * 0x100000001b3ULL + 101; }

}  // namespace

EncoderConfig encoder_config(const Config& cfg, std::size_t num_items) {
  EncoderConfig e;
  e.num_layers = narrow(cfg.get_size("num_layers"), "num_layers");
  e.model_dim = narrow(cfg.get_size("model_dim"), "model_dim");
  e.num_heads = narrow(cfg.get_size("num_heads"), "num_heads");
  e.max_seq_len = narrow(cfg.get_size("max_seq_len"), "max_seq_len");
  const auto ffn = cfg.get_size("ffn_hidden");
  e.ffn_hidden = narrow(ffn ? ffn : 4 * cfg.get_size("model_dim"), "ffn_hidden");
  e.num_items = narrow(num_items, "num_items");
  e.dropout = cfg.get_double("dropout");
  e.validate();
  return e;
}

PretrainConfig pretrain_config(const Config& cfg) {
  PretrainConfig p;
  p.epochs = cfg.get_size("pretrain_epochs");
  p.batch_size = cfg.get_size("pretrain_batch_size");
  p.lr = cfg.get_double("pretrain_lr");
  p.negatives = cfg.get_size("pretrain_negatives");
  p.seed = cfg.get_u64("seed");
  p.holdout_fraction = cfg.get_double("pretrain_holdout");
  p.patience = cfg.get_size("pretrain_patience");
  p.cl_flavor = cfg.get_bool("pretrain_cl");
  p.cl_lambda = cfg.get_double("pretrain_cl_lambda");
  p.cl_tau = cfg.get_double("tau");
  p.mask_ratio = cfg.get_double("mask_ratio");
  p.crop_ratio = cfg.get_double("crop_ratio");
  p.reorder_ratio = cfg.get_double("reorder_ratio");
  p.validate();
  return p;
}

TuneConfig tune_config(const Config& cfg) {
  TuneConfig t;
  t.mode = parse_mode(cfg.get("mode"));
  t.epochs = cfg.get_size("epochs");
  t.batch_size = cfg.get_size("batch_size");
  t.lr = cfg.get_double("lr");
  t.negatives = cfg.get_size("negatives");
  t.seed = cfg.get_u64("seed");
  t.include_zero_shot = cfg.get_bool("include_zero_shot");
  t.last_only = cfg.get_bool("last_only");
  t.aug.gamma1 = cfg.get_double("gamma1");
  t.aug.gamma2 = cfg.get_double("gamma2");
  t.cl.tau = cfg.get_double("tau");
  t.cl.lambda = cfg.get_double("lambda");
  t.cl.enabled = cfg.get_bool("cl_enabled");
  t.validate();
  return t;
}

PromptConfig prompt_config(const Config& cfg) {
  PromptConfig p;
  p.prompt_len = cfg.get_size("prompt_len");
  p.attr_dim = cfg.get_size("attr_dim");
  p.ppg_hidden = cfg.get_size("ppg_hidden");
  p.raw_prompt = cfg.get_bool("raw_prompt");
  return p;
}

ModelState run_pretrain(const Dataset& ds, const Config& cfg, PretrainCurves* curves) {
  return pretrain(ds.warm_sequences(), encoder_config(cfg, ds.log.items.size()), pretrain_config(cfg), curves);
}

namespace {

ModelKind tuned_kind(const Config& cfg) {
  const auto& k = cfg.get("kind");
  if (k == "prompted") return ModelKind::Prompted;
  if (k == "finetune") return ModelKind::FineTune;
  throw ConfigError("kind must be prompted or finetune, got '" + k + "'");
}

void check_compatible(const ModelState& state, const Dataset& ds) {
  if (state.encoder().num_items != ds.log.items.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(state.encoder().num_items) +
                          " items but the interaction file has " + std::to_string(ds.log.items.size()));
  }
}

}  // namespace

ModelState run_tune(const Dataset& ds, const ModelState& start, const Config& cfg, TuneCurves* curves) {
  check_compatible(start, ds);
  ModelState state = start.meta_or("kind", "pretrained") == "pretrained"
                         ? build_model(start, ds.profiles.schema, prompt_config(cfg), tuned_kind(cfg), model_seed(cfg))
                         : start.clone();
  TuneConfig tc = tune_config(cfg);
  if (parse_kind(state.meta_or("kind", "")) != ModelKind::Prompted) tc.cl.enabled = false;
  tune(state, ds.tune_users(), ds.features(), tc, curves);
  return state;
}

std::vector<EvalCase> eval_cases(const Dataset& ds, const Config& cfg, EvalSplit split) {
  return build_eval_cases(ds.sequences, ds.splits.cold_test, split, ds.num_items(), cfg.get_u64("seed"), &ds.full);
}

MetricsReport run_eval(const Dataset& ds, const ModelState& state, const Config& cfg, EvalSplit split) {
  check_compatible(state, ds);
  return evaluate_model(state, ds.features(), eval_cases(ds, cfg, split), cfg.get_size("threads"));
}

CrossDomainResult run_cross_domain(const ModelState& source, const InteractionLog& source_log,
                                   const InteractionLog& target_log, const Config& cfg) {
  check_disjoint_items(source_log.items, target_log.items);
  if (source.encoder().num_items != source_log.items.size()) {
    throw CheckpointError("source checkpoint does not match the source interaction file");
  }
  const auto seed = cfg.get_u64("seed");
  const auto target = target_log.sequences();
  std::vector<int> users;
  for (std::size_t u = 0; u < target.size(); ++u) {
    if (!target[u].empty()) users.push_back(static_cast<int>(u));
  }
  const auto split = split_cold_train_test(users, cfg.get_double("split_ratio"), seed);
  const auto num_items = target_log.items.size();
  const auto cases = build_eval_cases(target, split.test, parse_split(cfg.get("split")),
                                      static_cast<int>(num_items), seed);
  std::vector<TuneUser> train;
  for (int u : split.train) train.push_back({static_cast<std::size_t>(u), target[static_cast<std::size_t>(u)]});

  CrossDomainResult r;
  const auto emb = source_embeddings(source, source_log, target_log.users);
  r.fallbacks = emb.fallbacks;
  const auto features = source_feature_fn(emb);
  const auto threads = cfg.get_size("threads");
  TuneConfig tc = tune_config(cfg);

  r.prompted_state = make_cross_domain_model(source, num_items, ModelKind::Prompted, prompt_config(cfg),
                                             model_seed(cfg));
  tune_cross_domain(r.prompted_state, train, emb, tc, &r.curves);
  r.prompted = evaluate_model(r.prompted_state, features, cases, threads);

  ModelState side = make_cross_domain_model(source, num_items, ModelKind::FineTune, prompt_config(cfg),
                                            model_seed(cfg));
  TuneConfig side_cfg = tc;
  side_cfg.cl.enabled = false;
  tune_cross_domain(side, train, emb, side_cfg, nullptr);
  r.side_info = evaluate_model(side, features, cases, threads);

  std::vector<std::vector<int>> train_seqs;
  for (const auto& u : train) train_seqs.push_back(u.clicks);
  EncoderConfig ecfg = source.encoder();
  ecfg.num_items = static_cast<std::uint32_t>(num_items);
  const ModelState alone = pretrain(train_seqs, ecfg, pretrain_config(cfg));
  r.target_only = evaluate_model(alone, features, cases, threads);
  return r;
}

ProfileResult run_profile(const Dataset& ds, const ModelState& pretrained, const Config& cfg) {
  check_compatible(pretrained, ds);
  const auto attr = cfg.get_size("profile_attr");
  if (attr >= ds.profiles.schema.num_attrs()) {
    throw ConfigError("profile_attr " + std::to_string(attr) + " outside " +
                      std::to_string(ds.profiles.schema.num_attrs()) + " attributes");
  }
  int positive = 1;
  if (const auto& raw = cfg.get("profile_positive"); !raw.empty()) {
    const auto& vocab = ds.profiles.vocab[attr];
    const auto it = std::find(vocab.begin(), vocab.end(), raw);
    if (it == vocab.end()) throw ConfigError("profile_positive '" + raw + "' never occurs for that attribute");
    positive = static_cast<int>(it - vocab.begin());
  }
  ProfileSchema schema = ds.profiles.schema;
  schema.input_attrs.clear();
  ProfileResult r;
  r.state = build_profile_model(pretrained, schema, attr, prompt_config(cfg), model_seed(cfg));
  const auto train =
      profile_examples(ds.sequences, ds.profiles.profiles, ds.splits.cold_train, attr, positive);
  const auto test = profile_examples(ds.sequences, ds.profiles.profiles, ds.splits.cold_test, attr, positive);
  if (test.empty()) throw DataError("no test users with a known value of the predicted attribute");
  TuneConfig tc = tune_config(cfg);
  r.curve = train_profile_head(r.state, train, ds.features(), tc);
  r.test = evaluate_profile(r.state, ds.features(), test);
  return r;
}

}  // namespace promptrec
