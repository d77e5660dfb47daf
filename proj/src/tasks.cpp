#include "promptrec/tasks.hpp"

#include <algorithm>
#include <numeric>

#include "promptrec/adam.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/log.hpp"
#include "promptrec/ops.hpp"

namespace promptrec {

Tensor source_user_embedding(const ModelState& source, std::span<const int> source_items) {
  if (source_items.empty()) throw ContractError("source_user_embedding needs at least one source click");
  NoGradGuard no_grad;
  SequenceEncoder enc(source);
  const auto recent = truncate_recent(source_items, enc.config().max_seq_len);
  return SequenceEncoder::user_representation(enc.encode(enc.embed_sequence(std::nullopt, recent))).detach();
}

SourceEmbeddings source_embeddings(const ModelState& source, const InteractionLog& source_log,
                                   const IdMap& target_users) {
  SourceEmbeddings out;
  out.dim = source.encoder().model_dim;
  const auto seqs = source_log.sequences();
  out.by_user.resize(target_users.size());
  for (std::size_t u = 0; u < target_users.size(); ++u) {
    const int s = source_log.users.find(target_users.name(static_cast<int>(u)));
    if (s < 0 || seqs[static_cast<std::size_t>(s)].empty()) {
      ++out.fallbacks;
      continue;
    }
    out.by_user[u] = source_user_embedding(source, seqs[static_cast<std::size_t>(s)]);
  }
  if (out.fallbacks) logger().info("{} target users have no source history; using the default vector", out.fallbacks);
  return out;
}

FeatureFn source_feature_fn(const SourceEmbeddings& embeddings) {
  return [by_user = embeddings.by_user](const Recommender& rec, std::size_t user) {
    if (user < by_user.size() && by_user[user].defined()) return by_user[user];
    return rec.default_source();
  };
}

void check_disjoint_items(const IdMap& source_items, const IdMap& target_items) {
  for (const auto& name : target_items.names()) {
    if (source_items.find(name) >= 0) {
      throw DataError("item '" + name + "' appears in both the source and the target domain");
    }
  }
}

ModelState make_cross_domain_model(const ModelState& source, std::size_t target_items, ModelKind kind,
                                   const PromptConfig& prompt, std::uint64_t seed) {
  if (target_items == 0) throw DataError("target domain has no items");
  EncoderConfig ecfg = source.encoder();
  ecfg.num_items = static_cast<std::uint32_t>(target_items);
  ModelState base(ecfg);
  std::mt19937_64 rng(seed ^ 0x51ed270b27a3c5e1ULL);
  base.add("item_emb", ParamGroup::Backbone, init_uniform({target_items, ecfg.model_dim}, ecfg.model_dim, rng));
  for (const auto& p : source.params()) {
    if (p.group != ParamGroup::Backbone || p.name == "item_emb") continue;
    Tensor copy = p.value.clone();
    copy.set_requires_grad(true);
    base.add(p.name, ParamGroup::Backbone, copy);
  }
  base.meta()["kind"] = kind_name(ModelKind::Pretrained);
  base.meta()["stage"] = "cross-domain";
  PromptConfig pc = prompt;
  pc.source_dim = source.encoder().model_dim;
  ModelState state = build_model(base, ProfileSchema{}, pc, kind, seed);
  state.meta()["task"] = "cross-domain";
  return state;
}

void tune_cross_domain(ModelState& state, const std::vector<TuneUser>& users, const SourceEmbeddings& embeddings,
                       const TuneConfig& cfg, TuneCurves* curves) {
  if (cfg.mode != TuningMode::Full) {
    throw ConfigError("cross-domain tuning runs in full mode only: the target item embeddings are new and must train");
  }
  tune(state, users, source_feature_fn(embeddings), cfg, curves);
}

namespace {

struct Head {
  Tensor w, b;

  explicit Head(const ModelState& state) : w(state.at("head.w")), b(state.at("head.b")) {
    const auto attr = state.meta_or("head.attr", "");
    if (attr.empty()) throw CheckpointError("model has no profile head");
    const auto inputs = schema_from_meta(state).inputs();
    if (std::find(inputs.begin(), inputs.end(), std::stoul(attr)) != inputs.end()) {
      throw ContractError("predicted attribute " + attr + " is also a prompt input");
    }
  }

  Tensor logit(const Tensor& u) const { return add_bias(matmul(u, w), b); }
};

}  // namespace

ModelState build_profile_model(const ModelState& pretrained, ProfileSchema schema, std::size_t target_attr,
                               const PromptConfig& prompt, std::uint64_t seed) {
  if (target_attr >= schema.num_attrs()) {
    throw ConfigError("attribute " + std::to_string(target_attr) + " outside a schema of " +
                      std::to_string(schema.num_attrs()));
  }
  if (std::find(schema.input_attrs.begin(), schema.input_attrs.end(), target_attr) != schema.input_attrs.end()) {
    throw ContractError("label leakage: attribute " + std::to_string(target_attr) +
                        " cannot be both the prediction target and a prompt input");
  }
  if (schema.input_attrs.empty()) {
    for (std::size_t a = 0; a < schema.num_attrs(); ++a) {
      if (a != target_attr) schema.input_attrs.push_back(a);
    }
  }
  ModelState state = build_model(pretrained, schema, prompt, ModelKind::Prompted, seed);
  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dULL);
  const std::size_t d = state.encoder().model_dim;
  state.add("head.w", ParamGroup::Head, init_uniform({d, 1}, d, rng));
  state.add("head.b", ParamGroup::Head, Tensor::zeros({1}, true));
  state.meta()["head.attr"] = std::to_string(target_attr);
  state.meta()["task"] = "profile";
  return state;
}

std::vector<ProfileExample> profile_examples(const std::vector<std::vector<int>>& sequences,
                                             const std::vector<UserProfile>& profiles, const std::vector<int>& users,
                                             std::size_t target_attr, int positive_value) {
  std::vector<ProfileExample> out;
  for (int u : users) {
    const auto idx = static_cast<std::size_t>(u);
    if (idx >= profiles.size() || target_attr >= profiles[idx].attrs.size()) continue;
    const int v = profiles[idx].attrs[target_attr];
    if (v == kMissingAttr || sequences.at(idx).empty()) continue;
    out.push_back({idx, sequences[idx], v == positive_value ? 1 : 0});
  }
  return out;
}

std::vector<double> predict_profile(const ModelState& state, const FeatureFn& features,
                                    const std::vector<ProfileExample>& examples) {
  NoGradGuard no_grad;
  Recommender rec(state);
  Head head(state);
  std::vector<double> probs;
  probs.reserve(examples.size());
  for (const auto& ex : examples) {
    Tensor u = rec.user_repr(features(rec, ex.user), ex.clicks);
    probs.push_back(sigmoid(head.logit(u)).item());
  }
  return probs;
}

std::vector<double> train_profile_head(ModelState& state, const std::vector<ProfileExample>& examples,
                                       const FeatureFn& features, const TuneConfig& cfg) {
  cfg.validate();
  if (examples.empty()) throw DataError("no labelled users for profile prediction");
  const auto positives = std::count_if(examples.begin(), examples.end(), [](const auto& e) { return e.label == 1; });
  if (positives == 0 || static_cast<std::size_t>(positives) == examples.size()) {
    logger().warn("profile training labels contain a single class");
  }
  apply_mode(state, cfg.mode);
  const std::vector<Tensor> params = state.trainable();
  Adam adam(params, AdamConfig{cfg.lr});
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> curve;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      Tape::current().clear();
      state.zero_grad();
      Recommender rec(state);
      Head head(state);
      std::vector<Tensor> logits;
      std::vector<double> y;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = examples[order[i]];
        logits.push_back(head.logit(rec.user_repr(features(rec, ex.user), ex.clicks)));
        y.push_back(static_cast<double>(ex.label));
      }
      Tensor z = logits.size() == 1 ? logits.front() : concat_rows(logits);
      std::vector<double> not_y(y.size());
      std::transform(y.begin(), y.end(), not_y.begin(), [](double v) { return 1.0 - v; });
      Tensor ll = add(mul(Tensor::from(z.shape(), y), log_sigmoid(z)),
                      mul(Tensor::from(z.shape(), not_y), log_sigmoid(scale(z, -1.0))));
      Tensor loss = scale(mean(ll), -1.0);
      total += loss.item() * static_cast<double>(end - begin);
      backward(loss);
      adam.step(params);
    }
    curve.push_back(total / static_cast<double>(examples.size()));
  }
  Tape::current().clear();
  state.zero_grad();
  state.meta()["stage"] = "tuned";
  return curve;
}

ClassificationReport evaluate_profile(const ModelState& state, const FeatureFn& features,
                                      const std::vector<ProfileExample>& examples) {
  const auto probs = predict_profile(state, features, examples);
  std::vector<int> preds, labels;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    preds.push_back(probs[i] > 0.5 ? 1 : 0);
    labels.push_back(examples[i].label);
  }
  return classification_metrics(preds, labels);
}

}  // namespace promptrec
