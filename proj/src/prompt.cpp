#include "promptrec/prompt.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "promptrec/adam.hpp"
#include "promptrec/errors.hpp"
#include "promptrec/ops.hpp"
#include "promptrec/pretrain.hpp"

namespace promptrec {

std::vector<std::size_t> ProfileSchema::inputs() const {
  if (!input_attrs.empty()) return input_attrs;
  std::vector<std::size_t> all(vocab_sizes.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Pretrained: return "pretrained";
    case ModelKind::FineTune: return "finetune";
    case ModelKind::Prompted: return "prompted";
  }
  return "?";
}

ModelKind parse_kind(const std::string& s) {
  if (s == "pretrained") return ModelKind::Pretrained;
  if (s == "finetune") return ModelKind::FineTune;
  if (s == "prompted") return ModelKind::Prompted;
  throw CheckpointError("unknown model kind '" + s + "'");
}

const char* mode_name(TuningMode m) { return m == TuningMode::Light ? "light" : "full"; }

TuningMode parse_mode(const std::string& s) {
  if (s == "light") return TuningMode::Light;
  if (s == "full") return TuningMode::Full;
  throw ConfigError("mode must be light or full, got '" + s + "'");
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoul(tok));
    } catch (const std::exception&) {
      throw CheckpointError("malformed size list '" + s + "' in checkpoint meta");
    }
  }
  return out;
}

std::size_t meta_size(const ModelState& st, const std::string& key, std::size_t fallback) {
  const auto v = st.meta_or(key, "");
  if (v.empty()) return fallback;
  try {
    return std::stoul(v);
  } catch (const std::exception&) {
    throw CheckpointError("malformed meta entry " + key + "=" + v);
  }
}

std::string attr_key(std::size_t i) { return "attr" + std::to_string(i) + ".emb"; }

}  // namespace

ProfileSchema schema_from_meta(const ModelState& state) {
  ProfileSchema s;
  s.vocab_sizes = split_sizes(state.meta_or("schema.vocab", ""));
  s.input_attrs = split_sizes(state.meta_or("schema.inputs", ""));
  return s;
}

PromptConfig prompt_config_from_meta(const ModelState& state) {
  PromptConfig c;
  c.prompt_len = meta_size(state, "prompt.len", 1);
  c.attr_dim = meta_size(state, "prompt.attr_dim", 0);
  c.ppg_hidden = meta_size(state, "prompt.ppg_hidden", 0);
  c.source_dim = meta_size(state, "prompt.source_dim", 0);
  c.raw_prompt = state.meta_or("prompt.raw", "0") == "1";
  return c;
}

ModelState build_model(const ModelState& pretrained, const ProfileSchema& schema, const PromptConfig& cfg,
                       ModelKind kind, std::uint64_t seed) {
  if (pretrained.meta_or("kind", "pretrained") != "pretrained") {
    throw CheckpointError("expected a pre-trained checkpoint, got kind '" + pretrained.meta_or("kind", "") + "'");
  }
  if (!pretrained.has_group(ParamGroup::Backbone)) throw CheckpointError("checkpoint has no backbone tensors");
  ModelState state = pretrained.clone();
  state.meta()["kind"] = kind_name(kind);
  if (kind == ModelKind::Pretrained) return state;

  const std::size_t d = state.encoder().model_dim;
  const std::size_t attr_dim = cfg.attr_dim ? cfg.attr_dim : d;
  const std::size_t hidden = cfg.ppg_hidden ? cfg.ppg_hidden : d;
  std::mt19937_64 rng(seed);

  std::size_t d1 = 0;
  if (cfg.source_dim == 0) {
    const auto inputs = schema.inputs();
    if (inputs.empty()) throw ConfigError("profile schema has no input attributes");
    for (auto i : inputs) {
      if (i >= schema.num_attrs()) throw ConfigError("input attribute " + std::to_string(i) + " outside the schema");
      if (schema.vocab_sizes[i] == 0) throw ConfigError("attribute " + std::to_string(i) + " has an empty vocabulary");
      state.add(attr_key(i), ParamGroup::ProfileLearner,
                init_uniform({schema.vocab_sizes[i] + 1, attr_dim}, attr_dim, rng));
    }
    d1 = inputs.size() * attr_dim;
  } else {
    d1 = cfg.source_dim;
    state.add("xd.default_source", ParamGroup::PromptGenerator, init_uniform({1, d1}, d1, rng));
  }

  if (kind == ModelKind::Prompted) {
    const std::size_t n = cfg.prompt_len;
    if (n == 0) throw ConfigError("prompt_len must be at least 1");
    if (n + 1 > state.encoder().max_seq_len) throw ConfigError("prompt_len leaves no room for behaviors");
    if (cfg.raw_prompt) {
      if (d1 != n * d) {
        throw ConfigError("raw prompts need a feature width of prompt_len * model_dim (" + std::to_string(n * d) +
                          "), got " + std::to_string(d1));
      }
    } else {
      state.add("ppg.w1", ParamGroup::PromptGenerator, init_uniform({d1, hidden}, d1, rng));
      state.add("ppg.b1", ParamGroup::PromptGenerator, Tensor::zeros({hidden}, true));
      state.add("ppg.w2", ParamGroup::PromptGenerator, init_uniform({hidden, n * d}, hidden, rng));
      state.add("ppg.b2", ParamGroup::PromptGenerator, Tensor::zeros({n * d}, true));
    }
  }
  state.add("profile.w1", ParamGroup::ProfileLearner, init_uniform({d1, d}, d1, rng));
  state.add("profile.b1", ParamGroup::ProfileLearner, Tensor::zeros({d}, true));
  state.add("profile.w2", ParamGroup::ProfileLearner, init_uniform({d, d}, d, rng));
  state.add("profile.b2", ParamGroup::ProfileLearner, Tensor::zeros({d}, true));

  auto& meta = state.meta();
  meta["prompt.len"] = std::to_string(cfg.prompt_len);
  meta["prompt.attr_dim"] = std::to_string(attr_dim);
  meta["prompt.ppg_hidden"] = std::to_string(hidden);
  meta["prompt.source_dim"] = std::to_string(cfg.source_dim);
  meta["prompt.raw"] = cfg.raw_prompt ? "1" : "0";
  meta["schema.vocab"] = join(schema.vocab_sizes);
  meta["schema.inputs"] = join(schema.inputs());
  meta["stage"] = "initialized";
  return state;
}

ModeReport apply_mode(ModelState& state, TuningMode mode) {
  const ModelKind kind = parse_kind(state.meta_or("kind", "pretrained"));
  if (!state.has_group(ParamGroup::Backbone)) throw CheckpointError("checkpoint has no backbone tensors");
  if (kind != ModelKind::Pretrained && !state.has_group(ParamGroup::ProfileLearner)) {
    throw CheckpointError("checkpoint has no profile learner tensors");
  }
  if (kind == ModelKind::Prompted && !prompt_config_from_meta(state).raw_prompt &&
      !state.has_group(ParamGroup::PromptGenerator)) {
    throw CheckpointError("checkpoint has no prompt generator tensors");
  }
  if (kind == ModelKind::Pretrained && mode == TuningMode::Light) {
    throw CheckpointError("light tuning needs prompt or profile parameters; this checkpoint has only a backbone");
  }
  state.set_all_trainable(true);
  if (mode == TuningMode::Light) state.set_trainable(ParamGroup::Backbone, false);
  state.meta()["mode"] = mode_name(mode);
  ModeReport r;
  r.trainable = state.trainable_count();
  r.total = state.total_count();
  r.fraction = r.total ? static_cast<double>(r.trainable) / static_cast<double>(r.total) : 0.0;
  return r;
}

Recommender::Recommender(const ModelState& state)
    : kind_(parse_kind(state.meta_or("kind", "pretrained"))), encoder_(state) {
  if (kind_ == ModelKind::Pretrained) return;
  schema_ = schema_from_meta(state);
  const PromptConfig pc = prompt_config_from_meta(state);
  prompt_len_ = pc.prompt_len;
  raw_prompt_ = pc.raw_prompt;
  if (pc.source_dim) {
    d1_ = pc.source_dim;
    default_source_ = state.at("xd.default_source");
  } else {
    for (auto i : schema_.inputs()) {
      attr_tables_.push_back(state.at(attr_key(i)));
      d1_ += attr_tables_.back().cols();
    }
  }
  if (kind_ == ModelKind::Prompted && !raw_prompt_) {
    ppg_w1_ = state.at("ppg.w1");
    ppg_b1_ = state.at("ppg.b1");
    ppg_w2_ = state.at("ppg.w2");
    ppg_b2_ = state.at("ppg.b2");
    if (ppg_w1_.rows() != d1_ || ppg_w2_.cols() != prompt_len_ * encoder_.config().model_dim) {
      throw CheckpointError("prompt generator shapes disagree with the recorded prompt settings");
    }
  }
  prof_w1_ = state.at("profile.w1");
  prof_b1_ = state.at("profile.b1");
  prof_w2_ = state.at("profile.w2");
  prof_b2_ = state.at("profile.b2");
  if (prof_w1_.rows() != d1_) throw CheckpointError("profile learner input width disagrees with the features");
}

Tensor Recommender::profile_features(const UserProfile& profile) const {
  if (attr_tables_.empty()) throw ContractError("this model takes source vectors, not attribute profiles");
  if (profile.attrs.size() != schema_.num_attrs()) {
    throw ContractError("profile has " + std::to_string(profile.attrs.size()) + " attributes, schema expects " +
                        std::to_string(schema_.num_attrs()));
  }
  const auto inputs = schema_.inputs();
  std::vector<Tensor> parts;
  parts.reserve(inputs.size());
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const std::size_t a = inputs[j];
    const int v = profile.attrs[a];
    const auto vocab = static_cast<int>(schema_.vocab_sizes[a]);
    if (v != kMissingAttr && (v < 0 || v >= vocab)) {
      throw IndexError("attribute " + std::to_string(a) + " value outside its vocabulary", v);
    }
    const int row = v == kMissingAttr ? vocab : v;
    parts.push_back(embedding_lookup(attr_tables_[j], std::span<const int>(&row, 1)));
  }
  return parts.size() == 1 ? parts.front() : concat_cols(parts);
}

Tensor Recommender::default_source() const {
  if (!default_source_.defined()) throw ContractError("this model has no source-vector fallback");
  return default_source_;
}

Tensor Recommender::generate_prompt(const Tensor& x) const {
  if (kind_ != ModelKind::Prompted) throw ContractError("generate_prompt on a model without prompts");
  if (x.numel() != d1_) {
    throw DimensionError("prompt generator expects " + std::to_string(d1_) + " features, got " +
                         shape_str(x.shape()));
  }
  const std::size_t d = encoder_.config().model_dim;
  if (raw_prompt_) return reshape(x, {prompt_len_, d});
  Tensor h = sigmoid(add_bias(matmul(reshape(x, {1, d1_}), ppg_w1_), ppg_b1_));
  return reshape(add_bias(matmul(h, ppg_w2_), ppg_b2_), {prompt_len_, d});
}

Tensor Recommender::profile_repr(const Tensor& x) const {
  if (kind_ == ModelKind::Pretrained) throw ContractError("profile_repr on a model without a profile learner");
  if (x.numel() != d1_) {
    throw DimensionError("profile learner expects " + std::to_string(d1_) + " features, got " + shape_str(x.shape()));
  }
  Tensor h = relu(add_bias(matmul(reshape(x, {1, d1_}), prof_w1_), prof_b1_));
  return add_bias(matmul(h, prof_w2_), prof_b2_);
}

Tensor Recommender::prefix_reprs(const Tensor& x, std::span<const int> items, std::mt19937_64* dropout_rng,
                                 Tensor* behavioral_last) const {
  const std::size_t k = items.size();
  const std::size_t d = encoder_.config().model_dim;
  if (kind_ == ModelKind::Prompted) {
    const std::size_t n = prompt_len_;
    Tensor h = encoder_.encode(encoder_.embed_sequence(generate_prompt(x), items), dropout_rng).last_layer();
    if (behavioral_last) *behavioral_last = slice_rows(h, n + k - 1, 1);
    return add_bias(slice_rows(h, n - 1, k + 1), profile_repr(x));
  }
  Tensor rows = Tensor::zeros({1, d});
  Tensor last = rows;
  if (k > 0) {
    Tensor h = encoder_.encode(encoder_.embed_sequence(std::nullopt, items), dropout_rng).last_layer();
    last = slice_rows(h, k - 1, 1);
    rows = concat_rows({rows, h});
  }
  if (behavioral_last) *behavioral_last = last;
  if (kind_ == ModelKind::Pretrained) return rows;
  return add_bias(rows, profile_repr(x));
}

Tensor Recommender::behavior_repr(const Tensor& prompt, std::span<const int> items) const {
  if (kind_ != ModelKind::Prompted) throw ContractError("behavior_repr needs a prompted model");
  return SequenceEncoder::user_representation(encoder_.encode(encoder_.embed_sequence(prompt, items)));
}

Tensor Recommender::user_repr(const Tensor& x, std::span<const int> items) const {
  const std::size_t capacity = encoder_.config().max_seq_len - prompt_len();
  const auto recent = truncate_recent(items, capacity);
  Tensor rows = prefix_reprs(x, recent);
  return slice_rows(rows, rows.rows() - 1, 1);
}

FeatureFn profile_feature_fn(const std::vector<UserProfile>& profiles) {
  return [profiles](const Recommender& rec, std::size_t user) {
    if (user < profiles.size()) return rec.profile_features(profiles[user]);
    UserProfile missing{std::vector<int>(rec.schema().num_attrs(), kMissingAttr)};
    return rec.profile_features(missing);
  };
}

void TuneConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (negatives == 0) throw ConfigError("negatives must be at least 1");
  aug.validate();
  cl.validate();
}

CLViews cl_step_views(const Recommender& rec, const std::vector<Tensor>& features,
                      const std::vector<std::vector<int>>& sequences, const AugmentationConfig& aug,
                      std::mt19937_64& rng, const std::vector<Tensor>* originals) {
  if (rec.kind() != ModelKind::Prompted) throw ContractError("contrastive views need a prompted model");
  if (features.size() != sequences.size() || features.empty()) {
    throw ContractError("cl_step_views: need one feature vector per sequence and at least one user");
  }
  if (originals && originals->size() != features.size()) throw ContractError("cl_step_views: originals size");
  std::vector<Tensor> orig, v1, v2;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Tensor& x = features[i];
    const auto& seq = sequences[i];
    orig.push_back(originals ? (*originals)[i] : rec.behavior_repr(rec.generate_prompt(x), seq));
    v1.push_back(rec.behavior_repr(rec.generate_prompt(prompt_aug(x, aug.gamma1, rng)), seq));
    v2.push_back(rec.behavior_repr(rec.generate_prompt(x), behavior_aug(seq, aug.gamma2, rng)));
  }
  auto stack = [](const std::vector<Tensor>& rows) { return rows.size() == 1 ? rows.front() : concat_rows(rows); };
  return {stack(orig), stack(v1), stack(v2)};
}

Tensor cl_loss(const CLViews& views, double tau) {
  return scale(add(info_nce(views.original, views.prompt_masked, tau),
                   info_nce(views.original, views.behavior_masked, tau)),
               0.5);
}

namespace {

struct PreparedUser {
  std::size_t user;
  std::vector<int> clicks;
  std::vector<int> clicked;  // sorted distinct
  std::size_t first_target;
  std::size_t examples;
};

}  // namespace

void tune(ModelState& state, const std::vector<TuneUser>& users, const FeatureFn& features, const TuneConfig& cfg,
          TuneCurves* curves) {
  cfg.validate();
  const ModelKind kind = parse_kind(state.meta_or("kind", "pretrained"));
  const bool use_cl = cfg.cl.enabled && cfg.cl.lambda > 0.0;
  if (use_cl && kind != ModelKind::Prompted) {
    throw ConfigError("the contrastive loss needs a prompted model; set lambda = 0 or cl_enabled = false");
  }
  TuneCurves local;
  TuneCurves& out = curves ? *curves : local;
  out = TuneCurves{};
  out.mode = apply_mode(state, cfg.mode);

  const auto& ecfg = state.encoder();
  const int num_items = static_cast<int>(ecfg.num_items);
  const std::size_t n = kind == ModelKind::Prompted ? prompt_config_from_meta(state).prompt_len : 0;
  const std::size_t keep = ecfg.max_seq_len - n + 1;

  std::vector<PreparedUser> prepared;
  for (const auto& u : users) {
    if (u.clicks.empty()) continue;
    PreparedUser p;
    p.user = u.user;
    p.clicked = u.clicks;
    std::sort(p.clicked.begin(), p.clicked.end());
    p.clicked.erase(std::unique(p.clicked.begin(), p.clicked.end()), p.clicked.end());
    for (int id : p.clicked) {
      if (id < 0 || id >= num_items) throw DataError("tuning click outside the item table");
    }
    const bool truncated = u.clicks.size() > keep;
    p.clicks = truncate_recent(u.clicks, keep);
    const std::size_t k = p.clicks.size();
    if (cfg.last_only) {
      p.first_target = k - 1;
      if (k == 1 && (!cfg.include_zero_shot || truncated)) continue;
    } else {
      p.first_target = (cfg.include_zero_shot && !truncated) ? 0 : 1;
    }
    if (p.first_target >= k) continue;
    p.examples = k - p.first_target;
    out.examples_per_epoch += p.examples;
    prepared.push_back(std::move(p));
  }
  if (prepared.empty()) throw DataError("tune: no tuning examples");

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 cl_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x165667b19e3779f9ULL);
  std::mt19937_64* drop = ecfg.dropout > 0.0 ? &dropout_rng : nullptr;

  const std::vector<Tensor> params = state.trainable();
  Adam adam(params, AdamConfig{cfg.lr});
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double lp_sum = 0.0, lcl_sum = 0.0, lall_sum = 0.0;
    std::size_t batches = 0, cursor = 0;
    while (cursor < order.size()) {
      Tape::current().clear();
      state.zero_grad();
      Recommender rec(state);
      std::vector<Tensor> margins, xs, originals;
      std::vector<std::vector<int>> inputs;
      std::size_t examples = 0;
      while (cursor < order.size() && examples < cfg.batch_size) {
        const auto& p = prepared[order[cursor++]];
        examples += p.examples;
        const std::size_t k = p.clicks.size();
        std::vector<int> input(p.clicks.begin(), p.clicks.end() - 1);
        Tensor x = rec.uses_features() ? features(rec, p.user) : Tensor();
        Tensor behavioral;
        Tensor rows = rec.prefix_reprs(x, input, drop, &behavioral);
        rows = slice_rows(rows, p.first_target, k - p.first_target);
        std::span<const int> targets(p.clicks.data() + p.first_target, k - p.first_target);
        Tensor pos = row_sums(mul(rows, rec.encoder().embed_items(targets)));
        for (std::size_t j = 0; j < cfg.negatives; ++j) {
          std::vector<int> negs(targets.size());
          for (auto& v : negs) v = sample_negative(p.clicked, num_items, rng);
          margins.push_back(sub(pos, row_sums(mul(rows, rec.encoder().embed_items(negs)))));
        }
        if (use_cl) {
          xs.push_back(x);
          originals.push_back(behavioral);
          inputs.push_back(std::move(input));
        }
      }
      Tensor m = margins.size() == 1 ? margins.front() : concat_rows(margins);
      Tensor lp = bpr_loss(m, Tensor::zeros(m.shape()));
      Tensor lall = lp;
      if (use_cl) {
        Tensor lcl = cl_loss(cl_step_views(rec, xs, inputs, cfg.aug, cl_rng, &originals), cfg.cl.tau);
        lall = add(lp, scale(lcl, cfg.cl.lambda));
        lcl_sum += lcl.item();
      }
      lp_sum += lp.item();
      lall_sum += lall.item();
      ++batches;
      backward(lall);
      adam.step(params);
    }
    out.lp.push_back(lp_sum / static_cast<double>(batches));
    out.lall.push_back(lall_sum / static_cast<double>(batches));
    if (use_cl) out.lcl.push_back(lcl_sum / static_cast<double>(batches));
  }
  Tape::current().clear();
  state.zero_grad();
  state.meta()["stage"] = "tuned";
}

}  // namespace promptrec
