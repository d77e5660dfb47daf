#include "promptrec/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "promptrec/errors.hpp"

namespace promptrec {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      // run
      {"seed", "1", "master seed for splits, initialization, sampling and evaluation negatives"},
      {"threads", "1", "worker threads for evaluation and sweeps"},
      {"out_dir", "out", "directory for outputs and manifests"},
      // inputs and outputs
      {"interactions", "", "interaction file (user<TAB>item<TAB>timestamp)"},
      {"profiles", "", "profile file (user<TAB>attr_1<TAB>...)"},
      {"target_interactions", "", "target-domain interaction file for cross-domain runs"},
      {"ckpt", "", "input checkpoint"},
      {"source_ckpt", "", "source-domain checkpoint for cross-domain runs"},
      {"out", "", "output checkpoint (default: <out_dir>/<command>.ckpt)"},
      // data protocol
      {"cold_threshold", "10", "users with fewer clicks are cold"},
      {"split_ratio", "0.8", "share of cold users used for tuning"},
      {"kshot", "0", "crop cold sequences to their first k clicks (0: off)"},
      {"split", "joint", "evaluation split: fewshot, zeroshot or joint"},
      // encoder
      {"model_dim", "64", "embedding and hidden size"},
      {"num_layers", "2", "transformer blocks"},
      {"num_heads", "2", "attention heads"},
      {"max_seq_len", "50", "longest encoded sequence including prompt tokens"},
      {"ffn_hidden", "0", "feed-forward width (0: 4 * model_dim)"},
      {"dropout", "0", "dropout rate"},
      // prompts
      {"prompt_len", "1", "prompt tokens per user"},
      {"attr_dim", "0", "attribute embedding size (0: model_dim)"},
      {"ppg_hidden", "0", "prompt generator hidden size (0: model_dim)"},
      {"raw_prompt", "false", "cross-domain: use the source vector as the prompt without the generator"},
      // pre-training
      {"pretrain_epochs", "20", "maximum pre-training epochs"},
      {"pretrain_batch_size", "256", "pre-training examples per step"},
      {"pretrain_lr", "1e-3", "pre-training learning rate"},
      {"pretrain_negatives", "1", "negatives per positive in pre-training"},
      {"pretrain_holdout", "0.05", "share of warm users held out for early stopping"},
      {"pretrain_patience", "3", "epochs without held-out improvement before stopping"},
      {"pretrain_cl", "false", "add the contrastive loss over crop/mask/reorder views"},
      {"pretrain_cl_lambda", "0.1", "weight of the pre-training contrastive loss"},
      {"mask_ratio", "0.2", "pre-training mask ratio"},
      {"crop_ratio", "0.2", "pre-training crop ratio"},
      {"reorder_ratio", "0.2", "pre-training reorder ratio"},
      // tuning
      {"kind", "prompted", "tuned model: prompted or finetune (profiles as side information only)"},
      {"mode", "light", "light (backbone frozen) or full"},
      {"epochs", "20", "tuning epochs"},
      {"batch_size", "256", "tuning examples per step"},
      {"lr", "1e-3", "tuning learning rate"},
      {"negatives", "1", "negatives per positive in tuning"},
      {"include_zero_shot", "true", "train on the empty-prefix example of each user"},
      {"last_only", "false", "train on the final click of each user only"},
      {"gamma1", "0.2", "prompt-feature mask ratio"},
      {"gamma2", "0.2", "behavior mask ratio"},
      {"tau", "0.5", "contrastive temperature"},
      {"lambda", "0.1", "contrastive loss weight"},
      {"cl_enabled", "true", "contrastive loss on or off"},
      // profile prediction
      {"profile_attr", "0", "attribute to predict"},
      {"profile_positive", "", "raw value counted as the positive class (default: second value seen)"},
      // sweeps
      {"sweep_grid", "", "grid axes as key=v1,v2 separated by ';' (--grid appends one axis)"},
      // synthetic data
      {"gen_warm_users", "2000", "synthetic warm users"},
      {"gen_cold_users", "500", "synthetic cold users"},
      {"gen_num_items", "300", "synthetic items"},
      {"gen_num_clusters", "12", "synthetic item clusters"},
      {"gen_vocab_sizes", "2,6,2", "synthetic attribute vocabularies"},
      {"gen_warm_min_len", "10", "shortest warm sequence"},
      {"gen_warm_max_len", "30", "longest warm sequence"},
      {"gen_cold_min_len", "1", "shortest cold sequence"},
      {"gen_cold_max_len", "9", "longest cold sequence"},
      {"gen_concentration", "0.85", "probability a click lands in the primary cluster"},
      {"gen_profile_strength", "0.9", "probability a user's clusters follow their attributes"},
      {"gen_missing_rate", "0", "probability an attribute is written as missing"},
      {"gen_target_items", "0", "items of a second domain over the same users (0: none)"},
      {"gen_target_min_len", "1", "shortest second-domain sequence"},
      {"gen_target_max_len", "9", "longest second-domain sequence"},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config::Config() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::parse(std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (!has(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
    set(key, trim(line.substr(eq + 1)));
  }
}

void Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  parse(in, path.string());
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const auto& v = get(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t Config::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool Config::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  std::stringstream ss(get(key));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
      throw ConfigError("config key '" + key + "' expects a comma-separated list of integers");
    }
    out.push_back(v);
  }
  return out;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace promptrec
