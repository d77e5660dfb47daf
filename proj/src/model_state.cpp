#include "promptrec/model_state.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "promptrec/errors.hpp"

namespace promptrec {

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Backbone: return "backbone";
    case ParamGroup::PromptGenerator: return "prompt_generator";
    case ParamGroup::ProfileLearner: return "profile_learner";
    case ParamGroup::Head: return "head";
  }
  return "unknown";
}

void EncoderConfig::validate() const {
  if (num_layers == 0) throw ConfigError("num_layers must be positive");
  if (model_dim < 2) throw ConfigError("model_dim must be at least 2");
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw ConfigError("num_heads (" + std::to_string(num_heads) + ") must divide model_dim (" +
                      std::to_string(model_dim) + ")");
  }
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
  if (ffn_hidden == 0) throw ConfigError("ffn_hidden must be positive");
  if (num_items == 0) throw ConfigError("num_items must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

Tensor& ModelState::add(const std::string& name, ParamGroup group, Tensor value) {
  if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_[name] = params_.size();
  params_.push_back({name, group, std::move(value)});
  return params_.back().value;
}

bool ModelState::has(const std::string& name) const { return index_.count(name) != 0; }

Tensor& ModelState::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw CheckpointError("missing parameter '" + name + "'");
  return params_[it->second].value;
}

const Tensor& ModelState::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw CheckpointError("missing parameter '" + name + "'");
  return params_[it->second].value;
}

void ModelState::remove(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) return;
  params_.erase(params_.begin() + static_cast<std::ptrdiff_t>(it->second));
  index_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
}

std::vector<Tensor> ModelState::tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::vector<Tensor> ModelState::tensors(ParamGroup group) const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (p.group == group) out.push_back(p.value);
  }
  return out;
}

std::vector<Tensor> ModelState::trainable() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (p.value.requires_grad()) out.push_back(p.value);
  }
  return out;
}

bool ModelState::has_group(ParamGroup group) const {
  for (const auto& p : params_) {
    if (p.group == group) return true;
  }
  return false;
}

std::size_t ModelState::count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.group == group) n += p.value.numel();
  }
  return n;
}

std::size_t ModelState::total_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::size_t ModelState::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.value.requires_grad()) n += p.value.numel();
  }
  return n;
}

void ModelState::set_trainable(ParamGroup group, bool flag) {
  for (auto& p : params_) {
    if (p.group == group) p.value.set_requires_grad(flag);
  }
}

void ModelState::set_all_trainable(bool flag) {
  for (auto& p : params_) p.value.set_requires_grad(flag);
}

void ModelState::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

std::string ModelState::meta_or(const std::string& key, const std::string& fallback) const {
  auto it = meta_.find(key);
  return it == meta_.end() ? fallback : it->second;
}

ModelState ModelState::clone() const {
  ModelState copy(encoder_);
  copy.meta_ = meta_;
  for (const auto& p : params_) copy.add(p.name, p.group, p.value.clone());
  return copy;
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& state) {
  Writer w;
  w.raw("PRCK", 4);
  w.u8(kCheckpointVersion);
  const auto& e = state.encoder();
  w.u32(e.num_layers);
  w.u32(e.model_dim);
  w.u32(e.num_heads);
  w.u32(e.max_seq_len);
  w.u32(e.ffn_hidden);
  w.u32(e.num_items);
  w.u32(0);
  w.f64(e.dropout);
  w.u32(static_cast<std::uint32_t>(state.meta().size()));
  for (const auto& [k, v] : state.meta()) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(state.params().size()));
  for (const auto& p : state.params()) {
    w.str(p.name);
    w.u8(static_cast<std::uint8_t>(p.group));
    w.u8(p.value.requires_grad() ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto ext : p.value.shape()) w.u32(static_cast<std::uint32_t>(ext));
    for (double v : p.value.data()) w.f64(v);
  }
  return w.take();
}

ModelState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 5 || std::memcmp(bytes.data(), "PRCK", 4) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  for (int i = 0; i < 4; ++i) r.u8();
  const auto version = r.u8();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  EncoderConfig e;
  e.num_layers = r.u32();
  e.model_dim = r.u32();
  e.num_heads = r.u32();
  e.max_seq_len = r.u32();
  e.ffn_hidden = r.u32();
  e.num_items = r.u32();
  r.u32();
  e.dropout = r.f64();
  ModelState state(e);
  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    state.meta()[k] = r.str();
  }
  const auto n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str();
    const auto group = r.u8();
    if (group > 3) throw CheckpointError("tensor '" + name + "' has unknown group " + std::to_string(group));
    const bool trainable = r.u8() != 0;
    const auto rank = r.u32();
    if (rank == 0 || rank > 4) throw CheckpointError("tensor '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& ext : shape) ext = r.u32();
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = r.f64();
    state.add(name, static_cast<ParamGroup>(group), Tensor::from(shape, std::move(values), trainable));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return state;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::vector<std::uint8_t> group_bytes(const ModelState& state, ParamGroup group) {
  Writer w;
  for (const auto& p : state.params()) {
    if (p.group != group) continue;
    for (double v : p.value.data()) w.f64(v);
  }
  return w.take();
}

}  // namespace promptrec
