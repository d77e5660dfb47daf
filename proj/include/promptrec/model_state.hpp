#pragma once

// Named parameter groups of a recommender plus the binary checkpoint codec.
//
// Checkpoint layout (all integers little-endian, floats IEEE-754 binary64):
//
//   magic            4 bytes  "PRCK"
//   format_version   u8       (currently 1)
//   encoder config   7 x u32  num_layers, model_dim, num_heads, max_seq_len,
//                             ffn_hidden, num_items, reserved(0)
//   dropout          f64
//   meta_count       u32
//   meta entries     meta_count x { u32 key_len, key bytes, u32 val_len, val bytes }
//   tensor_count     u32
//   tensors          tensor_count x {
//                      u32 name_len, name bytes,
//                      u8 group (0 backbone, 1 prompt generator, 2 profile learner, 3 head),
//                      u8 trainable,
//                      u32 rank, rank x u32 extents,
//                      numel x f64 values }
//
// Meta entries are sorted by key; tensors keep insertion order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "promptrec/tensor.hpp"

namespace promptrec {

inline constexpr std::uint8_t kCheckpointVersion = 1;

enum class ParamGroup : std::uint8_t { Backbone = 0, PromptGenerator = 1, ProfileLearner = 2, Head = 3 };

const char* group_name(ParamGroup g);

struct EncoderConfig {
  std::uint32_t num_layers = 2;
  std::uint32_t model_dim = 64;
  std::uint32_t num_heads = 2;
  std::uint32_t max_seq_len = 50;
  std::uint32_t ffn_hidden = 256;
  std::uint32_t num_items = 0;
  double dropout = 0.0;

  // Throws ConfigError on inconsistent values.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  ParamGroup group;
  Tensor value;
};

class ModelState {
 public:
  ModelState() = default;
  explicit ModelState(EncoderConfig encoder) : encoder_(encoder) {}

  const EncoderConfig& encoder() const noexcept { return encoder_; }

  Tensor& add(const std::string& name, ParamGroup group, Tensor value);
  bool has(const std::string& name) const;
  // CheckpointError when the name is missing.
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void remove(const std::string& name);

  const std::vector<NamedTensor>& params() const noexcept { return params_; }
  std::vector<Tensor> tensors() const;
  std::vector<Tensor> tensors(ParamGroup group) const;
  std::vector<Tensor> trainable() const;
  bool has_group(ParamGroup group) const;

  std::size_t count(ParamGroup group) const;
  std::size_t total_count() const;
  std::size_t trainable_count() const;

  void set_trainable(ParamGroup group, bool flag);
  void set_all_trainable(bool flag);
  void zero_grad();

  std::map<std::string, std::string>& meta() noexcept { return meta_; }
  const std::map<std::string, std::string>& meta() const noexcept { return meta_; }
  std::string meta_or(const std::string& key, const std::string& fallback) const;

  // Deep copy: no storage shared with this state.
  ModelState clone() const;

 private:
  EncoderConfig encoder_;
  std::vector<NamedTensor> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> meta_;
};

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& state);
ModelState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

// Raw bytes of every tensor in a group, concatenated in insertion order.
std::vector<std::uint8_t> group_bytes(const ModelState& state, ParamGroup group);

}  // namespace promptrec
