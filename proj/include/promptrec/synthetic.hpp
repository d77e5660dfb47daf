#pragma once

// Seeded generator of attribute-driven interaction logs.
//
// Items are split into contiguous clusters. Each user's attributes pick a
// primary cluster (first attribute chooses a half of the clusters, the middle
// attributes choose one cluster inside it), a walking direction (last
// attribute) and a secondary cluster. Clicks land in the primary cluster with
// probability `concentration`, otherwise in the secondary one, and walk each
// cluster as a ring one item at a time in the user's direction. With
// probability 1 - profile_strength a user ignores their attributes and gets
// random clusters and direction.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "promptrec/data.hpp"

namespace promptrec {

struct SyntheticConfig {
  std::size_t warm_users = 2000;
  std::size_t cold_users = 500;
  std::size_t num_items = 300;
  std::size_t num_clusters = 12;
  std::vector<std::size_t> vocab_sizes{2, 6, 2};
  std::size_t warm_min_len = 10, warm_max_len = 30;
  std::size_t cold_min_len = 1, cold_max_len = 9;
  double concentration = 0.85;
  double profile_strength = 0.9;
  double missing_rate = 0.0;
  // Second domain over the same users with its own items (0 disables).
  std::size_t target_items = 0;
  std::size_t target_min_len = 1, target_max_len = 9;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticUser {
  std::string id;
  std::vector<int> attrs;  // raw values, kMissingAttr where hidden
  int primary = 0;
  int secondary = 0;
  int direction = 1;
  std::vector<int> items;         // source-domain clicks in order
  std::vector<int> target_items;  // second-domain clicks in order
};

struct SyntheticData {
  SyntheticConfig config;
  std::vector<SyntheticUser> users;

  int cluster_of(int item) const;
  InteractionLog log() const;
  InteractionLog target_log() const;
};

std::string synthetic_item_name(int item);
std::string synthetic_target_item_name(int item);

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

void write_interactions(const SyntheticData& data, std::ostream& out);
void write_target_interactions(const SyntheticData& data, std::ostream& out);
void write_profiles(const SyntheticData& data, std::ostream& out);

// Mean over users (with at least one click) of the share of clicks in the
// user's most frequent cluster.
double cluster_purity(const SyntheticData& data);

}  // namespace promptrec
