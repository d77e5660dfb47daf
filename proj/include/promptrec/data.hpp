#pragma once

// Interaction logs, profiles, warm/cold and train/test splits, and the
// evaluation streams derived from them.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptrec/prompt.hpp"

namespace promptrec {

// Opaque string ids to dense indices in order of first appearance.
class IdMap {
 public:
  int intern(const std::string& name);
  int find(const std::string& name) const;  // -1 when absent
  const std::string& name(int index) const;
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> names_;
};

struct Interaction {
  int user = 0;
  int item = 0;
  std::int64_t ts = 0;
  std::size_t line = 0;  // 1-based source line, the tie breaker for equal timestamps
};

struct InteractionLog {
  IdMap users;
  IdMap items;
  std::vector<Interaction> records;  // sorted by (user, ts, line)

  // Item ids per user index in click order.
  std::vector<std::vector<int>> sequences() const;
};

// `user<TAB>item<TAB>timestamp` per line. Blank lines are skipped; identical
// (user, item, timestamp) rows are kept once.
InteractionLog parse_interactions(std::istream& in);
InteractionLog load_interactions(const std::filesystem::path& path);
void write_interactions(const InteractionLog& log, std::ostream& out);

struct ProfileData {
  ProfileSchema schema;
  std::vector<std::vector<std::string>> vocab;  // per attribute, raw value per index
  std::vector<UserProfile> profiles;            // indexed like the log's users
  std::size_t unmatched_users = 0;              // profile rows for users absent from the log
};

// `user<TAB>attr_1<TAB>...<TAB>attr_m`, `?` for missing. Users with no row get
// all-missing profiles.
ProfileData parse_profiles(std::istream& in, const IdMap& users);
ProfileData load_profiles(const std::filesystem::path& path, const IdMap& users);

// Users with fewer than `threshold` clicks are cold.
struct WarmColdSplit {
  std::vector<int> warm;
  std::vector<int> cold;
};
WarmColdSplit split_warm_cold(const std::vector<std::vector<int>>& sequences, std::size_t threshold = 10);

struct TrainTestSplit {
  std::vector<int> train;
  std::vector<int> test;
};
// floor(ratio k) users to train after a seeded shuffle. DataError below 2 users.
TrainTestSplit split_cold_train_test(const std::vector<int>& cold, double ratio, std::uint64_t seed);

struct DatasetSplits {
  std::vector<int> warm, cold_train, cold_test;
  std::size_t threshold = 10;
  double ratio = 0.8;
  std::uint64_t seed = 0;
};
DatasetSplits make_splits(const std::vector<std::vector<int>>& sequences, std::size_t threshold, double ratio,
                          std::uint64_t seed);
void write_split_manifest(const DatasetSplits& splits, const IdMap& users, std::ostream& out);

struct ZeroShotPair {
  int user;
  int item;
};
struct FewShotCase {
  int user;
  std::vector<int> prefix;
  int target;
};
struct ColdStreams {
  std::vector<ZeroShotPair> zero_shot;
  std::vector<FewShotCase> few_shot;
};
// First click of every user is the zero-shot target; each later click is a
// few-shot target with the clicks before it as input.
ColdStreams extract_zero_shot(const std::vector<std::vector<int>>& sequences, const std::vector<int>& users);

// Keeps the first k clicks of every sequence.
std::vector<std::vector<int>> crop_for_kshot(const std::vector<std::vector<int>>& sequences, std::size_t k);
InteractionLog crop_for_kshot(const InteractionLog& log, std::size_t k);

}  // namespace promptrec
