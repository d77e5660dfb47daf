#include "promptrec/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "promptrec/errors.hpp"

namespace promptrec {

int IdMap::intern(const std::string& name) {
  auto [it, inserted] = index_.try_emplace(name, static_cast<int>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

int IdMap::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

const std::string& IdMap::name(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= names_.size()) throw IndexError("IdMap::name", index);
  return names_[static_cast<std::size_t>(index)];
}

std::vector<std::vector<int>> InteractionLog::sequences() const {
  std::vector<std::vector<int>> seqs(users.size());
  for (const auto& r : records) seqs[static_cast<std::size_t>(r.user)].push_back(r.item);
  return seqs;
}

namespace {

std::vector<std::string> split_tabs(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

InteractionLog parse_interactions(std::istream& in) {
  InteractionLog log;
  std::set<std::tuple<int, int, std::int64_t>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto f = split_tabs(line);
    if (f.size() != 3) {
      throw ParseError("expected 3 tab-separated fields, found " + std::to_string(f.size()), lineno);
    }
    if (f[0].empty() || f[1].empty()) throw ParseError("empty user or item id", lineno);
    std::int64_t ts = 0;
    const auto* end = f[2].data() + f[2].size();
    auto [ptr, ec] = std::from_chars(f[2].data(), end, ts);
    if (ec != std::errc() || ptr != end || f[2].empty()) {
      throw ParseError("timestamp '" + f[2] + "' is not an integer", lineno);
    }
    const int u = log.users.intern(f[0]);
    const int i = log.items.intern(f[1]);
    if (!seen.emplace(u, i, ts).second) continue;
    log.records.push_back({u, i, ts, lineno});
  }
  std::sort(log.records.begin(), log.records.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user, a.ts, a.line) < std::tie(b.user, b.ts, b.line);
  });
  return log;
}

InteractionLog load_interactions(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_interactions(in);
}

void write_interactions(const InteractionLog& log, std::ostream& out) {
  for (const auto& r : log.records) {
    out << log.users.name(r.user) << '\t' << log.items.name(r.item) << '\t' << r.ts << '\n';
  }
}

ProfileData parse_profiles(std::istream& in, const IdMap& users) {
  ProfileData data;
  std::vector<IdMap> vocab;
  std::vector<std::vector<std::string>> rows(users.size());
  std::vector<bool> has_row(users.size(), false);
  std::size_t m = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto f = split_tabs(line);
    if (f.size() < 2) throw ParseError("profile row needs a user id and at least one attribute", lineno);
    if (m == 0) {
      m = f.size() - 1;
      vocab.resize(m);
    } else if (f.size() - 1 != m) {
      throw ParseError("expected " + std::to_string(m) + " attributes, found " + std::to_string(f.size() - 1),
                       lineno);
    }
    for (std::size_t a = 0; a < m; ++a) {
      if (f[a + 1].empty()) throw ParseError("empty attribute value (use ? for missing)", lineno);
      if (f[a + 1] != "?") vocab[a].intern(f[a + 1]);
    }
    const int u = users.find(f[0]);
    if (u < 0) {
      ++data.unmatched_users;
      continue;
    }
    if (has_row[static_cast<std::size_t>(u)]) throw ParseError("duplicate profile row for user " + f[0], lineno);
    has_row[static_cast<std::size_t>(u)] = true;
    rows[static_cast<std::size_t>(u)] = std::vector<std::string>(f.begin() + 1, f.end());
  }
  for (std::size_t a = 0; a < m; ++a) {
    data.schema.vocab_sizes.push_back(vocab[a].size());
    data.vocab.push_back(vocab[a].names());
  }
  data.profiles.resize(users.size());
  for (std::size_t u = 0; u < users.size(); ++u) {
    auto& attrs = data.profiles[u].attrs;
    attrs.assign(m, kMissingAttr);
    if (!has_row[u]) continue;
    for (std::size_t a = 0; a < m; ++a) {
      if (rows[u][a] != "?") attrs[a] = vocab[a].find(rows[u][a]);
    }
  }
  return data;
}

ProfileData load_profiles(const std::filesystem::path& path, const IdMap& users) {
  auto in = open_input(path);
  return parse_profiles(in, users);
}

WarmColdSplit split_warm_cold(const std::vector<std::vector<int>>& sequences, std::size_t threshold) {
  WarmColdSplit s;
  for (std::size_t u = 0; u < sequences.size(); ++u) {
    if (sequences[u].empty()) continue;
    (sequences[u].size() < threshold ? s.cold : s.warm).push_back(static_cast<int>(u));
  }
  return s;
}

TrainTestSplit split_cold_train_test(const std::vector<int>& cold, double ratio, std::uint64_t seed) {
  if (cold.size() < 2) throw DataError("need at least 2 cold users to split, found " + std::to_string(cold.size()));
  if (ratio < 0.0 || ratio > 1.0) throw ConfigError("split ratio must lie in [0, 1]");
  std::vector<int> order = cold;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(cold.size())));
  TrainTestSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

DatasetSplits make_splits(const std::vector<std::vector<int>>& sequences, std::size_t threshold, double ratio,
                          std::uint64_t seed) {
  if (threshold == 0) throw ConfigError("cold threshold must be positive");
  auto wc = split_warm_cold(sequences, threshold);
  auto tt = split_cold_train_test(wc.cold, ratio, seed);
  DatasetSplits s;
  s.warm = std::move(wc.warm);
  s.cold_train = std::move(tt.train);
  s.cold_test = std::move(tt.test);
  s.threshold = threshold;
  s.ratio = ratio;
  s.seed = seed;
  return s;
}

void write_split_manifest(const DatasetSplits& splits, const IdMap& users, std::ostream& out) {
  out << "# seed: " << splits.seed << "\n# threshold: " << splits.threshold << "\n# ratio: " << splits.ratio
      << "\n";
  std::vector<std::pair<int, const char*>> rows;
  for (int u : splits.warm) rows.emplace_back(u, "warm");
  for (int u : splits.cold_train) rows.emplace_back(u, "cold_train");
  for (int u : splits.cold_test) rows.emplace_back(u, "cold_test");
  std::sort(rows.begin(), rows.end());
  for (const auto& [u, tag] : rows) out << users.name(u) << '\t' << tag << '\n';
}

ColdStreams extract_zero_shot(const std::vector<std::vector<int>>& sequences, const std::vector<int>& users) {
  ColdStreams s;
  for (int u : users) {
    const auto& seq = sequences.at(static_cast<std::size_t>(u));
    if (seq.empty()) throw DataError("test user without clicks");
    s.zero_shot.push_back({u, seq.front()});
    for (std::size_t t = 1; t < seq.size(); ++t) {
      s.few_shot.push_back({u, std::vector<int>(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(t)), seq[t]});
    }
  }
  return s;
}

std::vector<std::vector<int>> crop_for_kshot(const std::vector<std::vector<int>>& sequences, std::size_t k) {
  if (k == 0) throw ConfigError("k must be at least 1");
  std::vector<std::vector<int>> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) {
    out.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(std::min(k, s.size())));
  }
  return out;
}

InteractionLog crop_for_kshot(const InteractionLog& log, std::size_t k) {
  if (k == 0) throw ConfigError("k must be at least 1");
  InteractionLog out;
  out.users = log.users;
  out.items = log.items;
  std::vector<std::size_t> kept(log.users.size(), 0);
  for (const auto& r : log.records) {
    if (kept[static_cast<std::size_t>(r.user)]++ < k) out.records.push_back(r);
  }
  return out;
}

}  // namespace promptrec
