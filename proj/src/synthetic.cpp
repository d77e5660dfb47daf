#include "promptrec/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>

#include "promptrec/errors.hpp"

namespace promptrec {

void SyntheticConfig::validate() const {
  if (vocab_sizes.size() < 3) throw ConfigError("synthetic data needs at least 3 attributes");
  for (auto v : vocab_sizes) {
    if (v < 2) throw ConfigError("every synthetic attribute needs at least 2 values");
  }
  if (num_clusters < 2 || num_clusters % 2) throw ConfigError("num_clusters must be even and at least 2");
  if (num_items < 2 * num_clusters) throw ConfigError("num_items must be at least twice num_clusters");
  if (target_items && target_items < 2 * num_clusters) {
    throw ConfigError("target_items must be 0 or at least twice num_clusters");
  }
  if (warm_min_len > warm_max_len || cold_min_len > cold_max_len || target_min_len > target_max_len) {
    throw ConfigError("sequence length ranges must have min <= max");
  }
  if (cold_min_len == 0) throw ConfigError("cold users need at least one click");
  for (double p : {concentration, profile_strength, missing_rate}) {
    if (p < 0.0 || p > 1.0) throw ConfigError("probabilities must lie in [0, 1]");
  }
}

namespace {

std::string padded(char prefix, int value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04d", prefix, value);
  return buf;
}

int cluster_begin(int c, std::size_t items, std::size_t clusters) {
  return static_cast<int>(static_cast<std::size_t>(c) * items / clusters);
}

struct Walker {
  std::size_t items;
  std::size_t clusters;
  std::vector<int> cursor;  // offset inside each cluster, -1 before the first visit

  int step(int c, int dir, std::mt19937_64& rng) {
    const int lo = cluster_begin(c, items, clusters);
    const int size = cluster_begin(c + 1, items, clusters) - lo;
    int& cur = cursor[static_cast<std::size_t>(c)];
    if (cur < 0) {
      cur = std::uniform_int_distribution<int>(0, size - 1)(rng);
    } else {
      cur = ((cur + dir) % size + size) % size;
    }
    return lo + cur;
  }
};

std::vector<int> walk(std::size_t len, const SyntheticUser& u, double concentration, std::size_t items,
                      std::size_t clusters, std::mt19937_64& rng) {
  Walker w{items, clusters, std::vector<int>(clusters, -1)};
  std::bernoulli_distribution primary(concentration);
  std::vector<int> out;
  out.reserve(len);
  for (std::size_t t = 0; t < len; ++t) out.push_back(w.step(primary(rng) ? u.primary : u.secondary, u.direction, rng));
  return out;
}

}  // namespace

std::string synthetic_item_name(int item) { return padded('i', item + 1); }
std::string synthetic_target_item_name(int item) { return padded('t', item + 1); }

int SyntheticData::cluster_of(int item) const {
  const auto c = static_cast<std::size_t>(item) * config.num_clusters / config.num_items;
  // Boundaries are floor(c * items / clusters); step back when the estimate overshoots.
  int cl = static_cast<int>(c);
  while (cl > 0 && item < cluster_begin(cl, config.num_items, config.num_clusters)) --cl;
  while (item >= cluster_begin(cl + 1, config.num_items, config.num_clusters)) ++cl;
  return cl;
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticData data;
  data.config = cfg;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t m = cfg.vocab_sizes.size();
  const int half_size = static_cast<int>(cfg.num_clusters / 2);
  std::bernoulli_distribution follows(cfg.profile_strength);
  std::bernoulli_distribution hidden(cfg.missing_rate);
  const std::size_t total = cfg.warm_users + cfg.cold_users;

  for (std::size_t i = 0; i < total; ++i) {
    SyntheticUser u;
    u.id = padded('u', static_cast<int>(i + 1));
    std::vector<int> values(m);
    for (std::size_t a = 0; a < m; ++a) {
      values[a] = std::uniform_int_distribution<int>(0, static_cast<int>(cfg.vocab_sizes[a]) - 1)(rng);
    }
    if (follows(rng)) {
      const int half = values[0] % 2;
      int mixed = 0;
      for (std::size_t a = 1; a + 1 < m; ++a) mixed = mixed * static_cast<int>(cfg.vocab_sizes[a]) + values[a];
      const int within = mixed % half_size;
      const int last = values[m - 1] % 2;
      u.primary = half * half_size + within;
      u.secondary = half * half_size + (within + 1 + 2 * last) % half_size;
      u.direction = last == 0 ? 1 : -1;
    } else {
      const int clusters = static_cast<int>(cfg.num_clusters);
      u.primary = std::uniform_int_distribution<int>(0, clusters - 1)(rng);
      u.secondary = (u.primary + std::uniform_int_distribution<int>(1, clusters - 1)(rng)) % clusters;
      u.direction = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
    }
    u.attrs = values;
    for (auto& v : u.attrs) {
      if (hidden(rng)) v = kMissingAttr;
    }
    const bool warm = i < cfg.warm_users;
    const auto len = std::uniform_int_distribution<std::size_t>(warm ? cfg.warm_min_len : cfg.cold_min_len,
                                                                 warm ? cfg.warm_max_len : cfg.cold_max_len)(rng);
    u.items = walk(len, u, cfg.concentration, cfg.num_items, cfg.num_clusters, rng);
    if (cfg.target_items) {
      const auto tlen = std::uniform_int_distribution<std::size_t>(cfg.target_min_len, cfg.target_max_len)(rng);
      u.target_items = walk(tlen, u, cfg.concentration, cfg.target_items, cfg.num_clusters, rng);
    }
    data.users.push_back(std::move(u));
  }
  return data;
}

namespace {

constexpr std::int64_t kBaseTime = 1600000000;

template <class Name>
void emit(const SyntheticData& data, bool target, Name name, std::ostream& out) {
  for (std::size_t i = 0; i < data.users.size(); ++i) {
    const auto& u = data.users[i];
    const auto& items = target ? u.target_items : u.items;
    for (std::size_t t = 0; t < items.size(); ++t) {
      out << u.id << '\t' << name(items[t]) << '\t' << kBaseTime + static_cast<std::int64_t>(t) * 60 << '\n';
    }
  }
}

template <class Name>
InteractionLog build(const SyntheticData& data, bool target, Name name) {
  InteractionLog log;
  std::size_t line = 0;
  for (const auto& u : data.users) {
    const auto& items = target ? u.target_items : u.items;
    for (std::size_t t = 0; t < items.size(); ++t) {
      const int uid = log.users.intern(u.id);
      const int iid = log.items.intern(name(items[t]));
      log.records.push_back({uid, iid, kBaseTime + static_cast<std::int64_t>(t) * 60, ++line});
    }
  }
  return log;
}

}  // namespace

InteractionLog SyntheticData::log() const { return build(*this, false, synthetic_item_name); }
InteractionLog SyntheticData::target_log() const { return build(*this, true, synthetic_target_item_name); }

void write_interactions(const SyntheticData& data, std::ostream& out) {
  emit(data, false, synthetic_item_name, out);
}

void write_target_interactions(const SyntheticData& data, std::ostream& out) {
  emit(data, true, synthetic_target_item_name, out);
}

void write_profiles(const SyntheticData& data, std::ostream& out) {
  for (const auto& u : data.users) {
    out << u.id;
    for (std::size_t a = 0; a < u.attrs.size(); ++a) {
      out << '\t';
      if (u.attrs[a] == kMissingAttr) {
        out << '?';
      } else {
        out << 'a' << a << 'v' << u.attrs[a];
      }
    }
    out << '\n';
  }
}

double cluster_purity(const SyntheticData& data) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& u : data.users) {
    if (u.items.empty()) continue;
    std::map<int, std::size_t> counts;
    for (int it : u.items) ++counts[data.cluster_of(it)];
    std::size_t best = 0;
    for (const auto& [c, n] : counts) best = std::max(best, n);
    total += static_cast<double>(best) / static_cast<double>(u.items.size());
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

}  // namespace promptrec
