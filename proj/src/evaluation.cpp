#include "promptrec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "promptrec/errors.hpp"
#include "promptrec/log.hpp"
#include "promptrec/ops.hpp"

namespace promptrec {

EvalSplit parse_split(const std::string& s) {
  if (s == "fewshot") return EvalSplit::FewShot;
  if (s == "zeroshot") return EvalSplit::ZeroShot;
  if (s == "joint") return EvalSplit::Joint;
  throw ConfigError("split must be fewshot, zeroshot or joint, got '" + s + "'");
}

const char* split_name(EvalSplit s) {
  switch (s) {
    case EvalSplit::FewShot: return "fewshot";
    case EvalSplit::ZeroShot: return "zeroshot";
    case EvalSplit::Joint: return "joint";
  }
  return "?";
}

std::vector<int> sample_eval_negatives(std::span<const int> clicked, int num_items, std::uint64_t seed,
                                       std::uint64_t user, std::uint64_t case_index, std::size_t count) {
  std::vector<int> pool;
  pool.reserve(static_cast<std::size_t>(std::max(num_items, 0)));
  for (int i = 0; i < num_items; ++i) {
    if (!std::binary_search(clicked.begin(), clicked.end(), i)) pool.push_back(i);
  }
  if (pool.size() < count) {
    throw DataError("only " + std::to_string(pool.size()) + " unclicked items for user " + std::to_string(user) +
                    ", need " + std::to_string(count) + " negatives");
  }
  std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(user), static_cast<std::uint32_t>(user >> 32),
                     static_cast<std::uint32_t>(case_index), static_cast<std::uint32_t>(case_index >> 32)};
  std::mt19937_64 rng(sseq);
  std::vector<int> out;
  out.reserve(count);
  std::sample(pool.begin(), pool.end(), std::back_inserter(out), count, rng);
  return out;
}

std::vector<EvalCase> build_eval_cases(const std::vector<std::vector<int>>& sequences, const std::vector<int>& users,
                                       EvalSplit split, int num_items, std::uint64_t seed,
                                       const std::vector<std::vector<int>>* click_sets) {
  std::vector<EvalCase> cases;
  for (int u : users) {
    const auto& seq = sequences.at(static_cast<std::size_t>(u));
    if (seq.empty()) continue;
    std::vector<int> clicked = click_sets ? click_sets->at(static_cast<std::size_t>(u)) : seq;
    std::sort(clicked.begin(), clicked.end());
    clicked.erase(std::unique(clicked.begin(), clicked.end()), clicked.end());
    const std::size_t first = split == EvalSplit::FewShot ? 1 : 0;
    const std::size_t last = split == EvalSplit::ZeroShot ? 1 : seq.size();
    for (std::size_t t = first; t < last; ++t) {
      EvalCase c;
      c.user = u;
      c.prefix.assign(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(t));
      c.target = seq[t];
      c.zero_shot = t == 0;
      c.negatives = sample_eval_negatives(clicked, num_items, seed, static_cast<std::uint64_t>(u), t);
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

namespace {

void check_finite(double target, std::span<const double> negs) {
  if (!std::isfinite(target) || std::any_of(negs.begin(), negs.end(), [](double v) { return !std::isfinite(v); })) {
    throw NumericError("non-finite score in evaluation");
  }
}

std::size_t cutoff_slot(std::size_t n) {
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
    if (kCutoffs[i] == n) return i;
  }
  throw ContractError("cutoff " + std::to_string(n) + " is not one of 5, 10, 20, 50");
}

}  // namespace

std::size_t rank_case(double target_score, std::span<const double> negative_scores) {
  check_finite(target_score, negative_scores);
  std::size_t above = 0;
  for (double s : negative_scores) above += s >= target_score;
  return 1 + above;
}

double case_auc(double target_score, std::span<const double> negative_scores) {
  check_finite(target_score, negative_scores);
  if (negative_scores.empty()) throw ContractError("case_auc needs at least one negative");
  double below = 0.0;
  for (double s : negative_scores) below += s < target_score ? 1.0 : (s == target_score ? 0.5 : 0.0);
  return below / static_cast<double>(negative_scores.size());
}

double MetricsReport::hit_at(std::size_t n) const { return hit[cutoff_slot(n)]; }
double MetricsReport::ndcg_at(std::size_t n) const { return ndcg[cutoff_slot(n)]; }

double hit_at_n(std::span<const std::size_t> ranks, std::size_t n) {
  if (ranks.empty()) return 0.0;
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [n](std::size_t r) { return r <= n; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg_at_n(std::span<const std::size_t> ranks, std::size_t n) {
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (auto r : ranks) {
    if (r <= n) total += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  return total / static_cast<double>(ranks.size());
}

MetricsReport summarize(const std::vector<CaseResult>& results) {
  MetricsReport r;
  r.count = results.size();
  if (results.empty()) return r;
  std::vector<std::size_t> ranks;
  ranks.reserve(results.size());
  double auc = 0.0;
  for (const auto& c : results) {
    ranks.push_back(c.rank);
    auc += c.auc;
  }
  r.auc = auc / static_cast<double>(results.size());
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
    r.hit[i] = hit_at_n(ranks, kCutoffs[i]);
    r.ndcg[i] = ndcg_at_n(ranks, kCutoffs[i]);
  }
  return r;
}

std::vector<CaseResult> evaluate_cases(const std::vector<EvalCase>& cases, const ScorerFactory& factory,
                                       std::size_t threads) {
  std::vector<CaseResult> results(cases.size());
  threads = std::max<std::size_t>(1, std::min(threads, cases.size()));
  auto run = [&](std::size_t begin, std::size_t end) {
    CaseScorer scorer = factory();
    for (std::size_t i = begin; i < end; ++i) {
      const auto scores = scorer(cases[i]);
      if (scores.size() != cases[i].negatives.size() + 1) throw ContractError("scorer returned wrong count");
      std::span<const double> negs(scores.data() + 1, scores.size() - 1);
      results[i] = {rank_case(scores[0], negs), case_auc(scores[0], negs), cases[i].zero_shot};
    }
  };
  if (threads == 1) {
    run(0, cases.size());
    return results;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (cases.size() + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t begin = std::min(cases.size(), w * chunk);
    const std::size_t end = std::min(cases.size(), begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        run(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

ScorerFactory model_scorer(const ModelState& state, FeatureFn features) {
  return [&state, features]() -> CaseScorer {
    auto rec = std::make_shared<Recommender>(state);
    return [rec, features](const EvalCase& c) {
      NoGradGuard no_grad;
      Tensor x = rec->uses_features() ? features(*rec, static_cast<std::size_t>(c.user)) : Tensor();
      Tensor u = rec->user_repr(x, c.prefix);
      std::vector<int> ids;
      ids.reserve(c.negatives.size() + 1);
      ids.push_back(c.target);
      ids.insert(ids.end(), c.negatives.begin(), c.negatives.end());
      Tensor s = rec->score(u, ids);
      return std::vector<double>(s.data().begin(), s.data().end());
    };
  };
}

MetricsReport evaluate_model(const ModelState& state, const FeatureFn& features, const std::vector<EvalCase>& cases,
                             std::size_t threads) {
  return summarize(evaluate_cases(cases, model_scorer(state, features), threads));
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

ClassificationReport classification_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw ContractError("classification_metrics on an empty set");
  if (predictions.size() != labels.size()) throw ContractError("predictions and labels differ in length");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (predictions[i] != 0 && predictions[i] != 1)) {
      throw ContractError("labels and predictions must be 0 or 1");
    }
    if (predictions[i] == 1) {
      (labels[i] == 1 ? tp : fp)++;
    } else {
      (labels[i] == 1 ? fn : tn)++;
    }
  }
  ClassificationReport r;
  r.count = labels.size();
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(r.count);
  if (tp + fp == 0) {
    r.warnings.push_back("precision undefined (no positive predictions), reported as 0");
  } else {
    r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    r.warnings.push_back("recall undefined (no positive labels), reported as 0");
  } else {
    r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  r.f1 = f1_score(r.precision, r.recall);
  for (const auto& w : r.warnings) logger().warn("{}", w);
  return r;
}

namespace {

std::string line(const std::string& key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return key + "=" + buf + "\n";
}

}  // namespace

std::string format_report(const MetricsReport& r) {
  std::string out = line("auc", r.auc);
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) out += line("hit@" + std::to_string(kCutoffs[i]), r.hit[i]);
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) out += line("ndcg@" + std::to_string(kCutoffs[i]), r.ndcg[i]);
  out += "cases=" + std::to_string(r.count) + "\n";
  return out;
}

std::string format_report(const ClassificationReport& r) {
  return line("acc", r.accuracy) + line("precision", r.precision) + line("recall", r.recall) + line("f1", r.f1) +
         "count=" + std::to_string(r.count) + "\n";
}

std::string report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["auc"] = r.auc;
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) j["hit@" + std::to_string(kCutoffs[i])] = r.hit[i];
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) j["ndcg@" + std::to_string(kCutoffs[i])] = r.ndcg[i];
  j["cases"] = r.count;
  return j.dump(2) + "\n";
}

std::string report_json(const ClassificationReport& r) {
  nlohmann::ordered_json j;
  j["acc"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["count"] = r.count;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

}  // namespace promptrec
