#pragma once

// Sampled-negative ranking evaluation and binary classification metrics.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "promptrec/model_state.hpp"
#include "promptrec/prompt.hpp"

namespace promptrec {

inline constexpr std::size_t kEvalNegatives = 99;
inline constexpr std::array<std::size_t, 4> kCutoffs{5, 10, 20, 50};

struct EvalCase {
  int user = 0;
  std::vector<int> prefix;  // clicks before the target (empty for zero-shot)
  int target = 0;
  std::vector<int> negatives;
  bool zero_shot = false;
};

enum class EvalSplit { FewShot, ZeroShot, Joint };
EvalSplit parse_split(const std::string& s);
const char* split_name(EvalSplit s);

// `count` distinct items outside `clicked` (sorted ascending), uniform without
// replacement; the stream is a pure function of (seed, user, case_index).
std::vector<int> sample_eval_negatives(std::span<const int> clicked, int num_items, std::uint64_t seed,
                                       std::uint64_t user, std::uint64_t case_index,
                                       std::size_t count = kEvalNegatives);

// Cases for the given users. Case index t is the target's position in the
// user's sequence, so zero-shot, few-shot and joint runs share candidates.
// `click_sets` (default: `sequences`) supplies the items never used as negatives.
std::vector<EvalCase> build_eval_cases(const std::vector<std::vector<int>>& sequences, const std::vector<int>& users,
                                       EvalSplit split, int num_items, std::uint64_t seed,
                                       const std::vector<std::vector<int>>* click_sets = nullptr);

// Pessimistic rank of the ground truth among 1 + |negatives| candidates.
std::size_t rank_case(double target_score, std::span<const double> negative_scores);
// (#negatives strictly below + 0.5 #ties) / #negatives.
double case_auc(double target_score, std::span<const double> negative_scores);

struct CaseResult {
  std::size_t rank = 0;
  double auc = 0.0;
  bool zero_shot = false;
};

struct MetricsReport {
  double auc = 0.0;
  std::array<double, kCutoffs.size()> hit{};
  std::array<double, kCutoffs.size()> ndcg{};
  std::size_t count = 0;

  double hit_at(std::size_t n) const;
  double ndcg_at(std::size_t n) const;
};

double hit_at_n(std::span<const std::size_t> ranks, std::size_t n);
double ndcg_at_n(std::span<const std::size_t> ranks, std::size_t n);
MetricsReport summarize(const std::vector<CaseResult>& results);

// Scores for {target, negatives...} of one case.
using CaseScorer = std::function<std::vector<double>(const EvalCase&)>;
// Builds one scorer per worker thread.
using ScorerFactory = std::function<CaseScorer()>;

std::vector<CaseResult> evaluate_cases(const std::vector<EvalCase>& cases, const ScorerFactory& factory,
                                       std::size_t threads = 1);

// Scorer factory over a model snapshot; `features` supplies x_u per user.
ScorerFactory model_scorer(const ModelState& state, FeatureFn features);

// Evaluates a model and returns the pooled report.
MetricsReport evaluate_model(const ModelState& state, const FeatureFn& features, const std::vector<EvalCase>& cases,
                             std::size_t threads = 1);

struct ClassificationReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t count = 0;
  std::vector<std::string> warnings;
};

ClassificationReport classification_metrics(std::span<const int> predictions, std::span<const int> labels);
double f1_score(double precision, double recall);

// `metric=value` lines in a fixed order.
std::string format_report(const MetricsReport& r);
std::string format_report(const ClassificationReport& r);
std::string report_json(const MetricsReport& r);
std::string report_json(const ClassificationReport& r);

}  // namespace promptrec
