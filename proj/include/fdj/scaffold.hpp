#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdj/core.hpp"
#include "fdj/extraction.hpp"

namespace fdj {

// ceil(x) robust to values like 0.8 * 10 landing at 8 - 1e-16; never rounds a
// true integer up.
long long ceil_guard(double x);

// Conjunction of clauses; each clause is a disjunction realized as a min
// reduction over its featurizations' normalized distances compared against
// one shared per-clause threshold.
struct ClauseScaffold {
  std::vector<std::string> featurization_ids;
};

struct LogicalScaffold {
  std::vector<ClauseScaffold> clauses;

  bool empty() const { return clauses.empty(); }
  bool contains(const std::string& featurization_id) const;
  bool clause_contains(std::size_t clause, const std::string& fid) const;

  nlohmann::json to_json() const;
  static LogicalScaffold from_json(const nlohmann::json& j);
};

// One threshold per clause, in clause order. +infinity is a valid threshold
// (the clause admits everything, including missing values).
using ThresholdVector = std::vector<double>;

// Per-featurization min-max normalization parameters, keyed by id.
using NormMap = std::map<std::string, NormParams>;

const Featurization& find_featurization(const std::vector<Featurization>& pool,
                                        const std::string& id);

// Normalization fitted on the raw distances each featurization takes over
// `pairs`. A featurization with no finite distance gets identity-ish {0, 0}
// parameters (its values stay +infinity anyway).
NormMap compute_norm_map(const std::vector<Featurization>& pool,
                         FeatureTable& table,
                         const std::vector<PairRef>& pairs);

// clause_values[i][p]: min over the clause's featurizations of the normalized
// distance for pair p. Empty clauses evaluate to +infinity.
std::vector<std::vector<double>> clause_value_matrix(
    const LogicalScaffold& scaffold, const std::vector<Featurization>& pool,
    FeatureTable& table, const NormMap& norm,
    const std::vector<PairRef>& pairs);

// A complete, serializable join predicate: scaffold + thresholds + the
// normalization and featurizations they refer to.
struct FeaturizedDecomposition {
  LogicalScaffold scaffold;
  ThresholdVector thresholds;
  NormMap norm;
  std::vector<Featurization> featurizations;

  nlohmann::json to_json() const;
  static FeaturizedDecomposition from_json(const nlohmann::json& j);
};

// True when every clause's min-reduced normalized distance is <= its
// threshold. An empty scaffold admits everything.
bool decomposition_admits(const FeaturizedDecomposition& d, FeatureTable& table,
                          PairRef pair);
std::vector<std::uint8_t> eval_decomposition(const FeaturizedDecomposition& d,
                                             FeatureTable& table,
                                             const std::vector<PairRef>& pairs);

struct SampleStats {
  double recall = 1.0;  // admitted matches / matches (1 when no matches)
  double cost = 0.0;    // admitted non-matches / all admitted (0 when empty)
  std::size_t admitted_pos = 0;
  std::size_t admitted_neg = 0;
};

SampleStats sample_stats(const std::vector<std::uint8_t>& admitted,
                         const std::vector<std::uint8_t>& labels);

struct MinCostResult {
  ThresholdVector theta;
  double cost = 0.0;
  std::size_t admitted_positives = 0;
  std::size_t admitted_negatives = 0;
};

// Exact minimizer of the admitted-non-match fraction subject to sample recall
// >= recall_target, over per-clause thresholds. Candidate thresholds per
// clause are the clause's own match values (plus +infinity), searched
// depth-first with miss-count pruning. Ties prefer the smaller admitted set,
// then the lexicographically smallest threshold vector. Always feasible: the
// all-infinity vector admits everything.
MinCostResult min_cost_threshold_matrix(
    const std::vector<std::vector<double>>& clause_values,
    const std::vector<std::uint8_t>& labels, double recall_target);

struct ThresholdFit {
  ThresholdVector theta;
  double cost = 0.0;
  std::size_t admitted_positives = 0;
  std::size_t admitted_negatives = 0;
  NormMap norm;
};

// Table-level wrapper: fits the normalization on the sample, min-reduces the
// clauses, and runs the exact threshold search.
ThresholdFit min_cost_threshold(const LogicalScaffold& scaffold,
                                const std::vector<Featurization>& pool,
                                FeatureTable& table,
                                const LabeledSample& sample,
                                double recall_target);

struct BuildStep {
  int phase = 1;  // 1: new clause appended, 2: disjunct added to a clause
  std::string featurization_id;
  std::size_t clause_index = 0;
  double cost_after = 0.0;
};

struct BuildResult {
  LogicalScaffold scaffold;
  ThresholdVector thresholds;
  NormMap norm;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<BuildStep> steps;
};

// Greedy scaffold construction. Phase 1 appends single-featurization clauses
// while the best cost improvement strictly exceeds gamma, capped at
// floor(1 / (1 - recall_target)) clauses. Phase 2 makes one pass over
// (featurization, clause) in insertion order and keeps any disjunct whose
// improvement strictly exceeds gamma. Costs are evaluated with full threshold
// re-optimization at every step.
BuildResult greedy_build_matrix(
    const std::vector<std::vector<double>>& feature_values,  // [feat][pair] raw
    const std::vector<std::string>& feature_ids,
    const std::vector<std::uint8_t>& labels, double recall_target,
    double gamma);

BuildResult greedy_build(const std::vector<Featurization>& pool,
                         FeatureTable& table, const LabeledSample& sample,
                         double recall_target, double gamma);

}  // namespace fdj
