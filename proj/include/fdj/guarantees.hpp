#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fdj/core.hpp"
#include "fdj/extraction.hpp"
#include "fdj/scaffold.hpp"

namespace fdj {

// Adversarial population of matches for recall-guarantee analysis: over r
// dimensions, u rows per dimension holding the values 1..u in that dimension
// alone (zeros elsewhere), padded with all-zero rows up to n_plus. This shape
// maximizes the chance that thresholds fitted on a subsample cut off unseen
// matches.
struct WorstCaseDataset {
  std::size_t n_plus = 0;
  std::size_t r = 0;
  double T = 0.0;
  std::size_t u = 0;

  // Row `idx` of the population as r feature values.
  std::vector<int> row(std::size_t idx) const;
  std::vector<std::vector<int>> rows() const;

  // Smallest number of excluded matches that already violates the recall
  // target T on this population.
  long long min_bad_exclusions() const;
  // True when no threshold vector at all can violate T (the u*r one-hot rows
  // are the only excludable ones).
  bool vacuous() const;
};

// u = ceil(n_plus * (1 - T)) - 1, the largest per-dimension spread that keeps
// a single dimension harmless. Requires u >= 1 and r * u <= n_plus.
WorstCaseDataset worst_case_dataset(std::size_t n_plus, std::size_t r,
                                    double T);
// Diagnostic variant filling every dimension maximally: u = floor(n_plus / r).
WorstCaseDataset worst_case_dataset_rank(std::size_t n_plus, std::size_t r,
                                         double T);

// Fewest sample misses an adversarial threshold vector needs before it can
// exclude enough unsampled matches to break the recall target; k_plus + 1
// when impossible. `sampled` holds row indices into the dataset.
std::size_t adversary_min_misses(const WorstCaseDataset& dataset,
                                 const std::vector<std::uint64_t>& sampled);

struct McEstimate {
  double p_hat = 0.0;
  double half_width = 0.0;
  std::size_t trials = 0;
};

// Probability that fitting thresholds at sample recall target t_prime on a
// uniform k_plus-subsample can break population recall T, estimated over
// `trials` Monte Carlo draws (Hoeffding half-width at confidence delta1).
McEstimate failure_prob_mc(const WorstCaseDataset& dataset, std::size_t k_plus,
                           double t_prime, std::size_t trials,
                           std::uint64_t seed, double delta1);

// Exact version by enumerating every k_plus-subset; refuses populations with
// more than 2e6 subsets.
double failure_prob_exact(const WorstCaseDataset& dataset, std::size_t k_plus,
                          double t_prime);

// Failure-probability backend, injectable so tests can swap the Monte Carlo
// estimator for an exact one. Estimates are aligned with `t_primes`.
class FailureProbEvaluator {
 public:
  virtual ~FailureProbEvaluator() = default;
  virtual std::vector<McEstimate> evaluate(const WorstCaseDataset& dataset,
                                           std::size_t k_plus,
                                           const std::vector<double>& t_primes,
                                           std::size_t trials,
                                           std::uint64_t seed,
                                           double delta1) = 0;
};

class McFailureEvaluator : public FailureProbEvaluator {
 public:
  std::vector<McEstimate> evaluate(const WorstCaseDataset& dataset,
                                   std::size_t k_plus,
                                   const std::vector<double>& t_primes,
                                   std::size_t trials, std::uint64_t seed,
                                   double delta1) override;
};

// How the total failure budget delta is split: delta2 bounds the match-count
// estimation, delta3 the residual worst-case failure probability, delta1 each
// individual Monte Carlo estimate (of which there are at most
// 2 * k_plus * n * halfwidth(delta2, k_prime)).
struct DeltaBudget {
  double delta = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t default_trials = 0;
};

DeltaBudget compute_delta_budget(double delta, std::size_t k_plus,
                                 std::size_t n, std::size_t k_prime);

struct NPlusBounds {
  double lo = 0.0;
  double hi = 0.0;
};

// Two-sided Hoeffding interval for the number of matching pairs in a universe
// of n pairs, from k_plus matches observed in a uniform sample of k_prime.
// Holds with probability at least 1 - 2 * delta2... the interval is clamped
// into [max(k_plus, 1), n].
NPlusBounds estimate_n_plus_bounds(std::size_t k_prime, std::size_t k_plus,
                                   std::size_t n, double delta2);

struct AdjTargetQuery {
  std::size_t k_plus = 0;  // matches in the threshold-fitting sample
  std::size_t r = 0;       // scaffold clauses
  double T = 0.0;          // user recall target
  double delta = 0.0;      // total failure budget
  std::size_t n = 0;       // candidate pair universe size
  std::size_t k_prime = 0; // labeled sample size
  // When >= 0 these override the estimated match-count bounds (exact
  // experiments, CLI).
  double n_plus_lo = -1.0;
  double n_plus_hi = -1.0;
  std::size_t mc_trials = 0;  // 0: use the budget default
  std::uint64_t seed = 0;
};

struct AdjTargetResult {
  double t_prime = 0.0;            // +infinity when no grid value certifies
  std::vector<double> grid;        // candidate adjusted targets, ascending
  std::vector<double> p_worst;     // per grid value, max over population sizes
  DeltaBudget budget;
  NPlusBounds bounds;
  std::size_t eval_points = 0;     // population sizes actually evaluated
  std::size_t trials = 0;
  bool from_cache = false;
};

struct AdjCacheKey {
  std::size_t k_plus = 0;
  std::size_t r = 0;
  double T = 0.0;
  double delta = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double n_plus_lo = 0.0;
  double n_plus_hi = 0.0;

  bool operator==(const AdjCacheKey&) const = default;
};

// Memoizes adjusted targets per exact query key; optionally file-backed
// (JSON, rewritten on every new entry). An infeasible result (+infinity) is
// cached too.
class AdjTargetCache {
 public:
  AdjTargetCache() = default;
  explicit AdjTargetCache(std::filesystem::path file);

  std::optional<double> lookup(const AdjCacheKey& key) const;
  void store(const AdjCacheKey& key, double t_prime);
  std::size_t size() const { return entries_.size(); }

 private:
  void persist() const;
  std::vector<std::pair<AdjCacheKey, double>> entries_;
  std::filesystem::path file_;
};

// The smallest sample recall target on the grid {T + i/k_plus} U {1} whose
// worst-case failure probability (maximized over every population size
// consistent with the match-count bounds) stays within delta3. +infinity in
// t_prime means even fitting at sample recall 1 cannot certify T.
// Queries no sample of this shape can certify (target 1, k_plus at or below
// 1/(1-T), more clauses than the union bound supports) throw
// GuaranteeInfeasibleError; malformed queries throw std::invalid_argument.
AdjTargetResult adj_target(const AdjTargetQuery& query,
                           AdjTargetCache* cache = nullptr,
                           FailureProbEvaluator* evaluator = nullptr,
                           bool add_half_width = true);

struct GuaranteedThresholds {
  ThresholdVector theta;
  double t_prime = std::numeric_limits<double>::quiet_NaN();
  DeltaBudget budget;
  NPlusBounds bounds;
  NormMap norm;
  double cost = 0.0;
  std::size_t admitted_positives = 0;
  std::size_t admitted_negatives = 0;
};

// End-to-end guaranteed threshold selection: adjusts the recall target for
// sampling error, then fits min-cost thresholds at the adjusted target.
// Throws GuaranteeInfeasibleError when the target is 1, the sample holds too
// few matches, the scaffold has too many clauses, or no adjusted target
// certifies. An empty scaffold yields empty thresholds (constant-true).
GuaranteedThresholds select_guaranteed_thresholds(
    const LogicalScaffold& scaffold, const std::vector<Featurization>& pool,
    FeatureTable& table, const LabeledSample& sample, double recall_target,
    double delta, std::size_t n_universe, AdjTargetCache* cache,
    std::uint64_t seed, std::size_t mc_trials = 0,
    FailureProbEvaluator* evaluator = nullptr);

// Exact one-sided lower confidence bound (Clopper-Pearson) for a binomial
// proportion at confidence 1 - alpha.
double binomial_lower_confidence(std::size_t successes, std::size_t trials,
                                 double alpha);

struct PrecisionSubset {
  std::string featurization_id;
  double max_distance = 0.0;  // raw-distance cutoff defining the subset
  std::vector<PairRef> members;
  double lower_bound = 0.0;
  std::size_t labeled = 0;
  std::size_t labeled_positive = 0;
};

// Greedy certified-precision subsets: per featurization (in order, splitting
// delta_half evenly), the largest prefix of the not-yet-accepted candidates
// ordered by that featurization's distance whose labeled members clear the
// Clopper-Pearson lower bound at precision_target. Accepted subsets are
// disjoint and skip per-pair refinement.
std::vector<PrecisionSubset> precision_subsets(
    const std::vector<PairRef>& candidates,
    const std::vector<Featurization>& pool, FeatureTable& table,
    const std::vector<std::pair<PairRef, bool>>& judged,
    double precision_target, double delta_half);

struct GuaranteeExperimentConfig {
  double recall_target = 0.8;
  double delta = 0.25;
  std::size_t population_positives = 60;
  std::size_t r = 2;
  std::size_t negatives = 70;
  std::size_t sample_positives = 30;
  std::size_t trials = 200;
  std::size_t n_universe = 200;
  std::size_t mc_trials = 0;
  std::uint64_t seed = 7;
};

struct GuaranteeExperimentResult {
  double t_prime = 0.0;
  std::size_t trials = 0;
  std::size_t failures = 0;  // trials whose population recall fell below T
  double failure_rate = 0.0;
  double delta3 = 0.0;
  double mean_population_recall = 0.0;
};

// Resampling experiment on a worst-case-shaped population: repeatedly fit
// guaranteed thresholds on a fresh match subsample and measure how often the
// full population's recall lands below the target. The failure rate should
// stay within delta3 (up to Monte Carlo noise).
GuaranteeExperimentResult validate_guarantee_experiment(
    const GuaranteeExperimentConfig& config);

}  // namespace fdj
