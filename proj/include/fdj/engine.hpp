#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdj/candidates.hpp"
#include "fdj/core.hpp"
#include "fdj/distances.hpp"
#include "fdj/extraction.hpp"
#include "fdj/guarantees.hpp"
#include "fdj/scaffold.hpp"

namespace fdj {

// Knobs for the end-to-end join pipeline.
struct PipelineConfig {
  // Positives required in the sample that drives featurization generation and
  // scaffold construction.
  std::size_t k_positive_gen = 50;
  // Positives required in the fresh sample used for threshold selection.
  std::size_t k_positive_thresh = 200;
  // Minimum cost improvement for a greedy scaffold step.
  double gamma = 0.05;
  CandidateGenConfig gen;
  std::uint64_t seed = 0;
  // Reserved for a bounded worker pool over pair evaluation. The current
  // implementation evaluates sequentially so that runs are reproducible
  // byte-for-byte; values > 1 are accepted and ignored.
  std::size_t parallelism = 1;
  // Judged sample size for certified-precision subsets (only used when the
  // precision target is below 1).
  std::size_t k_precision = 200;
  // Monte Carlo trials per target-adjustment estimate; 0 uses the
  // failure-budget default.
  std::size_t mc_trials = 0;
  // Sampling stops after sample_cap_factor * k_positive / observed-rate draws
  // (rate estimated after a burn-in) so near-empty joins terminate.
  std::size_t sample_cap_factor = 50;
  // On-disk cache for LLM-extracted feature values (empty: in-memory only).
  std::filesystem::path cache_dir;
  // On-disk cache for adjusted recall targets (empty: in-memory only).
  std::filesystem::path adj_cache_path;
};

struct PhaseCost {
  std::size_t calls = 0;
  std::size_t tokens = 0;
};

// Per-phase cost accounting. Token counts are prompt-side, ceil(bytes / 4).
struct CostLedger {
  PhaseCost labeling;      // judging pairs drawn for the labeled samples
  PhaseCost construction;  // generator completions while proposing features
  PhaseCost inference;     // corpus feature extraction + embeddings
  PhaseCost refinement;    // judging admitted candidate pairs
  // Unit price per token, keyed by model name; "default" applies when a
  // specific model is not priced.
  std::map<std::string, double> price_table = {{"default", 1.0}};

  std::size_t total_tokens() const;
  std::size_t total_calls() const;
  double total_cost(const std::string& model = "default") const;
  nlohmann::json to_json() const;
};

// One oracle judgement, recorded the first time a pair is judged. Re-judging
// the same pair is served from a cache and never re-costed.
struct JudgeRecord {
  PairRef pair;
  std::size_t tokens = 0;
  std::string phase;  // "labeling" or "refinement"
  bool verdict = false;
};

struct JoinOutcome {
  ResultSet result;
  CostLedger ledger;
  FeaturizedDecomposition decomposition;
  std::vector<JudgeRecord> judge_log;
  std::vector<std::string> warnings;
  nlohmann::json report;  // machine-readable run summary (no paths, no clocks)
};

// End-to-end featurized-decomposition join:
//   1. draw labeled pairs until k_positive_gen positives,
//   2. generate candidate featurizations and build the CNF scaffold,
//   3. draw a fresh sample until k_positive_thresh positives and select
//      thresholds meeting the adjusted recall target,
//   4. evaluate the decomposition over L x R,
//   5. refine admitted pairs with the judge oracle (optionally pre-accepting
//      certified-precision subsets when spec.precision_target < 1).
// `provider` is needed only when semantic-distance featurizations appear.
// `truth_for_metrics`, when given, adds recall/precision to the report (it
// never influences the join itself; the oracle client is the only label
// source).
// Throws DataError when no positive pair can be found and
// GuaranteeInfeasibleError when no adjusted target certifies the recall floor.
JoinOutcome fdj_join(const RecordSet& left, const RecordSet& right,
                     const JoinSpec& spec, const PipelineConfig& config,
                     LlmClient& client, FeaturizationGenerator& generator,
                     EmbeddingProvider* provider = nullptr,
                     const ResultSet* truth_for_metrics = nullptr);

// Oracle refinement: returns pre_accepted plus every other candidate the
// judge confirms. pre_accepted must be a subset of candidates; its members
// are never judged. A failed judge call is retried once, then propagated.
ResultSet refine(const ResultSet& candidates, const ResultSet& pre_accepted,
                 LlmClient& client, const JoinSpec& spec, const RecordSet& left,
                 const RecordSet& right);

using Tokenizer = std::function<std::size_t(const std::string&)>;

// Token cost of judging every pair of the universe once (the all-pairs
// baseline; the diagonal is excluded for self-joins). A null tokenizer uses
// the default ceil(bytes / 4).
std::size_t all_pairs_judge_tokens(const RecordSet& left,
                                   const RecordSet& right, const JoinSpec& spec,
                                   const Tokenizer& tokenizer = {});

// Ledger total divided by the all-pairs judge cost.
double cost_ratio(const CostLedger& ledger, const RecordSet& left,
                  const RecordSet& right, const JoinSpec& spec,
                  const Tokenizer& tokenizer = {});

// Ground-truth-assisted cascade baseline over embedding similarity.
struct CascadeResult {
  ResultSet result;
  double reject_below = 0.0;  // similarity below this is pruned outright
  double accept_above = 0.0;  // similarity above this is accepted unjudged
  std::size_t pruned = 0;
  std::size_t auto_accepted = 0;
  std::size_t judged_pairs = 0;
  std::size_t judge_tokens = 0;
  std::size_t embedding_tokens = 0;
  double cost_ratio = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

// Best-case similarity cascade: with full ground truth it picks the
// reject-below / accept-above thresholds that prune the most pairs subject to
// recall >= recall_target and precision 1 on the unjudged accepts, then
// "judges" only the pairs in between (answered from truth, costed as judge
// prompts). Reported cost covers join execution only: embeddings for every
// record plus the judged prompts.
CascadeResult optimal_cascade_baseline(const RecordSet& left,
                                       const RecordSet& right,
                                       const ResultSet& truth,
                                       EmbeddingProvider& provider,
                                       double recall_target,
                                       const JoinSpec& spec);

}  // namespace fdj
