#include "fdj/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include "fdj/rng.hpp"

namespace fdj {

namespace {

constexpr const char* kPhaseLabeling = "labeling";
constexpr const char* kPhaseRefinement = "refinement";

bool judge_with_retry(LlmClient& client, const std::string& prompt,
                      const std::string& left_id, const std::string& right_id) {
  try {
    return client.judge_for_pair(prompt, left_id, right_id);
  } catch (const std::exception&) {
    return client.judge_for_pair(prompt, left_id, right_id);
  }
}

// Mutable state threaded through one fdj_join run: the judgement cache makes
// every pair cost at most one oracle call no matter how many phases touch it.
struct JoinRun {
  const RecordSet& left;
  const RecordSet& right;
  const JoinSpec& spec;
  LlmClient& client;
  JoinOutcome& out;
  std::map<PairRef, bool> verdicts;

  bool judge(PairRef pair, const char* phase) {
    auto it = verdicts.find(pair);
    if (it != verdicts.end()) return it->second;
    const Record& l = left.at(pair.left);
    const Record& r = right.at(pair.right);
    std::string prompt = render_join_prompt(spec, l.text, r.text);
    bool verdict = judge_with_retry(client, prompt, l.id, r.id);
    out.judge_log.push_back(
        {pair, client.token_count(prompt), phase, verdict});
    verdicts.emplace(pair, verdict);
    return verdict;
  }

  // Draws distinct uniform pairs, judging each, until `target` positives are
  // seen. Stops early when the universe is exhausted or, once a burn-in
  // establishes a positive rate, when the draw count passes cap_factor times
  // the expected draws needed. Zero positives at the stop is a DataError;
  // fewer than `target` is a warning.
  LabeledSample draw_until_positives(std::size_t target, std::uint64_t seed,
                                     std::size_t cap_factor,
                                     const std::string& stage) {
    LabeledSample sample;
    sample.seed = seed;
    const std::size_t universe = pair_universe_size(left, right);
    Rng rng(seed);
    std::set<std::size_t> seen;
    std::size_t positives = 0;
    std::size_t cap = 0;  // 0 while the burn-in is still running
    const std::size_t burn_in = std::max<std::size_t>(10 * target, 1000);
    while (positives < target) {
      if (seen.size() == universe) break;
      const std::size_t draws = sample.pairs.size();
      if (cap == 0 && draws >= burn_in) {
        if (positives == 0) break;  // no rate estimate; hopeless
        cap = (cap_factor * target * draws) / positives;
      }
      if (cap != 0 && draws >= cap) break;
      std::size_t flat = rng.below(universe);
      while (seen.count(flat) != 0) flat = rng.below(universe);
      seen.insert(flat);
      PairRef pair = pair_from_flat_index(left, right, flat);
      bool verdict = judge(pair, kPhaseLabeling);
      sample.pairs.push_back(pair);
      sample.labels.push_back(verdict ? 1 : 0);
      if (verdict) ++positives;
    }
    if (positives == 0) {
      throw DataError("no positive pairs found while drawing the " + stage +
                      " sample (judged " + std::to_string(sample.pairs.size()) +
                      " of " + std::to_string(universe) +
                      " pairs; burn-in " + std::to_string(burn_in) +
                      ", cap factor " + std::to_string(cap_factor) + ")");
    }
    if (positives < target) {
      out.warnings.push_back(stage + " sample stopped at " +
                             std::to_string(positives) + "/" +
                             std::to_string(target) + " positives after " +
                             std::to_string(sample.pairs.size()) + " draws");
    }
    return sample;
  }
};

std::vector<Featurization> scaffold_featurizations(
    const LogicalScaffold& scaffold, const std::vector<Featurization>& pool) {
  std::vector<Featurization> used;
  for (const auto& clause : scaffold.clauses) {
    for (const auto& fid : clause.featurization_ids) {
      bool present = std::any_of(used.begin(), used.end(),
                                 [&](const auto& f) { return f.id == fid; });
      if (!present) used.push_back(find_featurization(pool, fid));
    }
  }
  return used;
}

nlohmann::json json_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

std::size_t CostLedger::total_tokens() const {
  return labeling.tokens + construction.tokens + inference.tokens +
         refinement.tokens;
}

std::size_t CostLedger::total_calls() const {
  return labeling.calls + construction.calls + inference.calls +
         refinement.calls;
}

double CostLedger::total_cost(const std::string& model) const {
  auto it = price_table.find(model);
  if (it == price_table.end()) it = price_table.find("default");
  const double price = it == price_table.end() ? 1.0 : it->second;
  return price * static_cast<double>(total_tokens());
}

nlohmann::json CostLedger::to_json() const {
  auto phase = [](const PhaseCost& p) {
    return nlohmann::json{{"calls", p.calls}, {"tokens", p.tokens}};
  };
  return nlohmann::json{{"labeling", phase(labeling)},
                        {"construction", phase(construction)},
                        {"inference", phase(inference)},
                        {"refinement", phase(refinement)},
                        {"total_calls", total_calls()},
                        {"total_tokens", total_tokens()}};
}

JoinOutcome fdj_join(const RecordSet& left, const RecordSet& right,
                     const JoinSpec& spec, const PipelineConfig& config,
                     LlmClient& client, FeaturizationGenerator& generator,
                     EmbeddingProvider* provider,
                     const ResultSet* truth_for_metrics) {
  spec.validate();
  if (left.empty() || right.empty()) {
    throw DataError("both record sets must be non-empty");
  }
  if (pair_universe_size(left, right) == 0) {
    throw DataError("pair universe is empty (a self-join needs >= 2 records)");
  }
  if (config.k_positive_gen == 0 || config.k_positive_thresh == 0) {
    throw std::invalid_argument("positive sample targets must be >= 1");
  }
  if (config.sample_cap_factor == 0) {
    throw std::invalid_argument("sample_cap_factor must be >= 1");
  }
  if (!(config.gamma >= 0.0)) {
    throw std::invalid_argument("gamma must be non-negative");
  }
  if (spec.precision_target < 1.0 && config.k_precision == 0) {
    throw std::invalid_argument(
        "k_precision must be >= 1 when the precision target is below 1");
  }

  JoinOutcome out;
  JoinRun run{left, right, spec, client, out, {}};
  const std::size_t base_complete_calls = client.log().complete_calls;
  const std::size_t base_complete_tokens = client.log().complete_tokens;

  FeatureTable table(&left, &right, provider, config.cache_dir);

  // Stage 1: labeled sample driving featurization generation and the
  // scaffold.
  LabeledSample gen_sample =
      run.draw_until_positives(config.k_positive_gen, derive_seed(config.seed, 1),
                               config.sample_cap_factor, "generation");

  CandidateGenResult cand = get_candidate_featurizations(
      gen_sample, table, spec.join_prompt, generator, &client, config.gen);
  for (const auto& w : cand.warnings) out.warnings.push_back(w);

  BuildResult build;
  bool degenerate = false;
  if (cand.featurizations.empty()) {
    degenerate = true;
    out.warnings.push_back(
        "WARNING: no candidate featurizations were produced; using a "
        "constant-true decomposition, every pair will be judged");
  } else {
    build = greedy_build(cand.featurizations, table, gen_sample,
                         spec.recall_target, config.gamma);
    if (build.scaffold.empty()) {
      degenerate = true;
      out.warnings.push_back(
          "WARNING: no featurization improved the admission cost enough to "
          "enter the scaffold; using a constant-true decomposition, every "
          "pair will be judged");
    }
  }

  // Stage 2: fresh labeled sample for threshold selection.
  LabeledSample thresh_sample = run.draw_until_positives(
      config.k_positive_thresh, derive_seed(config.seed, 3),
      config.sample_cap_factor, "threshold");

  std::vector<Featurization> used =
      scaffold_featurizations(build.scaffold, cand.featurizations);
  for (const auto& f : used) {
    table.ensure_extracted_pairs(f, thresh_sample.pairs, &client);
  }

  // The failure budget is split evenly between the recall guarantee and the
  // certified-precision subsets when the precision target is relaxed.
  const bool relaxed_precision = spec.precision_target < 1.0;
  const double delta_recall =
      relaxed_precision ? spec.delta / 2.0 : spec.delta;

  AdjTargetCache adj_cache = config.adj_cache_path.empty()
                                 ? AdjTargetCache()
                                 : AdjTargetCache(config.adj_cache_path);
  GuaranteedThresholds sel = select_guaranteed_thresholds(
      build.scaffold, used, table, thresh_sample, spec.recall_target,
      delta_recall, pair_universe_size(left, right), &adj_cache, config.seed,
      config.mc_trials);

  FeaturizedDecomposition decomp;
  decomp.scaffold = build.scaffold;
  decomp.thresholds = sel.theta;
  decomp.norm = sel.norm;
  decomp.featurizations = used;

  // Inference: extract the scaffold's features for the whole corpus, then
  // stream the pair universe through the decomposition.
  std::vector<std::uint32_t> all_left(left.size());
  std::iota(all_left.begin(), all_left.end(), 0U);
  std::vector<std::uint32_t> all_right(right.size());
  std::iota(all_right.begin(), all_right.end(), 0U);
  for (const auto& f : used) {
    table.ensure_extracted(f, all_left, all_right, &client);
  }

  const std::size_t universe = pair_universe_size(left, right);
  std::vector<PairRef> admitted;
  for (std::size_t flat = 0; flat < universe; ++flat) {
    PairRef pair = pair_from_flat_index(left, right, flat);
    if (decomposition_admits(decomp, table, pair)) admitted.push_back(pair);
  }

  // Certified-precision subsets skip per-pair refinement when the precision
  // target is relaxed; with no usable featurization this silently degrades to
  // full refinement.
  ResultSet pre_accepted;
  std::vector<PrecisionSubset> subsets;
  if (relaxed_precision && !used.empty() && !admitted.empty()) {
    const std::size_t want =
        std::min<std::size_t>(config.k_precision, admitted.size());
    Rng prng(derive_seed(config.seed, 5));
    auto idx = prng.sample_indices(admitted.size(), want);
    std::sort(idx.begin(), idx.end());
    std::vector<std::pair<PairRef, bool>> judged;
    judged.reserve(idx.size());
    for (auto i : idx) {
      judged.emplace_back(admitted[i], run.judge(admitted[i], kPhaseRefinement));
    }
    subsets = precision_subsets(admitted, used, table, judged,
                                spec.precision_target, spec.delta / 2.0);
    for (const auto& s : subsets) {
      for (const auto& p : s.members) pre_accepted.insert(p);
    }
  }

  // Refinement: pre-accepted pairs pass through, everything else is judged.
  out.result = pre_accepted;
  for (const auto& pair : admitted) {
    if (pre_accepted.contains(pair)) continue;
    if (run.judge(pair, kPhaseRefinement)) out.result.insert(pair);
  }

  for (const auto& w : table.warnings()) out.warnings.push_back(w);

  // Phase accounting. Construction is the generator's completion traffic:
  // everything the client completed minus what feature extraction consumed.
  for (const auto& rec : out.judge_log) {
    PhaseCost& pc = rec.phase == kPhaseLabeling ? out.ledger.labeling
                                                : out.ledger.refinement;
    ++pc.calls;
    pc.tokens += rec.tokens;
  }
  const std::size_t complete_calls =
      client.log().complete_calls - base_complete_calls;
  const std::size_t complete_tokens =
      client.log().complete_tokens - base_complete_tokens;
  out.ledger.construction.calls =
      complete_calls >= table.llm_extraction_calls()
          ? complete_calls - table.llm_extraction_calls()
          : 0;
  out.ledger.construction.tokens =
      complete_tokens >= table.llm_extraction_tokens()
          ? complete_tokens - table.llm_extraction_tokens()
          : 0;
  out.ledger.inference.calls =
      table.llm_extraction_calls() + table.embedding_calls();
  out.ledger.inference.tokens =
      table.llm_extraction_tokens() + table.embedding_tokens();

  out.decomposition = decomp;

  const double ratio = cost_ratio(out.ledger, left, right, spec);

  nlohmann::json subsets_json = nlohmann::json::array();
  for (const auto& s : subsets) {
    subsets_json.push_back({{"featurization", s.featurization_id},
                            {"max_distance", s.max_distance},
                            {"members", s.members.size()},
                            {"precision_lower_bound", s.lower_bound},
                            {"labeled", s.labeled},
                            {"labeled_positive", s.labeled_positive}});
  }
  nlohmann::json used_ids = nlohmann::json::array();
  for (const auto& f : used) used_ids.push_back(f.id);

  out.report = nlohmann::json{
      {"targets",
       {{"recall", spec.recall_target},
        {"precision", spec.precision_target},
        {"delta", spec.delta}}},
      {"seed", config.seed},
      {"universe_pairs", universe},
      {"samples",
       {{"generation",
         {{"pairs", gen_sample.pairs.size()},
          {"positives", gen_sample.positives()}}},
        {"threshold",
         {{"pairs", thresh_sample.pairs.size()},
          {"positives", thresh_sample.positives()}}}}},
      {"featurizations",
       {{"proposed", cand.featurizations.size()},
        {"generator_iterations", cand.iterations},
        {"coverage_sufficient", cand.sufficient},
        {"used", used_ids}}},
      {"degenerate", degenerate},
      {"decomposition", decomp.to_json()},
      {"guarantee",
       {{"adjusted_target", json_or_null(sel.t_prime)},
        {"delta1", sel.budget.delta1},
        {"delta2", sel.budget.delta2},
        {"delta3", sel.budget.delta3},
        {"match_count_bounds", {{"lo", sel.bounds.lo}, {"hi", sel.bounds.hi}}},
        {"sample_cost", sel.cost},
        {"admitted_sample_positives", sel.admitted_positives},
        {"admitted_sample_negatives", sel.admitted_negatives}}},
      {"candidates_admitted", admitted.size()},
      {"precision_subsets", subsets_json},
      {"pre_accepted", pre_accepted.size()},
      {"result_size", out.result.size()},
      {"phase_costs", out.ledger.to_json()},
      {"cost_ratio", ratio},
      {"warnings", out.warnings}};

  if (truth_for_metrics != nullptr) {
    // Empty-set conventions: recall of an empty truth set and precision of an
    // empty result are both vacuously 1.
    const double rec = truth_for_metrics->empty()
                           ? 1.0
                           : recall(out.result, *truth_for_metrics);
    const double prec = out.result.empty()
                            ? 1.0
                            : precision(out.result, *truth_for_metrics);
    out.report["metrics"] = {{"recall", rec},
                             {"precision", prec},
                             {"truth_size", truth_for_metrics->size()}};
  }

  return out;
}

ResultSet refine(const ResultSet& candidates, const ResultSet& pre_accepted,
                 LlmClient& client, const JoinSpec& spec, const RecordSet& left,
                 const RecordSet& right) {
  for (const auto& pair : pre_accepted) {
    if (!candidates.contains(pair)) {
      throw std::invalid_argument(
          "pre-accepted pair outside the candidate set");
    }
  }
  ResultSet out;
  for (const auto& pair : candidates) {
    if (pre_accepted.contains(pair)) {
      out.insert(pair);
      continue;
    }
    const Record& l = left.at(pair.left);
    const Record& r = right.at(pair.right);
    std::string prompt = render_join_prompt(spec, l.text, r.text);
    if (judge_with_retry(client, prompt, l.id, r.id)) out.insert(pair);
  }
  return out;
}

std::size_t all_pairs_judge_tokens(const RecordSet& left,
                                   const RecordSet& right, const JoinSpec& spec,
                                   const Tokenizer& tokenizer) {
  const bool self = is_self_join(left, right);
  std::size_t total = 0;
  for (std::size_t i = 0; i < left.size(); ++i) {
    for (std::size_t j = 0; j < right.size(); ++j) {
      if (self && i == j) continue;
      std::string prompt =
          render_join_prompt(spec, left.at(i).text, right.at(j).text);
      total += tokenizer ? tokenizer(prompt) : approx_token_count(prompt);
    }
  }
  return total;
}

double cost_ratio(const CostLedger& ledger, const RecordSet& left,
                  const RecordSet& right, const JoinSpec& spec,
                  const Tokenizer& tokenizer) {
  const std::size_t denom = all_pairs_judge_tokens(left, right, spec, tokenizer);
  if (denom == 0) {
    throw std::invalid_argument("all-pairs judge cost is zero");
  }
  return static_cast<double>(ledger.total_tokens()) /
         static_cast<double>(denom);
}

CascadeResult optimal_cascade_baseline(const RecordSet& left,
                                       const RecordSet& right,
                                       const ResultSet& truth,
                                       EmbeddingProvider& provider,
                                       double recall_target,
                                       const JoinSpec& spec) {
  if (!(recall_target >= 0.0 && recall_target <= 1.0)) {
    throw std::invalid_argument("recall target must be in [0, 1]");
  }
  const std::size_t universe = pair_universe_size(left, right);
  if (universe == 0) {
    throw std::invalid_argument("pair universe is empty");
  }

  CascadeResult res;
  const bool self = is_self_join(left, right);
  auto embed_all = [&](const RecordSet& rs) {
    std::vector<std::string> texts;
    texts.reserve(rs.size());
    for (const auto& rec : rs) {
      texts.push_back(rec.text);
      res.embedding_tokens += provider.token_count(rec.text);
    }
    return provider.embed(texts);
  };
  std::vector<std::vector<double>> left_vecs = embed_all(left);
  std::vector<std::vector<double>> right_vecs =
      self ? left_vecs : embed_all(right);

  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  };

  std::vector<double> sims(universe);
  std::vector<std::uint8_t> is_pos(universe);
  for (std::size_t flat = 0; flat < universe; ++flat) {
    PairRef pair = pair_from_flat_index(left, right, flat);
    sims[flat] = dot(left_vecs[pair.left], right_vecs[pair.right]);
    is_pos[flat] = truth.contains(pair) ? 1 : 0;
  }

  // Reject-below threshold: with full truth the most aggressive cut keeps all
  // but the floor((1-T) * |truth|) lowest-similarity matches.
  std::vector<double> pos_sims;
  for (std::size_t flat = 0; flat < universe; ++flat) {
    if (is_pos[flat]) pos_sims.push_back(sims[flat]);
  }
  std::sort(pos_sims.begin(), pos_sims.end());
  const auto allowed = static_cast<std::size_t>(
      std::floor((1.0 - recall_target) * static_cast<double>(pos_sims.size()) +
                 1e-9));
  res.reject_below = allowed < pos_sims.size()
                         ? pos_sims[allowed]
                         : std::numeric_limits<double>::infinity();

  // Accept-above threshold: anything strictly above the highest non-match
  // similarity is a match, so accepting it unjudged keeps precision 1.
  double max_neg = -std::numeric_limits<double>::infinity();
  for (std::size_t flat = 0; flat < universe; ++flat) {
    if (!is_pos[flat]) max_neg = std::max(max_neg, sims[flat]);
  }
  res.accept_above = max_neg;

  for (std::size_t flat = 0; flat < universe; ++flat) {
    PairRef pair = pair_from_flat_index(left, right, flat);
    if (sims[flat] < res.reject_below) {
      ++res.pruned;
    } else if (sims[flat] > res.accept_above) {
      ++res.auto_accepted;
      res.result.insert(pair);
    } else {
      ++res.judged_pairs;
      std::string prompt = render_join_prompt(spec, left.at(pair.left).text,
                                              right.at(pair.right).text);
      res.judge_tokens += approx_token_count(prompt);
      if (is_pos[flat]) res.result.insert(pair);
    }
  }

  CostLedger ledger;
  ledger.inference.tokens = res.embedding_tokens;
  ledger.inference.calls = left.size() + (self ? 0 : right.size());
  ledger.refinement.tokens = res.judge_tokens;
  ledger.refinement.calls = res.judged_pairs;
  res.cost_ratio = cost_ratio(ledger, left, right, spec);
  res.recall = truth.empty() ? 1.0 : recall(res.result, truth);
  res.precision = res.result.empty() ? 1.0 : precision(res.result, truth);
  return res;
}

}  // namespace fdj
