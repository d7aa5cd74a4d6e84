#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "fdj/core.hpp"
#include "fdj/extraction.hpp"
#include "fdj/prompt_pack.hpp"

namespace fdj {

struct CandidateGenConfig {
  std::size_t max_iter = 8;
  std::size_t beta = 10;  // examples shown per round (half matches, half not)
  // Coverage threshold: candidate set is sufficient when every sampled match
  // is separated from all but fewer than alpha sampled non-matches by some
  // featurization. Negative means auto: max(1, ceil(0.02 * #non-matches)).
  double alpha = -1.0;
};

// One labeled sample pair rendered for the generator prompt, including the
// current featurizations' extracted values on both sides.
struct GenExample {
  PairRef pair;
  bool label = false;
  std::string left_text;
  std::string right_text;
  // featurization id -> (left value, right value), display form.
  std::map<std::string, std::pair<std::string, std::string>> feature_values;
};

class FeaturizationGenerator {
 public:
  virtual ~FeaturizationGenerator() = default;
  // Proposes new featurizations given labeled examples, the join condition,
  // and what already exists. May return an empty batch.
  virtual std::vector<Featurization> generate(
      const std::vector<GenExample>& examples, const std::string& join_prompt,
      const std::vector<Featurization>& existing) = 0;
  virtual std::string name() const = 0;
};

// Replays a fixed sequence of batches; exhausted playbooks yield empty
// batches. Used for tests and the offline benchmark.
class ScriptedGenerator : public FeaturizationGenerator {
 public:
  explicit ScriptedGenerator(std::deque<std::vector<Featurization>> playbook)
      : playbook_(std::move(playbook)) {}

  std::vector<Featurization> generate(
      const std::vector<GenExample>& examples, const std::string& join_prompt,
      const std::vector<Featurization>& existing) override;
  std::string name() const override { return "scripted"; }

 private:
  std::deque<std::vector<Featurization>> playbook_;
};

// Drives an LLM through the staged prompts (descriptions, per-side column
// features, extraction mode, extractor synthesis, distance choice). Any
// malformed stage response drops only the affected description.
class LlmGenerator : public FeaturizationGenerator {
 public:
  LlmGenerator(LlmClient* client, PromptPack prompts)
      : client_(client), prompts_(std::move(prompts)) {}

  std::vector<Featurization> generate(
      const std::vector<GenExample>& examples, const std::string& join_prompt,
      const std::vector<Featurization>& existing) override;
  std::string name() const override { return "llm"; }

 private:
  LlmClient* client_;
  PromptPack prompts_;
  std::size_t iteration_ = 0;  // for generated ids
};

// "How hard is this match to keep": the best featurization's count of sampled
// non-matches at distance <= the match's own distance. +infinity when no
// featurizations exist. Raw (unnormalized) distances.
double cost_to_cover(const std::vector<Featurization>& phis,
                     FeatureTable& table, PairRef positive,
                     const std::vector<PairRef>& negatives);

struct PickResult {
  bool sufficient = false;
  double max_cost = 0.0;
  std::vector<PairRef> positives;  // worst-covered matches, at most beta/2
  std::vector<PairRef> negatives;  // witnesses for them, at most beta/2
};

// Checks sufficiency of the candidate set on the labeled sample and, when
// insufficient, picks the hardest matches plus non-matches that defeat them
// for the next generator round.
PickResult evaluate_and_pick(const std::vector<Featurization>& phis,
                             FeatureTable& table,
                             const std::vector<PairRef>& positives,
                             const std::vector<PairRef>& negatives,
                             std::size_t beta, double alpha,
                             std::uint64_t seed);

struct CandidateGenResult {
  std::vector<Featurization> featurizations;
  std::size_t iterations = 0;
  bool sufficient = false;
  std::vector<std::string> warnings;
};

// Full generation loop: seed examples from the labeled sample, alternately
// propose featurizations and re-evaluate coverage, until the set is
// sufficient, the round budget is spent, or the generator stalls (two empty
// batches in a row).
CandidateGenResult get_candidate_featurizations(const LabeledSample& sample,
                                                FeatureTable& table,
                                                const std::string& join_prompt,
                                                FeaturizationGenerator& gen,
                                                LlmClient* client,
                                                const CandidateGenConfig& cfg);

// Prompt-block renderings shared by the LLM generator and its tests.
std::string render_examples_block(const std::vector<GenExample>& examples);
std::string render_existing_block(const std::vector<Featurization>& existing);

}  // namespace fdj
