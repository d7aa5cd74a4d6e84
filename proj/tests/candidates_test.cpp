#include "fdj/candidates.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace fdj {
namespace {

RecordSet numbers(Side side, std::vector<std::string> texts,
                  const std::string& prefix) {
  std::vector<Record> recs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    recs.push_back({prefix + std::to_string(i), std::move(texts[i])});
  }
  return RecordSet(std::move(recs), side);
}

Featurization first_number_feature(const std::string& id) {
  Featurization f;
  f.id = id;
  f.kind = DistanceKind::arithmetic;
  f.left = ExtractorSpec::code("numeric_capture", {{"index", 0}});
  f.right = ExtractorSpec::code("numeric_capture", {{"index", 0}});
  f.description = "first number in the text";
  return f;
}

Featurization overlap_feature(const std::string& id) {
  Featurization f;
  f.id = id;
  f.kind = DistanceKind::word_overlap;
  f.description = "whole-text token overlap";
  return f;
}

// Independent recount of cost_to_cover straight from its definition: the
// best featurization's number of negatives at distance <= the positive's own.
double recount_cost(const std::vector<Featurization>& phis, FeatureTable& table,
                    PairRef pos, const std::vector<PairRef>& negs) {
  if (phis.empty()) return kInf;
  double best = kInf;
  for (const auto& phi : phis) {
    double dp = table.pair_distance(phi, pos);
    double c = 0;
    for (const auto& n : negs) {
      if (table.pair_distance(phi, n) <= dp) ++c;
    }
    best = std::min(best, c);
  }
  return best;
}

struct Fixture {
  RecordSet L = numbers(Side::left, {"10 ax", "11 bx", "50 cx"}, "l");
  RecordSet R = numbers(Side::right, {"10 ay", "12 by", "99 cy"}, "r");
  FeatureTable table{&L, &R};
  std::vector<PairRef> positives = {{0, 0}, {1, 1}};
  std::vector<PairRef> negatives = {{2, 2}, {0, 2}, {2, 0}};

  void extract(const std::vector<Featurization>& phis) {
    std::vector<PairRef> all = positives;
    all.insert(all.end(), negatives.begin(), negatives.end());
    for (const auto& phi : phis) table.ensure_extracted_pairs(phi, all);
  }
};

TEST(CostToCoverTest, MatchesDefinitionRecountOnHandData) {
  Fixture fx;
  std::vector<Featurization> phis = {first_number_feature("num"),
                                     overlap_feature("overlap")};
  fx.extract(phis);

  EXPECT_EQ(cost_to_cover({}, fx.table, fx.positives[0], fx.negatives), kInf);
  for (const auto& pos : fx.positives) {
    EXPECT_DOUBLE_EQ(cost_to_cover(phis, fx.table, pos, fx.negatives),
                     recount_cost(phis, fx.table, pos, fx.negatives));
  }
  // The numeric featurization separates (0,0) (distance 0) from every
  // negative (distances 89, 89, 40), so the best cost is 0.
  EXPECT_DOUBLE_EQ(cost_to_cover(phis, fx.table, {0, 0}, fx.negatives), 0.0);
  // A hopeless positive: (2, 2) as a "match" has numeric distance 49 but so
  // does no negative; recount confirms whatever the minimum over phis is.
  PairRef hard{2, 1};
  fx.table.ensure_extracted_pairs(phis[0], {hard});
  fx.table.ensure_extracted_pairs(phis[1], {hard});
  EXPECT_DOUBLE_EQ(cost_to_cover(phis, fx.table, hard, fx.negatives),
                   recount_cost(phis, fx.table, hard, fx.negatives));
}

TEST(EvaluateAndPickTest, SufficientWhenEveryMatchIsSeparated) {
  Fixture fx;
  std::vector<Featurization> phis = {first_number_feature("num")};
  fx.extract(phis);
  // Costs: (0,0) -> 0, (1,1) -> 0 (distance 1 < all negative distances).
  PickResult pick = evaluate_and_pick(phis, fx.table, fx.positives,
                                      fx.negatives, 10, 1.0, 5);
  EXPECT_TRUE(pick.sufficient);
  EXPECT_DOUBLE_EQ(pick.max_cost, 0.0);
  EXPECT_TRUE(pick.positives.empty());
  EXPECT_TRUE(pick.negatives.empty());
}

TEST(EvaluateAndPickTest, PicksHardestMatchesAndWitnessNegatives) {
  Fixture fx;
  // Positive (2,1): |50-12| = 38; negative (2,0) has |50-10| = 40 > 38, but
  // (0,2) and (2,2) have 89 and 49, so cost((2,1)) counts negatives <= 38: 0?
  // Use overlap only, where shared suffix letters make negatives close.
  std::vector<Featurization> phis = {overlap_feature("overlap")};
  std::vector<PairRef> positives = {{0, 0}, {1, 1}};
  std::vector<PairRef> negatives = {{0, 1}, {1, 0}, {2, 2}};
  FeatureTable& table = fx.table;
  for (const auto& phi : phis) {
    std::vector<PairRef> all = positives;
    all.insert(all.end(), negatives.begin(), negatives.end());
    table.ensure_extracted_pairs(phi, all);
  }
  // Overlap distances: (0,0) shares "10" -> 2/3; (1,1) is disjoint -> 1;
  // all negatives are disjoint -> 1. So (0,0) costs 0 and (1,1) costs 3.
  PickResult pick =
      evaluate_and_pick(phis, table, positives, negatives, 2, 1.0, 5);
  EXPECT_FALSE(pick.sufficient);
  EXPECT_DOUBLE_EQ(pick.max_cost, 3.0);
  ASSERT_EQ(pick.positives.size(), 1U);  // beta/2 = 1 hardest match
  EXPECT_EQ(pick.positives[0], (PairRef{1, 1}));
  ASSERT_EQ(pick.negatives.size(), 1U);  // witnesses downsampled to beta/2
  // Every returned witness must actually defeat a chosen match.
  for (const auto& neg : pick.negatives) {
    bool defeats = false;
    for (const auto& pos : pick.positives) {
      for (const auto& phi : phis) {
        defeats |= table.pair_distance(phi, neg) <=
                   table.pair_distance(phi, pos);
      }
    }
    EXPECT_TRUE(defeats);
  }
}

LabeledSample make_sample(std::vector<PairRef> pos, std::vector<PairRef> neg,
                          std::uint64_t seed) {
  LabeledSample s;
  s.seed = seed;
  for (const auto& p : pos) {
    s.pairs.push_back(p);
    s.labels.push_back(1);
  }
  for (const auto& n : neg) {
    s.pairs.push_back(n);
    s.labels.push_back(0);
  }
  return s;
}

TEST(GenerationLoopTest, StopsAsSoonAsTheCandidateSetIsSufficient) {
  Fixture fx;
  LabeledSample sample = make_sample(fx.positives, fx.negatives, 3);
  ScriptedGenerator gen({{first_number_feature("num")},
                         {overlap_feature("never-reached")}});
  CandidateGenConfig cfg;
  auto result =
      get_candidate_featurizations(sample, fx.table, "match? {l} {r}", gen,
                                   nullptr, cfg);
  EXPECT_TRUE(result.sufficient);
  EXPECT_EQ(result.iterations, 1U);
  ASSERT_EQ(result.featurizations.size(), 1U);
  EXPECT_EQ(result.featurizations[0].id, "num");
  EXPECT_TRUE(result.warnings.empty());
}

TEST(GenerationLoopTest, DeduplicatesByIdAndByStructure) {
  Fixture fx;
  LabeledSample sample = make_sample(fx.positives, fx.negatives, 3);
  Featurization same_structure = first_number_feature("different-id");
  ScriptedGenerator gen({{first_number_feature("num"),
                          first_number_feature("num"),  // repeated id
                          same_structure}});            // repeated structure
  CandidateGenConfig cfg;
  auto result = get_candidate_featurizations(sample, fx.table, "p {l} {r}",
                                             gen, nullptr, cfg);
  ASSERT_EQ(result.featurizations.size(), 1U);
  EXPECT_EQ(result.featurizations[0].id, "num");
}

TEST(GenerationLoopTest, TwoEmptyBatchesInARowStopWithWarning) {
  Fixture fx;
  // (1,1) has no token overlap, same as both negatives, so overlap alone
  // cannot separate it and the loop keeps asking.
  LabeledSample sample = make_sample({{1, 1}}, {{0, 1}, {1, 0}}, 3);
  ScriptedGenerator gen({{overlap_feature("overlap")}});  // then empties
  CandidateGenConfig cfg;
  cfg.max_iter = 8;
  auto result = get_candidate_featurizations(sample, fx.table, "p {l} {r}",
                                             gen, nullptr, cfg);
  EXPECT_FALSE(result.sufficient);
  EXPECT_EQ(result.featurizations.size(), 1U);
  // One productive round, then two empty rounds trigger the stall stop.
  EXPECT_EQ(result.iterations, 3U);
  ASSERT_EQ(result.warnings.size(), 1U);
  EXPECT_NE(result.warnings[0].find("twice in a row"), std::string::npos);
}

TEST(GenerationLoopTest, RoundBudgetCapsIterations) {
  Fixture fx;
  LabeledSample sample = make_sample({{0, 0}}, {{0, 1}, {1, 0}}, 3);
  // Every round proposes a new insufficient featurization (fresh ids and
  // structures via distinct token_at params).
  std::deque<std::vector<Featurization>> playbook;
  for (int i = 0; i < 6; ++i) {
    Featurization f;
    f.id = "weak-" + std::to_string(i);
    f.kind = DistanceKind::word_overlap;
    f.left = ExtractorSpec::code("token_at", {{"index", i + 10}});
    f.right = ExtractorSpec::code("token_at", {{"index", i + 10}});
    playbook.push_back({f});
  }
  ScriptedGenerator gen(std::move(playbook));
  CandidateGenConfig cfg;
  cfg.max_iter = 3;
  auto result = get_candidate_featurizations(sample, fx.table, "p {l} {r}",
                                             gen, nullptr, cfg);
  EXPECT_FALSE(result.sufficient);
  EXPECT_EQ(result.iterations, 3U);
  EXPECT_EQ(result.featurizations.size(), 3U);
}

TEST(RenderBlocksTest, ExamplesAndExistingBlocksAreHumanReadable) {
  GenExample ex;
  ex.pair = {0, 0};
  ex.label = true;
  ex.left_text = "Alice";
  ex.right_text = "A. Smith";
  ex.feature_values["year"] = {"1984", "1985"};
  GenExample neg = ex;
  neg.label = false;

  std::string block = render_examples_block({ex, neg});
  EXPECT_NE(block.find("Example 1 (MATCH)"), std::string::npos);
  EXPECT_NE(block.find("Example 2 (NOT A MATCH)"), std::string::npos);
  EXPECT_NE(block.find("left: Alice"), std::string::npos);
  EXPECT_NE(block.find("year: left=1984, right=1985"), std::string::npos);
  EXPECT_EQ(render_examples_block({}), "(no examples)\n");

  Featurization f = first_number_feature("num");
  std::string existing = render_existing_block({f});
  EXPECT_NE(existing.find("first number in the text"), std::string::npos);
  EXPECT_NE(existing.find("[arithmetic]"), std::string::npos);
  EXPECT_EQ(render_existing_block({}), "(none yet)\n");
}

class LlmGeneratorTest : public ::testing::Test {
 protected:
  std::vector<Featurization> run(ScriptedLlmClient& client) {
    LlmGenerator gen(&client, PromptPack::builtin());
    GenExample ex;
    ex.left_text = "Alice b.1984";
    ex.right_text = "Alice Smith, born 1984";
    ex.label = true;
    return gen.generate({ex}, "same person? {l} vs {r}", {});
  }
};

TEST_F(LlmGeneratorTest, BuildsFeaturizationThroughAllStages) {
  ScriptedLlmClient client;
  client.enqueue_completion(R"(["compare birth years"])");  // descriptions
  client.enqueue_completion("the left birth year");         // left column
  client.enqueue_completion("infer");                       // left mode
  client.enqueue_completion(
      R"({"prompt": "Year in: {text}", "output": "number"})");
  client.enqueue_completion("the right birth year");        // right column
  client.enqueue_completion("extract");                     // right mode
  client.enqueue_completion(
      R"({"name": "numeric_capture", "params": {"index": 0}})");
  client.enqueue_completion("arithmetic_similarity");       // distance

  auto out = run(client);
  ASSERT_EQ(out.size(), 1U);
  EXPECT_EQ(out[0].id, "gen-1-1");
  EXPECT_EQ(out[0].kind, DistanceKind::arithmetic);
  EXPECT_EQ(out[0].description, "compare birth years");
  ASSERT_TRUE(out[0].left.is_llm());
  EXPECT_EQ(out[0].left.as_llm().prompt, "Year in: {text}");
  EXPECT_EQ(out[0].left.as_llm().output, OutputType::number);
  ASSERT_TRUE(out[0].right.is_code());
  EXPECT_EQ(out[0].right.as_code().name, "numeric_capture");
  EXPECT_EQ(client.completions_left(), 0U);
  // The description prompt carried the join condition and the examples.
  EXPECT_NE(client.prompts_seen()[0].find("same person? {l} vs {r}"),
            std::string::npos);
  EXPECT_NE(client.prompts_seen()[0].find("Alice b.1984"), std::string::npos);
}

TEST_F(LlmGeneratorTest, MalformedStageDropsOnlyThatDescription) {
  ScriptedLlmClient client;
  client.enqueue_completion(R"(["broken one", "good one"])");
  // First description: extraction mode answer is unusable -> dropped.
  client.enqueue_completion("left col");
  client.enqueue_completion("just vibes");
  // Second description flows through code extractors on both sides.
  client.enqueue_completion("left words");
  client.enqueue_completion("extract");
  client.enqueue_completion(R"({"name": "full_text"})");
  client.enqueue_completion("right words");
  client.enqueue_completion("extract");
  client.enqueue_completion(R"({"name": "full_text"})");
  client.enqueue_completion("word_overlap_similarity");

  auto out = run(client);
  ASSERT_EQ(out.size(), 1U);
  EXPECT_EQ(out[0].description, "good one");
  EXPECT_EQ(out[0].kind, DistanceKind::word_overlap);
  EXPECT_EQ(out[0].id, "gen-1-2");  // index counts attempted descriptions
}

TEST_F(LlmGeneratorTest, RejectsUnknownExtractorNamesAndDistances) {
  ScriptedLlmClient client;
  client.enqueue_completion(R"(["weird extractor", "weird distance"])");
  client.enqueue_completion("col");
  client.enqueue_completion("extract");
  client.enqueue_completion(R"({"name": "made_up_extractor"})");
  client.enqueue_completion("col");
  client.enqueue_completion("extract");
  client.enqueue_completion(R"({"name": "full_text"})");
  client.enqueue_completion("col");
  client.enqueue_completion("extract");
  client.enqueue_completion(R"({"name": "full_text"})");
  client.enqueue_completion("euclidean_vibes");

  auto out = run(client);
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(client.completions_left(), 0U);
}

TEST_F(LlmGeneratorTest, NonArrayDescriptionsYieldEmptyBatch) {
  ScriptedLlmClient client;
  client.enqueue_completion("I refuse to answer in JSON");
  auto out = run(client);
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(client.completions_left(), 0U);

  // Code fences around the JSON are tolerated.
  ScriptedLlmClient fenced;
  fenced.enqueue_completion("```json\n[]\n```");
  LlmGenerator gen(&fenced, PromptPack::builtin());
  EXPECT_TRUE(gen.generate({}, "p {l} {r}", {}).empty());
  EXPECT_EQ(fenced.completions_left(), 0U);
}

}  // namespace
}  // namespace fdj
