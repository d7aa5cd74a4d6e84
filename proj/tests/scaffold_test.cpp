#include "fdj/scaffold.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace fdj {
namespace {

// ---------------------------------------------------------------------------
// Brute-force oracle for the exact threshold search: enumerate the full
// cartesian product of per-clause candidate thresholds (every value the
// clause takes on a match, plus +infinity) and apply the documented
// preference order (cost, then admitted count, then lexicographic theta).
// ---------------------------------------------------------------------------

struct BruteResult {
  ThresholdVector theta;
  double cost = 0.0;
  std::size_t admitted_pos = 0;
  std::size_t admitted_neg = 0;
  bool found = false;
};

BruteResult brute_force_min_cost(
    const std::vector<std::vector<double>>& clause_values,
    const std::vector<std::uint8_t>& labels, double recall_target) {
  const std::size_t R = clause_values.size();
  const std::size_t P = labels.size();
  std::size_t k_plus = 0;
  for (auto l : labels) k_plus += l ? 1 : 0;
  const long long need =
      std::max<long long>(0, ceil_guard(recall_target * double(k_plus)));

  std::vector<std::vector<double>> grids(R);
  for (std::size_t c = 0; c < R; ++c) {
    grids[c].push_back(kInf);
    for (std::size_t p = 0; p < P; ++p) {
      if (labels[p]) grids[c].push_back(clause_values[c][p]);
    }
    std::sort(grids[c].begin(), grids[c].end());
    grids[c].erase(std::unique(grids[c].begin(), grids[c].end()),
                   grids[c].end());
  }

  BruteResult best;
  ThresholdVector theta(R, kInf);
  std::vector<std::size_t> pick(R, 0);
  while (true) {
    for (std::size_t c = 0; c < R; ++c) theta[c] = grids[c][pick[c]];
    std::size_t adm_pos = 0, adm_neg = 0;
    for (std::size_t p = 0; p < P; ++p) {
      bool admitted = true;
      for (std::size_t c = 0; c < R && admitted; ++c) {
        admitted = clause_values[c][p] <= theta[c];
      }
      if (!admitted) continue;
      (labels[p] ? adm_pos : adm_neg) += 1;
    }
    if (static_cast<long long>(adm_pos) >= need) {
      const std::size_t adm = adm_pos + adm_neg;
      const double cost = adm == 0 ? 0.0 : double(adm_neg) / double(adm);
      bool better = !best.found;
      if (!better && cost != best.cost) better = cost < best.cost;
      if (!better && cost == best.cost) {
        const std::size_t bt = best.admitted_pos + best.admitted_neg;
        if (adm != bt) {
          better = adm < bt;
        } else {
          better = std::lexicographical_compare(theta.begin(), theta.end(),
                                                best.theta.begin(),
                                                best.theta.end());
        }
      }
      if (better) {
        best = BruteResult{theta, cost, adm_pos, adm_neg, true};
      }
    }
    // Advance the mixed-radix counter.
    std::size_t c = 0;
    while (c < R && ++pick[c] == grids[c].size()) pick[c++] = 0;
    if (c == R) break;
    if (R == 0) break;
  }
  return best;
}

TEST(CeilGuardTest, NeverRoundsTrueIntegersUp) {
  EXPECT_EQ(ceil_guard(8.0), 8);
  EXPECT_EQ(ceil_guard(0.8 * 10.0), 8);  // 7.9999999999999991 in doubles
  EXPECT_EQ(ceil_guard(7.2), 8);
  EXPECT_EQ(ceil_guard(-1.5), -1);
  EXPECT_EQ(ceil_guard(0.0), 0);
  EXPECT_EQ(ceil_guard(1e-12), 0);  // within the guard band of 0
}

TEST(ScaffoldJsonTest, RoundTripsAndMembershipQueries) {
  LogicalScaffold s;
  s.clauses.push_back({{"a", "b"}});
  s.clauses.push_back({{"c"}});
  LogicalScaffold back = LogicalScaffold::from_json(s.to_json());
  ASSERT_EQ(back.clauses.size(), 2U);
  EXPECT_EQ(back.clauses[0].featurization_ids,
            (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(back.contains("c"));
  EXPECT_FALSE(back.contains("d"));
  EXPECT_TRUE(back.clause_contains(0, "b"));
  EXPECT_FALSE(back.clause_contains(1, "b"));
  EXPECT_FALSE(LogicalScaffold{}.contains("a"));
}

Featurization numeric_feature(const std::string& id) {
  Featurization f;
  f.id = id;
  f.kind = DistanceKind::arithmetic;
  f.left = ExtractorSpec::code("numeric_capture", {{"index", 0}});
  f.right = ExtractorSpec::code("numeric_capture", {{"index", 0}});
  return f;
}

TEST(DecompositionJsonTest, RoundTripsIncludingInfiniteThresholds) {
  FeaturizedDecomposition d;
  d.scaffold.clauses.push_back({{"num"}});
  d.scaffold.clauses.push_back({{"num", "other"}});
  d.thresholds = {0.25, kInf};
  d.norm["num"] = {1.0, 9.0};
  d.norm["other"] = {0.0, 0.0};
  d.featurizations = {numeric_feature("num"), numeric_feature("other")};

  nlohmann::json j = d.to_json();
  EXPECT_EQ(j["thresholds"][1], "inf");  // JSON has no infinity literal

  FeaturizedDecomposition back = FeaturizedDecomposition::from_json(j);
  ASSERT_EQ(back.thresholds.size(), 2U);
  EXPECT_DOUBLE_EQ(back.thresholds[0], 0.25);
  EXPECT_TRUE(std::isinf(back.thresholds[1]));
  EXPECT_DOUBLE_EQ(back.norm.at("num").max, 9.0);
  ASSERT_EQ(back.featurizations.size(), 2U);
  EXPECT_EQ(back.featurizations[0].id, "num");
  EXPECT_EQ(back.scaffold.clauses[1].featurization_ids.size(), 2U);
}

RecordSet number_records(Side side, std::vector<std::string> texts,
                         const std::string& prefix) {
  std::vector<Record> recs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    recs.push_back({prefix + std::to_string(i), std::move(texts[i])});
  }
  return RecordSet(std::move(recs), side);
}

TEST(ClauseValueMatrixTest, MinReducesClausesAndEmptyClauseIsInfinite) {
  RecordSet L = number_records(Side::left, {"10", "no digits"}, "l");
  RecordSet R = number_records(Side::right, {"13"}, "r");
  FeatureTable table(&L, &R);
  std::vector<Featurization> pool = {numeric_feature("near"),
                                     numeric_feature("far")};
  // Make "far" structurally distinct and always missing on the left.
  pool[1].left = ExtractorSpec::code("token_at", {{"index", 7}});
  std::vector<PairRef> pairs = {{0, 0}, {1, 0}};
  for (const auto& f : pool) table.ensure_extracted_pairs(f, pairs);

  // Identity normalization so raw distances flow through.
  NormMap norm;
  norm["near"] = {0.0, 1.0};
  norm["far"] = {0.0, 1.0};

  LogicalScaffold s;
  s.clauses.push_back({{"near", "far"}});
  s.clauses.push_back({{}});
  auto m = clause_value_matrix(s, pool, table, norm, pairs);
  ASSERT_EQ(m.size(), 2U);
  ASSERT_EQ(m[0].size(), 2U);
  EXPECT_DOUBLE_EQ(m[0][0], 3.0);   // min(|10-13|, inf)
  EXPECT_TRUE(std::isinf(m[0][1]));  // both featurizations missing
  EXPECT_TRUE(std::isinf(m[1][0]));  // empty clause
}

TEST(MinCostThresholdMatrixTest, HandInstanceHasKnownOptimum) {
  // One clause. Matches at 1, 2, 5; non-matches at 3, 4, 6.
  std::vector<std::vector<double>> cv = {{1, 2, 5, 3, 4, 6}};
  std::vector<std::uint8_t> labels = {1, 1, 1, 0, 0, 0};
  // Full recall forces theta = 5 (admits 2 non-matches).
  MinCostResult full = min_cost_threshold_matrix(cv, labels, 1.0);
  EXPECT_DOUBLE_EQ(full.theta[0], 5.0);
  EXPECT_EQ(full.admitted_positives, 3U);
  EXPECT_EQ(full.admitted_negatives, 2U);
  EXPECT_DOUBLE_EQ(full.cost, 0.4);
  // Allowing one miss lets theta drop to 2 and reject every non-match.
  MinCostResult relaxed = min_cost_threshold_matrix(cv, labels, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(relaxed.theta[0], 2.0);
  EXPECT_EQ(relaxed.admitted_positives, 2U);
  EXPECT_EQ(relaxed.admitted_negatives, 0U);
  EXPECT_DOUBLE_EQ(relaxed.cost, 0.0);
}

TEST(MinCostThresholdMatrixTest, AgreesWithBruteForceOnRandomInstances) {
  std::mt19937_64 rng(20260815);
  std::uniform_int_distribution<int> n_clauses(1, 3);
  std::uniform_int_distribution<int> n_pos(1, 6);
  std::uniform_int_distribution<int> n_neg(0, 8);
  // Small discrete value set forces ties; occasional infinities.
  std::uniform_int_distribution<int> value(0, 6);
  std::uniform_real_distribution<double> target(0.3, 1.0);
  std::bernoulli_distribution make_inf(0.1);

  for (int trial = 0; trial < 150; ++trial) {
    const int R = n_clauses(rng);
    const int P = n_pos(rng) + n_neg(rng);
    std::vector<std::uint8_t> labels;
    {
      std::uniform_int_distribution<int> again_pos(1, 6);
      int pos = again_pos(rng);
      for (int p = 0; p < P; ++p) labels.push_back(p < pos ? 1 : 0);
    }
    std::vector<std::vector<double>> cv(R, std::vector<double>(P));
    for (auto& row : cv) {
      for (auto& v : row) {
        v = make_inf(rng) ? kInf : static_cast<double>(value(rng)) / 6.0;
      }
    }
    const double T = target(rng);

    MinCostResult got = min_cost_threshold_matrix(cv, labels, T);
    BruteResult want = brute_force_min_cost(cv, labels, T);
    ASSERT_TRUE(want.found) << "trial " << trial;
    EXPECT_DOUBLE_EQ(got.cost, want.cost) << "trial " << trial;
    EXPECT_EQ(got.admitted_positives, want.admitted_pos) << "trial " << trial;
    EXPECT_EQ(got.admitted_negatives, want.admitted_neg) << "trial " << trial;
    EXPECT_EQ(got.theta, want.theta) << "trial " << trial;

    // Recount the admitted sets straight from the returned thresholds.
    std::size_t adm_pos = 0, adm_neg = 0;
    for (int p = 0; p < P; ++p) {
      bool admitted = true;
      for (int c = 0; c < R && admitted; ++c) {
        admitted = cv[c][p] <= got.theta[c];
      }
      if (admitted) (labels[p] ? adm_pos : adm_neg) += 1;
    }
    EXPECT_EQ(adm_pos, got.admitted_positives) << "trial " << trial;
    EXPECT_EQ(adm_neg, got.admitted_negatives) << "trial " << trial;
  }
}

TEST(MinCostThresholdMatrixTest, EmptyMatrixAdmitsEverything) {
  MinCostResult r = min_cost_threshold_matrix({}, {1, 0, 0}, 0.9);
  EXPECT_TRUE(r.theta.empty());
  EXPECT_EQ(r.admitted_positives, 1U);
  EXPECT_EQ(r.admitted_negatives, 2U);
  EXPECT_DOUBLE_EQ(r.cost, 2.0 / 3.0);
}

TEST(SampleStatsTest, CountsAdmittedByLabel) {
  std::vector<std::uint8_t> admitted = {1, 0, 1, 1, 0};
  std::vector<std::uint8_t> labels = {1, 1, 0, 1, 0};
  SampleStats s = sample_stats(admitted, labels);
  EXPECT_EQ(s.admitted_pos, 2U);
  EXPECT_EQ(s.admitted_neg, 1U);
  EXPECT_DOUBLE_EQ(s.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.cost, 1.0 / 3.0);

  SampleStats empty = sample_stats({0, 0}, {1, 0});
  EXPECT_DOUBLE_EQ(empty.cost, 0.0);
  EXPECT_DOUBLE_EQ(empty.recall, 0.0);
  SampleStats no_pos = sample_stats({1}, {0});
  EXPECT_DOUBLE_EQ(no_pos.recall, 1.0);  // no matches to lose
  EXPECT_THROW(sample_stats({1}, {1, 0}), std::invalid_argument);
}

TEST(GreedyBuildMatrixTest, PerfectFeatureNeedsOneStep) {
  // Feature "good" separates cleanly; "noise" does not.
  std::vector<std::vector<double>> values = {
      {0.0, 0.1, 0.9, 1.0},  // good: matches low, non-matches high
      {0.5, 0.5, 0.5, 0.5},  // noise: constant
  };
  std::vector<std::string> ids = {"good", "noise"};
  std::vector<std::uint8_t> labels = {1, 1, 0, 0};
  BuildResult r = greedy_build_matrix(values, ids, labels, 1.0, 0.05);
  EXPECT_DOUBLE_EQ(r.initial_cost, 0.5);
  EXPECT_DOUBLE_EQ(r.final_cost, 0.0);
  ASSERT_EQ(r.steps.size(), 1U);
  EXPECT_EQ(r.steps[0].phase, 1);
  EXPECT_EQ(r.steps[0].featurization_id, "good");
  ASSERT_EQ(r.scaffold.clauses.size(), 1U);
  EXPECT_EQ(r.scaffold.clauses[0].featurization_ids,
            (std::vector<std::string>{"good"}));
  ASSERT_EQ(r.thresholds.size(), 1U);
  // Norm is stored for the used featurization only.
  EXPECT_EQ(r.norm.count("good"), 1U);
  EXPECT_EQ(r.norm.count("noise"), 0U);
}

TEST(GreedyBuildMatrixTest, NoStepWhenNothingBeatsGamma) {
  std::vector<std::vector<double>> values = {{0.3, 0.3, 0.3, 0.3}};
  std::vector<std::uint8_t> labels = {1, 1, 0, 0};
  BuildResult r = greedy_build_matrix(values, {"flat"}, labels, 0.9, 0.05);
  EXPECT_TRUE(r.scaffold.empty());
  EXPECT_TRUE(r.steps.empty());
  EXPECT_DOUBLE_EQ(r.final_cost, r.initial_cost);
}

TEST(GreedyBuildMatrixTest, TraceOnHandInstanceAddsClausesThenDisjunct) {
  // Ten pairs: matches p0..p4, non-matches p5..p9. Four featurizations where
  // the first is a decent but leaky start, the second tightens it as a second
  // conjunctive clause, and the third only helps as a disjunct that rescues
  // the match the first clause had to pay for.
  std::vector<std::vector<double>> values = {
      /*f1*/ {1, 2, 3, 5, 9, 4, 5, 8, 9, 10},
      /*f2*/ {2, 2, 2, 2, 2, 2, 9, 2, 2, 2},
      /*f3*/ {9, 9, 9, 9, 1, 5, 6, 9, 9, 9},
      /*f4*/ {5, 5, 5, 5, 5, 5, 5, 5, 5, 5},
  };
  std::vector<std::string> ids = {"f1", "f2", "f3", "f4"};
  std::vector<std::uint8_t> labels = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0};

  BuildResult r = greedy_build_matrix(values, ids, labels, 0.8, 0.05);

  ASSERT_EQ(r.steps.size(), 3U);
  EXPECT_EQ(r.steps[0].phase, 1);
  EXPECT_EQ(r.steps[0].featurization_id, "f1");
  EXPECT_NEAR(r.steps[0].cost_after, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(r.steps[1].phase, 1);
  EXPECT_EQ(r.steps[1].featurization_id, "f2");
  EXPECT_NEAR(r.steps[1].cost_after, 0.2, 1e-12);
  EXPECT_EQ(r.steps[2].phase, 2);
  EXPECT_EQ(r.steps[2].featurization_id, "f3");
  EXPECT_EQ(r.steps[2].clause_index, 0U);
  EXPECT_NEAR(r.steps[2].cost_after, 0.0, 1e-12);

  ASSERT_EQ(r.scaffold.clauses.size(), 2U);
  EXPECT_EQ(r.scaffold.clauses[0].featurization_ids,
            (std::vector<std::string>{"f1", "f3"}));
  EXPECT_EQ(r.scaffold.clauses[1].featurization_ids,
            (std::vector<std::string>{"f2"}));
  EXPECT_DOUBLE_EQ(r.initial_cost, 0.5);
  EXPECT_DOUBLE_EQ(r.final_cost, 0.0);

  // Step costs never increase, and the last one is the final cost.
  double prev = r.initial_cost;
  for (const auto& step : r.steps) {
    EXPECT_LE(step.cost_after, prev);
    prev = step.cost_after;
  }
  EXPECT_DOUBLE_EQ(prev, r.final_cost);
}

TEST(GreedyBuildMatrixTest, ClauseCountRespectsRecallCap) {
  // floor(1 / (1 - 0.5)) = 2 clauses maximum, even though four featurizations
  // each still improve cost.
  std::vector<std::vector<double>> values;
  std::vector<std::string> ids;
  std::vector<std::uint8_t> labels = {1, 1, 0, 0, 0, 0};
  // Each feature rejects one distinct non-match when thresholded at matches.
  for (int f = 0; f < 4; ++f) {
    std::vector<double> row = {0, 0, 1, 1, 1, 1};
    row[2 + f] = 2.0;
    values.push_back(row);
    ids.push_back("f" + std::to_string(f));
  }
  BuildResult r = greedy_build_matrix(values, ids, labels, 0.5, 0.0);
  std::size_t phase1 = 0;
  for (const auto& s : r.steps) phase1 += s.phase == 1 ? 1 : 0;
  EXPECT_LE(phase1, 2U);
  EXPECT_LE(r.scaffold.clauses.size(), 2U);
}

TEST(MinCostThresholdTableTest, FitsNormOnSampleAndSearchesNormalizedUnits) {
  RecordSet L = number_records(Side::left, {"0", "3", "10"}, "l");
  RecordSet R = number_records(Side::right, {"0", "4", "10"}, "r");
  FeatureTable table(&L, &R);
  std::vector<Featurization> pool = {numeric_feature("num")};

  LabeledSample sample;
  sample.pairs = {{0, 0}, {1, 1}, {2, 2}, {0, 2}, {2, 0}, {1, 0}};
  sample.labels = {1, 1, 1, 0, 0, 0};
  table.ensure_extracted_pairs(pool[0], sample.pairs);

  LogicalScaffold s;
  s.clauses.push_back({{"num"}});
  ThresholdFit fit = min_cost_threshold(s, pool, table, sample, 1.0);
  // Raw distances: matches {0, 1, 0}, non-matches {10, 10, 3}; norm [0, 10].
  EXPECT_DOUBLE_EQ(fit.norm.at("num").min, 0.0);
  EXPECT_DOUBLE_EQ(fit.norm.at("num").max, 10.0);
  ASSERT_EQ(fit.theta.size(), 1U);
  EXPECT_DOUBLE_EQ(fit.theta[0], 0.1);
  EXPECT_EQ(fit.admitted_positives, 3U);
  EXPECT_EQ(fit.admitted_negatives, 0U);
  EXPECT_DOUBLE_EQ(fit.cost, 0.0);
}

TEST(DecompositionAdmitsTest, EmptyScaffoldAdmitsAndMissingNeedsInfinity) {
  RecordSet L = number_records(Side::left, {"7", "no digits"}, "l");
  RecordSet R = number_records(Side::right, {"8"}, "r");
  FeatureTable table(&L, &R);

  FeaturizedDecomposition empty;
  EXPECT_TRUE(decomposition_admits(empty, table, {0, 0}));
  EXPECT_TRUE(decomposition_admits(empty, table, {1, 0}));

  FeaturizedDecomposition d;
  d.featurizations = {numeric_feature("num")};
  d.scaffold.clauses.push_back({{"num"}});
  d.thresholds = {0.5};
  d.norm["num"] = {0.0, 2.0};
  table.ensure_extracted_pairs(d.featurizations[0], {{0, 0}, {1, 0}});
  // |7-8| = 1 normalizes to 0.5 <= 0.5.
  EXPECT_TRUE(decomposition_admits(d, table, {0, 0}));
  // Missing extraction -> infinite distance -> fails any finite threshold.
  EXPECT_FALSE(decomposition_admits(d, table, {1, 0}));
  d.thresholds = {kInf};
  EXPECT_TRUE(decomposition_admits(d, table, {1, 0}));

  auto mask = eval_decomposition(d, table, {{0, 0}, {1, 0}});
  EXPECT_EQ(mask, (std::vector<std::uint8_t>{1, 1}));
  d.thresholds = {0.4};
  mask = eval_decomposition(d, table, {{0, 0}, {1, 0}});
  EXPECT_EQ(mask, (std::vector<std::uint8_t>{0, 0}));
}

TEST(ComputeNormMapTest, AllInfiniteFeatureGetsIdentityParams) {
  RecordSet L = number_records(Side::left, {"letters only"}, "l");
  RecordSet R = number_records(Side::right, {"also none"}, "r");
  FeatureTable table(&L, &R);
  std::vector<Featurization> pool = {numeric_feature("num")};
  std::vector<PairRef> pairs = {{0, 0}};
  table.ensure_extracted_pairs(pool[0], pairs);
  NormMap norm = compute_norm_map(pool, table, pairs);
  EXPECT_DOUBLE_EQ(norm.at("num").min, 0.0);
  EXPECT_DOUBLE_EQ(norm.at("num").max, 0.0);
  // Applying it leaves infinity intact.
  EXPECT_TRUE(std::isinf(apply_norm(norm.at("num"), kInf)));
}

}  // namespace
}  // namespace fdj
