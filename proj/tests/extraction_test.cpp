#include "fdj/extraction.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

namespace fdj {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    dir_ = fs::temp_directory_path() /
           ("fdj-extract-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter_++));
    fs::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  const fs::path& path() const { return dir_; }

 private:
  static inline int counter_ = 0;
  fs::path dir_;
};

RecordSet make_records(Side side, std::vector<Record> recs) {
  return RecordSet(std::move(recs), side);
}

TEST(ParseLlmOutputTest, ScalarsAcceptPlainTextAndJsonEncodings) {
  EXPECT_EQ(parse_llm_output(OutputType::text, "  Alice Smith \n").as_text(),
            "Alice Smith");
  EXPECT_EQ(parse_llm_output(OutputType::text, R"("quoted")").as_text(),
            "quoted");
  EXPECT_DOUBLE_EQ(parse_llm_output(OutputType::number, "42").as_number(),
                   42.0);
  EXPECT_DOUBLE_EQ(parse_llm_output(OutputType::number, "-3.5").as_number(),
                   -3.5);
  EXPECT_DOUBLE_EQ(parse_llm_output(OutputType::number, R"("17")").as_number(),
                   17.0);
  auto d = parse_llm_output(OutputType::date, "1984-06-02");
  ASSERT_TRUE(d.is_date());
  EXPECT_EQ(format_iso_date(d.as_date()), "1984-06-02");
}

TEST(ParseLlmOutputTest, UnparseableOrNullBecomesMissingNotError) {
  EXPECT_TRUE(parse_llm_output(OutputType::number, "not a number").is_missing());
  EXPECT_TRUE(parse_llm_output(OutputType::date, "June 2nd").is_missing());
  EXPECT_TRUE(parse_llm_output(OutputType::text, "").is_missing());
  EXPECT_TRUE(parse_llm_output(OutputType::text, "  NULL ").is_missing());
  EXPECT_TRUE(parse_llm_output(OutputType::text, "n/a").is_missing());
  EXPECT_TRUE(parse_llm_output(OutputType::number, "null").is_missing());
  EXPECT_TRUE(parse_llm_output(OutputType::text, R"({"k":1})").is_missing());
  EXPECT_TRUE(parse_llm_output(OutputType::number_list, "1, 2, 3").is_missing());
}

TEST(ParseLlmOutputTest, ListsParseJsonArraysAndDropBadElements) {
  auto v = parse_llm_output(OutputType::number_list, "[1, \"2\", \"x\", 3]");
  ASSERT_TRUE(v.is_list());
  ASSERT_EQ(v.as_list().size(), 3U);
  EXPECT_DOUBLE_EQ(v.as_list()[1].as_number(), 2.0);

  auto t = parse_llm_output(OutputType::text_list, R"(["a","b"])");
  ASSERT_TRUE(t.is_list());
  EXPECT_EQ(t.as_list()[0].as_text(), "a");

  auto empty = parse_llm_output(OutputType::text_list, "[]");
  ASSERT_TRUE(empty.is_list());
  EXPECT_TRUE(empty.as_list().empty());
}

TEST(OutputTypeTest, NamesRoundTripAndListPredicateMatches) {
  for (OutputType t : {OutputType::text, OutputType::number, OutputType::date,
                       OutputType::text_list, OutputType::number_list,
                       OutputType::date_list}) {
    EXPECT_EQ(output_type_from_string(to_string(t)), t);
  }
  EXPECT_FALSE(output_type_is_list(OutputType::number));
  EXPECT_TRUE(output_type_is_list(OutputType::date_list));
  EXPECT_THROW(output_type_from_string("floats"), std::invalid_argument);
}

TEST(CodeExtractorTest, TokenAtSupportsNegativeIndexing) {
  CodeExtractorSpec spec{"token_at", {{"index", -1}}};
  EXPECT_EQ(run_code_extractor(spec, "Alice  Smith b.1984").as_text(),
            "b.1984");
  spec.params["index"] = 0;
  EXPECT_EQ(run_code_extractor(spec, "Alice Smith").as_text(), "Alice");
  spec.params["index"] = 5;
  EXPECT_TRUE(run_code_extractor(spec, "Alice Smith").is_missing());
  EXPECT_TRUE(run_code_extractor(spec, "").is_missing());
}

TEST(CodeExtractorTest, NumericCaptureScansSignedDecimals) {
  CodeExtractorSpec spec{"numeric_capture", {{"index", 0}}};
  EXPECT_DOUBLE_EQ(run_code_extractor(spec, "costs -12.5 or 30").as_number(),
                   -12.5);
  spec.params["index"] = 1;
  EXPECT_DOUBLE_EQ(run_code_extractor(spec, "costs -12.5 or 30").as_number(),
                   30.0);
  // Date-like digit runs scan as plain unsigned numbers.
  spec.params["index"] = 2;
  EXPECT_DOUBLE_EQ(run_code_extractor(spec, "born 2021-03-10").as_number(),
                   10.0);
  spec.params["index"] = 3;
  EXPECT_TRUE(run_code_extractor(spec, "born 2021-03-10").is_missing());
}

TEST(CodeExtractorTest, DateCaptureFindsIsoDatesInRunningText) {
  CodeExtractorSpec spec{"date_capture", {{"index", 0}}};
  auto v = run_code_extractor(spec, "released 1999-10-15, remaster 2009-10-15");
  ASSERT_TRUE(v.is_date());
  EXPECT_EQ(format_iso_date(v.as_date()), "1999-10-15");
  spec.params["index"] = 1;
  v = run_code_extractor(spec, "released 1999-10-15, remaster 2009-10-15");
  EXPECT_EQ(format_iso_date(v.as_date()), "2009-10-15");
  EXPECT_TRUE(run_code_extractor(spec, "no dates here").is_missing());
}

TEST(CodeExtractorTest, PatternScanSupportsGroupsListsAndOutputs) {
  CodeExtractorSpec one{"pattern_scan",
                        {{"pattern", R"(b\.(\d{4}))"}, {"group", 1},
                         {"output", "number"}}};
  EXPECT_DOUBLE_EQ(run_code_extractor(one, "Alice b.1984 x").as_number(),
                   1984.0);

  CodeExtractorSpec all{"pattern_scan",
                        {{"pattern", R"(\b[A-Z][a-z]+)"}, {"all", true}}};
  auto v = run_code_extractor(all, "Alice met Bob and carol");
  ASSERT_TRUE(v.is_list());
  ASSERT_EQ(v.as_list().size(), 2U);
  EXPECT_EQ(v.as_list()[0].as_text(), "Alice");
  EXPECT_EQ(v.as_list()[1].as_text(), "Bob");

  EXPECT_TRUE(run_code_extractor(one, "no match").is_missing());
}

TEST(CodeExtractorTest, ErrorsDegradeToMissingWithWarning) {
  std::vector<std::string> warnings;
  CodeExtractorSpec bad_regex{"pattern_scan", {{"pattern", "(unclosed"}}};
  EXPECT_TRUE(run_code_extractor(bad_regex, "text", &warnings).is_missing());
  EXPECT_EQ(warnings.size(), 1U);
  CodeExtractorSpec bad_params{"token_at", nlohmann::json::object()};
  EXPECT_TRUE(run_code_extractor(bad_params, "text", &warnings).is_missing());
  EXPECT_EQ(warnings.size(), 2U);
  EXPECT_TRUE(is_known_code_extractor("numeric_capture"));
  EXPECT_FALSE(is_known_code_extractor("mystery"));
}

TEST(FeaturizationTest, JsonRoundTripAndStructuralFingerprint) {
  Featurization f;
  f.id = "release-year";
  f.kind = DistanceKind::arithmetic;
  f.left = ExtractorSpec::code("numeric_capture", {{"index", 0}});
  f.right = ExtractorSpec::llm("Year in: {text}", OutputType::number);
  f.description = "compare release years";

  Featurization back = Featurization::from_json(f.to_json());
  EXPECT_EQ(back.id, f.id);
  EXPECT_EQ(back.kind, f.kind);
  EXPECT_EQ(back.description, f.description);
  ASSERT_TRUE(back.right.is_llm());
  EXPECT_EQ(back.right.as_llm().prompt, "Year in: {text}");
  EXPECT_EQ(back.structural_fingerprint(), f.structural_fingerprint());

  // Fingerprint ignores labels but not structure.
  Featurization renamed = f;
  renamed.id = "other-name";
  renamed.description = "different words";
  EXPECT_EQ(renamed.structural_fingerprint(), f.structural_fingerprint());
  Featurization changed = f;
  changed.kind = DistanceKind::word_overlap;
  EXPECT_NE(changed.structural_fingerprint(), f.structural_fingerprint());
}

TEST(LlmClientTest, MeteringCountsPromptTokensPerEntryPoint) {
  ScriptedLlmClient client;
  client.enqueue_completion("out");
  client.enqueue_judgement(true);
  std::string prompt(8, 'p');  // 2 tokens at 4 bytes per token
  EXPECT_EQ(client.complete(prompt), "out");
  EXPECT_TRUE(client.judge(prompt));
  EXPECT_EQ(client.log().complete_calls, 1U);
  EXPECT_EQ(client.log().complete_tokens, 2U);
  EXPECT_EQ(client.log().judge_calls, 1U);
  EXPECT_EQ(client.log().judge_tokens, 2U);
  EXPECT_EQ(client.prompts_seen().size(), 2U);
  EXPECT_THROW(client.complete("past the script"), std::logic_error);
  EXPECT_THROW(client.judge("past the script"), std::logic_error);
}

TEST(OracleBackendTest, JudgesPairsFromTruthAndRefusesFreeFormJudgements) {
  RecordSet L = make_records(Side::left, {{"l0", "a"}, {"l1", "b"}});
  RecordSet R = make_records(Side::right, {{"r0", "c"}, {"r1", "d"}});
  ResultSet truth;
  truth.insert({0, 1});
  OracleBackend oracle(&truth, &L, &R);

  JoinSpec spec;
  spec.join_prompt = "same? {l} vs {r}";
  EXPECT_TRUE(judge_pair(oracle, spec, L, R, {0, 1}));
  EXPECT_FALSE(judge_pair(oracle, spec, L, R, {1, 0}));
  EXPECT_EQ(oracle.log().judge_calls, 2U);
  EXPECT_THROW(oracle.judge("free-form question"), std::logic_error);

  oracle.enqueue_completion("canned");
  EXPECT_EQ(oracle.complete("anything"), "canned");
  // An exhausted queue yields the empty "no more output" completion.
  EXPECT_EQ(oracle.complete("anything else"), "");
}

TEST(RenderJoinPromptTest, FillsBothRecordSlots) {
  JoinSpec spec;
  spec.join_prompt = "Left=<{l}> Right=<{r}>";
  EXPECT_EQ(render_join_prompt(spec, "A", "B"), "Left=<A> Right=<B>");
}

TEST(FeatureTableTest, ValueAccessRequiresExtractionFirst) {
  RecordSet L = make_records(Side::left, {{"l0", "alpha beta"}});
  RecordSet R = make_records(Side::right, {{"r0", "beta gamma"}});
  FeatureTable table(&L, &R);
  Featurization f;
  f.id = "overlap";
  f.kind = DistanceKind::word_overlap;

  EXPECT_FALSE(table.is_extracted(f, Side::left, 0));
  EXPECT_THROW(table.value(f, Side::left, 0), std::logic_error);
  table.ensure_extracted(f, {0}, {0});
  EXPECT_TRUE(table.is_extracted(f, Side::left, 0));
  EXPECT_EQ(table.value(f, Side::left, 0).as_text(), "alpha beta");
  // Jaccard over {alpha, beta} and {beta, gamma}: 1 - 1/3.
  EXPECT_NEAR(table.pair_distance(f, {0, 0}), 2.0 / 3.0, 1e-12);
}

TEST(FeatureTableTest, LlmExtractionIsMeteredCachedAndReloadedFromDisk) {
  TempDir tmp;
  RecordSet L = make_records(Side::left, {{"l0", "Alice b.1984"},
                                          {"l1", "Bob b.1990"}});
  RecordSet R = make_records(Side::right, {{"r0", "born 1984"}});
  Featurization f;
  f.id = "birth-year";
  f.kind = DistanceKind::arithmetic;
  f.left = ExtractorSpec::llm("Birth year in: {text}", OutputType::number);
  f.right = ExtractorSpec::code("numeric_capture", {{"index", 0}});

  std::size_t first_tokens = 0;
  {
    FeatureTable table(&L, &R, nullptr, tmp.path());
    ScriptedLlmClient client;
    client.enqueue_completion("1984");
    client.enqueue_completion("1990");
    table.ensure_extracted_pairs(f, {{0, 0}, {1, 0}}, &client);
    EXPECT_EQ(client.log().complete_calls, 2U);
    EXPECT_EQ(table.llm_extraction_calls(), 2U);
    EXPECT_GT(table.llm_extraction_tokens(), 0U);
    first_tokens = table.llm_extraction_tokens();
    // The rendered prompt embeds the record text.
    EXPECT_NE(client.prompts_seen()[0].find("Alice b.1984"),
              std::string::npos);
    EXPECT_DOUBLE_EQ(table.pair_distance(f, {0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(table.pair_distance(f, {1, 0}), 6.0);

    // Same rows again: memoized, no new calls.
    table.ensure_extracted_pairs(f, {{0, 0}}, &client);
    EXPECT_EQ(table.llm_extraction_calls(), 2U);
    EXPECT_EQ(table.llm_extraction_tokens(), first_tokens);
  }

  // A fresh table backed by the same cache directory answers from disk.
  {
    FeatureTable table(&L, &R, nullptr, tmp.path());
    ScriptedLlmClient client;  // empty script: any call would throw
    table.ensure_extracted_pairs(f, {{0, 0}, {1, 0}}, &client);
    EXPECT_EQ(table.llm_extraction_calls(), 0U);
    EXPECT_EQ(client.log().complete_calls, 0U);
    EXPECT_DOUBLE_EQ(table.value(f, Side::left, 0).as_number(), 1984.0);
  }

  // Missing client when LLM extraction is required is an error.
  {
    FeatureTable table(&L, &R);
    EXPECT_THROW(table.ensure_extracted(f, {0}, {}), std::invalid_argument);
  }
}

TEST(FeatureTableTest, SemanticDistancesMeterEmbeddingsOncePerText) {
  RecordSet L = make_records(Side::left, {{"l0", "red apple"},
                                          {"l1", "red apple"}});
  RecordSet R = make_records(Side::right, {{"r0", "green pear"}});
  HashingEmbeddingProvider provider(1, 16);
  FeatureTable table(&L, &R, &provider);
  Featurization f;
  f.id = "semantic-text";
  f.kind = DistanceKind::semantic;

  table.ensure_extracted(f, {0, 1}, {0});
  double d0 = table.pair_distance(f, {0, 0});
  double d1 = table.pair_distance(f, {1, 0});
  EXPECT_DOUBLE_EQ(d0, d1);
  EXPECT_GT(d0, 0.0);
  std::size_t calls_after_first = table.embedding_calls();
  std::size_t tokens_after_first = table.embedding_tokens();
  // Identical text on l0/l1 plus memoized pairs: no further embedding work.
  EXPECT_EQ(calls_after_first, 2U);  // "red apple" and "green pear"
  (void)table.pair_distance(f, {0, 0});
  EXPECT_EQ(table.embedding_calls(), calls_after_first);
  EXPECT_EQ(table.embedding_tokens(), tokens_after_first);
}

TEST(FeatureTableTest, WordOverlapNeedsNoProviderAndMemoizesPairs) {
  RecordSet L = make_records(Side::left, {{"l0", "x y z"}});
  FeatureTable table(&L, &L);
  Featurization f;
  f.id = "overlap";
  f.kind = DistanceKind::word_overlap;
  table.ensure_extracted(f, {0}, {0});
  EXPECT_DOUBLE_EQ(table.pair_distance(f, {0, 0}), 0.0);
  EXPECT_TRUE(table.warnings().empty());
  EXPECT_EQ(table.embedding_calls(), 0U);
}

}  // namespace
}  // namespace fdj
