#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdj/core.hpp"
#include "fdj/distances.hpp"

namespace fdj {

// Declared result type of an LLM feature extractor; scalar or list forms of
// the three scalar value kinds.
enum class OutputType { text, number, date, text_list, number_list, date_list };

std::string to_string(OutputType t);
OutputType output_type_from_string(const std::string& name);
bool output_type_is_list(OutputType t);

// Parses a raw LLM completion into a value of the declared type. Accepts
// either plain text or JSON-encoded scalars/arrays; anything unparseable
// yields a missing value rather than an error.
FeatureValue parse_llm_output(OutputType type, const std::string& raw);

// A named deterministic extractor from a fixed registry, configured by JSON
// parameters. Registry: full_text, token_at{index}, numeric_capture{index},
// date_capture{index}, pattern_scan{pattern, group, all, output}.
struct CodeExtractorSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

// A per-record LLM prompt containing a {text} slot, with a declared output
// type used to parse the completion.
struct LlmExtractorSpec {
  std::string prompt;
  OutputType output = OutputType::text;
};

class ExtractorSpec {
 public:
  ExtractorSpec() : impl_(CodeExtractorSpec{"full_text", {}}) {}

  static ExtractorSpec code(std::string name,
                            nlohmann::json params = nlohmann::json::object());
  static ExtractorSpec llm(std::string prompt, OutputType output);

  bool is_code() const {
    return std::holds_alternative<CodeExtractorSpec>(impl_);
  }
  bool is_llm() const { return std::holds_alternative<LlmExtractorSpec>(impl_); }
  const CodeExtractorSpec& as_code() const {
    return std::get<CodeExtractorSpec>(impl_);
  }
  const LlmExtractorSpec& as_llm() const {
    return std::get<LlmExtractorSpec>(impl_);
  }

  nlohmann::json to_json() const;
  static ExtractorSpec from_json(const nlohmann::json& j);

 private:
  std::variant<CodeExtractorSpec, LlmExtractorSpec> impl_;
};

// One featurized decomposition ingredient: a pair of per-side extractors plus
// the distance applied between the extracted values.
struct Featurization {
  std::string id;
  DistanceKind kind = DistanceKind::word_overlap;
  ExtractorSpec left;
  ExtractorSpec right;
  std::string description;

  nlohmann::json to_json() const;
  static Featurization from_json(const nlohmann::json& j);

  // Identity of the computation only (kind + extractor specs); two
  // featurizations with equal fingerprints produce identical feature values
  // regardless of id or description.
  std::string structural_fingerprint() const;
};

bool is_known_code_extractor(const std::string& name);

// Runs a code extractor on one record text. Empty text yields missing; any
// extractor error (bad params, bad regex) yields missing and, when `warnings`
// is given, appends one diagnostic.
FeatureValue run_code_extractor(const CodeExtractorSpec& spec,
                                const std::string& text,
                                std::vector<std::string>* warnings = nullptr);

// Accounting for one LLM backend. Token counts are prompt-side only,
// approximated as ceil(bytes / 4).
struct CallLog {
  std::size_t complete_calls = 0;
  std::size_t complete_tokens = 0;
  std::size_t judge_calls = 0;
  std::size_t judge_tokens = 0;
};

// Abstract LLM access point. The public entry points meter the call into the
// log and then dispatch to the backend hooks; `judge_for_pair` exists so
// oracle backends can answer from ground truth while real backends fall back
// to the plain prompt judge.
class LlmClient {
 public:
  virtual ~LlmClient() = default;

  std::string complete(const std::string& prompt);
  bool judge(const std::string& prompt);
  bool judge_for_pair(const std::string& prompt, const std::string& left_id,
                      const std::string& right_id);

  const CallLog& log() const { return log_; }
  std::size_t token_count(const std::string& s) const {
    return approx_token_count(s);
  }
  virtual std::string name() const = 0;

 protected:
  virtual std::string do_complete(const std::string& prompt) = 0;
  virtual bool do_judge(const std::string& prompt) = 0;
  virtual bool do_judge_for_pair(const std::string& prompt,
                                 const std::string& left_id,
                                 const std::string& right_id) {
    (void)left_id;
    (void)right_id;
    return do_judge(prompt);
  }

 private:
  CallLog log_;
};

// Answers pair judgements from a ground-truth pair set (experiments and
// tests). Completions come from an explicit queue; free-form judgements are a
// logic error because the oracle only knows pairs.
class OracleBackend : public LlmClient {
 public:
  OracleBackend(const ResultSet* truth, const RecordSet* left,
                const RecordSet* right)
      : truth_(truth), left_(left), right_(right) {}

  void enqueue_completion(std::string text) {
    completions_.push_back(std::move(text));
  }
  std::string name() const override { return "oracle"; }

 protected:
  std::string do_complete(const std::string& prompt) override;
  bool do_judge(const std::string& prompt) override;
  bool do_judge_for_pair(const std::string& prompt, const std::string& left_id,
                         const std::string& right_id) override;

 private:
  const ResultSet* truth_;
  const RecordSet* left_;
  const RecordSet* right_;
  std::deque<std::string> completions_;
};

// Fully scripted backend for unit tests: completions and judgements are
// popped from queues; running past the script raises std::logic_error.
class ScriptedLlmClient : public LlmClient {
 public:
  void enqueue_completion(std::string text) {
    completions_.push_back(std::move(text));
  }
  void enqueue_judgement(bool verdict) { judgements_.push_back(verdict); }
  std::size_t completions_left() const { return completions_.size(); }
  std::size_t judgements_left() const { return judgements_.size(); }
  const std::vector<std::string>& prompts_seen() const { return prompts_; }
  std::string name() const override { return "scripted"; }

 protected:
  std::string do_complete(const std::string& prompt) override;
  bool do_judge(const std::string& prompt) override;

 private:
  std::deque<std::string> completions_;
  std::deque<bool> judgements_;
  std::vector<std::string> prompts_;
};

// Renders the user's join condition for one candidate pair; this exact string
// is what judge calls are metered on.
std::string render_join_prompt(const JoinSpec& spec, const std::string& left_text,
                               const std::string& right_text);

bool judge_pair(LlmClient& client, const JoinSpec& spec, const RecordSet& L,
                const RecordSet& R, PairRef pair);

// Lazily and partially materialized feature values for a featurization set
// over a fixed (left, right) record pair of sets. Values are extracted only
// for requested rows; LLM-extracted values are cached on disk when a cache
// directory is configured. Pair distances are memoized, with token and
// embedding caches backing the word-overlap and semantic kinds.
class FeatureTable {
 public:
  FeatureTable(const RecordSet* left, const RecordSet* right,
               EmbeddingProvider* provider = nullptr,
               std::filesystem::path cache_dir = {});

  const RecordSet& left() const { return *left_; }
  const RecordSet& right() const { return *right_; }
  EmbeddingProvider* provider() const { return provider_; }

  // Extracts the featurization's values for the given rows (both sides) if
  // not already present. `client` is required iff an LLM extractor is
  // involved.
  void ensure_extracted(const Featurization& feat,
                        const std::vector<std::uint32_t>& left_rows,
                        const std::vector<std::uint32_t>& right_rows,
                        LlmClient* client = nullptr);

  // Convenience: ensure exactly the rows touched by `pairs`.
  void ensure_extracted_pairs(const Featurization& feat,
                              const std::vector<PairRef>& pairs,
                              LlmClient* client = nullptr);

  bool is_extracted(const Featurization& feat, Side side,
                    std::uint32_t row) const;
  // Throws std::logic_error when the value was never extracted.
  const FeatureValue& value(const Featurization& feat, Side side,
                            std::uint32_t row) const;

  // Raw (unnormalized) feature distance for one pair; both sides must be
  // extracted.
  double pair_distance(const Featurization& feat, PairRef pair);

  std::size_t llm_extraction_tokens() const { return llm_extraction_tokens_; }
  std::size_t llm_extraction_calls() const { return llm_extraction_calls_; }
  std::size_t embedding_tokens() const { return embedding_tokens_; }
  std::size_t embedding_calls() const { return embedding_calls_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct SideState {
    std::vector<std::optional<FeatureValue>> values;
    std::vector<std::optional<std::vector<std::string>>> tokens;
    bool cache_loaded = false;
    std::unordered_map<std::string, FeatureValue> disk_cache;
  };
  struct FeatState {
    Featurization feat;
    SideState left, right;
    std::unordered_map<std::uint64_t, double> pair_cache;
  };

  FeatState& state_for(const Featurization& feat);
  const FeatState* find_state(const Featurization& feat) const;
  void extract_side(FeatState& fs, Side side,
                    const std::vector<std::uint32_t>& rows, LlmClient* client);
  const std::vector<double>& embedding_for(const std::string& text);
  double semantic_value_distance(const FeatureValue& a, const FeatureValue& b);
  std::filesystem::path cache_file(const FeatState& fs, Side side) const;

  const RecordSet* left_;
  const RecordSet* right_;
  EmbeddingProvider* provider_;
  std::filesystem::path cache_dir_;
  std::map<std::string, FeatState> feats_;  // keyed by fingerprint
  std::unordered_map<std::string, std::vector<double>> embed_cache_;
  std::size_t llm_extraction_tokens_ = 0;
  std::size_t llm_extraction_calls_ = 0;
  std::size_t embedding_tokens_ = 0;
  std::size_t embedding_calls_ = 0;
  std::vector<std::string> warnings_;
};

}  // namespace fdj
