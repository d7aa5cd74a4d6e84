#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace fdj {

enum class DistanceKind { word_overlap, semantic, arithmetic, date };

std::string to_string(DistanceKind kind);
DistanceKind distance_kind_from_string(const std::string& name);

// Value produced by a feature extractor. Lists are homogeneous collections of
// scalar values; `missing` marks failed or absent extractions and propagates
// through distances as +infinity so the containing predicate fails for any
// finite threshold.
class FeatureValue {
 public:
  using List = std::vector<FeatureValue>;

  FeatureValue() = default;  // missing

  static FeatureValue missing() { return FeatureValue(); }
  static FeatureValue text(std::string s);
  static FeatureValue number(double x);
  static FeatureValue date(std::chrono::sys_days d);
  static FeatureValue list(List elements);  // enforces homogeneity

  bool is_missing() const { return std::holds_alternative<std::monostate>(v_); }
  bool is_text() const { return std::holds_alternative<std::string>(v_); }
  bool is_number() const { return std::holds_alternative<double>(v_); }
  bool is_date() const {
    return std::holds_alternative<std::chrono::sys_days>(v_);
  }
  bool is_list() const { return std::holds_alternative<List>(v_); }

  const std::string& as_text() const { return std::get<std::string>(v_); }
  double as_number() const { return std::get<double>(v_); }
  std::chrono::sys_days as_date() const {
    return std::get<std::chrono::sys_days>(v_);
  }
  const List& as_list() const { return std::get<List>(v_); }

  bool operator==(const FeatureValue& other) const { return v_ == other.v_; }

  // Human-readable rendering for prompt construction and logs.
  std::string display() const;

  nlohmann::json to_json() const;
  static FeatureValue from_json(const nlohmann::json& j);

 private:
  std::variant<std::monostate, std::string, double, std::chrono::sys_days,
               List>
      v_;
};

std::optional<std::chrono::sys_days> parse_iso_date(const std::string& s);
std::string format_iso_date(std::chrono::sys_days d);

// Default approximate tokenizer cost: ceil(bytes / 4).
std::size_t approx_token_count(const std::string& s);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // One unit-norm vector per input text, all of dimension().
  virtual std::vector<std::vector<double>> embed(
      const std::vector<std::string>& texts) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
  virtual std::size_t token_count(const std::string& text) const {
    return approx_token_count(text);
  }
};

// Deterministic offline stand-in for a real embedding model: seeded random
// projection of token hash counts, L2-normalized. A zero accumulation maps to
// the first basis vector so the unit-norm invariant always holds.
class HashingEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::uint64_t seed = 0,
                                    std::size_t dim = 64)
      : seed_(seed), dim_(dim) {}

  std::vector<std::vector<double>> embed(
      const std::vector<std::string>& texts) override;
  std::size_t dimension() const override { return dim_; }
  std::string name() const override;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

// Lowercases ASCII letters and splits on non-alphanumeric runs; returns the
// sorted set of distinct tokens.
std::vector<std::string> tokenize(const std::string& text);

// 1 - |A∩B| / |A∪B| over sorted distinct token vectors; two empty sets count
// as identical (distance 0).
double jaccard_distance(const std::vector<std::string>& a,
                        const std::vector<std::string>& b);

// Feature distance. Symmetric, 0 for identical values; missing on either side
// yields +infinity; a list on either side takes the minimum over the cross
// product of element distances (empty list behaves as missing). Variant
// mismatches with the kind raise std::invalid_argument, as does a semantic
// distance without a provider.
double distance(DistanceKind kind, const FeatureValue& a, const FeatureValue& b,
                EmbeddingProvider* provider = nullptr);

constexpr double kInf = std::numeric_limits<double>::infinity();

// Affine [min, max] -> [0, 1] parameters fitted on finite values only; +inf
// passes through unchanged.
struct NormParams {
  double min = 0.0;
  double max = 0.0;
};

NormParams compute_norm_params(const std::vector<double>& values);
double apply_norm(const NormParams& p, double v);
std::vector<double> min_max_normalize(const std::vector<double>& values);

}  // namespace fdj
