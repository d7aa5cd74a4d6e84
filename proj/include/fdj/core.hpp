#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fdj {

// Input/file problems (bad dataset lines, unknown ids, unusable truth files).
// The CLI maps this to exit code 4.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The statistical machinery cannot certify the requested recall target with
// the given sample/budget. The CLI maps this to exit code 3.
struct GuaranteeInfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Side { left, right };

struct Record {
  std::string id;
  std::string text;
};

// Ordered collection of text records with stable string ids. Ids are mapped
// to dense indices internally so pair-addressed tables stay O(1).
class RecordSet {
 public:
  RecordSet() = default;
  RecordSet(std::vector<Record> records, Side side);

  static RecordSet load_jsonl(const std::filesystem::path& path, Side side);
  void save_jsonl(const std::filesystem::path& path) const;

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const Record& at(std::size_t idx) const;
  std::size_t index_of(const std::string& id) const;  // throws DataError
  bool has_id(const std::string& id) const { return index_.count(id) != 0; }
  Side side() const { return side_; }

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

 private:
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> index_;
  Side side_ = Side::left;
};

// A candidate pair, addressed by dense record indices into the bound left and
// right sets. String ids are resolved through the RecordSets at the edges
// (file IO, prompts).
struct PairRef {
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  auto operator<=>(const PairRef&) const = default;
};

class ResultSet {
 public:
  void insert(const PairRef& p) { pairs_.insert(p); }
  bool contains(const PairRef& p) const { return pairs_.count(p) != 0; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const std::set<PairRef>& pairs() const { return pairs_; }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }

  std::size_t intersection_size(const ResultSet& other) const;

  // Truth files are JSON-Lines of {"left_id": ..., "right_id": ...} listing
  // exactly the positive pairs.
  static ResultSet load_jsonl(const std::filesystem::path& path,
                              const RecordSet& L, const RecordSet& R);
  void save_jsonl(const std::filesystem::path& path, const RecordSet& L,
                  const RecordSet& R) const;

 private:
  std::set<PairRef> pairs_;
};

// Uniformly sampled pairs plus (once judged) their labels. labels is parallel
// to pairs; an empty labels vector means the sample is not labeled yet.
struct LabeledSample {
  std::vector<PairRef> pairs;
  std::vector<std::uint8_t> labels;
  std::uint64_t seed = 0;

  bool labeled() const { return labels.size() == pairs.size(); }
  std::size_t positives() const;
};

struct JoinSpec {
  double recall_target = 0.9;
  double precision_target = 1.0;
  double delta = 0.1;
  std::string join_prompt;  // must contain {l} and {r}

  void validate() const;
};

// Self-joins are expressed by passing the same RecordSet object twice; the
// diagonal pair (i, i) is excluded from the candidate universe.
bool is_self_join(const RecordSet& L, const RecordSet& R);
std::size_t pair_universe_size(const RecordSet& L, const RecordSet& R);
PairRef pair_from_flat_index(const RecordSet& L, const RecordSet& R,
                             std::uint64_t flat);

// k distinct pairs from L x R (diagonal excluded for self-joins), each pair
// equally likely; deterministic per seed. Labels are left unset.
LabeledSample sample_uniform_pairs(const RecordSet& L, const RecordSet& R,
                                   std::size_t k, std::uint64_t seed);

double recall(const ResultSet& result, const ResultSet& truth);
double precision(const ResultSet& result, const ResultSet& truth);

// Partition of a labeled sample into (positives, negatives), original order
// preserved.
std::pair<std::vector<PairRef>, std::vector<PairRef>> split_pos_neg(
    const LabeledSample& sample);

// Replaces each "{name}" occurrence for the provided slot names; unknown
// slots are left intact (they may be placeholders for a later stage).
std::string replace_slots(std::string text,
                          const std::map<std::string, std::string>& slots);

}  // namespace fdj
