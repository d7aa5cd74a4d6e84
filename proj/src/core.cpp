#include "fdj/core.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fdj/rng.hpp"

namespace fdj {

RecordSet::RecordSet(std::vector<Record> records, Side side)
    : records_(std::move(records)), side_(side) {
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto [it, inserted] = index_.emplace(records_[i].id, i);
    if (!inserted)
      throw DataError("duplicate record id: " + records_[i].id);
  }
}

RecordSet RecordSet::load_jsonl(const std::filesystem::path& path, Side side) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());
  std::vector<Record> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") ||
        !j.contains("text") || !j["id"].is_string() || !j["text"].is_string())
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected {\"id\": string, \"text\": string}");
    records.push_back({j["id"].get<std::string>(), j["text"].get<std::string>()});
  }
  return RecordSet(std::move(records), side);
}

void RecordSet::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path.string());
  for (const Record& r : records_) {
    nlohmann::json j;
    j["id"] = r.id;
    j["text"] = r.text;
    out << j.dump() << '\n';
  }
}

const Record& RecordSet::at(std::size_t idx) const {
  if (idx >= records_.size())
    throw std::out_of_range("record index out of range");
  return records_[idx];
}

std::size_t RecordSet::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown record id: " + id);
  return it->second;
}

std::size_t ResultSet::intersection_size(const ResultSet& other) const {
  const ResultSet* small = this;
  const ResultSet* big = &other;
  if (small->size() > big->size()) std::swap(small, big);
  std::size_t count = 0;
  for (const PairRef& p : small->pairs_)
    if (big->contains(p)) ++count;
  return count;
}

ResultSet ResultSet::load_jsonl(const std::filesystem::path& path,
                                const RecordSet& L, const RecordSet& R) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open truth file: " + path.string());
  ResultSet out;
  const bool self = is_self_join(L, R);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("left_id") ||
        !j.contains("right_id") || !j["left_id"].is_string() ||
        !j["right_id"].is_string())
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected {\"left_id\": string, \"right_id\": string}");
    PairRef p{
        static_cast<std::uint32_t>(L.index_of(j["left_id"].get<std::string>())),
        static_cast<std::uint32_t>(R.index_of(j["right_id"].get<std::string>()))};
    if (self && p.left == p.right)
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": self-join truth must not contain diagonal pairs");
    out.insert(p);
  }
  return out;
}

void ResultSet::save_jsonl(const std::filesystem::path& path,
                           const RecordSet& L, const RecordSet& R) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write result file: " + path.string());
  for (const PairRef& p : pairs_) {
    nlohmann::json j;
    j["left_id"] = L.at(p.left).id;
    j["right_id"] = R.at(p.right).id;
    out << j.dump() << '\n';
  }
}

std::size_t LabeledSample::positives() const {
  if (!labeled())
    throw std::logic_error("sample is not labeled");
  return static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void JoinSpec::validate() const {
  if (!(recall_target > 0.0 && recall_target <= 1.0))
    throw std::invalid_argument("recall target must lie in (0, 1]");
  if (!(precision_target > 0.0 && precision_target <= 1.0))
    throw std::invalid_argument("precision target must lie in (0, 1]");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("failure probability must lie in (0, 1)");
  if (join_prompt.find("{l}") == std::string::npos ||
      join_prompt.find("{r}") == std::string::npos)
    throw std::invalid_argument("join prompt must contain {l} and {r} slots");
}

bool is_self_join(const RecordSet& L, const RecordSet& R) { return &L == &R; }

std::size_t pair_universe_size(const RecordSet& L, const RecordSet& R) {
  if (is_self_join(L, R)) return L.size() * (L.size() - (L.size() ? 1 : 0));
  return L.size() * R.size();
}

PairRef pair_from_flat_index(const RecordSet& L, const RecordSet& R,
                             std::uint64_t flat) {
  if (is_self_join(L, R)) {
    // Row-major over L x L with the diagonal removed.
    const std::uint64_t m = L.size() - 1;
    std::uint64_t i = flat / m;
    std::uint64_t j = flat % m;
    if (j >= i) ++j;
    return {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)};
  }
  return {static_cast<std::uint32_t>(flat / R.size()),
          static_cast<std::uint32_t>(flat % R.size())};
}

LabeledSample sample_uniform_pairs(const RecordSet& L, const RecordSet& R,
                                   std::size_t k, std::uint64_t seed) {
  const std::size_t n = pair_universe_size(L, R);
  if (k > n)
    throw std::invalid_argument("sample size exceeds number of candidate pairs");
  Rng rng(seed);
  LabeledSample sample;
  sample.seed = seed;
  sample.pairs.reserve(k);
  for (std::uint64_t flat : rng.sample_indices(n, k))
    sample.pairs.push_back(pair_from_flat_index(L, R, flat));
  return sample;
}

double recall(const ResultSet& result, const ResultSet& truth) {
  if (truth.empty())
    throw std::invalid_argument("recall is undefined for an empty truth set");
  return static_cast<double>(result.intersection_size(truth)) /
         static_cast<double>(truth.size());
}

double precision(const ResultSet& result, const ResultSet& truth) {
  if (result.empty())
    throw std::invalid_argument("precision is undefined for an empty result");
  return static_cast<double>(result.intersection_size(truth)) /
         static_cast<double>(result.size());
}

std::pair<std::vector<PairRef>, std::vector<PairRef>> split_pos_neg(
    const LabeledSample& sample) {
  if (!sample.labeled())
    throw std::logic_error("cannot split an unlabeled sample");
  std::pair<std::vector<PairRef>, std::vector<PairRef>> out;
  for (std::size_t i = 0; i < sample.pairs.size(); ++i)
    (sample.labels[i] ? out.first : out.second).push_back(sample.pairs[i]);
  return out;
}

std::string replace_slots(std::string text,
                          const std::map<std::string, std::string>& slots) {
  for (const auto& [name, value] : slots) {
    const std::string needle = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
      text.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  return text;
}

}  // namespace fdj
