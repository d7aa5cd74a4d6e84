#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "fdj/core.hpp"

namespace fdj {

// Deterministic self-join benchmark generator. n persons each like exactly
// two of n movies (a 2-regular bipartite graph), producing one sentence per
// (person, movie) edge: 2n records. Two records match when they talk about
// the same person. Difficulty knobs: extra uniquely-named persons per
// sentence and filler sentences around the payload.
struct SynthConfig {
  std::size_t n = 50;                   // persons = movies, 2..900
  std::size_t persons_per_sentence = 1; // 1 base + extras, >= 1
  std::size_t distractor_level = 0;     // filler sentences on each side
  std::uint64_t seed = 0;
};

struct SynthData {
  RecordSet records;
  ResultSet truth;  // ordered pairs of records about the same person
  nlohmann::json meta;
};

SynthData generate_synthetic(const SynthConfig& config);

// Writes records.jsonl, truth.jsonl and meta.json into `dir` (created if
// needed).
void save_synthetic(const SynthData& data, const std::filesystem::path& dir);

// The join condition the benchmark poses about this data.
std::string synthetic_join_prompt();

}  // namespace fdj
