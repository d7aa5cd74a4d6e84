#include "fdj/candidates.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fdj/rng.hpp"

namespace fdj {

std::vector<Featurization> ScriptedGenerator::generate(
    const std::vector<GenExample>&, const std::string&,
    const std::vector<Featurization>&) {
  if (playbook_.empty()) return {};
  auto batch = std::move(playbook_.front());
  playbook_.pop_front();
  return batch;
}

std::string render_examples_block(const std::vector<GenExample>& examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const GenExample& ex = examples[i];
    out += "Example " + std::to_string(i + 1) +
           (ex.label ? " (MATCH)" : " (NOT A MATCH)") + ":\n";
    out += "  left: " + ex.left_text + "\n";
    out += "  right: " + ex.right_text + "\n";
    for (const auto& [fid, lr] : ex.feature_values) {
      out += "  " + fid + ": left=" + lr.first + ", right=" + lr.second + "\n";
    }
  }
  if (out.empty()) out = "(no examples)\n";
  return out;
}

std::string render_existing_block(const std::vector<Featurization>& existing) {
  if (existing.empty()) return "(none yet)\n";
  std::string out;
  for (const auto& f : existing) {
    out += "- " + f.description + " [" + to_string(f.kind) + "]\n";
  }
  return out;
}

namespace {

std::string lowercase(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

// Strips Markdown code fences so JSON payloads survive chatty completions.
std::string strip_fences(const std::string& s) {
  auto first = s.find("```");
  if (first == std::string::npos) return s;
  auto start = s.find('\n', first);
  if (start == std::string::npos) return s;
  auto last = s.find("```", start);
  if (last == std::string::npos) return s;
  return s.substr(start + 1, last - start - 1);
}

nlohmann::json parse_json_loose(const std::string& raw) {
  auto j = nlohmann::json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (!j.is_discarded()) return j;
  return nlohmann::json::parse(strip_fences(raw), nullptr,
                               /*allow_exceptions=*/false);
}

}  // namespace

std::vector<Featurization> LlmGenerator::generate(
    const std::vector<GenExample>& examples, const std::string& join_prompt,
    const std::vector<Featurization>& existing) {
  ++iteration_;
  std::vector<Featurization> out;

  std::string desc_prompt = prompts_.render(
      "featurization_descriptions",
      {{"join_prompt", join_prompt},
       {"examples", render_examples_block(examples)},
       {"existing", render_existing_block(existing)}});
  nlohmann::json descs = parse_json_loose(client_->complete(desc_prompt));
  if (descs.is_discarded() || !descs.is_array()) return out;

  const std::string left_sample = examples.empty() ? "" : examples[0].left_text;
  const std::string right_sample =
      examples.empty() ? "" : examples[0].right_text;

  std::size_t index = 0;
  for (const auto& d : descs) {
    if (!d.is_string()) continue;
    const std::string description = d.get<std::string>();
    if (description.empty()) continue;
    ++index;

    std::string side_desc[2];
    ExtractorSpec side_spec[2];
    bool ok = true;
    for (int s = 0; s < 2 && ok; ++s) {
      const bool is_left = (s == 0);
      side_desc[s] = client_->complete(prompts_.render(
          "feature_for_column",
          {{"feature", description},
           {"side", is_left ? "left" : "right"},
           {"text", is_left ? left_sample : right_sample}}));
      if (side_desc[s].empty()) {
        ok = false;
        break;
      }

      std::string mode = lowercase(client_->complete(
          prompts_.render("extraction_mode", {{"description", side_desc[s]}})));
      if (mode.find("infer") != std::string::npos) {
        nlohmann::json spec = parse_json_loose(client_->complete(
            prompts_.render("extraction_prompt", {{"description", side_desc[s]}})));
        if (!spec.is_object() || !spec.contains("prompt") ||
            !spec.contains("output") || !spec["prompt"].is_string() ||
            !spec["output"].is_string()) {
          ok = false;
          break;
        }
        const std::string prompt = spec["prompt"].get<std::string>();
        if (prompt.find("{text}") == std::string::npos) {
          ok = false;
          break;
        }
        OutputType output;
        try {
          output = output_type_from_string(spec["output"].get<std::string>());
        } catch (const std::invalid_argument&) {
          ok = false;
          break;
        }
        side_spec[s] = ExtractorSpec::llm(prompt, output);
      } else if (mode.find("extract") != std::string::npos ||
                 mode.find("split") != std::string::npos) {
        nlohmann::json spec = parse_json_loose(client_->complete(
            prompts_.render("extraction_code", {{"description", side_desc[s]}})));
        if (!spec.is_object() || !spec.contains("name") ||
            !spec["name"].is_string()) {
          ok = false;
          break;
        }
        const std::string name = spec["name"].get<std::string>();
        if (!is_known_code_extractor(name)) {
          ok = false;
          break;
        }
        side_spec[s] = ExtractorSpec::code(
            name, spec.value("params", nlohmann::json::object()));
      } else {
        ok = false;
        break;
      }
    }
    if (!ok) continue;

    std::string choice = lowercase(client_->complete(prompts_.render(
        "distance_choice", {{"feature", description},
                            {"left_description", side_desc[0]},
                            {"right_description", side_desc[1]}})));
    DistanceKind kind;
    if (choice.find("word_overlap_similarity") != std::string::npos) {
      kind = DistanceKind::word_overlap;
    } else if (choice.find("semantic_similarity") != std::string::npos) {
      kind = DistanceKind::semantic;
    } else if (choice.find("arithmetic_similarity") != std::string::npos) {
      kind = DistanceKind::arithmetic;
    } else if (choice.find("date_similarity") != std::string::npos) {
      kind = DistanceKind::date;
    } else {
      continue;
    }

    Featurization f;
    f.id = "gen-" + std::to_string(iteration_) + "-" + std::to_string(index);
    f.kind = kind;
    f.left = side_spec[0];
    f.right = side_spec[1];
    f.description = description;
    out.push_back(std::move(f));
  }
  return out;
}

double cost_to_cover(const std::vector<Featurization>& phis,
                     FeatureTable& table, PairRef positive,
                     const std::vector<PairRef>& negatives) {
  if (phis.empty()) return kInf;
  double best = kInf;
  for (const auto& phi : phis) {
    const double dp = table.pair_distance(phi, positive);
    double count = 0;
    for (const auto& neg : negatives) {
      if (table.pair_distance(phi, neg) <= dp) ++count;
    }
    best = std::min(best, count);
    if (best == 0) break;
  }
  return best;
}

PickResult evaluate_and_pick(const std::vector<Featurization>& phis,
                             FeatureTable& table,
                             const std::vector<PairRef>& positives,
                             const std::vector<PairRef>& negatives,
                             std::size_t beta, double alpha,
                             std::uint64_t seed) {
  PickResult result;
  std::vector<double> costs(positives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) {
    costs[i] = cost_to_cover(phis, table, positives[i], negatives);
    result.max_cost = std::max(result.max_cost, costs[i]);
  }
  if (positives.empty() || result.max_cost < alpha) {
    result.sufficient = true;
    return result;
  }

  const std::size_t half = std::max<std::size_t>(1, beta / 2);

  // Hardest matches first; ties keep sample order.
  std::vector<std::size_t> order(positives.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return costs[a] > costs[b];
  });
  order.resize(std::min(half, order.size()));
  for (std::size_t i : order) result.positives.push_back(positives[i]);

  // Non-matches that some featurization fails to separate from a chosen match.
  std::vector<std::size_t> witnesses;
  for (std::size_t n = 0; n < negatives.size(); ++n) {
    bool witness = false;
    for (std::size_t i : order) {
      for (const auto& phi : phis) {
        if (table.pair_distance(phi, negatives[n]) <=
            table.pair_distance(phi, positives[i])) {
          witness = true;
          break;
        }
      }
      if (witness) break;
    }
    if (witness) witnesses.push_back(n);
  }
  if (witnesses.size() > half) {
    Rng rng(seed);
    auto picked = rng.sample_indices(witnesses.size(), half);
    std::sort(picked.begin(), picked.end());
    std::vector<std::size_t> subset;
    subset.reserve(half);
    for (auto p : picked) subset.push_back(witnesses[p]);
    witnesses = std::move(subset);
  }
  for (std::size_t n : witnesses) result.negatives.push_back(negatives[n]);
  return result;
}

namespace {

GenExample make_example(const FeatureTable& table, PairRef pair, bool label,
                        const std::vector<Featurization>& phis) {
  GenExample ex;
  ex.pair = pair;
  ex.label = label;
  ex.left_text = table.left().at(pair.left).text;
  ex.right_text = table.right().at(pair.right).text;
  for (const auto& phi : phis) {
    ex.feature_values[phi.id] = {
        table.value(phi, Side::left, pair.left).display(),
        table.value(phi, Side::right, pair.right).display()};
  }
  return ex;
}

std::vector<PairRef> seeded_subset(const std::vector<PairRef>& pool,
                                   std::size_t k, Rng& rng) {
  if (pool.size() <= k) return pool;
  auto picked = rng.sample_indices(pool.size(), k);
  std::sort(picked.begin(), picked.end());
  std::vector<PairRef> out;
  out.reserve(k);
  for (auto p : picked) out.push_back(pool[p]);
  return out;
}

}  // namespace

CandidateGenResult get_candidate_featurizations(const LabeledSample& sample,
                                                FeatureTable& table,
                                                const std::string& join_prompt,
                                                FeaturizationGenerator& gen,
                                                LlmClient* client,
                                                const CandidateGenConfig& cfg) {
  auto [positives, negatives] = split_pos_neg(sample);
  const double alpha =
      cfg.alpha >= 0
          ? cfg.alpha
          : std::max(1.0, std::ceil(0.02 * static_cast<double>(
                                               negatives.size())));
  const std::size_t half = std::max<std::size_t>(1, cfg.beta / 2);

  CandidateGenResult result;
  std::set<std::string> seen_ids, seen_fingerprints;

  Rng init_rng(derive_seed(sample.seed, 0xC0));
  std::vector<PairRef> shown_pos = seeded_subset(positives, half, init_rng);
  std::vector<PairRef> shown_neg = seeded_subset(negatives, half, init_rng);

  std::size_t empty_streak = 0;
  for (std::size_t iter = 1; iter <= cfg.max_iter; ++iter) {
    result.iterations = iter;

    std::vector<GenExample> examples;
    for (const auto& p : shown_pos) {
      examples.push_back(make_example(table, p, true, result.featurizations));
    }
    for (const auto& n : shown_neg) {
      examples.push_back(make_example(table, n, false, result.featurizations));
    }

    auto batch = gen.generate(examples, join_prompt, result.featurizations);
    std::vector<Featurization> fresh;
    for (auto& f : batch) {
      if (seen_ids.count(f.id) != 0) continue;
      const std::string fp = f.structural_fingerprint();
      if (seen_fingerprints.count(fp) != 0) continue;
      seen_ids.insert(f.id);
      seen_fingerprints.insert(fp);
      fresh.push_back(std::move(f));
    }

    if (fresh.empty()) {
      if (++empty_streak >= 2) {
        result.warnings.push_back(
            "featurization generator produced nothing twice in a row; "
            "stopping with " +
            std::to_string(result.featurizations.size()) + " candidates");
        break;
      }
      continue;
    }
    empty_streak = 0;

    for (auto& f : fresh) {
      table.ensure_extracted_pairs(f, sample.pairs, client);
      result.featurizations.push_back(std::move(f));
    }

    PickResult pick =
        evaluate_and_pick(result.featurizations, table, positives, negatives,
                          cfg.beta, alpha, derive_seed(sample.seed, iter + 1));
    if (pick.sufficient) {
      result.sufficient = true;
      break;
    }
    if (!pick.positives.empty()) shown_pos = pick.positives;
    if (!pick.negatives.empty()) shown_neg = pick.negatives;
  }
  return result;
}

}  // namespace fdj
