// Command-line front end: join, adjtarget, synth, bench, validate-guarantee.
// Exit codes: 0 success, 1 unexpected failure, 2 usage, 3 guarantee
// infeasible, 4 data error.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fdj/candidates.hpp"
#include "fdj/core.hpp"
#include "fdj/engine.hpp"
#include "fdj/guarantees.hpp"
#include "fdj/http_client.hpp"
#include "fdj/prompt_pack.hpp"
#include "fdj/synthetic.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitData = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fdj::DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json_file(const std::string& path) {
  json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw fdj::DataError("invalid JSON in " + path);
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fdj::DataError("cannot write file: " + path);
  out << content;
}

// ---------------------------------------------------------------------------
// join

struct JoinOptions {
  std::string config_path;
  std::string left_path;
  std::string right_path;
  std::string truth_path;
  std::string prompt;
  std::string prompt_file;
  double recall_target = 0.9;
  double precision_target = 1.0;
  double delta = 0.1;
  std::uint64_t seed = 0;
  std::string out_path;
  std::string report_path;
  std::string decomposition_path;
  std::uint64_t k_gen = 50;
  std::uint64_t k_thresh = 200;
  double gamma = 0.05;
  std::uint64_t k_precision = 200;
  std::uint64_t mc_trials = 0;
  std::uint64_t gen_max_iter = 8;
  std::uint64_t gen_beta = 10;
  std::string client = "oracle";  // oracle | http
  std::string generator;          // scripted | llm (default depends on client)
  std::string featurizations_path;
  std::string prompts_dir;
  std::string cache_dir;
  std::string adj_cache_path;
  std::string http_url = "http://localhost:8080";
  std::string http_path = "/v1/chat/completions";
  std::string http_model = "default";
  std::uint64_t embed_seed = 0;
  std::uint64_t embed_dim = 64;
};

// Option pointers so config-file values only fill in flags the user omitted.
struct JoinOptionHandles {
  std::map<std::string, CLI::Option*> by_key;
};

void add_join_flags(CLI::App* cmd, JoinOptions& o, JoinOptionHandles& h) {
  auto track = [&](const std::string& key, CLI::Option* opt) {
    h.by_key[key] = opt;
  };
  cmd->add_option("--config", o.config_path,
                  "JSON config file; explicit flags win over its keys");
  track("left", cmd->add_option("--left", o.left_path,
                                "Left record set (JSONL: {id, text})"));
  track("right",
        cmd->add_option("--right", o.right_path,
                        "Right record set; omit or repeat --left for a "
                        "self-join"));
  track("truth", cmd->add_option("--truth", o.truth_path,
                                 "Ground-truth pairs (JSONL: {left, right}); "
                                 "required with --client oracle"));
  track("prompt", cmd->add_option("--prompt", o.prompt,
                                  "Join condition with {l} and {r} slots"));
  track("prompt_file", cmd->add_option("--prompt-file", o.prompt_file,
                                       "Read the join condition from a file"));
  track("recall_target", cmd->add_option("--recall-target", o.recall_target,
                                         "Recall floor T in (0, 1)"));
  track("precision_target",
        cmd->add_option("--precision-target", o.precision_target,
                        "Precision target; below 1 enables certified "
                        "pre-acceptance"));
  track("delta", cmd->add_option("--delta", o.delta,
                                 "Failure probability budget"));
  track("seed", cmd->add_option("--seed", o.seed, "Pipeline seed"));
  track("out", cmd->add_option("--out", o.out_path,
                               "Write the joined pairs (JSONL)"));
  track("report", cmd->add_option("--report", o.report_path,
                                  "Write the run report (JSON)"));
  track("save_decomposition",
        cmd->add_option("--save-decomposition", o.decomposition_path,
                        "Write the learned decomposition (JSON)"));
  track("k_gen", cmd->add_option("--k-gen", o.k_gen,
                                 "Positives for generation + scaffold"));
  track("k_thresh", cmd->add_option("--k-thresh", o.k_thresh,
                                    "Positives for threshold selection"));
  track("gamma", cmd->add_option("--gamma", o.gamma,
                                 "Greedy scaffold improvement threshold"));
  track("k_precision", cmd->add_option("--k-precision", o.k_precision,
                                       "Judged sample for precision subsets"));
  track("mc_trials", cmd->add_option("--mc-trials", o.mc_trials,
                                     "Monte Carlo trials per estimate "
                                     "(0: budget default)"));
  track("gen_max_iter", cmd->add_option("--gen-max-iter", o.gen_max_iter,
                                        "Featurization generation rounds"));
  track("gen_beta", cmd->add_option("--gen-beta", o.gen_beta,
                                    "Examples shown per generation round"));
  track("client", cmd->add_option("--client", o.client,
                                  "LLM client: oracle | http")
                      ->check(CLI::IsMember({"oracle", "http"})));
  track("generator",
        cmd->add_option("--generator", o.generator,
                        "Featurization generator: scripted | llm (default: "
                        "scripted when --featurizations is given, else llm)")
            ->check(CLI::IsMember({"scripted", "llm"})));
  track("featurizations",
        cmd->add_option("--featurizations", o.featurizations_path,
                        "JSON array of featurization specs for the scripted "
                        "generator"));
  track("prompts_dir", cmd->add_option("--prompts", o.prompts_dir,
                                       "Directory of prompt template "
                                       "overrides (*.txt)"));
  track("cache_dir", cmd->add_option("--cache-dir", o.cache_dir,
                                     "LLM feature-extraction cache "
                                     "directory"));
  track("adj_cache", cmd->add_option("--adj-cache", o.adj_cache_path,
                                     "Adjusted-target cache file (JSON)"));
  track("http_url", cmd->add_option("--http-url", o.http_url,
                                    "Base URL for --client http"));
  track("http_path", cmd->add_option("--http-path", o.http_path,
                                     "Endpoint path for --client http"));
  track("http_model", cmd->add_option("--http-model", o.http_model,
                                      "Model name for --client http"));
  track("embed_seed", cmd->add_option("--embed-seed", o.embed_seed,
                                      "Hashing embedding seed"));
  track("embed_dim", cmd->add_option("--embed-dim", o.embed_dim,
                                     "Hashing embedding dimension"));
}

template <typename T>
void fill_from_json(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

void apply_config_file(JoinOptions& o, const JoinOptionHandles& h) {
  if (o.config_path.empty()) return;
  json j = load_json_file(o.config_path);
  if (!j.is_object()) {
    throw fdj::DataError("config file must hold a JSON object: " +
                         o.config_path);
  }
  auto untouched = [&](const std::string& key) {
    auto it = h.by_key.find(key);
    return it == h.by_key.end() || it->second->count() == 0;
  };
  for (const auto& [key, value] : j.items()) {
    if (h.by_key.count(key) == 0) {
      throw fdj::DataError("unknown config key '" + key + "' in " +
                           o.config_path);
    }
    (void)value;
  }
  if (untouched("left")) fill_from_json(j, "left", o.left_path);
  if (untouched("right")) fill_from_json(j, "right", o.right_path);
  if (untouched("truth")) fill_from_json(j, "truth", o.truth_path);
  if (untouched("prompt")) fill_from_json(j, "prompt", o.prompt);
  if (untouched("prompt_file")) fill_from_json(j, "prompt_file", o.prompt_file);
  if (untouched("recall_target"))
    fill_from_json(j, "recall_target", o.recall_target);
  if (untouched("precision_target"))
    fill_from_json(j, "precision_target", o.precision_target);
  if (untouched("delta")) fill_from_json(j, "delta", o.delta);
  if (untouched("seed")) fill_from_json(j, "seed", o.seed);
  if (untouched("out")) fill_from_json(j, "out", o.out_path);
  if (untouched("report")) fill_from_json(j, "report", o.report_path);
  if (untouched("save_decomposition"))
    fill_from_json(j, "save_decomposition", o.decomposition_path);
  if (untouched("k_gen")) fill_from_json(j, "k_gen", o.k_gen);
  if (untouched("k_thresh")) fill_from_json(j, "k_thresh", o.k_thresh);
  if (untouched("gamma")) fill_from_json(j, "gamma", o.gamma);
  if (untouched("k_precision")) fill_from_json(j, "k_precision", o.k_precision);
  if (untouched("mc_trials")) fill_from_json(j, "mc_trials", o.mc_trials);
  if (untouched("gen_max_iter"))
    fill_from_json(j, "gen_max_iter", o.gen_max_iter);
  if (untouched("gen_beta")) fill_from_json(j, "gen_beta", o.gen_beta);
  if (untouched("client")) fill_from_json(j, "client", o.client);
  if (untouched("generator")) fill_from_json(j, "generator", o.generator);
  if (untouched("featurizations"))
    fill_from_json(j, "featurizations", o.featurizations_path);
  if (untouched("prompts_dir")) fill_from_json(j, "prompts_dir", o.prompts_dir);
  if (untouched("cache_dir")) fill_from_json(j, "cache_dir", o.cache_dir);
  if (untouched("adj_cache")) fill_from_json(j, "adj_cache", o.adj_cache_path);
  if (untouched("http_url")) fill_from_json(j, "http_url", o.http_url);
  if (untouched("http_path")) fill_from_json(j, "http_path", o.http_path);
  if (untouched("http_model")) fill_from_json(j, "http_model", o.http_model);
  if (untouched("embed_seed")) fill_from_json(j, "embed_seed", o.embed_seed);
  if (untouched("embed_dim")) fill_from_json(j, "embed_dim", o.embed_dim);
}

std::vector<fdj::Featurization> load_featurizations(const std::string& path) {
  json j = load_json_file(path);
  if (!j.is_array()) {
    throw fdj::DataError("featurization file must hold a JSON array: " + path);
  }
  std::vector<fdj::Featurization> feats;
  for (const auto& item : j) {
    try {
      feats.push_back(fdj::Featurization::from_json(item));
    } catch (const std::exception& e) {
      throw fdj::DataError("bad featurization spec in " + path + ": " +
                           e.what());
    }
  }
  return feats;
}

int run_join(JoinOptions& o, const JoinOptionHandles& handles) {
  apply_config_file(o, handles);

  if (o.left_path.empty()) throw UsageError("--left is required");
  if (!o.prompt_file.empty()) {
    if (!o.prompt.empty()) {
      throw UsageError("--prompt and --prompt-file are mutually exclusive");
    }
    o.prompt = read_text_file(o.prompt_file);
    while (!o.prompt.empty() &&
           (o.prompt.back() == '\n' || o.prompt.back() == '\r')) {
      o.prompt.pop_back();
    }
  }
  if (o.prompt.empty()) {
    throw UsageError("a join condition is required (--prompt/--prompt-file)");
  }
  if (o.client == "oracle" && o.truth_path.empty()) {
    throw UsageError("--client oracle needs --truth for the simulated judge");
  }
  if (o.generator.empty()) {
    o.generator = o.featurizations_path.empty() ? "llm" : "scripted";
  }
  if (o.generator == "scripted" && o.featurizations_path.empty()) {
    throw UsageError("--generator scripted needs --featurizations");
  }

  fdj::RecordSet left =
      fdj::RecordSet::load_jsonl(o.left_path, fdj::Side::left);
  std::optional<fdj::RecordSet> right_store;
  if (!o.right_path.empty() && o.right_path != o.left_path) {
    right_store =
        fdj::RecordSet::load_jsonl(o.right_path, fdj::Side::right);
  }
  const fdj::RecordSet& right = right_store ? *right_store : left;

  fdj::JoinSpec spec;
  spec.recall_target = o.recall_target;
  spec.precision_target = o.precision_target;
  spec.delta = o.delta;
  spec.join_prompt = o.prompt;

  std::optional<fdj::ResultSet> truth;
  if (!o.truth_path.empty()) {
    truth = fdj::ResultSet::load_jsonl(o.truth_path, left, right);
  }

  std::unique_ptr<fdj::LlmClient> client;
  if (o.client == "oracle") {
    client = std::make_unique<fdj::OracleBackend>(&*truth, &left, &right);
  } else {
    fdj::HttpClientConfig hc;
    hc.base_url = o.http_url;
    hc.path = o.http_path;
    hc.model = o.http_model;
    client = std::make_unique<fdj::HttpLlmClient>(hc);
  }

  std::unique_ptr<fdj::FeaturizationGenerator> generator;
  if (o.generator == "scripted") {
    std::deque<std::vector<fdj::Featurization>> playbook;
    playbook.push_back(load_featurizations(o.featurizations_path));
    generator = std::make_unique<fdj::ScriptedGenerator>(std::move(playbook));
  } else {
    fdj::PromptPack prompts = o.prompts_dir.empty()
                                  ? fdj::PromptPack::builtin()
                                  : fdj::PromptPack::load_dir(o.prompts_dir);
    generator =
        std::make_unique<fdj::LlmGenerator>(client.get(), std::move(prompts));
  }

  fdj::HashingEmbeddingProvider provider(
      o.embed_seed, static_cast<std::size_t>(o.embed_dim));

  fdj::PipelineConfig config;
  config.k_positive_gen = o.k_gen;
  config.k_positive_thresh = o.k_thresh;
  config.gamma = o.gamma;
  config.gen.max_iter = o.gen_max_iter;
  config.gen.beta = o.gen_beta;
  config.seed = o.seed;
  config.k_precision = o.k_precision;
  config.mc_trials = o.mc_trials;
  config.cache_dir = o.cache_dir;
  config.adj_cache_path = o.adj_cache_path;

  fdj::JoinOutcome outcome =
      fdj::fdj_join(left, right, spec, config, *client, *generator, &provider,
                    truth ? &*truth : nullptr);

  if (!o.out_path.empty()) {
    outcome.result.save_jsonl(o.out_path, left, right);
  }
  if (!o.report_path.empty()) {
    write_text_file(o.report_path, outcome.report.dump(2) + "\n");
  }
  if (!o.decomposition_path.empty()) {
    write_text_file(o.decomposition_path,
                    outcome.decomposition.to_json().dump(2) + "\n");
  }

  json summary{{"result_size", outcome.result.size()},
               {"cost_ratio", outcome.report.at("cost_ratio")},
               {"total_tokens", outcome.ledger.total_tokens()},
               {"warnings", outcome.warnings}};
  if (outcome.report.contains("metrics")) {
    summary["metrics"] = outcome.report.at("metrics");
  }
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// adjtarget

struct AdjOptions {
  std::uint64_t k_plus = 0;
  std::uint64_t r = 0;
  double target = 0.9;
  double delta = 0.1;
  std::uint64_t n = 0;
  std::uint64_t k_prime = 0;
  double n_plus_lo = -1.0;
  double n_plus_hi = -1.0;
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
  std::string cache_path;
  std::string out_path;
  bool no_half_width = false;
};

int run_adjtarget(const AdjOptions& o) {
  fdj::AdjTargetQuery query;
  query.k_plus = o.k_plus;
  query.r = o.r;
  query.T = o.target;
  query.delta = o.delta;
  query.n = o.n;
  query.k_prime = o.k_prime;
  query.n_plus_lo = o.n_plus_lo;
  query.n_plus_hi = o.n_plus_hi;
  query.mc_trials = o.trials;
  query.seed = o.seed;

  std::optional<fdj::AdjTargetCache> cache;
  if (!o.cache_path.empty()) cache.emplace(o.cache_path);

  fdj::AdjTargetResult res = fdj::adj_target(
      query, cache ? &*cache : nullptr, nullptr, !o.no_half_width);

  json out{{"adjusted_target", std::isfinite(res.t_prime)
                                   ? json(res.t_prime)
                                   : json(nullptr)},
           {"grid", res.grid},
           {"worst_failure_prob", res.p_worst},
           {"budget",
            {{"delta1", res.budget.delta1},
             {"delta2", res.budget.delta2},
             {"delta3", res.budget.delta3}}},
           {"match_count_bounds", {{"lo", res.bounds.lo}, {"hi", res.bounds.hi}}},
           {"population_sizes_evaluated", res.eval_points},
           {"trials", res.trials},
           {"from_cache", res.from_cache}};
  if (!o.out_path.empty()) write_text_file(o.out_path, out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  if (!std::isfinite(res.t_prime)) {
    throw fdj::GuaranteeInfeasibleError(
        "no adjusted target certifies the requested recall floor");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::uint64_t n = 50;
  std::uint64_t persons = 1;
  std::uint64_t distractor_level = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int run_synth(const SynthOptions& o) {
  fdj::SynthConfig cfg;
  cfg.n = o.n;
  cfg.persons_per_sentence = o.persons;
  cfg.distractor_level = o.distractor_level;
  cfg.seed = o.seed;
  fdj::SynthData data = fdj::generate_synthetic(cfg);
  fdj::save_synthetic(data, o.out_dir);
  std::cout << data.meta.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  std::uint64_t n = 200;
  std::uint64_t persons = 1;
  std::uint64_t distractor_level = 0;
  std::uint64_t seed = 7;
  double recall_target = 0.9;
  double delta = 0.1;
  std::uint64_t k_gen = 6;
  std::uint64_t k_thresh = 14;
  double gamma = 0.05;
  std::uint64_t embed_seed = 0;
  std::uint64_t embed_dim = 64;
  std::string json_path;
  std::string csv_path;
};

fdj::Featurization overlap_featurization() {
  fdj::Featurization f;
  f.id = "sentence-word-overlap";
  f.kind = fdj::DistanceKind::word_overlap;
  f.left = fdj::ExtractorSpec::code("full_text");
  f.right = fdj::ExtractorSpec::code("full_text");
  f.description = "words shared between the two sentences";
  return f;
}

json bench_run_json(const std::string& method, const BenchOptions& o,
                    double recall, double precision, double ratio,
                    const fdj::CostLedger& ledger) {
  return json{{"method", method},
              {"T", o.recall_target},
              {"delta", o.delta},
              {"seed", o.seed},
              {"recall", recall},
              {"precision", precision},
              {"cost_ratio", ratio},
              {"phase_costs", ledger.to_json()}};
}

int run_bench(const BenchOptions& o) {
  fdj::SynthConfig scfg;
  scfg.n = o.n;
  scfg.persons_per_sentence = o.persons;
  scfg.distractor_level = o.distractor_level;
  scfg.seed = o.seed;
  fdj::SynthData data = fdj::generate_synthetic(scfg);

  fdj::JoinSpec spec;
  spec.recall_target = o.recall_target;
  spec.precision_target = 1.0;
  spec.delta = o.delta;
  spec.join_prompt = fdj::synthetic_join_prompt();

  fdj::HashingEmbeddingProvider provider(
      o.embed_seed, static_cast<std::size_t>(o.embed_dim));

  json runs = json::array();

  // Featurized-decomposition join with the oracle judge and the offline
  // name-overlap playbook.
  {
    fdj::OracleBackend oracle(&data.truth, &data.records, &data.records);
    std::deque<std::vector<fdj::Featurization>> playbook;
    playbook.push_back({overlap_featurization()});
    fdj::ScriptedGenerator generator(std::move(playbook));
    fdj::PipelineConfig config;
    config.k_positive_gen = o.k_gen;
    config.k_positive_thresh = o.k_thresh;
    config.gamma = o.gamma;
    config.seed = o.seed;
    fdj::JoinOutcome outcome =
        fdj::fdj_join(data.records, data.records, spec, config, oracle,
                      generator, &provider, &data.truth);
    const auto& metrics = outcome.report.at("metrics");
    runs.push_back(bench_run_json(
        "fdj", o, metrics.at("recall").get<double>(),
        metrics.at("precision").get<double>(),
        outcome.report.at("cost_ratio").get<double>(), outcome.ledger));
  }

  // Ground-truth-assisted cascade over hashing embeddings.
  {
    fdj::CascadeResult cas = fdj::optimal_cascade_baseline(
        data.records, data.records, data.truth, provider, o.recall_target,
        spec);
    fdj::CostLedger ledger;
    ledger.inference.tokens = cas.embedding_tokens;
    ledger.inference.calls = data.records.size();
    ledger.refinement.tokens = cas.judge_tokens;
    ledger.refinement.calls = cas.judged_pairs;
    runs.push_back(bench_run_json("optimal-cascade", o, cas.recall,
                                  cas.precision, cas.cost_ratio, ledger));
  }

  // Judge every pair: the cost-ratio denominator run (exact output).
  {
    fdj::CostLedger ledger;
    ledger.refinement.tokens =
        fdj::all_pairs_judge_tokens(data.records, data.records, spec);
    ledger.refinement.calls =
        fdj::pair_universe_size(data.records, data.records);
    runs.push_back(bench_run_json("all-pairs", o, 1.0, 1.0, 1.0, ledger));
  }

  json out{{"dataset",
            {{"n", o.n},
             {"persons_per_sentence", o.persons},
             {"distractor_level", o.distractor_level},
             {"records", data.records.size()},
             {"truth_pairs", data.truth.size()},
             {"seed", o.seed}}},
           {"runs", runs}};

  if (!o.json_path.empty()) write_text_file(o.json_path, out.dump(2) + "\n");
  if (!o.csv_path.empty()) {
    std::ostringstream csv;
    csv << "method,T,delta,seed,recall,precision,cost_ratio,labeling_tokens,"
           "construction_tokens,inference_tokens,refinement_tokens,"
           "total_tokens\n";
    for (const auto& run : runs) {
      const auto& pc = run.at("phase_costs");
      csv << run.at("method").get<std::string>() << ','
          << run.at("T").get<double>() << ',' << run.at("delta").get<double>()
          << ',' << run.at("seed").get<std::uint64_t>() << ','
          << run.at("recall").get<double>() << ','
          << run.at("precision").get<double>() << ','
          << run.at("cost_ratio").get<double>() << ','
          << pc.at("labeling").at("tokens").get<std::size_t>() << ','
          << pc.at("construction").at("tokens").get<std::size_t>() << ','
          << pc.at("inference").at("tokens").get<std::size_t>() << ','
          << pc.at("refinement").at("tokens").get<std::size_t>() << ','
          << pc.at("total_tokens").get<std::size_t>() << "\n";
    }
    write_text_file(o.csv_path, csv.str());
  }
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validate-guarantee

struct ValidateOptions {
  double recall_target = 0.8;
  double delta = 0.25;
  std::uint64_t population_positives = 60;
  std::uint64_t r = 2;
  std::uint64_t negatives = 70;
  std::uint64_t sample_positives = 30;
  std::uint64_t trials = 200;
  std::uint64_t n_universe = 200;
  std::uint64_t mc_trials = 0;
  std::uint64_t seed = 7;
  std::string out_path;
};

int run_validate(const ValidateOptions& o) {
  fdj::GuaranteeExperimentConfig cfg;
  cfg.recall_target = o.recall_target;
  cfg.delta = o.delta;
  cfg.population_positives = o.population_positives;
  cfg.r = o.r;
  cfg.negatives = o.negatives;
  cfg.sample_positives = o.sample_positives;
  cfg.trials = o.trials;
  cfg.n_universe = o.n_universe;
  cfg.mc_trials = o.mc_trials;
  cfg.seed = o.seed;

  fdj::GuaranteeExperimentResult res = fdj::validate_guarantee_experiment(cfg);
  json out{{"adjusted_target", res.t_prime},
           {"trials", res.trials},
           {"failures", res.failures},
           {"failure_rate", res.failure_rate},
           {"allowed_failure_rate", res.delta3},
           {"mean_population_recall", res.mean_population_recall}};
  if (!o.out_path.empty()) write_text_file(o.out_path, out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate semantic join via featurized decomposition"};
  app.require_subcommand(1);

  JoinOptions join_opts;
  JoinOptionHandles join_handles;
  CLI::App* join_cmd = app.add_subcommand(
      "join", "Run the full join pipeline on two record sets");
  add_join_flags(join_cmd, join_opts, join_handles);

  AdjOptions adj_opts;
  CLI::App* adj_cmd = app.add_subcommand(
      "adjtarget",
      "Compute (and cache) the sampling-error-adjusted recall target");
  adj_cmd->add_option("--k-plus", adj_opts.k_plus, "Matches in the sample")
      ->required();
  adj_cmd->add_option("--r", adj_opts.r, "Scaffold clause count")->required();
  adj_cmd->add_option("--target", adj_opts.target, "User recall target")
      ->required();
  adj_cmd->add_option("--delta", adj_opts.delta, "Failure budget")->required();
  adj_cmd->add_option("--n", adj_opts.n, "Pair universe size")->required();
  adj_cmd->add_option("--k-prime", adj_opts.k_prime, "Labeled sample size")
      ->required();
  adj_cmd->add_option("--n-plus-lo", adj_opts.n_plus_lo,
                      "Override: lower bound on population matches");
  adj_cmd->add_option("--n-plus-hi", adj_opts.n_plus_hi,
                      "Override: upper bound on population matches");
  adj_cmd->add_option("--trials", adj_opts.trials,
                      "Monte Carlo trials per estimate (0: budget default)");
  adj_cmd->add_option("--seed", adj_opts.seed, "Monte Carlo seed");
  adj_cmd->add_option("--cache", adj_opts.cache_path,
                      "Cache file to consult and extend");
  adj_cmd->add_option("--out", adj_opts.out_path, "Write the result (JSON)");
  adj_cmd->add_flag("--no-half-width", adj_opts.no_half_width,
                    "Compare point estimates instead of upper confidence "
                    "bounds");

  SynthOptions synth_opts;
  CLI::App* synth_cmd = app.add_subcommand(
      "synth", "Generate the synthetic person-movie benchmark corpus");
  synth_cmd->add_option("--n", synth_opts.n, "Person (= movie) count");
  synth_cmd->add_option("--persons", synth_opts.persons,
                        "Person names per sentence");
  synth_cmd->add_option("--distractor-level", synth_opts.distractor_level,
                        "Filler sentences on each side of the payload");
  synth_cmd->add_option("--seed", synth_opts.seed, "Generator seed");
  synth_cmd->add_option("--out", synth_opts.out_dir, "Output directory")
      ->required();

  BenchOptions bench_opts;
  CLI::App* bench_cmd = app.add_subcommand(
      "bench",
      "Compare fdj, the optimal cascade, and all-pairs judging on synthetic "
      "data");
  bench_cmd->add_option("--n", bench_opts.n, "Person (= movie) count");
  bench_cmd->add_option("--persons", bench_opts.persons,
                        "Person names per sentence");
  bench_cmd->add_option("--distractor-level", bench_opts.distractor_level,
                        "Filler sentences on each side of the payload");
  bench_cmd->add_option("--seed", bench_opts.seed, "Run seed");
  bench_cmd->add_option("--recall-target", bench_opts.recall_target,
                        "Recall floor T");
  bench_cmd->add_option("--delta", bench_opts.delta, "Failure budget");
  bench_cmd->add_option("--k-gen", bench_opts.k_gen,
                        "Positives for generation + scaffold");
  bench_cmd->add_option("--k-thresh", bench_opts.k_thresh,
                        "Positives for threshold selection");
  bench_cmd->add_option("--gamma", bench_opts.gamma,
                        "Greedy improvement threshold");
  bench_cmd->add_option("--embed-seed", bench_opts.embed_seed,
                        "Hashing embedding seed");
  bench_cmd->add_option("--embed-dim", bench_opts.embed_dim,
                        "Hashing embedding dimension");
  bench_cmd->add_option("--json", bench_opts.json_path,
                        "Write the metrics JSON here");
  bench_cmd->add_option("--csv", bench_opts.csv_path,
                        "Write the plot-ready CSV here");

  ValidateOptions val_opts;
  CLI::App* val_cmd = app.add_subcommand(
      "validate-guarantee",
      "Repeated-trial recall-failure-rate experiment on a worst-case-shaped "
      "population");
  val_cmd->add_option("--recall-target", val_opts.recall_target,
                      "Recall floor T");
  val_cmd->add_option("--delta", val_opts.delta, "Failure budget");
  val_cmd->add_option("--population-positives", val_opts.population_positives,
                      "Matching pairs in the synthetic population");
  val_cmd->add_option("--r", val_opts.r, "Scaffold clause count");
  val_cmd->add_option("--negatives", val_opts.negatives,
                      "Non-matching pairs in the population");
  val_cmd->add_option("--sample-positives", val_opts.sample_positives,
                      "Matches drawn per trial");
  val_cmd->add_option("--trials", val_opts.trials, "Resampling trials");
  val_cmd->add_option("--n-universe", val_opts.n_universe,
                      "Universe size reported to the guarantee machinery");
  val_cmd->add_option("--mc-trials", val_opts.mc_trials,
                      "Monte Carlo trials per estimate (0: budget default)");
  val_cmd->add_option("--seed", val_opts.seed, "Experiment seed");
  val_cmd->add_option("--out", val_opts.out_path, "Write the result (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (join_cmd->parsed()) return run_join(join_opts, join_handles);
    if (adj_cmd->parsed()) return run_adjtarget(adj_opts);
    if (synth_cmd->parsed()) return run_synth(synth_opts);
    if (bench_cmd->parsed()) return run_bench(bench_opts);
    if (val_cmd->parsed()) return run_validate(val_opts);
    std::cerr << "no subcommand selected\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fdj::GuaranteeInfeasibleError& e) {
    std::cerr << "guarantee infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const fdj::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
