#include "fdj/guarantees.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fdj/rng.hpp"

namespace fdj {

std::vector<int> WorstCaseDataset::row(std::size_t idx) const {
  if (idx >= n_plus) throw std::out_of_range("row index out of range");
  std::vector<int> out(r, 0);
  if (idx < u * r) {
    out[idx / u] = static_cast<int>(idx % u) + 1;
  }
  return out;
}

std::vector<std::vector<int>> WorstCaseDataset::rows() const {
  std::vector<std::vector<int>> out;
  out.reserve(n_plus);
  for (std::size_t i = 0; i < n_plus; ++i) out.push_back(row(i));
  return out;
}

long long WorstCaseDataset::min_bad_exclusions() const {
  return static_cast<long long>(
             std::floor(static_cast<double>(n_plus) * (1.0 - T) + 1e-9)) +
         1;
}

bool WorstCaseDataset::vacuous() const {
  return static_cast<long long>(u * r) < min_bad_exclusions();
}

namespace {

WorstCaseDataset make_dataset(std::size_t n_plus, std::size_t r, double T,
                              std::size_t u) {
  if (r == 0) throw std::invalid_argument("need at least one dimension");
  if (T < 0.0 || T >= 1.0) {
    throw std::invalid_argument("recall target must lie in [0, 1)");
  }
  if (u < 1) {
    throw std::invalid_argument(
        "population too small for this recall target: no row can be excluded "
        "per dimension");
  }
  if (u * r > n_plus) {
    throw std::invalid_argument(
        "dimension count times per-dimension spread exceeds the population");
  }
  return WorstCaseDataset{n_plus, r, T, u};
}

}  // namespace

WorstCaseDataset worst_case_dataset(std::size_t n_plus, std::size_t r,
                                    double T) {
  const long long u =
      ceil_guard(static_cast<double>(n_plus) * (1.0 - T)) - 1;
  return make_dataset(n_plus, r, T, u < 0 ? 0 : static_cast<std::size_t>(u));
}

WorstCaseDataset worst_case_dataset_rank(std::size_t n_plus, std::size_t r,
                                         double T) {
  if (r == 0) throw std::invalid_argument("need at least one dimension");
  return make_dataset(n_plus, r, T, n_plus / r);
}

std::size_t adversary_min_misses(const WorstCaseDataset& dataset,
                                 const std::vector<std::uint64_t>& sampled) {
  const std::size_t k = sampled.size();
  const long long m_bad = dataset.min_bad_exclusions();
  const long long u = static_cast<long long>(dataset.u);

  // Sampled nonzero values per dimension, descending.
  std::vector<std::vector<long long>> w(dataset.r);
  for (std::uint64_t idx : sampled) {
    if (idx < dataset.u * dataset.r) {
      w[idx / dataset.u].push_back(static_cast<long long>(idx % dataset.u) + 1);
    }
  }
  for (auto& v : w) std::sort(v.begin(), v.end(), std::greater<>());

  // E[s]: most population rows excludable while missing at most s sampled
  // matches. Per dimension, missing its s largest sampled values lets the
  // threshold drop to the next one (or to zero once all are missed).
  std::vector<long long> E(k + 1, 0);
  for (const auto& vals : w) {
    const std::size_t cap = vals.size();
    std::vector<long long> next(k + 1, 0);
    for (std::size_t s = 0; s <= k; ++s) {
      long long best = 0;
      const std::size_t t_max = std::min(s, cap);
      for (std::size_t t = 0; t <= t_max; ++t) {
        const long long gain = t < cap ? u - vals[t] : u;
        best = std::max(best, E[s - t] + gain);
      }
      next[s] = best;
    }
    E = std::move(next);
  }

  for (std::size_t s = 0; s <= k; ++s) {
    if (E[s] >= m_bad) return s;
  }
  return k + 1;
}

namespace {

double hoeffding_half_width(std::size_t trials, double delta1) {
  if (trials == 0 || delta1 <= 0.0 || delta1 >= 1.0) return 0.0;
  return std::sqrt(std::log(1.0 / delta1) /
                   (2.0 * static_cast<double>(trials)));
}

long long sample_miss_allowance(std::size_t k_plus, double t_prime) {
  return static_cast<long long>(k_plus) -
         ceil_guard(t_prime * static_cast<double>(k_plus));
}

}  // namespace

std::vector<McEstimate> McFailureEvaluator::evaluate(
    const WorstCaseDataset& dataset, std::size_t k_plus,
    const std::vector<double>& t_primes, std::size_t trials,
    std::uint64_t seed, double delta1) {
  std::vector<McEstimate> out(t_primes.size());
  if (dataset.vacuous() || trials == 0) return out;
  if (k_plus > dataset.n_plus) {
    throw std::invalid_argument("subsample larger than the population");
  }

  std::vector<std::size_t> hist(k_plus + 2, 0);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, t));
    ++hist[adversary_min_misses(dataset, rng.sample_indices(dataset.n_plus,
                                                            k_plus))];
  }
  std::vector<std::size_t> cum(hist.size(), 0);
  std::size_t running = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    running += hist[i];
    cum[i] = running;
  }

  const double hw = hoeffding_half_width(trials, delta1);
  for (std::size_t i = 0; i < t_primes.size(); ++i) {
    const long long allow = sample_miss_allowance(k_plus, t_primes[i]);
    double p = 0.0;
    if (allow >= 0) {
      const std::size_t idx =
          std::min<std::size_t>(static_cast<std::size_t>(allow), k_plus);
      p = static_cast<double>(cum[idx]) / static_cast<double>(trials);
    }
    out[i] = McEstimate{p, hw, trials};
  }
  return out;
}

McEstimate failure_prob_mc(const WorstCaseDataset& dataset, std::size_t k_plus,
                           double t_prime, std::size_t trials,
                           std::uint64_t seed, double delta1) {
  McFailureEvaluator eval;
  return eval.evaluate(dataset, k_plus, {t_prime}, trials, seed, delta1)[0];
}

double failure_prob_exact(const WorstCaseDataset& dataset, std::size_t k_plus,
                          double t_prime) {
  const std::size_t n = dataset.n_plus;
  if (k_plus > n) {
    throw std::invalid_argument("subsample larger than the population");
  }
  double log_count = std::lgamma(static_cast<double>(n) + 1) -
                     std::lgamma(static_cast<double>(k_plus) + 1) -
                     std::lgamma(static_cast<double>(n - k_plus) + 1);
  if (log_count > std::log(2e6)) {
    throw std::invalid_argument(
        "too many subsets for exact enumeration (over 2e6)");
  }
  if (dataset.vacuous()) return 0.0;

  const long long allow = sample_miss_allowance(k_plus, t_prime);
  std::vector<std::uint64_t> subset(k_plus);
  for (std::size_t i = 0; i < k_plus; ++i) subset[i] = i;
  std::size_t total = 0, failures = 0;
  while (true) {
    ++total;
    if (allow >= 0 &&
        static_cast<long long>(adversary_min_misses(dataset, subset)) <=
            allow) {
      ++failures;
    }
    // Next combination in lexicographic order.
    std::size_t i = k_plus;
    while (i > 0 && subset[i - 1] == n - k_plus + (i - 1)) --i;
    if (i == 0) break;
    ++subset[i - 1];
    for (std::size_t j = i; j < k_plus; ++j) subset[j] = subset[j - 1] + 1;
  }
  return static_cast<double>(failures) / static_cast<double>(total);
}

DeltaBudget compute_delta_budget(double delta, std::size_t k_plus,
                                 std::size_t n, std::size_t k_prime) {
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::invalid_argument("failure budget must lie in (0, 1)");
  }
  if (k_prime == 0) throw std::invalid_argument("labeled sample is empty");
  DeltaBudget b;
  b.delta = delta;
  b.delta2 = delta / 10.0;
  b.delta3 = 0.8 * delta;
  const double hw2 = std::sqrt(std::log(1.0 / b.delta2) /
                               (2.0 * static_cast<double>(k_prime)));
  const double estimates = 2.0 * static_cast<double>(k_plus) *
                           static_cast<double>(n) * hw2;
  b.delta1 = delta / (10.0 * std::max(1.0, estimates));
  b.default_trials = static_cast<std::size_t>(
      std::ceil(5000.0 * std::log(1.0 / b.delta1)));
  return b;
}

NPlusBounds estimate_n_plus_bounds(std::size_t k_prime, std::size_t k_plus,
                                   std::size_t n, double delta2) {
  if (k_prime == 0) throw std::invalid_argument("labeled sample is empty");
  if (k_plus > k_prime) {
    throw std::invalid_argument("more matches than sampled pairs");
  }
  if (n == 0) throw std::invalid_argument("empty pair universe");
  if (!(delta2 > 0.0) || delta2 >= 1.0) {
    throw std::invalid_argument("confidence budget must lie in (0, 1)");
  }
  const double rate =
      static_cast<double>(k_plus) / static_cast<double>(k_prime);
  const double hw = std::sqrt(std::log(1.0 / delta2) /
                              (2.0 * static_cast<double>(k_prime)));
  NPlusBounds b;
  b.lo = static_cast<double>(n) * (rate - hw);
  b.hi = static_cast<double>(n) * (rate + hw);
  b.lo = std::max(b.lo, static_cast<double>(std::max<std::size_t>(k_plus, 1)));
  b.hi = std::min(b.hi, static_cast<double>(n));
  b.hi = std::max(b.hi, b.lo);
  return b;
}

AdjTargetCache::AdjTargetCache(std::filesystem::path file)
    : file_(std::move(file)) {
  std::ifstream in(file_);
  if (!in) return;  // created on first store
  auto j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_array()) {
    throw DataError("adjusted-target cache is not a JSON array: " +
                    file_.string());
  }
  for (const auto& e : j) {
    try {
      AdjCacheKey key;
      key.k_plus = e.at("k_plus").get<std::size_t>();
      key.r = e.at("r").get<std::size_t>();
      key.T = e.at("T").get<double>();
      key.delta = e.at("delta").get<double>();
      key.trials = e.at("N").get<std::size_t>();
      key.seed = e.at("seed").get<std::uint64_t>();
      key.n_plus_lo = e.at("n_plus_lo").get<double>();
      key.n_plus_hi = e.at("n_plus_hi").get<double>();
      const double t_prime =
          e.at("T_prime").is_null() ? kInf : e.at("T_prime").get<double>();
      entries_.emplace_back(key, t_prime);
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("bad adjusted-target cache entry in " + file_.string() +
                      ": " + ex.what());
    }
  }
}

std::optional<double> AdjTargetCache::lookup(const AdjCacheKey& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void AdjTargetCache::store(const AdjCacheKey& key, double t_prime) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = t_prime;
      if (!file_.empty()) persist();
      return;
    }
  }
  entries_.emplace_back(key, t_prime);
  if (!file_.empty()) persist();
}

void AdjTargetCache::persist() const {
  auto arr = nlohmann::json::array();
  for (const auto& [k, v] : entries_) {
    nlohmann::json e;
    e["k_plus"] = k.k_plus;
    e["r"] = k.r;
    e["T"] = k.T;
    e["delta"] = k.delta;
    e["N"] = k.trials;
    e["seed"] = k.seed;
    e["n_plus_lo"] = k.n_plus_lo;
    e["n_plus_hi"] = k.n_plus_hi;
    if (std::isfinite(v)) {
      e["T_prime"] = v;
    } else {
      e["T_prime"] = nullptr;
    }
    arr.push_back(std::move(e));
  }
  if (!file_.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(file_.parent_path(), ec);
  }
  std::ofstream out(file_);
  if (!out) throw DataError("cannot write cache file: " + file_.string());
  out << arr.dump(2) << "\n";
}

AdjTargetResult adj_target(const AdjTargetQuery& query, AdjTargetCache* cache,
                           FailureProbEvaluator* evaluator,
                           bool add_half_width) {
  if (query.T >= 1.0) {
    throw GuaranteeInfeasibleError(
        "a recall target of 1 cannot be certified from a finite sample");
  }
  if (query.T < 0.0) throw std::invalid_argument("recall target below 0");
  const double slack = 1.0 - query.T;
  if (static_cast<double>(query.k_plus) * slack <= 1.0) {
    throw GuaranteeInfeasibleError(
        "too few sampled matches: need k_plus > 1 / (1 - recall_target) = " +
        std::to_string(1.0 / slack) + ", got " + std::to_string(query.k_plus));
  }
  if (query.r < 1) throw std::invalid_argument("need at least one clause");
  if (static_cast<double>(query.r) * slack > 1.0 + 1e-12) {
    throw GuaranteeInfeasibleError(
        "too many clauses: need r <= 1 / (1 - recall_target) = " +
        std::to_string(1.0 / slack) + ", got " + std::to_string(query.r));
  }
  if (query.n == 0) throw std::invalid_argument("empty pair universe");

  AdjTargetResult res;
  res.budget =
      compute_delta_budget(query.delta, query.k_plus, query.n, query.k_prime);
  res.trials = query.mc_trials > 0 ? query.mc_trials
                                   : res.budget.default_trials;

  if (query.n_plus_lo >= 0.0 || query.n_plus_hi >= 0.0) {
    if (query.n_plus_lo < 0.0 || query.n_plus_hi < query.n_plus_lo) {
      throw std::invalid_argument("bad match-count bound overrides");
    }
    res.bounds = NPlusBounds{query.n_plus_lo, query.n_plus_hi};
  } else {
    res.bounds = estimate_n_plus_bounds(query.k_prime, query.k_plus, query.n,
                                        res.budget.delta2);
  }

  for (std::size_t i = 0;; ++i) {
    const double v = query.T + static_cast<double>(i) /
                                   static_cast<double>(query.k_plus);
    if (v >= 1.0 - 1e-12) break;
    res.grid.push_back(v);
  }
  res.grid.push_back(1.0);
  res.p_worst.assign(res.grid.size(), 0.0);

  AdjCacheKey key{query.k_plus, query.r,        query.T,
                  query.delta,  res.trials,     query.seed,
                  res.bounds.lo, res.bounds.hi};
  if (cache != nullptr) {
    if (auto hit = cache->lookup(key)) {
      res.t_prime = *hit;
      res.from_cache = true;
      return res;
    }
  }

  // Population sizes to check: the bound endpoints plus both sides of every
  // point where the worst-case per-dimension spread u jumps.
  long long lo_i = std::max<long long>(
      {1, static_cast<long long>(query.k_plus), ceil_guard(res.bounds.lo)});
  long long hi_i =
      static_cast<long long>(std::floor(res.bounds.hi + 1e-9));
  if (hi_i < lo_i) hi_i = lo_i;

  std::set<long long> points{lo_i, hi_i};
  for (long long v = 1;; ++v) {
    const long long c =
        static_cast<long long>(
            std::floor(static_cast<double>(v) / slack + 1e-9)) +
        1;
    if (c - 1 > hi_i) break;
    if (c >= lo_i && c <= hi_i) points.insert(c);
    if (c - 1 >= lo_i && c - 1 <= hi_i) points.insert(c - 1);
  }

  McFailureEvaluator default_eval;
  FailureProbEvaluator* eval =
      evaluator != nullptr ? evaluator : &default_eval;

  for (long long n_hat : points) {
    const long long u =
        ceil_guard(static_cast<double>(n_hat) * slack) - 1;
    if (u < 1) continue;  // no excludable rows: failure impossible
    WorstCaseDataset dataset =
        worst_case_dataset(static_cast<std::size_t>(n_hat), query.r, query.T);
    if (dataset.vacuous()) continue;
    auto ests = eval->evaluate(dataset, query.k_plus, res.grid, res.trials,
                               derive_seed(query.seed,
                                           static_cast<std::uint64_t>(n_hat)),
                               res.budget.delta1);
    for (std::size_t g = 0; g < res.grid.size(); ++g) {
      const double p =
          ests[g].p_hat + (add_half_width ? ests[g].half_width : 0.0);
      res.p_worst[g] = std::max(res.p_worst[g], p);
    }
    ++res.eval_points;
  }

  res.t_prime = kInf;
  for (std::size_t g = 0; g < res.grid.size(); ++g) {
    if (res.p_worst[g] <= res.budget.delta3 + 1e-15) {
      res.t_prime = res.grid[g];
      break;
    }
  }

  if (cache != nullptr) cache->store(key, res.t_prime);
  return res;
}

GuaranteedThresholds select_guaranteed_thresholds(
    const LogicalScaffold& scaffold, const std::vector<Featurization>& pool,
    FeatureTable& table, const LabeledSample& sample, double recall_target,
    double delta, std::size_t n_universe, AdjTargetCache* cache,
    std::uint64_t seed, std::size_t mc_trials,
    FailureProbEvaluator* evaluator) {
  if (recall_target >= 1.0) {
    throw GuaranteeInfeasibleError(
        "a recall target of 1 cannot be certified from a finite sample");
  }

  GuaranteedThresholds out;
  if (scaffold.empty()) {
    ThresholdFit fit =
        min_cost_threshold(scaffold, pool, table, sample, recall_target);
    out.cost = fit.cost;
    out.admitted_positives = fit.admitted_positives;
    out.admitted_negatives = fit.admitted_negatives;
    return out;
  }

  const std::size_t k_plus = sample.positives();
  const std::size_t k_prime = sample.pairs.size();
  const double slack = 1.0 - recall_target;
  if (static_cast<double>(k_plus) * slack <= 1.0) {
    throw GuaranteeInfeasibleError(
        "certifying recall " + std::to_string(recall_target) +
        " needs more than " + std::to_string(1.0 / slack) +
        " sampled matches, got " + std::to_string(k_plus));
  }
  if (static_cast<double>(scaffold.clauses.size()) * slack > 1.0 + 1e-12) {
    throw GuaranteeInfeasibleError(
        "certifying recall " + std::to_string(recall_target) + " allows at " +
        "most " + std::to_string(1.0 / slack) + " clauses, scaffold has " +
        std::to_string(scaffold.clauses.size()));
  }

  AdjTargetQuery query;
  query.k_plus = k_plus;
  query.r = scaffold.clauses.size();
  query.T = recall_target;
  query.delta = delta;
  query.n = n_universe;
  query.k_prime = k_prime;
  query.mc_trials = mc_trials;
  query.seed = seed;
  AdjTargetResult adj = adj_target(query, cache, evaluator);

  out.budget = adj.budget;
  out.bounds = adj.bounds;
  out.t_prime = adj.t_prime;
  if (!std::isfinite(adj.t_prime)) {
    throw GuaranteeInfeasibleError(
        "no adjusted sample recall target up to 1 certifies recall " +
        std::to_string(recall_target) + " within the failure budget");
  }

  ThresholdFit fit =
      min_cost_threshold(scaffold, pool, table, sample, adj.t_prime);
  out.theta = std::move(fit.theta);
  out.norm = std::move(fit.norm);
  out.cost = fit.cost;
  out.admitted_positives = fit.admitted_positives;
  out.admitted_negatives = fit.admitted_negatives;
  return out;
}

namespace {

// log P(Bin(n, p) >= s)
double binomial_upper_tail(std::size_t n, std::size_t s, double p) {
  if (s == 0) return 1.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  const double lgn = std::lgamma(static_cast<double>(n) + 1);
  double sum = 0.0;
  for (std::size_t k = s; k <= n; ++k) {
    const double lterm = lgn - std::lgamma(static_cast<double>(k) + 1) -
                         std::lgamma(static_cast<double>(n - k) + 1) +
                         static_cast<double>(k) * lp +
                         static_cast<double>(n - k) * lq;
    sum += std::exp(lterm);
  }
  return std::min(sum, 1.0);
}

}  // namespace

double binomial_lower_confidence(std::size_t successes, std::size_t trials,
                                 double alpha) {
  if (trials == 0 || successes == 0) return 0.0;
  if (alpha <= 0.0) return 0.0;
  if (alpha >= 1.0) alpha = 1.0 - 1e-12;
  if (successes > trials) {
    throw std::invalid_argument("more successes than trials");
  }
  if (successes == trials) {
    return std::pow(alpha, 1.0 / static_cast<double>(trials));
  }
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 100; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (binomial_upper_tail(trials, successes, mid) < alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::vector<PrecisionSubset> precision_subsets(
    const std::vector<PairRef>& candidates,
    const std::vector<Featurization>& pool, FeatureTable& table,
    const std::vector<std::pair<PairRef, bool>>& judged,
    double precision_target, double delta_half) {
  std::vector<PrecisionSubset> out;
  if (pool.empty() || candidates.empty()) return out;
  const double alpha_each = delta_half / static_cast<double>(pool.size());

  std::map<PairRef, bool> verdict;
  for (const auto& [p, v] : judged) verdict[p] = v;

  std::set<PairRef> accepted;
  for (const auto& feat : pool) {
    std::vector<std::pair<double, std::size_t>> cand;  // (distance, index)
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (accepted.count(candidates[i]) != 0) continue;
      const double d = table.pair_distance(feat, candidates[i]);
      if (std::isfinite(d)) cand.emplace_back(d, i);
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [](const auto& a, const auto& b) {
                       return a.first < b.first;
                     });

    std::size_t labeled = 0, positive = 0;
    std::size_t best_len = 0, best_labeled = 0, best_positive = 0;
    double best_bound = 0.0;
    std::map<std::pair<std::size_t, std::size_t>, double> bound_cache;
    for (std::size_t m = 0; m < cand.size(); ++m) {
      auto it = verdict.find(candidates[cand[m].second]);
      if (it != verdict.end()) {
        ++labeled;
        if (it->second) ++positive;
      }
      if (labeled == 0) continue;
      auto key = std::make_pair(positive, labeled);
      auto hit = bound_cache.find(key);
      double bound;
      if (hit != bound_cache.end()) {
        bound = hit->second;
      } else {
        bound = binomial_lower_confidence(positive, labeled, alpha_each);
        bound_cache.emplace(key, bound);
      }
      if (bound >= precision_target - 1e-12) {
        best_len = m + 1;
        best_labeled = labeled;
        best_positive = positive;
        best_bound = bound;
      }
    }
    if (best_len == 0) continue;

    PrecisionSubset subset;
    subset.featurization_id = feat.id;
    subset.max_distance = cand[best_len - 1].first;
    subset.lower_bound = best_bound;
    subset.labeled = best_labeled;
    subset.labeled_positive = best_positive;
    for (std::size_t m = 0; m < best_len; ++m) {
      subset.members.push_back(candidates[cand[m].second]);
      accepted.insert(candidates[cand[m].second]);
    }
    out.push_back(std::move(subset));
  }
  return out;
}

GuaranteeExperimentResult validate_guarantee_experiment(
    const GuaranteeExperimentConfig& config) {
  const std::size_t r = config.r;
  WorstCaseDataset population = worst_case_dataset(
      config.population_positives, r, config.recall_target);

  auto row_text = [&](const std::vector<int>& vals) {
    std::string t;
    for (std::size_t d = 0; d < vals.size(); ++d) {
      if (d) t += " ";
      t += std::to_string(vals[d]);
    }
    return t;
  };

  std::vector<Record> lrecs;
  for (std::size_t i = 0; i < config.population_positives; ++i) {
    lrecs.push_back(Record{"p" + std::to_string(i),
                           row_text(population.row(i))});
  }
  const std::vector<int> far_row(r, static_cast<int>(population.u) + 1);
  for (std::size_t j = 0; j < config.negatives; ++j) {
    lrecs.push_back(Record{"n" + std::to_string(j), row_text(far_row)});
  }
  RecordSet L(std::move(lrecs), Side::left);
  RecordSet R({Record{"q", row_text(std::vector<int>(r, 0))}}, Side::right);

  std::vector<Featurization> pool;
  LogicalScaffold scaffold;
  for (std::size_t d = 0; d < r; ++d) {
    Featurization f;
    f.id = "dim" + std::to_string(d);
    f.kind = DistanceKind::arithmetic;
    f.left = ExtractorSpec::code(
        "numeric_capture", nlohmann::json{{"index", static_cast<int>(d)}});
    f.right = f.left;
    f.description = "value in dimension " + std::to_string(d);
    pool.push_back(f);
    scaffold.clauses.push_back(ClauseScaffold{{f.id}});
  }

  FeatureTable table(&L, &R, nullptr, {});
  std::vector<std::uint32_t> all_left(L.size());
  for (std::uint32_t i = 0; i < L.size(); ++i) all_left[i] = i;
  for (const auto& f : pool) table.ensure_extracted(f, all_left, {0}, nullptr);

  std::vector<PairRef> population_pairs;
  for (std::uint32_t i = 0; i < config.population_positives; ++i) {
    population_pairs.push_back(PairRef{i, 0});
  }

  AdjTargetCache cache;
  GuaranteeExperimentResult res;
  res.trials = config.trials;
  double recall_sum = 0.0;

  for (std::size_t t = 0; t < config.trials; ++t) {
    Rng rng(derive_seed(config.seed, t));
    auto chosen =
        rng.sample_indices(config.population_positives, config.sample_positives);
    std::sort(chosen.begin(), chosen.end());

    LabeledSample sample;
    sample.seed = derive_seed(config.seed, t);
    for (auto i : chosen) {
      sample.pairs.push_back(PairRef{static_cast<std::uint32_t>(i), 0});
      sample.labels.push_back(1);
    }
    for (std::size_t j = 0; j < config.negatives; ++j) {
      sample.pairs.push_back(PairRef{
          static_cast<std::uint32_t>(config.population_positives + j), 0});
      sample.labels.push_back(0);
    }

    GuaranteedThresholds fit = select_guaranteed_thresholds(
        scaffold, pool, table, sample, config.recall_target, config.delta,
        config.n_universe, &cache, config.seed, config.mc_trials);
    if (t == 0) {
      res.t_prime = fit.t_prime;
      res.delta3 = fit.budget.delta3;
    }

    FeaturizedDecomposition dec{scaffold, fit.theta, fit.norm, pool};
    auto admitted = eval_decomposition(dec, table, population_pairs);
    std::size_t kept = 0;
    for (auto a : admitted) kept += a;
    const double rec = static_cast<double>(kept) /
                       static_cast<double>(config.population_positives);
    recall_sum += rec;
    if (rec < config.recall_target - 1e-12) ++res.failures;
  }

  res.failure_rate = static_cast<double>(res.failures) /
                     static_cast<double>(config.trials);
  res.mean_population_recall = recall_sum / static_cast<double>(config.trials);
  return res;
}

}  // namespace fdj
