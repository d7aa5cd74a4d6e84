#include "fdj/scaffold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fdj {

long long ceil_guard(double x) {
  return static_cast<long long>(std::ceil(x - 1e-9));
}

bool LogicalScaffold::contains(const std::string& featurization_id) const {
  for (const auto& c : clauses) {
    for (const auto& fid : c.featurization_ids) {
      if (fid == featurization_id) return true;
    }
  }
  return false;
}

bool LogicalScaffold::clause_contains(std::size_t clause,
                                      const std::string& fid) const {
  const auto& ids = clauses.at(clause).featurization_ids;
  return std::find(ids.begin(), ids.end(), fid) != ids.end();
}

nlohmann::json LogicalScaffold::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& c : clauses) {
    arr.push_back(c.featurization_ids);
  }
  return arr;
}

LogicalScaffold LogicalScaffold::from_json(const nlohmann::json& j) {
  LogicalScaffold s;
  for (const auto& c : j) {
    ClauseScaffold clause;
    for (const auto& fid : c) {
      clause.featurization_ids.push_back(fid.get<std::string>());
    }
    s.clauses.push_back(std::move(clause));
  }
  return s;
}

const Featurization& find_featurization(const std::vector<Featurization>& pool,
                                        const std::string& id) {
  for (const auto& f : pool) {
    if (f.id == id) return f;
  }
  throw std::invalid_argument("unknown featurization id: " + id);
}

NormMap compute_norm_map(const std::vector<Featurization>& pool,
                         FeatureTable& table,
                         const std::vector<PairRef>& pairs) {
  NormMap norm;
  std::vector<double> values;
  for (const auto& f : pool) {
    values.clear();
    values.reserve(pairs.size());
    for (const auto& p : pairs) values.push_back(table.pair_distance(f, p));
    try {
      norm[f.id] = compute_norm_params(values);
    } catch (const std::invalid_argument&) {
      norm[f.id] = NormParams{0.0, 0.0};  // all distances infinite anyway
    }
  }
  return norm;
}

std::vector<std::vector<double>> clause_value_matrix(
    const LogicalScaffold& scaffold, const std::vector<Featurization>& pool,
    FeatureTable& table, const NormMap& norm,
    const std::vector<PairRef>& pairs) {
  std::vector<std::vector<double>> out;
  out.reserve(scaffold.clauses.size());
  for (const auto& clause : scaffold.clauses) {
    std::vector<double> row(pairs.size(), kInf);
    for (const auto& fid : clause.featurization_ids) {
      const Featurization& f = find_featurization(pool, fid);
      const NormParams& np = norm.at(fid);
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        row[p] =
            std::min(row[p], apply_norm(np, table.pair_distance(f, pairs[p])));
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

namespace {

nlohmann::json threshold_to_json(double t) {
  if (std::isfinite(t)) return t;
  return "inf";
}

double threshold_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kInf;
    throw std::invalid_argument("bad threshold value: " + j.dump());
  }
  return j.get<double>();
}

}  // namespace

nlohmann::json FeaturizedDecomposition::to_json() const {
  nlohmann::json j;
  auto feats = nlohmann::json::array();
  for (const auto& f : featurizations) feats.push_back(f.to_json());
  j["featurizations"] = std::move(feats);
  j["scaffold"] = scaffold.to_json();
  auto th = nlohmann::json::array();
  for (double t : thresholds) th.push_back(threshold_to_json(t));
  j["thresholds"] = std::move(th);
  auto nm = nlohmann::json::object();
  for (const auto& [fid, p] : norm) {
    nm[fid] = nlohmann::json{{"min", p.min}, {"max", p.max}};
  }
  j["norm"] = std::move(nm);
  return j;
}

FeaturizedDecomposition FeaturizedDecomposition::from_json(
    const nlohmann::json& j) {
  FeaturizedDecomposition d;
  for (const auto& f : j.at("featurizations")) {
    d.featurizations.push_back(Featurization::from_json(f));
  }
  d.scaffold = LogicalScaffold::from_json(j.at("scaffold"));
  for (const auto& t : j.at("thresholds")) {
    d.thresholds.push_back(threshold_from_json(t));
  }
  for (auto it = j.at("norm").begin(); it != j.at("norm").end(); ++it) {
    d.norm[it.key()] =
        NormParams{it->at("min").get<double>(), it->at("max").get<double>()};
  }
  if (d.thresholds.size() != d.scaffold.clauses.size()) {
    throw std::invalid_argument(
        "decomposition has mismatched clause and threshold counts");
  }
  return d;
}

bool decomposition_admits(const FeaturizedDecomposition& d, FeatureTable& table,
                          PairRef pair) {
  if (d.thresholds.size() != d.scaffold.clauses.size()) {
    throw std::invalid_argument(
        "decomposition has mismatched clause and threshold counts");
  }
  for (std::size_t i = 0; i < d.scaffold.clauses.size(); ++i) {
    double val = kInf;
    for (const auto& fid : d.scaffold.clauses[i].featurization_ids) {
      const Featurization& f = find_featurization(d.featurizations, fid);
      val = std::min(val,
                     apply_norm(d.norm.at(fid), table.pair_distance(f, pair)));
      if (val <= 0.0) break;
    }
    if (!(val <= d.thresholds[i])) return false;
  }
  return true;
}

std::vector<std::uint8_t> eval_decomposition(const FeaturizedDecomposition& d,
                                             FeatureTable& table,
                                             const std::vector<PairRef>& pairs) {
  std::vector<std::uint8_t> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back(decomposition_admits(d, table, p) ? 1 : 0);
  }
  return out;
}

SampleStats sample_stats(const std::vector<std::uint8_t>& admitted,
                         const std::vector<std::uint8_t>& labels) {
  if (admitted.size() != labels.size()) {
    throw std::invalid_argument("admitted/labels size mismatch");
  }
  SampleStats s;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      ++pos;
      if (admitted[i]) ++s.admitted_pos;
    } else if (admitted[i]) {
      ++s.admitted_neg;
    }
  }
  s.recall = pos == 0 ? 1.0
                      : static_cast<double>(s.admitted_pos) /
                            static_cast<double>(pos);
  const std::size_t adm = s.admitted_pos + s.admitted_neg;
  s.cost = adm == 0 ? 0.0
                    : static_cast<double>(s.admitted_neg) /
                          static_cast<double>(adm);
  return s;
}

namespace {

// Depth-first exact search state for min_cost_threshold_matrix.
struct ThresholdSearch {
  const std::vector<std::vector<double>>& clause_values;
  std::vector<std::size_t> pos_idx, neg_idx;
  long long need_pos = 0;   // admitted matches required for feasibility
  long long u_miss = 0;     // matches we may lose in total
  std::vector<std::vector<double>> grids;  // per clause, descending, inf first

  std::vector<int> pos_miss_count, neg_miss_count;
  long long total_missed = 0;
  long long neg_rejected = 0;
  ThresholdVector current;

  bool found = false;
  MinCostResult best;

  explicit ThresholdSearch(const std::vector<std::vector<double>>& cv)
      : clause_values(cv) {}

  bool leaf_better(double cost, std::size_t admitted_total,
                   const ThresholdVector& theta) const {
    if (!found) return true;
    if (cost != best.cost) return cost < best.cost;
    const std::size_t best_total =
        best.admitted_positives + best.admitted_negatives;
    if (admitted_total != best_total) return admitted_total < best_total;
    return std::lexicographical_compare(theta.begin(), theta.end(),
                                        best.theta.begin(), best.theta.end());
  }

  void run(std::size_t clause) {
    const std::size_t R = clause_values.size();
    if (clause == R) {
      const long long adm_pos =
          static_cast<long long>(pos_idx.size()) - total_missed;
      if (adm_pos < need_pos) return;
      const long long adm_neg =
          static_cast<long long>(neg_idx.size()) - neg_rejected;
      const long long adm = adm_pos + adm_neg;
      const double cost =
          adm == 0 ? 0.0
                   : static_cast<double>(adm_neg) / static_cast<double>(adm);
      if (leaf_better(cost, static_cast<std::size_t>(adm), current)) {
        found = true;
        best.theta = current;
        best.cost = cost;
        best.admitted_positives = static_cast<std::size_t>(adm_pos);
        best.admitted_negatives = static_cast<std::size_t>(adm_neg);
      }
      return;
    }

    const auto& vals = clause_values[clause];
    for (double theta : grids[clause]) {
      // Apply this clause's rejections.
      long long new_pos_missed = 0, new_neg_rejected = 0;
      for (std::size_t p : pos_idx) {
        if (vals[p] > theta && pos_miss_count[p]++ == 0) ++new_pos_missed;
      }
      for (std::size_t n : neg_idx) {
        if (vals[n] > theta && neg_miss_count[n]++ == 0) ++new_neg_rejected;
      }
      total_missed += new_pos_missed;
      neg_rejected += new_neg_rejected;
      const bool feasible = total_missed <= u_miss;
      if (feasible) {
        current[clause] = theta;
        run(clause + 1);
      }
      // Undo.
      for (std::size_t p : pos_idx) {
        if (vals[p] > theta) --pos_miss_count[p];
      }
      for (std::size_t n : neg_idx) {
        if (vals[n] > theta) --neg_miss_count[n];
      }
      total_missed -= new_pos_missed;
      neg_rejected -= new_neg_rejected;
      // Grid is descending: smaller thresholds only reject more matches.
      if (!feasible) break;
    }
  }
};

}  // namespace

MinCostResult min_cost_threshold_matrix(
    const std::vector<std::vector<double>>& clause_values,
    const std::vector<std::uint8_t>& labels, double recall_target) {
  const std::size_t P = labels.size();
  for (const auto& row : clause_values) {
    if (row.size() != P) {
      throw std::invalid_argument("clause value row size mismatch");
    }
  }

  ThresholdSearch s(clause_values);
  for (std::size_t p = 0; p < P; ++p) {
    (labels[p] ? s.pos_idx : s.neg_idx).push_back(p);
  }
  const long long k_plus = static_cast<long long>(s.pos_idx.size());

  if (clause_values.empty()) {
    MinCostResult r;
    r.admitted_positives = s.pos_idx.size();
    r.admitted_negatives = s.neg_idx.size();
    const std::size_t adm = r.admitted_positives + r.admitted_negatives;
    r.cost = adm == 0 ? 0.0
                      : static_cast<double>(r.admitted_negatives) /
                            static_cast<double>(adm);
    return r;
  }

  s.need_pos = std::max<long long>(
      0, ceil_guard(recall_target * static_cast<double>(k_plus)));
  s.u_miss = k_plus - s.need_pos;

  s.grids.reserve(clause_values.size());
  for (const auto& row : clause_values) {
    std::vector<double> pos_vals;
    pos_vals.reserve(s.pos_idx.size());
    for (std::size_t p : s.pos_idx) pos_vals.push_back(row[p]);
    std::sort(pos_vals.begin(), pos_vals.end(), std::greater<>());
    pos_vals.erase(std::unique(pos_vals.begin(), pos_vals.end()),
                   pos_vals.end());
    if (pos_vals.size() > static_cast<std::size_t>(s.u_miss) + 1) {
      pos_vals.resize(static_cast<std::size_t>(s.u_miss) + 1);
    }
    std::vector<double> grid;
    grid.reserve(pos_vals.size() + 1);
    if (pos_vals.empty() || pos_vals.front() != kInf) grid.push_back(kInf);
    for (double v : pos_vals) grid.push_back(v);
    s.grids.push_back(std::move(grid));
  }

  s.pos_miss_count.assign(P, 0);
  s.neg_miss_count.assign(P, 0);
  s.current.assign(clause_values.size(), kInf);
  s.run(0);

  if (!s.found) {
    // Unreachable: the all-infinity assignment is always feasible.
    throw std::logic_error("threshold search found no feasible assignment");
  }
  return s.best;
}

ThresholdFit min_cost_threshold(const LogicalScaffold& scaffold,
                                const std::vector<Featurization>& pool,
                                FeatureTable& table,
                                const LabeledSample& sample,
                                double recall_target) {
  if (!sample.labeled()) {
    throw std::logic_error("threshold fit needs a labeled sample");
  }
  std::vector<Featurization> used;
  for (const auto& clause : scaffold.clauses) {
    for (const auto& fid : clause.featurization_ids) {
      bool have = false;
      for (const auto& f : used) {
        if (f.id == fid) {
          have = true;
          break;
        }
      }
      if (!have) used.push_back(find_featurization(pool, fid));
    }
  }

  ThresholdFit fit;
  fit.norm = compute_norm_map(used, table, sample.pairs);
  auto matrix =
      clause_value_matrix(scaffold, pool, table, fit.norm, sample.pairs);
  MinCostResult r =
      min_cost_threshold_matrix(matrix, sample.labels, recall_target);
  fit.theta = std::move(r.theta);
  fit.cost = r.cost;
  fit.admitted_positives = r.admitted_positives;
  fit.admitted_negatives = r.admitted_negatives;
  return fit;
}

namespace {

std::vector<double> normalize_row(const std::vector<double>& row) {
  try {
    NormParams p = compute_norm_params(row);
    std::vector<double> out;
    out.reserve(row.size());
    for (double v : row) out.push_back(apply_norm(p, v));
    return out;
  } catch (const std::invalid_argument&) {
    return row;  // all infinite; normalization is a no-op
  }
}

NormParams params_or_identity(const std::vector<double>& row) {
  try {
    return compute_norm_params(row);
  } catch (const std::invalid_argument&) {
    return NormParams{0.0, 0.0};
  }
}

}  // namespace

BuildResult greedy_build_matrix(
    const std::vector<std::vector<double>>& feature_values,
    const std::vector<std::string>& feature_ids,
    const std::vector<std::uint8_t>& labels, double recall_target,
    double gamma) {
  if (feature_values.size() != feature_ids.size()) {
    throw std::invalid_argument("feature values/ids size mismatch");
  }
  const std::size_t F = feature_values.size();
  const std::size_t P = labels.size();
  for (const auto& row : feature_values) {
    if (row.size() != P) {
      throw std::invalid_argument("feature value row size mismatch");
    }
  }

  std::vector<std::vector<double>> normalized;
  normalized.reserve(F);
  for (const auto& row : feature_values) normalized.push_back(normalize_row(row));

  std::size_t k_neg = 0;
  for (auto l : labels) {
    if (!l) ++k_neg;
  }

  BuildResult res;
  res.initial_cost =
      P == 0 ? 0.0 : static_cast<double>(k_neg) / static_cast<double>(P);
  double cur_cost = res.initial_cost;

  const std::size_t r_cap =
      recall_target >= 1.0
          ? std::max<std::size_t>(F, 1)
          : static_cast<std::size_t>(
                std::max(1.0, std::floor(1.0 / (1.0 - recall_target) + 1e-9)));

  std::vector<std::vector<std::size_t>> clauses;  // featurization indices
  std::vector<std::vector<double>> clause_vals;
  std::vector<bool> used(F, false);

  auto cost_of = [&](const std::vector<std::vector<double>>& vals) {
    return min_cost_threshold_matrix(vals, labels, recall_target).cost;
  };

  // New conjunctive clauses while they keep paying for themselves.
  while (clauses.size() < r_cap) {
    std::size_t best_f = F;
    double best_cost = 0.0;
    double best_improvement = -kInf;
    for (std::size_t f = 0; f < F; ++f) {
      if (used[f]) continue;
      clause_vals.push_back(normalized[f]);
      const double cost = cost_of(clause_vals);
      clause_vals.pop_back();
      const double improvement = cur_cost - cost;
      if (improvement > best_improvement) {
        best_improvement = improvement;
        best_cost = cost;
        best_f = f;
      }
    }
    if (best_f == F || !(best_improvement > gamma)) break;
    used[best_f] = true;
    clauses.push_back({best_f});
    clause_vals.push_back(normalized[best_f]);
    cur_cost = best_cost;
    res.steps.push_back(
        BuildStep{1, feature_ids[best_f], clauses.size() - 1, cur_cost});
  }

  // One widening pass: try each featurization as a disjunct of each clause.
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < clauses.size(); ++c) {
      if (std::find(clauses[c].begin(), clauses[c].end(), f) !=
          clauses[c].end()) {
        continue;
      }
      std::vector<double> widened(P);
      for (std::size_t p = 0; p < P; ++p) {
        widened[p] = std::min(clause_vals[c][p], normalized[f][p]);
      }
      std::swap(clause_vals[c], widened);
      const double cost = cost_of(clause_vals);
      if (cur_cost - cost > gamma) {
        clauses[c].push_back(f);
        used[f] = true;
        cur_cost = cost;
        res.steps.push_back(BuildStep{2, feature_ids[f], c, cost});
      } else {
        std::swap(clause_vals[c], widened);  // revert
      }
    }
  }

  for (const auto& clause : clauses) {
    ClauseScaffold cs;
    for (std::size_t f : clause) {
      cs.featurization_ids.push_back(feature_ids[f]);
      if (res.norm.count(feature_ids[f]) == 0) {
        res.norm[feature_ids[f]] = params_or_identity(feature_values[f]);
      }
    }
    res.scaffold.clauses.push_back(std::move(cs));
  }

  MinCostResult final_fit =
      min_cost_threshold_matrix(clause_vals, labels, recall_target);
  res.thresholds = std::move(final_fit.theta);
  res.final_cost = clauses.empty() ? cur_cost : final_fit.cost;
  return res;
}

BuildResult greedy_build(const std::vector<Featurization>& pool,
                         FeatureTable& table, const LabeledSample& sample,
                         double recall_target, double gamma) {
  if (!sample.labeled()) {
    throw std::logic_error("scaffold construction needs a labeled sample");
  }
  std::vector<std::vector<double>> rows;
  std::vector<std::string> ids;
  rows.reserve(pool.size());
  ids.reserve(pool.size());
  for (const auto& f : pool) {
    std::vector<double> row;
    row.reserve(sample.pairs.size());
    for (const auto& p : sample.pairs) row.push_back(table.pair_distance(f, p));
    rows.push_back(std::move(row));
    ids.push_back(f.id);
  }
  return greedy_build_matrix(rows, ids, sample.labels, recall_target, gamma);
}

}  // namespace fdj
