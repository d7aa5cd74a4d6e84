#include "fdj/distances.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fdj/rng.hpp"

namespace fdj {

std::string to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::word_overlap:
      return "word_overlap";
    case DistanceKind::semantic:
      return "semantic";
    case DistanceKind::arithmetic:
      return "arithmetic";
    case DistanceKind::date:
      return "date";
  }
  throw std::invalid_argument("unknown distance kind");
}

DistanceKind distance_kind_from_string(const std::string& name) {
  if (name == "word_overlap") return DistanceKind::word_overlap;
  if (name == "semantic") return DistanceKind::semantic;
  if (name == "arithmetic") return DistanceKind::arithmetic;
  if (name == "date") return DistanceKind::date;
  throw std::invalid_argument("unknown distance kind: " + name);
}

FeatureValue FeatureValue::text(std::string s) {
  FeatureValue v;
  v.v_ = std::move(s);
  return v;
}

FeatureValue FeatureValue::number(double x) {
  FeatureValue v;
  v.v_ = x;
  return v;
}

FeatureValue FeatureValue::date(std::chrono::sys_days d) {
  FeatureValue v;
  v.v_ = d;
  return v;
}

FeatureValue FeatureValue::list(List elements) {
  for (const auto& e : elements) {
    if (e.is_list()) {
      throw std::invalid_argument("nested lists are not supported");
    }
    if (e.is_missing()) {
      throw std::invalid_argument("lists may not contain missing values");
    }
    if (e.v_.index() != elements.front().v_.index()) {
      throw std::invalid_argument("list elements must share one scalar type");
    }
  }
  FeatureValue v;
  v.v_ = std::move(elements);
  return v;
}

namespace {

std::string format_number(double x) {
  if (x == static_cast<long long>(x) && std::abs(x) < 1e15) {
    return std::to_string(static_cast<long long>(x));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::string FeatureValue::display() const {
  if (is_missing()) return "<missing>";
  if (is_text()) return as_text();
  if (is_number()) return format_number(as_number());
  if (is_date()) return format_iso_date(as_date());
  std::string out = "[";
  const auto& xs = as_list();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += xs[i].display();
  }
  out += "]";
  return out;
}

nlohmann::json FeatureValue::to_json() const {
  nlohmann::json j;
  if (is_missing()) {
    j["type"] = "missing";
  } else if (is_text()) {
    j["type"] = "text";
    j["value"] = as_text();
  } else if (is_number()) {
    j["type"] = "number";
    j["value"] = as_number();
  } else if (is_date()) {
    j["type"] = "date";
    j["value"] = format_iso_date(as_date());
  } else {
    j["type"] = "list";
    auto arr = nlohmann::json::array();
    for (const auto& e : as_list()) arr.push_back(e.to_json());
    j["value"] = std::move(arr);
  }
  return j;
}

FeatureValue FeatureValue::from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "missing") return missing();
  if (type == "text") return text(j.at("value").get<std::string>());
  if (type == "number") return number(j.at("value").get<double>());
  if (type == "date") {
    auto d = parse_iso_date(j.at("value").get<std::string>());
    if (!d) throw std::invalid_argument("bad date in serialized value");
    return date(*d);
  }
  if (type == "list") {
    List xs;
    for (const auto& e : j.at("value")) xs.push_back(from_json(e));
    return list(std::move(xs));
  }
  throw std::invalid_argument("unknown serialized value type: " + type);
}

std::optional<std::chrono::sys_days> parse_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
  }
  int y = std::stoi(s.substr(0, 4));
  unsigned m = static_cast<unsigned>(std::stoi(s.substr(5, 2)));
  unsigned d = static_cast<unsigned>(std::stoi(s.substr(8, 2)));
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                  std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

std::string format_iso_date(std::chrono::sys_days d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

std::size_t approx_token_count(const std::string& s) {
  return (s.size() + 3) / 4;
}

std::vector<std::vector<double>> HashingEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> acc(dim_, 0.0);
    for (const auto& tok : tokenize(text)) {
      std::uint64_t state = derive_seed(seed_, fnv1a64(tok));
      for (std::size_t i = 0; i < dim_; ++i) {
        std::uint64_t bits = splitmix64_next(state);
        // Map to [-1, 1) with 53-bit resolution.
        acc[i] += static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;
      }
    }
    double norm2 = 0.0;
    for (double x : acc) norm2 += x * x;
    if (norm2 <= 0.0) {
      std::fill(acc.begin(), acc.end(), 0.0);
      acc[0] = 1.0;
    } else {
      double inv = 1.0 / std::sqrt(norm2);
      for (double& x : acc) x *= inv;
    }
    out.push_back(std::move(acc));
  }
  return out;
}

std::string HashingEmbeddingProvider::name() const {
  return "hashing-" + std::to_string(dim_) + "-" + std::to_string(seed_);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      cur += static_cast<char>(std::tolower(uc));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

double jaccard_distance(const std::vector<std::string>& a,
                        const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    int cmp = a[i].compare(b[j]);
    if (cmp == 0) {
      ++inter;
      ++i;
      ++j;
    } else if (cmp < 0) {
      ++i;
    } else {
      ++j;
    }
  }
  std::size_t uni = a.size() + b.size() - inter;
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

double scalar_distance(DistanceKind kind, const FeatureValue& a,
                       const FeatureValue& b, EmbeddingProvider* provider) {
  switch (kind) {
    case DistanceKind::word_overlap: {
      if (!a.is_text() || !b.is_text()) {
        throw std::invalid_argument("word_overlap distance needs text values");
      }
      return jaccard_distance(tokenize(a.as_text()), tokenize(b.as_text()));
    }
    case DistanceKind::semantic: {
      if (!a.is_text() || !b.is_text()) {
        throw std::invalid_argument("semantic distance needs text values");
      }
      if (a.as_text() == b.as_text()) return 0.0;
      if (provider == nullptr) {
        throw std::invalid_argument(
            "semantic distance requires an embedding provider");
      }
      auto vecs = provider->embed({a.as_text(), b.as_text()});
      double dot = 0.0;
      for (std::size_t i = 0; i < vecs[0].size(); ++i) {
        dot += vecs[0][i] * vecs[1][i];
      }
      return std::clamp(1.0 - dot, 0.0, 2.0);
    }
    case DistanceKind::arithmetic: {
      if (!a.is_number() || !b.is_number()) {
        throw std::invalid_argument(
            "arithmetic distance needs numeric values");
      }
      return std::abs(a.as_number() - b.as_number());
    }
    case DistanceKind::date: {
      if (!a.is_date() || !b.is_date()) {
        throw std::invalid_argument("date distance needs date values");
      }
      auto days = (a.as_date() - b.as_date()).count();
      return std::abs(static_cast<double>(days));
    }
  }
  throw std::invalid_argument("unknown distance kind");
}

}  // namespace

double distance(DistanceKind kind, const FeatureValue& a, const FeatureValue& b,
                EmbeddingProvider* provider) {
  if (a.is_missing() || b.is_missing()) return kInf;
  if (a.is_list() || b.is_list()) {
    std::vector<const FeatureValue*> xs, ys;
    if (a.is_list()) {
      for (const auto& e : a.as_list()) xs.push_back(&e);
    } else {
      xs.push_back(&a);
    }
    if (b.is_list()) {
      for (const auto& e : b.as_list()) ys.push_back(&e);
    } else {
      ys.push_back(&b);
    }
    double best = kInf;
    for (const auto* x : xs) {
      for (const auto* y : ys) {
        best = std::min(best, scalar_distance(kind, *x, *y, provider));
        if (best == 0.0) return 0.0;
      }
    }
    return best;
  }
  return scalar_distance(kind, a, b, provider);
}

NormParams compute_norm_params(const std::vector<double>& values) {
  bool any = false;
  NormParams p{kInf, -kInf};
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    any = true;
    p.min = std::min(p.min, v);
    p.max = std::max(p.max, v);
  }
  if (!any) {
    throw std::invalid_argument(
        "cannot fit a normalization on values with no finite entry");
  }
  return p;
}

double apply_norm(const NormParams& p, double v) {
  if (!std::isfinite(v)) return v;
  if (p.max == p.min) return 0.0;
  return (v - p.min) / (p.max - p.min);
}

std::vector<double> min_max_normalize(const std::vector<double>& values) {
  NormParams p = compute_norm_params(values);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(apply_norm(p, v));
  return out;
}

}  // namespace fdj
