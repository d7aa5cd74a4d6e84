#include "fdj/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <stdexcept>

#include "fdj/rng.hpp"

namespace fdj {

std::string to_string(OutputType t) {
  switch (t) {
    case OutputType::text:
      return "text";
    case OutputType::number:
      return "number";
    case OutputType::date:
      return "date";
    case OutputType::text_list:
      return "text_list";
    case OutputType::number_list:
      return "number_list";
    case OutputType::date_list:
      return "date_list";
  }
  throw std::invalid_argument("unknown output type");
}

OutputType output_type_from_string(const std::string& name) {
  if (name == "text") return OutputType::text;
  if (name == "number") return OutputType::number;
  if (name == "date") return OutputType::date;
  if (name == "text_list") return OutputType::text_list;
  if (name == "number_list") return OutputType::number_list;
  if (name == "date_list") return OutputType::date_list;
  throw std::invalid_argument("unknown output type: " + name);
}

bool output_type_is_list(OutputType t) {
  return t == OutputType::text_list || t == OutputType::number_list ||
         t == OutputType::date_list;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool is_null_word(const std::string& s) {
  std::string low;
  for (char c : s) low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return low == "null" || low == "none" || low == "n/a";
}

std::optional<double> parse_number(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    double v = std::stod(t, &pos);
    if (pos != t.size()) return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

OutputType scalar_type_of(OutputType t) {
  switch (t) {
    case OutputType::text_list:
      return OutputType::text;
    case OutputType::number_list:
      return OutputType::number;
    case OutputType::date_list:
      return OutputType::date;
    default:
      return t;
  }
}

FeatureValue parse_scalar(OutputType type, const std::string& raw) {
  const std::string t = trim(raw);
  if (t.empty() || is_null_word(t)) return FeatureValue::missing();
  switch (type) {
    case OutputType::text:
      return FeatureValue::text(t);
    case OutputType::number: {
      auto v = parse_number(t);
      return v ? FeatureValue::number(*v) : FeatureValue::missing();
    }
    case OutputType::date: {
      auto d = parse_iso_date(t);
      return d ? FeatureValue::date(*d) : FeatureValue::missing();
    }
    default:
      return FeatureValue::missing();
  }
}

FeatureValue scalar_from_json(OutputType type, const nlohmann::json& j) {
  if (j.is_string()) return parse_scalar(type, j.get<std::string>());
  if (j.is_number() && type == OutputType::number) {
    return FeatureValue::number(j.get<double>());
  }
  if (j.is_number() && type == OutputType::text) {
    return FeatureValue::text(j.dump());
  }
  return FeatureValue::missing();
}

}  // namespace

FeatureValue parse_llm_output(OutputType type, const std::string& raw) {
  const std::string t = trim(raw);
  if (t.empty() || is_null_word(t)) return FeatureValue::missing();

  auto j = nlohmann::json::parse(t, nullptr, /*allow_exceptions=*/false);
  const OutputType scalar_type = scalar_type_of(type);

  if (output_type_is_list(type)) {
    if (j.is_discarded() || !j.is_array()) return FeatureValue::missing();
    FeatureValue::List xs;
    for (const auto& e : j) {
      FeatureValue v = scalar_from_json(scalar_type, e);
      if (!v.is_missing()) xs.push_back(std::move(v));
    }
    return FeatureValue::list(std::move(xs));
  }

  if (!j.is_discarded()) {
    if (j.is_null()) return FeatureValue::missing();
    if (j.is_string() || j.is_number()) return scalar_from_json(scalar_type, j);
    // Objects/arrays in scalar position are unusable.
    if (j.is_object() || j.is_array() || j.is_boolean()) {
      return FeatureValue::missing();
    }
  }
  return parse_scalar(scalar_type, t);
}

ExtractorSpec ExtractorSpec::code(std::string name, nlohmann::json params) {
  ExtractorSpec s;
  s.impl_ = CodeExtractorSpec{std::move(name), std::move(params)};
  return s;
}

ExtractorSpec ExtractorSpec::llm(std::string prompt, OutputType output) {
  ExtractorSpec s;
  s.impl_ = LlmExtractorSpec{std::move(prompt), output};
  return s;
}

nlohmann::json ExtractorSpec::to_json() const {
  nlohmann::json j;
  if (is_code()) {
    const auto& c = as_code();
    j["type"] = "code";
    j["name"] = c.name;
    j["params"] = c.params;
  } else {
    const auto& l = as_llm();
    j["type"] = "llm";
    j["prompt"] = l.prompt;
    j["output"] = to_string(l.output);
  }
  return j;
}

ExtractorSpec ExtractorSpec::from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "code") {
    return code(j.at("name").get<std::string>(),
                j.value("params", nlohmann::json::object()));
  }
  if (type == "llm") {
    return llm(j.at("prompt").get<std::string>(),
               output_type_from_string(j.at("output").get<std::string>()));
  }
  throw std::invalid_argument("unknown extractor type: " + type);
}

nlohmann::json Featurization::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["distance"] = fdj::to_string(kind);
  j["left"] = left.to_json();
  j["right"] = right.to_json();
  j["description"] = description;
  return j;
}

Featurization Featurization::from_json(const nlohmann::json& j) {
  Featurization f;
  f.id = j.at("id").get<std::string>();
  f.kind = distance_kind_from_string(j.at("distance").get<std::string>());
  f.left = ExtractorSpec::from_json(j.at("left"));
  f.right = ExtractorSpec::from_json(j.at("right"));
  f.description = j.value("description", std::string{});
  return f;
}

std::string Featurization::structural_fingerprint() const {
  nlohmann::json j;
  j["distance"] = fdj::to_string(kind);
  j["left"] = left.to_json();
  j["right"] = right.to_json();
  return j.dump();
}

bool is_known_code_extractor(const std::string& name) {
  return name == "full_text" || name == "token_at" ||
         name == "numeric_capture" || name == "date_capture" ||
         name == "pattern_scan";
}

namespace {

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// All maximal substrings that look like signed decimal numbers. A '-' or '+'
// is part of a number only when not immediately preceded by an alphanumeric
// character (so "2021-03-10" scans as three plain numbers, not "2021", "-03",
// "-10").
std::vector<double> scan_numbers(const std::string& text) {
  std::vector<double> out;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    bool sign = (text[i] == '-' || text[i] == '+');
    bool sign_ok =
        sign && i + 1 < n &&
        std::isdigit(static_cast<unsigned char>(text[i + 1])) &&
        (i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1])));
    if (!std::isdigit(c) && !sign_ok) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (sign_ok) ++i;
    while (i < n && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (i + 1 < n && text[i] == '.' &&
        std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      ++i;
      while (i < n && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    }
    out.push_back(std::stod(text.substr(start, i - start)));
  }
  return out;
}

std::vector<std::chrono::sys_days> scan_dates(const std::string& text) {
  std::vector<std::chrono::sys_days> out;
  if (text.size() < 10) return out;
  for (std::size_t i = 0; i + 10 <= text.size(); ++i) {
    auto d = parse_iso_date(text.substr(i, 10));
    if (d) {
      out.push_back(*d);
      i += 9;  // don't re-match inside this date
    }
  }
  return out;
}

FeatureValue convert_capture(const std::string& s, const std::string& output) {
  if (output == "number") {
    auto v = parse_number(s);
    return v ? FeatureValue::number(*v) : FeatureValue::missing();
  }
  if (output == "date") {
    auto d = parse_iso_date(trim(s));
    return d ? FeatureValue::date(*d) : FeatureValue::missing();
  }
  return FeatureValue::text(s);
}

FeatureValue run_code_extractor_impl(const CodeExtractorSpec& spec,
                                     const std::string& text) {
  if (text.empty()) return FeatureValue::missing();

  if (spec.name == "full_text") {
    return FeatureValue::text(text);
  }

  if (spec.name == "token_at") {
    const long long index = spec.params.at("index").get<long long>();
    auto toks = whitespace_tokens(text);
    long long n = static_cast<long long>(toks.size());
    long long idx = index < 0 ? n + index : index;
    if (idx < 0 || idx >= n) return FeatureValue::missing();
    return FeatureValue::text(toks[static_cast<std::size_t>(idx)]);
  }

  if (spec.name == "numeric_capture") {
    const long long index = spec.params.value("index", 0LL);
    auto nums = scan_numbers(text);
    if (index < 0 || static_cast<std::size_t>(index) >= nums.size()) {
      return FeatureValue::missing();
    }
    return FeatureValue::number(nums[static_cast<std::size_t>(index)]);
  }

  if (spec.name == "date_capture") {
    const long long index = spec.params.value("index", 0LL);
    auto dates = scan_dates(text);
    if (index < 0 || static_cast<std::size_t>(index) >= dates.size()) {
      return FeatureValue::missing();
    }
    return FeatureValue::date(dates[static_cast<std::size_t>(index)]);
  }

  if (spec.name == "pattern_scan") {
    const std::string pattern = spec.params.at("pattern").get<std::string>();
    const int group = spec.params.value("group", 0);
    const bool all = spec.params.value("all", false);
    const std::string output = spec.params.value("output", std::string{"text"});
    std::regex re(pattern, std::regex::ECMAScript);
    if (!all) {
      std::smatch m;
      if (!std::regex_search(text, m, re)) return FeatureValue::missing();
      if (group < 0 || static_cast<std::size_t>(group) >= m.size()) {
        return FeatureValue::missing();
      }
      return convert_capture(m[static_cast<std::size_t>(group)].str(), output);
    }
    FeatureValue::List xs;
    auto begin = std::sregex_iterator(text.begin(), text.end(), re);
    for (auto it = begin; it != std::sregex_iterator{}; ++it) {
      const auto& m = *it;
      if (group < 0 || static_cast<std::size_t>(group) >= m.size()) continue;
      FeatureValue v =
          convert_capture(m[static_cast<std::size_t>(group)].str(), output);
      if (!v.is_missing()) xs.push_back(std::move(v));
    }
    return FeatureValue::list(std::move(xs));
  }

  throw std::invalid_argument("unknown code extractor: " + spec.name);
}

}  // namespace

FeatureValue run_code_extractor(const CodeExtractorSpec& spec,
                                const std::string& text,
                                std::vector<std::string>* warnings) {
  try {
    return run_code_extractor_impl(spec, text);
  } catch (const std::exception& e) {
    if (warnings != nullptr) {
      warnings->push_back("extractor '" + spec.name +
                          "' failed; value treated as missing: " + e.what());
    }
    return FeatureValue::missing();
  }
}

std::string LlmClient::complete(const std::string& prompt) {
  ++log_.complete_calls;
  log_.complete_tokens += token_count(prompt);
  return do_complete(prompt);
}

bool LlmClient::judge(const std::string& prompt) {
  ++log_.judge_calls;
  log_.judge_tokens += token_count(prompt);
  return do_judge(prompt);
}

bool LlmClient::judge_for_pair(const std::string& prompt,
                               const std::string& left_id,
                               const std::string& right_id) {
  ++log_.judge_calls;
  log_.judge_tokens += token_count(prompt);
  return do_judge_for_pair(prompt, left_id, right_id);
}

std::string OracleBackend::do_complete(const std::string&) {
  if (completions_.empty()) return "";
  std::string out = std::move(completions_.front());
  completions_.pop_front();
  return out;
}

bool OracleBackend::do_judge(const std::string&) {
  throw std::logic_error(
      "oracle backend can only judge (left, right) pairs, not free prompts");
}

bool OracleBackend::do_judge_for_pair(const std::string&,
                                      const std::string& left_id,
                                      const std::string& right_id) {
  PairRef p{static_cast<std::uint32_t>(left_->index_of(left_id)),
            static_cast<std::uint32_t>(right_->index_of(right_id))};
  return truth_->contains(p);
}

std::string ScriptedLlmClient::do_complete(const std::string& prompt) {
  prompts_.push_back(prompt);
  if (completions_.empty()) {
    throw std::logic_error("scripted client ran out of completions");
  }
  std::string out = std::move(completions_.front());
  completions_.pop_front();
  return out;
}

bool ScriptedLlmClient::do_judge(const std::string& prompt) {
  prompts_.push_back(prompt);
  if (judgements_.empty()) {
    throw std::logic_error("scripted client ran out of judgements");
  }
  bool out = judgements_.front();
  judgements_.pop_front();
  return out;
}

std::string render_join_prompt(const JoinSpec& spec,
                               const std::string& left_text,
                               const std::string& right_text) {
  return replace_slots(spec.join_prompt,
                       {{"l", left_text}, {"r", right_text}});
}

bool judge_pair(LlmClient& client, const JoinSpec& spec, const RecordSet& L,
                const RecordSet& R, PairRef pair) {
  const Record& l = L.at(pair.left);
  const Record& r = R.at(pair.right);
  return client.judge_for_pair(render_join_prompt(spec, l.text, r.text), l.id,
                               r.id);
}

FeatureTable::FeatureTable(const RecordSet* left, const RecordSet* right,
                           EmbeddingProvider* provider,
                           std::filesystem::path cache_dir)
    : left_(left),
      right_(right),
      provider_(provider),
      cache_dir_(std::move(cache_dir)) {}

FeatureTable::FeatState& FeatureTable::state_for(const Featurization& feat) {
  const std::string key = feat.structural_fingerprint();
  auto it = feats_.find(key);
  if (it == feats_.end()) {
    FeatState fs;
    fs.feat = feat;
    fs.left.values.resize(left_->size());
    fs.left.tokens.resize(left_->size());
    fs.right.values.resize(right_->size());
    fs.right.tokens.resize(right_->size());
    it = feats_.emplace(key, std::move(fs)).first;
  }
  return it->second;
}

const FeatureTable::FeatState* FeatureTable::find_state(
    const Featurization& feat) const {
  auto it = feats_.find(feat.structural_fingerprint());
  return it == feats_.end() ? nullptr : &it->second;
}

namespace {

std::string sanitize_for_path(const std::string& s) {
  std::string out;
  for (char c : s) {
    unsigned char uc = static_cast<unsigned char>(c);
    out += (std::isalnum(uc) || c == '-' || c == '_') ? c : '_';
  }
  return out.empty() ? std::string{"f"} : out;
}

}  // namespace

std::filesystem::path FeatureTable::cache_file(const FeatState& fs,
                                               Side side) const {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(fs.feat.structural_fingerprint())));
  return cache_dir_ / (sanitize_for_path(fs.feat.id) + "-" + hex) /
         (side == Side::left ? "left.json" : "right.json");
}

void FeatureTable::extract_side(FeatState& fs, Side side,
                                const std::vector<std::uint32_t>& rows,
                                LlmClient* client) {
  const RecordSet& records = side == Side::left ? *left_ : *right_;
  SideState& ss = side == Side::left ? fs.left : fs.right;
  const ExtractorSpec& spec =
      side == Side::left ? fs.feat.left : fs.feat.right;

  const bool use_cache = spec.is_llm() && !cache_dir_.empty();
  if (use_cache && !ss.cache_loaded) {
    ss.cache_loaded = true;
    std::ifstream in(cache_file(fs, side));
    if (in) {
      auto j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
      if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
          try {
            ss.disk_cache.emplace(it.key(), FeatureValue::from_json(*it));
          } catch (const std::exception&) {
            // Ignore unreadable cache entries; they will be recomputed.
          }
        }
      }
    }
  }

  bool cache_dirty = false;
  for (std::uint32_t row : rows) {
    if (row >= records.size()) throw std::out_of_range("row out of range");
    if (ss.values[row].has_value()) continue;
    const Record& rec = records.at(row);
    if (spec.is_code()) {
      ss.values[row] = run_code_extractor(spec.as_code(), rec.text, &warnings_);
      continue;
    }
    if (use_cache) {
      auto hit = ss.disk_cache.find(rec.id);
      if (hit != ss.disk_cache.end()) {
        ss.values[row] = hit->second;
        continue;
      }
    }
    if (client == nullptr) {
      throw std::invalid_argument(
          "featurization '" + fs.feat.id +
          "' needs an LLM client for extraction but none was provided");
    }
    const auto& llm = spec.as_llm();
    std::string prompt = replace_slots(llm.prompt, {{"text", rec.text}});
    llm_extraction_tokens_ += client->token_count(prompt);
    ++llm_extraction_calls_;
    std::string raw = client->complete(prompt);
    FeatureValue v = parse_llm_output(llm.output, raw);
    ss.values[row] = v;
    if (use_cache) {
      ss.disk_cache.emplace(rec.id, std::move(v));
      cache_dirty = true;
    }
  }

  if (use_cache && cache_dirty) {
    auto path = cache_file(fs, side);
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, v] : ss.disk_cache) j[id] = v.to_json();
    std::ofstream out(path);
    out << j.dump(2) << "\n";
  }
}

void FeatureTable::ensure_extracted(const Featurization& feat,
                                    const std::vector<std::uint32_t>& left_rows,
                                    const std::vector<std::uint32_t>& right_rows,
                                    LlmClient* client) {
  FeatState& fs = state_for(feat);
  extract_side(fs, Side::left, left_rows, client);
  extract_side(fs, Side::right, right_rows, client);
}

void FeatureTable::ensure_extracted_pairs(const Featurization& feat,
                                          const std::vector<PairRef>& pairs,
                                          LlmClient* client) {
  std::vector<std::uint32_t> lrows, rrows;
  lrows.reserve(pairs.size());
  rrows.reserve(pairs.size());
  for (const auto& p : pairs) {
    lrows.push_back(p.left);
    rrows.push_back(p.right);
  }
  std::sort(lrows.begin(), lrows.end());
  lrows.erase(std::unique(lrows.begin(), lrows.end()), lrows.end());
  std::sort(rrows.begin(), rrows.end());
  rrows.erase(std::unique(rrows.begin(), rrows.end()), rrows.end());
  ensure_extracted(feat, lrows, rrows, client);
}

bool FeatureTable::is_extracted(const Featurization& feat, Side side,
                                std::uint32_t row) const {
  const FeatState* fs = find_state(feat);
  if (fs == nullptr) return false;
  const SideState& ss = side == Side::left ? fs->left : fs->right;
  return row < ss.values.size() && ss.values[row].has_value();
}

const FeatureValue& FeatureTable::value(const Featurization& feat, Side side,
                                        std::uint32_t row) const {
  const FeatState* fs = find_state(feat);
  if (fs == nullptr) {
    throw std::logic_error("featurization '" + feat.id + "' never extracted");
  }
  const SideState& ss = side == Side::left ? fs->left : fs->right;
  if (row >= ss.values.size() || !ss.values[row].has_value()) {
    throw std::logic_error("feature value requested before extraction (" +
                           feat.id + ", row " + std::to_string(row) + ")");
  }
  return *ss.values[row];
}

const std::vector<double>& FeatureTable::embedding_for(
    const std::string& text) {
  auto it = embed_cache_.find(text);
  if (it != embed_cache_.end()) return it->second;
  if (provider_ == nullptr) {
    throw std::invalid_argument(
        "semantic distance requires an embedding provider");
  }
  embedding_tokens_ += provider_->token_count(text);
  ++embedding_calls_;
  auto vecs = provider_->embed({text});
  return embed_cache_.emplace(text, std::move(vecs[0])).first->second;
}

double FeatureTable::semantic_value_distance(const FeatureValue& a,
                                             const FeatureValue& b) {
  auto texts_of = [](const FeatureValue& v) {
    std::vector<const std::string*> out;
    if (v.is_text()) {
      out.push_back(&v.as_text());
    } else if (v.is_list()) {
      for (const auto& e : v.as_list()) {
        if (e.is_text()) out.push_back(&e.as_text());
      }
    }
    return out;
  };
  auto xs = texts_of(a);
  auto ys = texts_of(b);
  if (xs.empty() || ys.empty()) {
    // Wrong variant for the kind; defer to the strict checker for the error.
    return distance(DistanceKind::semantic, a, b, provider_);
  }
  double best = kInf;
  for (const auto* x : xs) {
    for (const auto* y : ys) {
      if (*x == *y) return 0.0;
      const auto& ex = embedding_for(*x);
      const auto& ey = embedding_for(*y);
      double dot = 0.0;
      for (std::size_t i = 0; i < ex.size(); ++i) dot += ex[i] * ey[i];
      best = std::min(best, std::clamp(1.0 - dot, 0.0, 2.0));
    }
  }
  return best;
}

double FeatureTable::pair_distance(const Featurization& feat, PairRef pair) {
  FeatState& fs = state_for(feat);
  const std::uint64_t key =
      (static_cast<std::uint64_t>(pair.left) << 32) | pair.right;
  auto hit = fs.pair_cache.find(key);
  if (hit != fs.pair_cache.end()) return hit->second;

  if (pair.left >= fs.left.values.size() ||
      !fs.left.values[pair.left].has_value() ||
      pair.right >= fs.right.values.size() ||
      !fs.right.values[pair.right].has_value()) {
    throw std::logic_error("pair distance requested before extraction (" +
                           feat.id + ")");
  }
  const FeatureValue& a = *fs.left.values[pair.left];
  const FeatureValue& b = *fs.right.values[pair.right];

  double d;
  if (feat.kind == DistanceKind::word_overlap && a.is_text() && b.is_text()) {
    auto& ta = fs.left.tokens[pair.left];
    auto& tb = fs.right.tokens[pair.right];
    if (!ta.has_value()) ta = tokenize(a.as_text());
    if (!tb.has_value()) tb = tokenize(b.as_text());
    d = jaccard_distance(*ta, *tb);
  } else if (feat.kind == DistanceKind::semantic &&
             (a.is_text() || a.is_list()) && (b.is_text() || b.is_list()) &&
             !a.is_missing() && !b.is_missing()) {
    d = semantic_value_distance(a, b);
  } else {
    d = distance(feat.kind, a, b, provider_);
  }
  fs.pair_cache.emplace(key, d);
  return d;
}

}  // namespace fdj
