#include "gct/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>

#include "gct/text.hpp"

namespace gct {

namespace {

struct Field {
  std::string section;  ///< "" for top-level keys
  std::string key;
  std::string type;  ///< string | bool | int | uint | float | float[]
  std::string help;
  std::function<Json(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const Json&)> set;

  std::string path() const { return section.empty() ? key : section + "." + key; }
};

template <class T>
constexpr const char* type_name() {
  if constexpr (std::is_same_v<T, std::string>) return "string";
  else if constexpr (std::is_same_v<T, bool>) return "bool";
  else if constexpr (std::is_same_v<T, std::uint64_t>) return "uint";
  else if constexpr (std::is_integral_v<T>) return "int";
  else if constexpr (std::is_same_v<T, double>) return "float";
  else return "float[]";
}

template <class T, class Access>
Field field(std::string section, std::string key, std::string help, Access access) {
  Field f;
  f.section = std::move(section);
  f.key = std::move(key);
  f.type = type_name<T>();
  f.help = std::move(help);
  f.get = [access](const PipelineConfig& c) { return Json(access(const_cast<PipelineConfig&>(c))); };
  f.set = [access](PipelineConfig& c, const Json& v) { access(c) = v.get<T>(); };
  return f;
}

#define GCT_FIELD(T, section, key, help, expr) field<T>(section, key, help, [](PipelineConfig& c) -> T& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f = {
        GCT_FIELD(std::string, "", "workdir", "directory holding every artifact and the run manifest", c.workdir),
        GCT_FIELD(std::uint64_t, "", "seed", "root seed; every stage derives a named substream", c.seed),

        GCT_FIELD(int, "simulate", "n_concepts", "planted concepts drawn from the lexicon", c.simulate.n_concepts),
        GCT_FIELD(int, "simulate", "n_voxels", "simulated voxels", c.simulate.n_voxels),
        GCT_FIELD(double, "simulate", "noise_sd", "Gaussian noise SD before z-scoring", c.simulate.noise_sd),
        GCT_FIELD(double, "simulate", "gain", "signal scale", c.simulate.gain),
        GCT_FIELD(double, "simulate", "polysemantic_fraction", "voxels with a second concept",
                  c.simulate.polysemantic_fraction),
        GCT_FIELD(double, "simulate", "null_fraction", "voxels with no concept", c.simulate.null_fraction),
        GCT_FIELD(double, "simulate", "drift_sd", "quadratic drift amplitude", c.simulate.drift_sd),
        GCT_FIELD(int, "simulate", "n_train_stories", "training stories", c.simulate.n_train_stories),
        GCT_FIELD(int, "simulate", "n_test_stories", "held-out stories", c.simulate.n_test_stories),
        GCT_FIELD(int, "simulate", "test_repeats", "repeated runs of each held-out story", c.simulate.test_repeats),
        GCT_FIELD(int, "simulate", "words_per_story", "words per corpus story", c.simulate.words_per_story),
        GCT_FIELD(std::string, "simulate", "lexicon", "concept lexicon JSON; empty uses the built-in one",
                  c.simulate.lexicon),

        GCT_FIELD(std::string, "features", "kind", "hashed | file", c.extractor.kind),
        GCT_FIELD(std::uint64_t, "features", "seed", "primary extractor seed", c.extractor.seed),
        GCT_FIELD(std::uint64_t, "features", "secondary_seed", "second extractor seed for stability",
                  c.secondary_seed),
        GCT_FIELD(int, "features", "dim", "feature dimension", c.extractor.dim),
        GCT_FIELD(int, "features", "context", "n-gram context of the hashed extractor", c.extractor.context),
        GCT_FIELD(double, "features", "shared", "variance fraction of the seed-independent embedding", c.extractor.shared),
        GCT_FIELD(std::string, "features", "dir", "word-feature directory for kind = file", c.extractor.dir),
        GCT_FIELD(double, "features", "tr_s", "sampling period in seconds", c.tr_s),
        GCT_FIELD(std::vector<double>, "features", "delays_s", "FIR delays in seconds", c.delays_s),

        GCT_FIELD(int, "cv", "chunk_len", "rows per contiguous CV chunk", c.cv.chunk_len),
        GCT_FIELD(int, "cv", "n_folds", "cross-validation folds", c.cv.n_folds),
        GCT_FIELD(std::vector<double>, "cv", "lambdas", "ridge penalty grid", c.cv.lambdas),
        GCT_FIELD(std::uint64_t, "cv", "seed", "chunk shuffle seed", c.cv.seed),

        GCT_FIELD(double, "thresholds", "r", "minimum test correlation for selection", c.r_threshold),
        GCT_FIELD(double, "thresholds", "stability", "minimum stability for candidate regions",
                  c.stability_threshold),
        GCT_FIELD(double, "thresholds", "fdr_q", "Benjamini-Hochberg level", c.fdr_q),

        GCT_FIELD(int, "select", "n_targets", "voxels sampled from the hull", c.n_targets),

        GCT_FIELD(std::size_t, "explain", "top_n", "top n-grams mined per target", c.sasc.top_n),
        GCT_FIELD(std::size_t, "explain", "sample_n", "n-grams shown per summary call", c.sasc.sample_n),
        GCT_FIELD(int, "explain", "k", "summary calls per target", c.sasc.k),
        GCT_FIELD(std::uint64_t, "explain", "seed", "subset sampling seed", c.sasc.seed),

        GCT_FIELD(std::string, "llm", "backend", "stub | replay | http_chat", c.llm.backend),
        GCT_FIELD(std::uint64_t, "llm", "seed", "stub and request seed", c.llm.seed),
        GCT_FIELD(std::string, "llm", "lexicon", "stub world knowledge; empty uses the built-in lexicon",
                  c.llm.lexicon_path),
        GCT_FIELD(std::string, "llm", "fixtures", "stub fixtures JSONL", c.llm.fixtures_path),
        GCT_FIELD(std::string, "llm", "cassette", "replay source or recording target", c.llm.cassette_path),
        GCT_FIELD(bool, "llm", "record", "append every call to the cassette", c.llm.record),
        GCT_FIELD(std::string, "llm", "endpoint", "chat-completion URL", c.llm.http.endpoint),
        GCT_FIELD(std::string, "llm", "model", "remote model name", c.llm.http.model),
        GCT_FIELD(std::string, "llm", "api_key_env", "environment variable holding the API key",
                  c.llm.http.api_key_env),
        GCT_FIELD(double, "llm", "temperature", "sampling temperature", c.llm.http.temperature),
        GCT_FIELD(int, "llm", "max_retries", "retries on transport errors, 429 and 5xx", c.llm.http.max_retries),
        GCT_FIELD(double, "llm", "backoff_initial_s", "first retry delay, doubled each time",
                  c.llm.http.backoff_initial_s),
        GCT_FIELD(int, "llm", "max_concurrency", "parallel requests", c.llm.http.max_concurrency),
        GCT_FIELD(double, "llm", "timeout_s", "per-request timeout", c.llm.http.timeout_s),

        GCT_FIELD(double, "story", "words_per_minute", "presentation cadence", c.story.words_per_minute),
        GCT_FIELD(int, "story", "n_candidates", "candidate stories before pre-validation", c.story.n_candidates),
        GCT_FIELD(int, "story", "max_targets", "driving paragraphs per story", c.story.max_targets),
        GCT_FIELD(int, "story", "n_examples", "key n-grams injected per paragraph", c.story.n_examples),
        GCT_FIELD(bool, "story", "compare_versions", "also evaluate candidates written with the other prompt version",
                  c.story.compare_versions),

        GCT_FIELD(int, "evaluate", "hrf_lag_trs", "shift from paragraph time to response rows", c.evaluate.hrf_lag_trs),
        GCT_FIELD(int, "evaluate", "n_perm", "Monte-Carlo permutations", c.evaluate.n_perm),
        GCT_FIELD(int, "evaluate", "repeats", "presentations averaged before scoring", c.evaluate.repeats),
        GCT_FIELD(bool, "evaluate", "detrend", "Savitzky-Golay detrend before z-scoring", c.evaluate.detrend),
    };
    Field pv;
    pv.section = "story";
    pv.key = "prompt_version";
    pv.type = "string";
    pv.help = "v1 (coherent story) | v0 (first person)";
    pv.get = [](const PipelineConfig& c) { return Json(to_string(c.story.prompt_version)); };
    pv.set = [](PipelineConfig& c, const Json& v) {
      try {
        c.story.prompt_version = prompt_version_from_string(v.get<std::string>());
      } catch (const ParseError& e) {
        throw ConfigError(e.message());
      }
    };
    auto at = std::find_if(f.begin(), f.end(), [](const Field& x) { return x.section == "evaluate"; });
    f.insert(at, pv);
    return f;
  }();
  return all;
}

#undef GCT_FIELD

// --- value syntax -----------------------------------------------------------

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    out += ch;
  }
  return out + "\"";
}

std::string float_text(double v) {
  auto s = format_double(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string value_text(const Field& f, const Json& v) {
  if (f.type == "string") return quote(v.get<std::string>());
  if (f.type == "bool") return v.get<bool>() ? "true" : "false";
  if (f.type == "float") return float_text(v.get<double>());
  if (f.type == "float[]") {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + float_text(v[i].get<double>());
    return s + "]";
  }
  return v.dump();
}

struct Cursor {
  std::string_view s;
  std::size_t i = 0;
  int line = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line) + ": " + what);
  }
  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool done() {
    skip_ws();
    return i >= s.size() || s[i] == '#';
  }
};

std::string parse_string(Cursor& c) {
  if (c.i >= c.s.size() || c.s[c.i] != '"') c.fail("expected a quoted string");
  std::string out;
  for (++c.i; c.i < c.s.size(); ++c.i) {
    char ch = c.s[c.i];
    if (ch == '"') {
      ++c.i;
      return out;
    }
    if (ch == '\\') {
      if (++c.i >= c.s.size()) break;
      ch = c.s[c.i];
      if (ch == 'n') ch = '\n';
      else if (ch == 't') ch = '\t';
      else if (ch != '"' && ch != '\\') c.fail("unsupported escape");
    }
    out += ch;
  }
  c.fail("unterminated string");
}

std::string_view bare_token(Cursor& c) {
  const auto start = c.i;
  while (c.i < c.s.size() && c.s[c.i] != ',' && c.s[c.i] != ']' && c.s[c.i] != '#' && c.s[c.i] != ' ' &&
         c.s[c.i] != '\t')
    ++c.i;
  return c.s.substr(start, c.i - start);
}

double parse_float(Cursor& c) {
  auto tok = bare_token(c);
  std::string t(tok);
  std::erase(t, '_');
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) c.fail("expected a number, got '" + t + "'");
  return v;
}

Json parse_value(Cursor& c, const Field& f) {
  c.skip_ws();
  if (f.type == "string") return parse_string(c);
  if (f.type == "bool") {
    auto tok = bare_token(c);
    if (tok == "true") return true;
    if (tok == "false") return false;
    c.fail(f.path() + " expects true or false");
  }
  if (f.type == "float") return parse_float(c);
  if (f.type == "float[]") {
    if (c.i >= c.s.size() || c.s[c.i] != '[') c.fail(f.path() + " expects an array");
    ++c.i;
    Json arr = Json::array();
    c.skip_ws();
    if (c.i < c.s.size() && c.s[c.i] == ']') {
      ++c.i;
      return arr;
    }
    for (;;) {
      c.skip_ws();
      arr.push_back(parse_float(c));
      c.skip_ws();
      if (c.i < c.s.size() && c.s[c.i] == ',') {
        ++c.i;
        continue;
      }
      if (c.i < c.s.size() && c.s[c.i] == ']') {
        ++c.i;
        return arr;
      }
      c.fail("unterminated array");
    }
  }
  auto tok = std::string(bare_token(c));
  std::erase(tok, '_');
  if (f.type == "uint") {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || tok.empty())
      c.fail(f.path() + " expects a nonnegative integer");
    return v;
  }
  long long v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || tok.empty()) c.fail(f.path() + " expects an integer");
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

void PipelineConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(!workdir.empty(), "workdir must not be empty");
  need(simulate.n_concepts >= 2, "simulate.n_concepts must be at least 2");
  need(simulate.n_voxels >= 1, "simulate.n_voxels must be positive");
  need(simulate.noise_sd >= 0, "simulate.noise_sd must be nonnegative");
  need(simulate.polysemantic_fraction >= 0 && simulate.polysemantic_fraction <= 1,
       "simulate.polysemantic_fraction must lie in [0, 1]");
  need(simulate.null_fraction >= 0 && simulate.null_fraction <= 1, "simulate.null_fraction must lie in [0, 1]");
  need(simulate.n_train_stories >= 2, "simulate.n_train_stories must be at least 2");
  need(simulate.n_test_stories >= 1, "simulate.n_test_stories must be positive");
  need(simulate.test_repeats >= 1, "simulate.test_repeats must be positive");
  need(simulate.words_per_story >= 10, "simulate.words_per_story must be at least 10");
  need(extractor.kind == "hashed" || extractor.kind == "file", "features.kind must be hashed or file");
  need(extractor.kind != "file" || !extractor.dir.empty(), "features.dir is required for kind = file");
  need(extractor.dim >= 1 && extractor.context >= 1, "features.dim and features.context must be positive");
  need(extractor.shared >= 0.0 && extractor.shared <= 1.0, "features.shared must be in [0, 1]");
  need(tr_s > 0, "features.tr_s must be positive");
  need(!delays_s.empty(), "features.delays_s must not be empty");
  need(cv.chunk_len >= 1 && cv.n_folds >= 2, "cv.chunk_len >= 1 and cv.n_folds >= 2 required");
  need(!cv.lambdas.empty(), "cv.lambdas must not be empty");
  for (double l : cv.lambdas) need(l > 0, "cv.lambdas must be positive");
  need(r_threshold > -1 && r_threshold < 1, "thresholds.r must lie in (-1, 1)");
  need(stability_threshold >= -1 && stability_threshold <= 1, "thresholds.stability must lie in [-1, 1]");
  need(fdr_q > 0 && fdr_q < 1, "thresholds.fdr_q must lie in (0, 1)");
  need(n_targets >= 1, "select.n_targets must be positive");
  need(sasc.top_n >= 1 && sasc.sample_n >= 1 && sasc.k >= 1, "explain sizes must be positive");
  need(llm.backend == "stub" || llm.backend == "replay" || llm.backend == "http_chat",
       "llm.backend must be stub, replay or http_chat");
  need(llm.backend != "replay" || !llm.cassette_path.empty(), "llm.cassette is required for replay");
  need(story.words_per_minute > 0, "story.words_per_minute must be positive");
  need(story.n_candidates >= 1 && story.max_targets >= 2 && story.n_examples >= 0,
       "story.n_candidates >= 1 and story.max_targets >= 2 required");
  need(evaluate.hrf_lag_trs >= 0, "evaluate.hrf_lag_trs must be nonnegative");
  need(evaluate.n_perm >= 1 && evaluate.repeats >= 1, "evaluate.n_perm and evaluate.repeats must be positive");
}

FeatureSpec PipelineConfig::primary_features() const {
  FeatureSpec s;
  s.extractor = extractor;
  s.tr_s = tr_s;
  s.delays_s = delays_s;
  s.word_duration_s = 60.0 / story.words_per_minute;
  return s;
}

FeatureSpec PipelineConfig::secondary_features() const {
  FeatureSpec s = primary_features();
  s.extractor.seed = secondary_seed;
  return s;
}

Json PipelineConfig::to_json() const {
  Json j = Json::object();
  for (const auto& f : fields()) {
    if (f.section.empty()) j[f.key] = f.get(*this);
    else j[f.section][f.key] = f.get(*this);
  }
  return j;
}

PipelineConfig parse_config(std::string_view text) {
  std::map<std::string, const Field*> by_path;
  for (const auto& f : fields()) by_path[f.path()] = &f;

  PipelineConfig cfg;
  std::set<std::string> seen;
  std::string section;
  int line_no = 0;
  for (const auto& raw : split_lines(text)) {
    ++line_no;
    Cursor c{raw, 0, line_no};
    if (c.done()) continue;
    if (c.s[c.i] == '[') {
      const auto close = c.s.find(']', c.i);
      if (close == std::string_view::npos) c.fail("unterminated section header");
      section = std::string(trim(c.s.substr(c.i + 1, close - c.i - 1)));
      c.i = close + 1;
      if (!c.done()) c.fail("trailing text after section header");
      bool known = false;
      for (const auto& f : fields()) known = known || f.section == section;
      if (!known) c.fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = c.s.find('=', c.i);
    if (eq == std::string_view::npos) c.fail("expected key = value");
    const std::string key(trim(c.s.substr(c.i, eq - c.i)));
    const std::string path = section.empty() ? key : section + "." + key;
    auto it = by_path.find(path);
    if (it == by_path.end()) c.fail("unknown key '" + path + "'");
    if (!seen.insert(path).second) c.fail("duplicate key '" + path + "'");
    c.i = eq + 1;
    Json v = parse_value(c, *it->second);
    if (!c.done()) c.fail("trailing text after value of '" + path + "'");
    try {
      it->second->set(cfg, v);
    } catch (const Json::exception& e) {
      c.fail(path + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.message());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.message());
  }
}

std::string emit_config(const PipelineConfig& config) {
  std::string out;
  std::string section;
  bool first = true;
  for (const auto& f : fields()) {
    if (f.section != section || first) {
      if (!f.section.empty() && f.section != section) out += "\n[" + f.section + "]\n";
      section = f.section;
      first = false;
    }
    out += f.key + " = " + value_text(f, f.get(config)) + "\n";
  }
  return out;
}

Json config_schema() {
  Json keys = Json::array();
  PipelineConfig defaults;
  for (const auto& f : fields())
    keys.push_back({{"key", f.path()}, {"type", f.type}, {"default", f.get(defaults)}, {"description", f.help}});
  return {{"format", "flat TOML subset: [section] headers, key = value, # comments"}, {"keys", keys}};
}

}  // namespace gct
