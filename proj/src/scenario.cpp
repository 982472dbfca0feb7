#include "hsmon/scenario.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hsmon/syntax.hpp"

#ifndef HSMON_SOURCE_SCENARIOS
#define HSMON_SOURCE_SCENARIOS "scenarios"
#endif

namespace hsmon {

double InitRange::sample(std::mt19937_64& rng) const {
  if (!choices.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
    return choices[pick(rng)];
  }
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

const char* to_string(SensorNoise n) {
  switch (n) {
    case SensorNoise::Uniform: return "uniform";
    case SensorNoise::Zero: return "zero";
    case SensorNoise::Edge: return "edge";
  }
  return "?";
}

const char* to_string(ControllerKind c) {
  return c == ControllerKind::Model ? "model" : "adversarial";
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_comments(const std::string& text) {
  std::string out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t h = line.find('#');
    if (h != std::string::npos) line.erase(h);
    out += line + "\n";
  }
  return out;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct Block {
  std::string kind;
  std::string label;
  std::string body;
};

std::vector<Block> split_blocks(const std::string& text) {
  std::vector<Block> out;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  auto word = [&] {
    std::size_t b = i;
    while (i < text.size() && ident_char(text[i])) ++i;
    return text.substr(b, i - b);
  };
  while (true) {
    skip_ws();
    if (i >= text.size()) break;
    if (!ident_start(text[i])) throw ScenarioError("expected a section name near '" + text.substr(i, 20) + "'");
    Block b;
    b.kind = word();
    skip_ws();
    if (i < text.size() && ident_start(text[i])) {
      b.label = word();
      skip_ws();
    }
    if (i >= text.size() || text[i] != '{') throw ScenarioError("section '" + b.kind + "' needs a { } body");
    int depth = 0;
    std::size_t start = ++i;
    for (depth = 1; i < text.size() && depth > 0; ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}') --depth;
    }
    if (depth != 0) throw ScenarioError("unterminated section '" + b.kind + "'");
    b.body = text.substr(start, i - 1 - start);
    out.push_back(b);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> key_values(const std::string& body) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string cur;
  int depth = 0;
  auto flush = [&] {
    std::string entry = trim(cur);
    cur.clear();
    if (entry.empty()) return;
    std::size_t eq = entry.find('=');
    if (eq == std::string::npos) throw ScenarioError("expected key = value, got '" + entry + "'");
    out.emplace_back(trim(entry.substr(0, eq)), trim(entry.substr(eq + 1)));
  };
  for (char c : body) {
    if (c == '[' || c == '{' || c == '(') ++depth;
    if (c == ']' || c == '}' || c == ')') --depth;
    if (depth == 0 && (c == ';' || c == '\n')) {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

double number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ScenarioError("'" + key + "' expects a number, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

Interval interval(const std::string& key, const std::string& v) {
  std::string s = trim(v);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') {
    auto parts = split_list(s.substr(1, s.size() - 2));
    if (parts.size() != 2) throw ScenarioError("'" + key + "' expects [lo, hi]");
    Interval iv{number(key, parts[0]), number(key, parts[1])};
    if (iv.first > iv.second) throw ScenarioError("'" + key + "' has lo > hi");
    return iv;
  }
  double d = number(key, s);
  return {d, d};
}

InitRange init_range(const std::string& key, const std::string& v) {
  std::string s = trim(v);
  InitRange r;
  if (s.size() >= 2 && s.front() == '{' && s.back() == '}') {
    for (const auto& p : split_list(s.substr(1, s.size() - 2))) r.choices.push_back(number(key, p));
    if (r.choices.empty()) throw ScenarioError("'" + key + "' has an empty choice set");
    return r;
  }
  Interval iv = interval(key, s);
  r.lo = iv.first;
  r.hi = iv.second;
  return r;
}

std::vector<std::string> split_list_semicolon(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : line) {
    if (c == '(' || c == '{' || c == '[') ++depth;
    if (c == ')' || c == '}' || c == ']') --depth;
    if (c == ';' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct Macro {
  std::vector<std::string> params;
  std::string body;
};

std::map<std::string, Macro> parse_definitions(const std::string& defs) {
  std::map<std::string, Macro> out;
  std::istringstream in(defs);
  std::string line;
  while (std::getline(in, line)) {
    for (const std::string& raw : split_list_semicolon(line)) {
      std::string entry = trim(raw);
      if (entry.empty()) continue;
      std::size_t eq = entry.find('=');
      // `name(a,b) = ...` or `name = ...`; the first '=' separates the head.
      if (eq == std::string::npos) throw ScenarioError("definition without '=': '" + entry + "'");
      std::string head = trim(entry.substr(0, eq));
      Macro m;
      m.body = trim(entry.substr(eq + 1));
      std::string name = head;
      std::size_t paren = head.find('(');
      if (paren != std::string::npos) {
        if (head.back() != ')') throw ScenarioError("malformed definition head '" + head + "'");
        name = trim(head.substr(0, paren));
        m.params = split_list(head.substr(paren + 1, head.size() - paren - 2));
      }
      if (name.empty() || !ident_start(name[0])) throw ScenarioError("bad definition name '" + head + "'");
      out[name] = m;
    }
  }
  return out;
}

std::string expand(const std::string& text, const std::map<std::string, Macro>& macros, int depth);

std::string substitute_params(const Macro& m, const std::vector<std::string>& args) {
  std::map<std::string, std::string> bind;
  for (std::size_t k = 0; k < m.params.size(); ++k) bind[m.params[k]] = "(" + args[k] + ")";
  std::string out;
  for (std::size_t i = 0; i < m.body.size();) {
    if (ident_start(m.body[i]) && (i == 0 || !ident_char(m.body[i - 1]))) {
      std::size_t b = i;
      while (i < m.body.size() && ident_char(m.body[i])) ++i;
      std::string w = m.body.substr(b, i - b);
      auto it = bind.find(w);
      out += it == bind.end() ? w : it->second;
    } else {
      out += m.body[i++];
    }
  }
  return out;
}

std::string expand(const std::string& text, const std::map<std::string, Macro>& macros, int depth) {
  if (depth > 32) throw ScenarioError("macro expansion too deep (recursive definition?)");
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (!(ident_start(text[i]) && (i == 0 || !ident_char(text[i - 1])))) {
      out += text[i++];
      continue;
    }
    std::size_t b = i;
    while (i < text.size() && ident_char(text[i])) ++i;
    std::string w = text.substr(b, i - b);
    auto it = macros.find(w);
    // A trailing ' marks an ODE left-hand side, never a macro use.
    if (it == macros.end() || (i < text.size() && text[i] == '\'')) {
      out += w;
      continue;
    }
    const Macro& m = it->second;
    std::vector<std::string> args;
    if (!m.params.empty()) {
      std::size_t j = i;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j >= text.size() || text[j] != '(')
        throw ScenarioError("macro '" + w + "' needs " + std::to_string(m.params.size()) + " arguments");
      int d = 0;
      std::string cur;
      std::size_t k = j;
      for (; k < text.size(); ++k) {
        char c = text[k];
        if (c == '(') {
          if (d++ == 0) continue;
        } else if (c == ')') {
          if (--d == 0) break;
        } else if (c == ',' && d == 1) {
          args.push_back(trim(cur));
          cur.clear();
          continue;
        }
        cur += c;
      }
      if (k >= text.size()) throw ScenarioError("unterminated arguments of '" + w + "'");
      args.push_back(trim(cur));
      if (args.size() != m.params.size())
        throw ScenarioError("macro '" + w + "' expects " + std::to_string(m.params.size()) +
                            " arguments, got " + std::to_string(args.size()));
      i = k + 1;
    }
    out += "(" + expand(substitute_params(m, args), macros, depth + 1) + ")";
  }
  return out;
}

}  // namespace

std::string expand_macros(const std::string& text, const std::string& definitions) {
  return expand(text, parse_definitions(strip_comments(definitions)), 0);
}

const Program& Scenario::fallback_program() const {
  auto it = fallbacks.find(fallback);
  if (it == fallbacks.end()) throw ScenarioError("scenario '" + name + "' has no fallback '" + fallback + "'");
  return it->second;
}

MonitorContext Scenario::monitor_context() const {
  MonitorContext ctx;
  ctx.diff_invariants = diff_invariants;
  ctx.unobservable = unobservable;
  if (monitor == MonitorKind::Rolling) ctx.estimator = EstimatorSpec::shift_and_clip();
  return ctx;
}

MonitorSpec Scenario::model_monitor_spec() const {
  return build_monitor(body, monitor, monitor_context());
}

MonitorSpec Scenario::control_monitor_spec() const {
  return build_monitor(body, MonitorKind::ControlOnly, monitor_context());
}

double Scenario::sensor_delta(const State& s) const {
  if (!nf.pick) return 0;
  return eval_term(nf.pick->radius, make_env(s));
}

State Scenario::sample_start(std::mt19937_64& rng) const {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    State s;
    for (const auto& [x, r] : init) s[x] = r.sample(rng);
    if (eval_formula(assumptions, make_env(s), 1e-9)) return s;
  }
  throw ScenarioError("scenario '" + name + "': no start state satisfies the assumptions");
}

RunConfig Scenario::run_config() const {
  RunConfig cfg;
  cfg.ode_step = ode_step;
  cfg.rng_seed = seed;
  cfg.test_tolerance = 1e-9;
  return cfg;
}

namespace {

Formula formula_block(const std::map<std::string, std::string>& blocks, const std::string& key,
                      const std::string& defs, bool required) {
  auto it = blocks.find(key);
  if (it == blocks.end()) {
    if (required) throw ScenarioError("missing section '" + key + "'");
    return f_true();
  }
  return parse_formula(expand_macros(it->second, defs));
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& name) {
  Scenario s;
  s.name = name;
  std::map<std::string, std::string> blocks;
  std::map<std::string, std::string> fallback_text;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> kv;
  static const std::set<std::string> kFormulaOrProgram{
      "definitions", "program", "invariant", "diff_invariants", "safety", "assumptions"};
  static const std::set<std::string> kKeyValue{"init",     "adversary", "model",   "monitors",
                                               "noise",    "episodes",  "expectations"};
  for (const Block& b : split_blocks(strip_comments(text))) {
    if (b.kind == "fallback") {
      std::string label = b.label.empty() ? "default" : b.label;
      if (fallback_text.contains(label)) throw ScenarioError("duplicate fallback '" + label + "'");
      fallback_text[label] = b.body;
    } else if (kFormulaOrProgram.contains(b.kind)) {
      if (blocks.contains(b.kind)) throw ScenarioError("duplicate section '" + b.kind + "'");
      blocks[b.kind] = b.body;
    } else if (kKeyValue.contains(b.kind)) {
      for (auto& e : key_values(b.body)) kv[b.kind].push_back(e);
    } else {
      throw ScenarioError("unknown section '" + b.kind + "'");
    }
  }
  std::string defs = blocks.contains("definitions") ? blocks["definitions"] : "";
  if (!blocks.contains("program")) throw ScenarioError("missing section 'program'");
  s.body = parse_program(expand_macros(blocks["program"], defs));
  s.nf = normal_form_of(s.body);
  s.invariant = formula_block(blocks, "invariant", defs, true);
  s.diff_invariants = formula_block(blocks, "diff_invariants", defs, false);
  s.safety = formula_block(blocks, "safety", defs, true);
  s.assumptions = formula_block(blocks, "assumptions", defs, false);
  for (const auto& [label, body] : fallback_text)
    s.fallbacks[label] = parse_program(expand_macros(body, defs));
  if (s.fallbacks.size() == 1) s.fallback = s.fallbacks.begin()->first;

  for (const auto& [k, v] : kv["init"]) s.init[k] = init_range("init." + k, v);
  for (const auto& [k, v] : kv["adversary"]) s.adversary[k] = init_range("adversary." + k, v);
  for (const auto& [k, v] : kv["model"]) {
    if (k == "unobservable") {
      for (const auto& x : split_list(v)) s.unobservable.insert(x);
    } else if (k == "fallback") {
      if (!s.fallbacks.contains(v)) throw ScenarioError("model.fallback names unknown fallback '" + v + "'");
      s.fallback = v;
    } else {
      throw ScenarioError("unknown key model." + k);
    }
  }
  bool has_effect = false;
  for (const auto& [k, v] : kv["monitors"]) {
    if (k == "kind") {
      try {
        s.monitor = parse_monitor_kind(v);
      } catch (const std::invalid_argument& e) {
        throw ScenarioError(e.what());
      }
    } else if (k == "effect") {
      s.effect = parse_term(expand_macros(v, defs));
      has_effect = true;
    } else if (k == "tolerance") {
      s.tolerance = number(k, v);
    } else if (k == "grid") {
      s.grid = static_cast<int>(number(k, v));
    } else {
      throw ScenarioError("unknown key monitors." + k);
    }
  }
  if (s.monitor == MonitorKind::Rolling && !has_effect)
    throw ScenarioError("rolling monitor needs monitors.effect");
  if (!has_effect) s.effect = constant(0);
  for (const auto& [k, v] : kv["noise"]) {
    if (k == "sensor") {
      if (v == "uniform") s.sensor_noise = SensorNoise::Uniform;
      else if (v == "zero") s.sensor_noise = SensorNoise::Zero;
      else if (v == "edge") s.sensor_noise = SensorNoise::Edge;
      else throw ScenarioError("noise.sensor must be uniform, zero or edge");
    } else if (k == "fault_probability") {
      s.fault_probability = number(k, v);
      if (s.fault_probability < 0 || s.fault_probability > 1)
        throw ScenarioError("noise.fault_probability must lie in [0, 1]");
    } else if (k == "fault_var") {
      s.fault_var = v;
    } else if (k == "fault_offset") {
      s.fault_offset = interval(k, v);
    } else {
      throw ScenarioError("unknown key noise." + k);
    }
  }
  if (s.fault_probability > 0 && s.fault_var.empty())
    throw ScenarioError("noise.fault_probability needs noise.fault_var");
  for (const auto& [k, v] : kv["episodes"]) {
    if (k == "runs") s.runs = static_cast<int>(number(k, v));
    else if (k == "steps") s.steps = static_cast<int>(number(k, v));
    else if (k == "seed") s.seed = static_cast<std::uint64_t>(number(k, v));
    else if (k == "ode_step") s.ode_step = number(k, v);
    else if (k == "controller") {
      if (v == "model") s.controller = ControllerKind::Model;
      else if (v == "adversarial") s.controller = ControllerKind::Adversarial;
      else throw ScenarioError("episodes.controller must be model or adversarial");
    } else {
      throw ScenarioError("unknown key episodes." + k);
    }
  }
  for (const auto& [k, v] : kv["expectations"]) {
    if (k == "precision") s.expect_precision = interval(k, v);
    else if (k == "recall") s.expect_recall = interval(k, v);
    else throw ScenarioError("unknown key expectations." + k);
  }
  if (const char* env = std::getenv("HSMON_SEED"); env && *env)
    s.seed = static_cast<std::uint64_t>(number("HSMON_SEED", env));
  if (s.runs < 0 || s.steps < 0) throw ScenarioError("episodes.runs and episodes.steps must be >= 0");
  for (const auto& x : s.unobservable)
    if (!all_vars(s.body).contains(x)) throw ScenarioError("unobservable '" + x + "' is not a model variable");
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot read scenario '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Scenario s = parse_scenario(ss.str(), std::filesystem::path(path).stem().string());
  s.path = path;
  return s;
}

std::string scenario_dir() {
  if (const char* env = std::getenv("HSMON_SCENARIOS"); env && *env) return env;
  return HSMON_SOURCE_SCENARIOS;
}

std::string resolve_scenario(const std::string& name) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(name)) return name;
  for (const std::string& candidate : {name, name + ".hp"}) {
    fs::path p = fs::path(scenario_dir()) / candidate;
    if (fs::is_regular_file(p)) return p.string();
  }
  throw ScenarioError("no scenario '" + name + "' (looked in " + scenario_dir() + ")");
}

void audit_scenario(const Scenario& s, int samples) {
  std::mt19937_64 rng(split_seed(s.seed, 0xa0d17));
  for (int i = 0; i < samples; ++i) {
    State st = s.sample_start(rng);
    Env env = make_env(st);
    if (!eval_formula(s.invariant, env, 1e-9))
      throw ScenarioError("scenario '" + s.name + "': assumptions do not imply the invariant at a sampled state");
    if (!eval_formula(s.safety, env, 1e-9))
      throw ScenarioError("scenario '" + s.name + "': invariant does not imply safety at a sampled state");
  }
}

}  // namespace hsmon
