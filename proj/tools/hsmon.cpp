#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "hsmon/evaluation.hpp"
#include "hsmon/monitors.hpp"
#include "hsmon/sandbox.hpp"
#include "hsmon/scenario.hpp"
#include "hsmon/syntax.hpp"

using namespace hsmon;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  return out;
}

std::string num(std::optional<double> v) { return v ? format_number(*v) : "undefined"; }

json to_json(const PRReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["monitor"] = r.monitor;
  j["runs"] = r.runs;
  j["steps_per_run"] = r.steps_per_run;
  j["steps"] = r.steps;
  j["true_nonalarms"] = r.true_nonalarms;
  j["all_nonalarms"] = r.all_nonalarms;
  j["false_alarms"] = r.false_alarms;
  j["true_alarms"] = r.true_alarms;
  j["missed_faults"] = r.missed_faults;
  j["fallback_engagements"] = r.fallback_engagements;
  j["invariant_violations"] = r.invariant_violations;
  j["sensor_audit_failures"] = r.sensor_audit_failures;
  j["stalled_runs"] = r.stalled_runs;
  j["precision"] = r.precision ? json(*r.precision) : json(nullptr);
  j["recall"] = r.recall ? json(*r.recall) : json(nullptr);
  j["seconds"] = r.seconds;
  return j;
}

void print_report(std::ostream& os, const PRReport& r) {
  os << "scenario " << r.scenario << "  monitor " << r.monitor << "  " << r.runs << " runs x "
     << r.steps_per_run << " steps\n"
     << "steps " << r.steps << "  true non-alarms " << r.true_nonalarms << "  non-alarms "
     << r.all_nonalarms << "  false alarms " << r.false_alarms << "  true alarms " << r.true_alarms
     << "  missed faults " << r.missed_faults << "\n"
     << "fallback engagements " << r.fallback_engagements << "  stalled runs " << r.stalled_runs
     << "  invariant violations " << r.invariant_violations << "\n"
     << "precision " << num(r.precision) << "  recall " << num(r.recall) << "  ("
     << std::fixed << std::setprecision(2) << r.seconds << " s)\n";
  os.unsetf(std::ios::fixed);
  os << std::setprecision(6);
}

bool meets(const std::optional<Interval>& want, const std::optional<double>& got) {
  if (!want) return true;
  return got && *got >= want->first - 1e-12 && *got <= want->second + 1e-12;
}

bool meets_expectations(const Scenario& s, const PRReport& r) {
  return meets(s.expect_precision, r.precision) && meets(s.expect_recall, r.recall);
}

Scenario load(const std::string& name) { return load_scenario(resolve_scenario(name)); }

// ---- synth ----

struct SynthArgs {
  std::string model, out, kind;
};

int run_synth(const SynthArgs& a) {
  Scenario s = load(a.model);
  MonitorKind kind = a.kind.empty() ? s.monitor : parse_monitor_kind(a.kind);
  MonitorContext ctx = s.monitor_context();
  if (kind == MonitorKind::Rolling) ctx.estimator = EstimatorSpec::shift_and_clip();
  Monitor m(build_monitor(s.body, kind, ctx), {s.tolerance, s.grid, s.tolerance});
  const SynthesisReport& rep = m.synthesis();
  std::ofstream out = open_out(a.out);
  out << to_string(rep.output) << "\n";
  for (const auto& step : rep.trace)
    out << json{{"rule", step.rule}, {"variable", step.variable}, {"result", step.result}}.dump()
        << "\n";
  std::cout << to_string(rep.output) << "\n";
  std::cout << "kind " << to_string(kind) << "  rules " << rep.trace.size()
            << "  residual quantifiers " << rep.residual_quantifiers << "\n";
  return 0;
}

// ---- monitor eval ----

struct EvalArgs {
  std::string model, kind, trace, out;
  std::optional<double> delta;
  bool expect_clean = false;
};

struct CsvTrace {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvTrace read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path + "'");
  CsvTrace t;
  std::string line;
  if (!std::getline(in, line)) throw UsageError("empty trace '" + path + "'");
  t.header = split_csv(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split_csv(line));
    if (t.rows.back().size() > t.header.size())
      throw UsageError("trace row " + std::to_string(t.rows.size()) + " has too many cells");
  }
  return t;
}

int run_monitor_eval(const EvalArgs& a) {
  Scenario s = load(a.model);
  MonitorKind kind = a.kind.empty() ? s.monitor : parse_monitor_kind(a.kind);
  Program body = s.body;
  if (a.delta) {
    if (!s.nf.pick) throw UsageError("--delta needs a model with an uncertainty interval");
    if (*a.delta < 0) throw UsageError("--delta must be >= 0");
    body = with_pick_radius(body, s.nf.pick->var, constant(*a.delta));
  }
  MonitorContext ctx = s.monitor_context();
  if (kind == MonitorKind::Rolling) ctx.estimator = EstimatorSpec::shift_and_clip();
  MonitorSpec spec = build_monitor(body, kind, ctx);
  SearchConfig search{s.tolerance, s.grid, s.tolerance};

  std::set<std::string> model_vars = free_vars(body);
  for (const auto& x : bound_vars(body)) model_vars.insert(x);
  std::set<std::string> hidden = s.unobservable;
  if (kind == MonitorKind::Pairwise || kind == MonitorKind::Rolling) hidden.insert(spec.measured);
  if (kind == MonitorKind::Disturbance) hidden.insert(spec.nf.pick->var);

  CsvTrace t = read_csv(a.trace);
  int run_col = -1;
  std::vector<std::pair<std::size_t, std::string>> columns;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == "run") run_col = static_cast<int>(i);
    if (model_vars.contains(t.header[i]) && !hidden.contains(t.header[i]))
      columns.emplace_back(i, t.header[i]);
  }
  if (columns.empty()) throw UsageError("trace has no columns for the model's variables");
  auto state_of = [&](const std::vector<std::string>& row) {
    State st;
    for (const auto& [i, name] : columns)
      if (i < row.size() && !row[i].empty()) st[name] = std::stod(row[i]);
    return st;
  };

  std::unique_ptr<Monitor> plain;
  std::unique_ptr<RollingMonitor> rolling;
  Term effect = s.effect ? s.effect : constant(0);
  auto fresh = [&] {
    if (kind == MonitorKind::Rolling)
      rolling = std::make_unique<RollingMonitor>(spec, EstimatorSpec::shift_and_clip(), effect,
                                                 search);
    else if (!plain)
      plain = std::make_unique<Monitor>(spec, search);
  };

  std::ofstream out;
  if (!a.out.empty()) {
    out = open_out(a.out);
    if (run_col >= 0) out << "run,";
    out << "row,verdict";
    if (kind == MonitorKind::Rolling) out << ",est_l,est_u";
    out << "\n";
  }
  long transitions = 0, violations = 0;
  std::string current_run = "\x01";
  State prev;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::string run = run_col >= 0 && static_cast<std::size_t>(run_col) < row.size() ? row[static_cast<std::size_t>(run_col)] : "";
    State st = state_of(row);
    if (run != current_run) {
      current_run = run;
      fresh();
      prev = st;
      continue;
    }
    Verdict v = rolling ? rolling->evaluate({prev, st}) : plain->evaluate({prev, st});
    ++transitions;
    if (!v.satisfied) ++violations;
    if (out.is_open()) {
      if (run_col >= 0) out << run << ",";
      out << r + 1 << ","
          << (v.history_inconsistent ? "history-inconsistent" : v.satisfied ? "satisfied" : "violated");
      if (rolling) out << "," << format_number(rolling->estimate().l) << "," << format_number(rolling->estimate().u);
      out << "\n";
    }
    prev = st;
  }
  std::cout << "kind " << to_string(kind) << "  transitions " << transitions << "  violations "
            << violations << "\n";
  return a.expect_clean && violations > 0 ? 1 : 0;
}

// ---- sim run ----

struct SimArgs {
  std::string scenario, out, summary, noise, controller;
  std::optional<int> runs, steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> fault_probability;
  unsigned threads = 0;
  bool expect_clean = false;
  bool check_expectations = false;
};

Scenario configured(const SimArgs& a) {
  Scenario s = load(a.scenario);
  if (a.noise == "uniform") s.sensor_noise = SensorNoise::Uniform;
  else if (a.noise == "zero") s.sensor_noise = SensorNoise::Zero;
  else if (a.noise == "edge") s.sensor_noise = SensorNoise::Edge;
  if (a.controller == "model") s.controller = ControllerKind::Model;
  else if (a.controller == "adversarial") s.controller = ControllerKind::Adversarial;
  if (a.fault_probability) s.fault_probability = *a.fault_probability;
  return s;
}

int run_sim(const SimArgs& a) {
  Scenario s = configured(a);
  EvaluationOptions opt;
  opt.runs = a.runs;
  opt.steps = a.steps;
  opt.seed = a.seed;
  opt.threads = a.threads;
  opt.keep_traces = !a.out.empty();
  EvaluationResult res = run_evaluation(s, opt);
  print_report(std::cout, res.report);
  if (!a.out.empty()) {
    std::ofstream out = open_out(a.out);
    for (std::size_t i = 0; i < res.traces.size(); ++i) {
      std::ostringstream one;
      write_trace_csv(one, res.traces[i], static_cast<int>(i));
      std::string text = one.str();
      // One header for the whole file.
      if (i > 0) text.erase(0, text.find('\n') + 1);
      out << text;
    }
  }
  std::string summary = a.summary;
  if (summary.empty() && !a.out.empty())
    summary = std::filesystem::path(a.out).replace_extension(".json").string();
  if (!summary.empty()) {
    json j = to_json(res.report);
    j["seed"] = a.seed.value_or(s.seed);
    j["sensor_noise"] = to_string(s.sensor_noise);
    j["controller"] = to_string(s.controller);
    j["labeling"] =
        "conformant: no injected fault and the decision came from the model controller, the "
        "fallback, or passed the control monitor; alarm: model monitor violated";
    open_out(summary) << j.dump(2) << "\n";
  }
  int code = 0;
  if (a.expect_clean && (res.report.false_alarms + res.report.true_alarms > 0 ||
                         res.report.invariant_violations > 0))
    code = 1;
  if (a.check_expectations && !meets_expectations(s, res.report)) {
    std::cout << "expectations not met\n";
    code = 1;
  }
  return code;
}

// ---- report ----

struct ReportArgs {
  std::vector<std::string> summaries;
  std::vector<std::string> scenarios;
  bool check_expectations = false;
};

const std::vector<std::string> kDefaultReport = {"flight_original",    "flight_actuator",
                                                 "flight_sensor",      "watertank_original",
                                                 "watertank_actuator", "watertank_sensor"};

int run_report(const ReportArgs& a) {
  std::vector<json> rows;
  bool ok = true;
  for (const auto& path : a.summaries) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read '" + path + "'");
    try {
      rows.push_back(json::parse(in));
    } catch (const json::exception& e) {
      throw UsageError("'" + path + "': " + e.what());
    }
  }
  std::vector<std::string> names = a.scenarios;
  if (names.empty() && a.summaries.empty()) names = kDefaultReport;
  for (const auto& name : names) {
    Scenario s = load(name);
    EvaluationOptions opt;
    opt.keep_traces = false;
    PRReport r = run_evaluation(s, opt).report;
    json j = to_json(r);
    bool pass = meets_expectations(s, r);
    ok = ok && pass;
    j["expectations"] = s.expect_precision || s.expect_recall ? (pass ? "met" : "NOT met") : "-";
    rows.push_back(j);
  }
  auto cell = [](const json& v) {
    if (v.is_null()) return std::string("undefined");
    if (v.is_number_float()) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(3) << v.get<double>();
      return os.str();
    }
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  std::cout << "| scenario | monitor | runs x steps | precision | recall | false alarms | missed faults | expectations |\n"
            << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& j : rows) {
    std::cout << "| " << cell(j.value("scenario", json("?"))) << " | " << cell(j.value("monitor", json("?")))
              << " | " << cell(j.value("runs", json(0))) << " x " << cell(j.value("steps_per_run", json(0)))
              << " | " << cell(j.value("precision", json(nullptr))) << " | "
              << cell(j.value("recall", json(nullptr))) << " | " << cell(j.value("false_alarms", json(0)))
              << " | " << cell(j.value("missed_faults", json(0))) << " | "
              << cell(j.value("expectations", json("-"))) << " |\n";
  }
  return a.check_expectations && !ok ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Runtime model validation for hybrid systems"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Synthesize the monitor formula of a model");
  synth_cmd->add_option("--model", synth.model, "Scenario file or shipped scenario name")->required();
  synth_cmd->add_option("--out", synth.out, "Output .mon file")->required();
  synth_cmd->add_option("--kind", synth.kind, "exact, disturbance, pairwise, rolling or control")
      ->check(CLI::IsMember({"exact", "disturbance", "pairwise", "rolling", "control"}));

  EvalArgs ev;
  CLI::App* monitor_cmd = app.add_subcommand("monitor", "Monitor operations");
  monitor_cmd->require_subcommand(1);
  CLI::App* eval_cmd = monitor_cmd->add_subcommand("eval", "Evaluate a monitor on a CSV trace");
  eval_cmd->add_option("--model", ev.model, "Scenario file or shipped scenario name")->required();
  eval_cmd->add_option("--kind", ev.kind, "Monitor kind (default: the scenario's)")
      ->check(CLI::IsMember({"exact", "disturbance", "pairwise", "rolling", "control"}));
  eval_cmd->add_option("--trace", ev.trace, "Trace CSV with a column per variable")->required();
  eval_cmd->add_option("--delta", ev.delta, "Override the uncertainty radius");
  eval_cmd->add_option("--out", ev.out, "Verdict CSV");
  eval_cmd->add_flag("--expect-clean", ev.expect_clean, "Exit 1 when any transition is violated");

  SimArgs sim;
  CLI::App* sim_cmd = app.add_subcommand("sim", "Simulation campaigns");
  sim_cmd->require_subcommand(1);
  CLI::App* run_cmd = sim_cmd->add_subcommand("run", "Run episodes and report precision/recall");
  run_cmd->add_option("--scenario", sim.scenario, "Scenario file or shipped scenario name")->required();
  run_cmd->add_option("--runs", sim.runs, "Episodes")->check(CLI::PositiveNumber);
  run_cmd->add_option("--steps", sim.steps, "Loop iterations per episode")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--seed", sim.seed, "Base seed (HSMON_SEED also overrides the scenario's)");
  run_cmd->add_option("--threads", sim.threads, "Worker threads (0: all cores)");
  run_cmd->add_option("--out", sim.out, "Trace CSV of all runs");
  run_cmd->add_option("--summary", sim.summary, "JSON summary (default: --out with .json)");
  run_cmd->add_option("--noise", sim.noise, "Sensor noise: uniform, zero or edge")
      ->check(CLI::IsMember({"uniform", "zero", "edge"}));
  run_cmd->add_option("--controller", sim.controller, "model or adversarial")
      ->check(CLI::IsMember({"model", "adversarial"}));
  run_cmd->add_option("--fault-probability", sim.fault_probability, "Per-step fault probability")
      ->check(CLI::Range(0.0, 1.0));
  run_cmd->add_flag("--expect-clean", sim.expect_clean, "Exit 1 on any alarm or invariant violation");
  run_cmd->add_flag("--check-expectations", sim.check_expectations,
                    "Exit 1 when precision/recall miss the scenario's expectations");

  ReportArgs rep;
  CLI::App* report_cmd = app.add_subcommand("report", "Tabulate summaries or run shipped scenarios");
  report_cmd->add_option("summaries", rep.summaries, "JSON summaries written by sim run");
  report_cmd->add_option("--scenario", rep.scenarios, "Scenario to run (repeatable)");
  report_cmd->add_flag("--check-expectations", rep.check_expectations,
                       "Exit 1 when any run scenario misses its expectations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    if (*synth_cmd) return run_synth(synth);
    if (*eval_cmd) return run_monitor_eval(ev);
    if (*run_cmd) return run_sim(sim);
    if (*report_cmd) return run_report(rep);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
