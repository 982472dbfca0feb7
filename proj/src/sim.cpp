#include "hsmon/sim.hpp"

#include <cmath>

#include "hsmon/hybrid_program.hpp"
#include "hsmon/qe.hpp"
#include "hsmon/rewrite.hpp"

namespace hsmon {

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) { return seed ^ index; }

std::optional<double> duration_bound(const Program& ode, const State& s) {
  for (const auto& e : ode->ode) {
    if (e.rhs->kind != TermKind::Const || e.rhs->value != 1) continue;
    for (const auto& c : conjuncts(ode->formula)) {
      if (c->kind != FormulaKind::Compare || c->op != CmpOp::Le) continue;
      if (c->lhs->kind != TermKind::Var || c->lhs->var.post || c->lhs->var.name != e.var)
        continue;
      Env env = make_env(s);
      return eval_term(c->rhs, env) - lookup(s, e.var);
    }
  }
  return std::nullopt;
}

OdeRun integrate_ode(const Program& ode, const State& start, double duration, double step,
                     double tol) {
  if (ode->kind != ProgramKind::Ode) throw SyntaxError("integrate_ode expects an ODE");
  if (!(step > 0)) throw EvalError("ODE step must be positive");
  const auto& eqs = ode->ode;
  const std::size_t n = eqs.size();
  Env env = make_env(start);
  std::vector<double> y(n), y0(n), k1(n), k2(n), k3(n), k4(n), tmp(n);
  std::vector<bool> constant_rate(n);
  for (std::size_t i = 0; i < n; ++i) {
    y0[i] = y[i] = lookup(start, eqs[i].var);
    constant_rate[i] = eqs[i].rhs->kind == TermKind::Const;
  }
  auto set = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < n; ++i) env[eqs[i].var] = v[i];
  };
  auto deriv = [&](const std::vector<double>& v, std::vector<double>& out) {
    set(v);
    for (std::size_t i = 0; i < n; ++i) out[i] = eval_term(eqs[i].rhs, env);
  };

  OdeRun run;
  run.state = start;
  if (duration <= 0) return run;
  std::size_t steps = static_cast<std::size_t>(std::ceil(duration / step - 1e-9));
  if (steps == 0) steps = 1;
  const double h = duration / static_cast<double>(steps);
  std::vector<double> prev = y;
  double elapsed = 0;
  for (std::size_t s = 1; s <= steps; ++s) {
    deriv(y, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    deriv(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    deriv(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    deriv(tmp, k4);
    double t = s == steps ? duration : h * static_cast<double>(s);
    for (std::size_t i = 0; i < n; ++i) {
      if (constant_rate[i]) {
        y[i] = y0[i] + eqs[i].rhs->value * t;
      } else {
        y[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      }
      if (!std::isfinite(y[i])) throw EvalError("integrator divergence in " + eqs[i].var + "'");
    }
    set(y);
    if (!eval_formula(ode->formula, env, tol)) {
      run.truncated = true;
      y = prev;
      break;
    }
    prev = y;
    elapsed = t;
  }
  for (std::size_t i = 0; i < n; ++i) run.state[eqs[i].var] = y[i];
  run.elapsed = elapsed;
  return run;
}

namespace {

// `?(lo<=x & x<=hi)` with x free in neither bound.
std::optional<std::pair<Term, Term>> match_bounds(const std::string& x, const Program& t) {
  if (t->kind != ProgramKind::Test || t->formula->kind != FormulaKind::And) return std::nullopt;
  const Formula& a = t->formula->kids[0];
  const Formula& b = t->formula->kids[1];
  if (a->kind != FormulaKind::Compare || b->kind != FormulaKind::Compare) return std::nullopt;
  if (a->op != CmpOp::Le || b->op != CmpOp::Le) return std::nullopt;
  auto is_x = [&](const Term& e) { return e->kind == TermKind::Var && !e->var.post && e->var.name == x; };
  if (!is_x(a->rhs) || !is_x(b->lhs) || mentions(a->lhs, x) || mentions(b->rhs, x))
    return std::nullopt;
  return std::pair{a->lhs, b->rhs};
}

class Runner {
 public:
  Runner(const RunConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  PlantEffect effect;

  bool exec(const Program& p, State& s) {
    switch (p->kind) {
      case ProgramKind::Assign: {
        Env env = make_env(s);
        s[p->var] = eval_term(p->term, env);
        return true;
      }
      case ProgramKind::AssignAny: s[p->var] = sample_any(p->var, s, std::nullopt); return true;
      case ProgramKind::Test: return passes(p->formula, s);
      case ProgramKind::Ode: return flow(p, s);
      case ProgramKind::Seq: {
        std::vector<Program> cs = flatten_seq(p);
        for (std::size_t i = 0; i < cs.size(); ++i) {
          if (cfg_.sample_picks && cs[i]->kind == ProgramKind::AssignAny && i + 1 < cs.size()) {
            if (auto pick = match_pick(cs[i], cs[i + 1])) {
              Env env = make_env(s);
              double c = eval_term(pick->center, env);
              double r = eval_term(pick->radius, env);
              std::optional<Interval> range;
              if (r >= 0) range = Interval{c - r, c + r};
              s[pick->var] = sample_any(pick->var, s, range);
              continue;
            }
            if (auto b = match_bounds(cs[i]->var, cs[i + 1])) {
              Env env = make_env(s);
              double lo = eval_term(b->first, env), hi = eval_term(b->second, env);
              std::optional<Interval> range;
              if (lo <= hi) range = Interval{lo, hi};
              s[cs[i]->var] = sample_any(cs[i]->var, s, range);
              continue;
            }
          }
          if (!exec(cs[i], s)) return false;
        }
        return true;
      }
      case ProgramKind::Choice: {
        int branch = choose(2);
        return exec(p->kids[static_cast<std::size_t>(branch)], s);
      }
      case ProgramKind::Loop: {
        int count = loop_count();
        for (int i = 0; i < count; ++i)
          if (!exec(p->kids[0], s)) return false;
        return true;
      }
    }
    return false;
  }

 private:
  bool passes(const Formula& f, const State& s) {
    if (!cfg_.enforce_tests) return true;
    if (quantifier_free(f)) return eval_formula(f, make_env(s), cfg_.test_tolerance);
    // Bounded quantifiers in tests, e.g. \forall v (lo<=v & v<=hi -> F).
    if (!decider_) decider_.emplace(SearchConfig{cfg_.test_tolerance, 101});
    Env env = make_env(s);
    return decider_->decide(f, env);
  }

  double sample_any(const std::string& x, const State& s, std::optional<Interval> range) {
    if (cfg_.assign_any_hook) {
      if (auto v = cfg_.assign_any_hook(x, s)) return *v;
    }
    if (cfg_.choice_policy == ChoicePolicy::Scripted) {
      if (value_at_ >= cfg_.scripted_values.size())
        throw EvalError("scripted values exhausted at '" + x + ":=*'");
      return cfg_.scripted_values[value_at_++];
    }
    Interval iv = cfg_.default_sampler;
    if (range) {
      iv = *range;
    } else if (auto it = cfg_.assign_any_sampler.find(x); it != cfg_.assign_any_sampler.end()) {
      iv = it->second;
    }
    if (iv.first == iv.second) return iv.first;
    return std::uniform_real_distribution<double>(iv.first, iv.second)(rng_);
  }

  int choose(int n) {
    if (cfg_.choice_policy == ChoicePolicy::Scripted) {
      if (choice_at_ >= cfg_.scripted_choices.size()) throw EvalError("scripted choices exhausted");
      int c = cfg_.scripted_choices[choice_at_++];
      if (c < 0 || c >= n) throw EvalError("scripted choice out of range");
      return c;
    }
    return std::uniform_int_distribution<int>(0, n - 1)(rng_);
  }

  int loop_count() {
    if (cfg_.choice_policy == ChoicePolicy::Scripted) {
      if (loop_at_ >= cfg_.scripted_loop_counts.size())
        throw EvalError("scripted loop counts exhausted");
      return cfg_.scripted_loop_counts[loop_at_++];
    }
    return std::uniform_int_distribution<int>(0, cfg_.max_loop_iterations)(rng_);
  }

  double stop_time(const Program& ode, const State& s) {
    if (auto d = duration_bound(ode, s)) return *d;
    if (cfg_.choice_policy == ChoicePolicy::Scripted) {
      if (stop_at_ >= cfg_.scripted_stop_times.size())
        throw EvalError("scripted stop times exhausted");
      return cfg_.scripted_stop_times[stop_at_++];
    }
    return std::uniform_real_distribution<double>(0, cfg_.ode_horizon)(rng_);
  }

  bool flow(const Program& ode, State& s) {
    if (!eval_formula(ode->formula, make_env(s), cfg_.test_tolerance)) return false;
    double dur = stop_time(ode, s);
    if (dur < 0) return false;
    OdeRun r = integrate_ode(ode, s, dur, cfg_.ode_step, cfg_.test_tolerance);
    for (const auto& e : ode->ode) effect.delta[e.var] += r.state[e.var] - s[e.var];
    effect.duration += r.elapsed;
    s = std::move(r.state);
    return true;
  }

  const RunConfig& cfg_;
  std::mt19937_64& rng_;
  std::optional<Decider> decider_;
  std::size_t choice_at_ = 0, value_at_ = 0, stop_at_ = 0, loop_at_ = 0;
};

}  // namespace

RunResult run_program(const Program& p, const State& start, const RunConfig& cfg,
                      std::mt19937_64& rng) {
  Runner runner(cfg, rng);
  RunResult r;
  r.state = start;
  r.blocked = !runner.exec(p, r.state);
  r.effect = std::move(runner.effect);
  if (r.blocked) r.state = start;
  return r;
}

RunResult run_program(const Program& p, const State& start, const RunConfig& cfg) {
  std::mt19937_64 rng(cfg.rng_seed);
  return run_program(p, start, cfg, rng);
}

std::vector<State> reachable_samples(const Program& p, const State& start, std::size_t n,
                                     const RunConfig& cfg, int retries) {
  if (n == 0) throw EvalError("reachable_samples needs n >= 1");
  std::vector<State> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int attempt = 0; attempt <= retries; ++attempt) {
      RunConfig c = cfg;
      c.rng_seed = split_seed(cfg.rng_seed, i + n * static_cast<std::size_t>(attempt));
      RunResult r = run_program(p, start, c);
      if (!r.blocked) {
        out.push_back(std::move(r.state));
        break;
      }
    }
  }
  if (out.empty()) throw EvalError("all sampled runs blocked");
  return out;
}

// ---- brute-force compatibility search ---------------------------------------

namespace {

class Search {
 public:
  Search(const RunConfig& cfg, const TransitionPair& pair, std::set<std::string> compare)
      : cfg_(cfg), pair_(pair), compare_(std::move(compare)) {}

  bool explore(std::vector<Program> stack, State s) {
    while (!stack.empty()) {
      Program p = stack.back();
      stack.pop_back();
      switch (p->kind) {
        case ProgramKind::Seq:
          stack.push_back(p->kids[1]);
          stack.push_back(p->kids[0]);
          continue;
        case ProgramKind::Choice:
          for (const auto& k : p->kids) {
            auto next = stack;
            next.push_back(k);
            if (explore(std::move(next), s)) return true;
          }
          return false;
        case ProgramKind::Loop:
          for (int n = 0; n <= cfg_.max_loop_iterations; ++n) {
            auto next = stack;
            for (int i = 0; i < n; ++i) next.push_back(p->kids[0]);
            if (explore(std::move(next), s)) return true;
          }
          return false;
        case ProgramKind::Assign: {
          Env env = make_env(s);
          s[p->var] = eval_term(p->term, env);
          continue;
        }
        case ProgramKind::Test:
          if (!eval_formula(p->formula, make_env(s), cfg_.match_tolerance)) return false;
          continue;
        case ProgramKind::AssignAny: {
          for (double v : candidates(p->var, stack, s)) {
            State t = s;
            t[p->var] = v;
            if (explore(stack, std::move(t))) return true;
          }
          return false;
        }
        case ProgramKind::Ode: {
          if (!eval_formula(p->formula, make_env(s), cfg_.match_tolerance)) return false;
          std::vector<double> stops;
          if (auto d = duration_bound(p, s)) {
            stops.push_back(*d);
          } else {
            for (int i = 0; i <= cfg_.compat_stop_grid; ++i)
              stops.push_back(cfg_.ode_horizon * i / cfg_.compat_stop_grid);
          }
          for (double d : stops) {
            if (d < 0) continue;
            OdeRun r = integrate_ode(p, s, d, cfg_.ode_step, cfg_.match_tolerance);
            if (r.truncated) continue;
            if (explore(stack, r.state)) return true;
          }
          return false;
        }
      }
    }
    return matches(s);
  }

 private:
  bool matches(const State& s) const {
    for (const auto& x : compare_) {
      auto a = s.find(x);
      auto b = pair_.post.find(x);
      if (a == s.end() || b == pair_.post.end()) return false;
      if (std::fabs(a->second - b->second) > cfg_.match_tolerance) return false;
    }
    return true;
  }

  std::vector<double> candidates(const std::string& x, const std::vector<Program>& stack,
                                 const State& s) const {
    std::vector<double> out;
    bool rebound = false;
    for (const auto& q : stack) rebound |= bound_vars(q).contains(x);
    auto post = pair_.post.find(x);
    if (post != pair_.post.end()) out.push_back(post->second);
    // A compared variable that is never written again can only take its post value.
    if (compare_.contains(x) && !rebound) return out;
    if (auto it = s.find(x); it != s.end()) out.push_back(it->second);
    Interval iv = cfg_.default_sampler;
    if (auto it = cfg_.assign_any_sampler.find(x); it != cfg_.assign_any_sampler.end())
      iv = it->second;
    Program next = stack.empty() ? nullptr : stack.back();
    while (next && next->kind == ProgramKind::Seq) next = next->kids[0];
    if (next && next->kind == ProgramKind::Test) {
      if (auto pick = match_pick(assign_any(x), next)) {
        Env env = make_env(s);
        double c = eval_term(pick->center, env), r = eval_term(pick->radius, env);
        iv = {c - r, c + r};
      }
    }
    int g = std::max(cfg_.compat_grid, 2);
    for (int i = 0; i < g; ++i) out.push_back(iv.first + (iv.second - iv.first) * i / (g - 1));
    return out;
  }

  const RunConfig& cfg_;
  const TransitionPair& pair_;
  std::set<std::string> compare_;
};

}  // namespace

bool check_run_compatibility(const Program& p, const TransitionPair& pair, const RunConfig& cfg,
                             const std::optional<std::set<std::string>>& compare) {
  Search search(cfg, pair, compare ? *compare : bound_vars(p));
  return search.explore({p}, pair.pre);
}

}  // namespace hsmon
