#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctlab/interp.hpp"
#include "ctlab/predict.hpp"

namespace ctlab {

// One secret assignment: argument words, secret memory contents, secret
// input choices. Public values are expressed through the key function.
struct CtCase {
  std::vector<Word> args;
  MemState mem;
  InputPolicy inputs;
  std::string label;
};

struct SecretSpace {
  std::vector<CtCase> cases;
};

// Maps an execution to its public-equivalence-class key. The case is passed
// so that declassified predicates (e.g. login's password==attempt bit) can
// be part of the key; the checker does not distinguish public inputs from
// declassified predicates.
using KeyFn = std::function<std::string(const CtCase&, const Outcome&)>;

struct RunRef {
  size_t case_index = 0;
  nlohmann::json context;
  Outcome outcome;
};

struct CtVerdict {
  enum class Kind { ConstantTime, Leaky, Inconclusive } kind = Kind::ConstantTime;
  // witnesses, by public key
  std::map<std::string, LeakTrace> trace_witness;
  std::map<std::string, TreePtr> tree_witness;
  std::map<std::string, std::vector<Word>> out_witness;
  std::map<std::string, std::map<std::vector<Word>, std::vector<Word>>> flawed_witness;
  std::optional<RunRef> left, right;
  std::string note;

  bool constant_time() const { return kind == Kind::ConstantTime; }
  bool leaky() const { return kind == Kind::Leaky; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["verdict"] = kind == Kind::ConstantTime ? "constant_time"
                   : kind == Kind::Leaky      ? "leaky"
                                              : "inconclusive";
    if (!note.empty()) j["note"] = note;
    if (!trace_witness.empty()) {
      nlohmann::json w = nlohmann::json::object();
      for (const auto& [k, tr] : trace_witness) w[k] = ctlab::to_json(tr);
      j["traces"] = w;
    }
    if (!tree_witness.empty()) {
      nlohmann::json w = nlohmann::json::object();
      for (const auto& [k, t] : tree_witness) w[k] = tree_to_json(*t);
      j["trees"] = w;
    }
    if (!out_witness.empty()) {
      nlohmann::json w = nlohmann::json::object();
      for (const auto& [k, outs] : out_witness) {
        nlohmann::json a = nlohmann::json::array();
        for (auto v : outs) a.push_back(v.value());
        w[k] = a;
      }
      j["outputs"] = w;
    }
    if (!flawed_witness.empty()) {
      nlohmann::json w = nlohmann::json::object();
      for (const auto& [k, fmap] : flawed_witness) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [b, lv] : fmap) {
          nlohmann::json bj = nlohmann::json::array(), lj = nlohmann::json::array();
          for (auto x : b) bj.push_back(x.value());
          for (auto x : lv) lj.push_back(x.value());
          entries.push_back({{"branches", bj}, {"leaks", lj}});
        }
        w[k] = entries;
      }
      j["flawed_fn"] = w;
    }
    auto run_json = [](const RunRef& r) {
      return nlohmann::json{{"case", r.case_index},
                            {"context", r.context},
                            {"outcome", r.outcome.to_json()}};
    };
    if (left) j["left"] = run_json(*left);
    if (right) j["right"] = run_json(*right);
    return j;
  }
};

namespace detail {

inline ExecEnv env_for_case(const ExecEnv& base, const CtCase& c) {
  ExecEnv e = base;
  e.initial_mem = c.mem;
  e.inputs = c.inputs;
  return e;
}

inline bool uses_compiler_nondet(const Program& p, const std::string& entry) {
  std::set<std::string> seen;
  std::vector<const FnDef*> work;
  if (const FnDef* f = p.find(entry)) work.push_back(f);
  bool found = false;
  std::function<void(const Stmt&)> scan = [&](const Stmt& s) {
    if (std::holds_alternative<Stmt::StackAlloc>(s.node) ||
        std::holds_alternative<Stmt::Random>(s.node))
      found = true;
    if (auto* x = std::get_if<Stmt::StackAlloc>(&s.node)) scan(*x->body);
    if (auto* x = std::get_if<Stmt::If>(&s.node)) {
      scan(*x->then_branch);
      scan(*x->else_branch);
    }
    if (auto* x = std::get_if<Stmt::While>(&s.node)) scan(*x->body);
    if (auto* x = std::get_if<Stmt::Seq>(&s.node)) {
      scan(*x->first);
      scan(*x->second);
    }
    if (auto* x = std::get_if<Stmt::Call>(&s.node)) {
      if (seen.insert(x->callee).second)
        if (const FnDef* f = p.find(x->callee)) work.push_back(f);
    }
  };
  while (!work.empty()) {
    const FnDef* f = work.back();
    work.pop_back();
    scan(*f->body);
  }
  return found;
}

struct ClassRun {
  size_t case_index;
  std::string tag;  // extra key component (the oracle, for per-oracle notions)
  nlohmann::json context;
  Outcome outcome;
};

// Shared grouping logic for the deterministic-per-run notions: group
// terminated runs by key and require the projected observation to be
// identical within each class.
inline CtVerdict compare_classes(
    const std::vector<ClassRun>& runs, const KeyFn& key,
    const std::vector<CtCase>& cases,
    const std::function<std::string(const Outcome&)>& observe,
    const std::function<void(CtVerdict&, const std::string&, const Outcome&)>&
        record_witness) {
  CtVerdict v;
  std::map<std::string, const ClassRun*> rep;
  std::map<std::string, size_t> benign_only;
  for (const auto& r : runs) {
    if (r.outcome.status == RunStatus::ErrorStuck ||
        r.outcome.status == RunStatus::FuelExhausted) {
      v.kind = CtVerdict::Kind::Inconclusive;
      v.note = std::string("execution ") + status_name(r.outcome.status) + ": " +
               r.outcome.detail;
      v.left = RunRef{r.case_index, r.context, r.outcome};
      return v;
    }
  }
  for (const auto& r : runs) {
    std::string k = r.tag + key(cases[r.case_index], r.outcome);
    if (r.outcome.benign()) {
      benign_only.emplace(k, r.case_index);
      continue;
    }
    auto [it, fresh] = rep.emplace(k, &r);
    if (fresh) {
      record_witness(v, k, r.outcome);
      continue;
    }
    if (observe(it->second->outcome) != observe(r.outcome)) {
      v.kind = CtVerdict::Kind::Leaky;
      v.note = "two executions agree on public key '" + k +
               "' but differ in the observed projection";
      v.left = RunRef{it->second->case_index, it->second->context,
                      it->second->outcome};
      v.right = RunRef{r.case_index, r.context, r.outcome};
      v.trace_witness.clear();
      v.out_witness.clear();
      return v;
    }
  }
  for (const auto& [k, idx] : benign_only)
    if (!rep.count(k)) {
      v.kind = CtVerdict::Kind::Inconclusive;
      v.note = "public class '" + k + "' has only benign-stuck executions";
      return v;
    }
  return v;
}

}  // namespace detail

// Naive constant time: leakage must be a function of the public key alone.
// Only defined for programs without compiler-resolved nondeterminism.
inline CtVerdict check_naive_ct(const ExecEnv& base, const std::string& entry,
                                const KeyFn& key, const SecretSpace& secrets) {
  if (detail::uses_compiler_nondet(*base.program, entry)) {
    CtVerdict v;
    v.kind = CtVerdict::Kind::Inconclusive;
    v.note = "program has compiler-resolved nondeterminism; naive constant "
             "time is not applicable";
    return v;
  }
  std::vector<detail::ClassRun> runs;
  for (size_t i = 0; i < secrets.cases.size(); ++i) {
    const CtCase& c = secrets.cases[i];
    ExecEnv env = detail::env_for_case(base, c);
    runs.push_back({i, "", nlohmann::json::object(),
                    exec_oracle(env, entry, c.args, Oracle::unit())});
  }
  return detail::compare_classes(
      runs, key, secrets.cases,
      [](const Outcome& o) { return show(o.leak); },
      [](CtVerdict& v, const std::string& k, const Outcome& o) {
        v.trace_witness[k] = o.leak;
      });
}

// Oracle constant time: per oracle, leakage is a function of the public key.
inline CtVerdict check_oracle_ct(const ExecEnv& base, const std::string& entry,
                                 const KeyFn& key, const SecretSpace& secrets,
                                 const std::vector<Oracle>& oracles) {
  std::vector<detail::ClassRun> runs;
  for (size_t oi = 0; oi < oracles.size(); ++oi) {
    for (size_t i = 0; i < secrets.cases.size(); ++i) {
      const CtCase& c = secrets.cases[i];
      ExecEnv env = detail::env_for_case(base, c);
      runs.push_back({i, "oracle" + std::to_string(oi) + "/",
                      nlohmann::json{{"oracle", oracles[oi].describe()}},
                      exec_oracle(env, entry, c.args, oracles[oi])});
    }
  }
  return detail::compare_classes(
      runs, key, secrets.cases,
      [](const Outcome& o) { return show(o.leak); },
      [](CtVerdict& v, const std::string& k, const Outcome& o) {
        v.trace_witness[k] = o.leak;
      });
}

// Output independence: printed values may depend on the oracle but not on
// secrets. Same classing as oracle CT, comparing Out events.
inline CtVerdict check_output_independence(const ExecEnv& base,
                                           const std::string& entry,
                                           const KeyFn& key,
                                           const SecretSpace& secrets,
                                           const std::vector<Oracle>& oracles) {
  std::vector<detail::ClassRun> runs;
  for (size_t oi = 0; oi < oracles.size(); ++oi) {
    for (size_t i = 0; i < secrets.cases.size(); ++i) {
      const CtCase& c = secrets.cases[i];
      ExecEnv env = detail::env_for_case(base, c);
      runs.push_back({i, "oracle" + std::to_string(oi) + "/",
                      nlohmann::json{{"oracle", oracles[oi].describe()}},
                      exec_oracle(env, entry, c.args, oracles[oi])});
    }
  }
  auto outs_of = [](const Outcome& o) {
    std::string s;
    for (const auto& e : o.io)
      if (e.kind == IOKind::Out) s += e.value.str() + ",";
    return s;
  };
  return detail::compare_classes(
      runs, key, secrets.cases, outs_of,
      [](CtVerdict& v, const std::string& k, const Outcome& o) {
        std::vector<Word> outs;
        for (const auto& e : o.io)
          if (e.kind == IOKind::Out) outs.push_back(e.value);
        v.out_witness[k] = outs;
      });
}

// Predictor constant time: pool all enumerated leaks per public key and
// require one deterministic leakage tree per key.
inline CtVerdict check_predictor_ct(const ExecEnv& base, const std::string& entry,
                                    const KeyFn& key, const SecretSpace& secrets) {
  CtVerdict v;
  struct Pooled {
    std::vector<LeakTrace> traces;
    std::vector<std::pair<size_t, std::vector<size_t>>> origin;  // case, script
    bool any_terminated = false;
  };
  std::map<std::string, Pooled> pools;
  for (size_t i = 0; i < secrets.cases.size(); ++i) {
    const CtCase& c = secrets.cases[i];
    ExecEnv env = detail::env_for_case(base, c);
    for (auto& run : enumerate_runs(env, entry, c.args)) {
      if (run.outcome.status == RunStatus::ErrorStuck ||
          run.outcome.status == RunStatus::FuelExhausted) {
        v.kind = CtVerdict::Kind::Inconclusive;
        v.note = std::string("execution ") + status_name(run.outcome.status) +
                 ": " + run.outcome.detail;
        v.left = RunRef{i, nlohmann::json{{"script", run.script}}, run.outcome};
        return v;
      }
      std::string k = key(c, run.outcome);
      Pooled& p = pools[k];
      if (!run.outcome.terminated()) continue;
      p.any_terminated = true;
      p.traces.push_back(run.outcome.leak);
      p.origin.push_back({i, run.script});
    }
  }
  for (auto& [k, pool] : pools) {
    if (!pool.any_terminated) {
      v.kind = CtVerdict::Kind::Inconclusive;
      v.note = "public class '" + k + "' has only benign-stuck executions";
      return v;
    }
    auto tree = trie_to_tree(trie_from_traces(pool.traces));
    if (auto* conflict = std::get_if<TrieConflict>(&tree)) {
      v.kind = CtVerdict::Kind::Leaky;
      v.note = "no deterministic leakage tree for key '" + k + "': after " +
               show(conflict->prefix) + " the pooled traces continue with {";
      for (size_t i = 0; i < conflict->events.size(); ++i)
        v.note += (i ? ", " : "") + conflict->events[i];
      v.note += "}";
      // find two replayable runs witnessing the conflict
      auto extends = [&](const LeakTrace& t, const std::string& ev) {
        if (ev == "end") return t.size() == conflict->prefix.size() &&
                                is_prefix(conflict->prefix, t);
        if (!is_prefix(conflict->prefix, t) || t.size() <= conflict->prefix.size())
          return false;
        const LeakEvent& e = t[conflict->prefix.size()];
        std::string got = (e.kind == LeakKind::Leak ? "leak " : "nondet ") +
                          e.value.str();
        return got == ev;
      };
      std::optional<size_t> ia, ib;
      for (size_t i = 0; i < pool.traces.size() && (!ia || !ib); ++i) {
        if (!ia && extends(pool.traces[i], conflict->events[0])) ia = i;
        else if (!ib && conflict->events.size() > 1 &&
                 extends(pool.traces[i], conflict->events[1]))
          ib = i;
      }
      auto mk_ref = [&](size_t idx) {
        auto [ci, script] = pool.origin[idx];
        ExecEnv env = detail::env_for_case(base, secrets.cases[ci]);
        Outcome o = exec_replay(env, entry, secrets.cases[ci].args, script);
        return RunRef{ci, nlohmann::json{{"script", script}}, o};
      };
      if (ia) v.left = mk_ref(*ia);
      if (ib) v.right = mk_ref(*ib);
      v.tree_witness.clear();
      return v;
    }
    v.tree_witness[k] = std::get<TreePtr>(tree);
  }
  return v;
}

// The flawed Appendix-A definition: accepts when leak events are a
// single-valued function of nondet events, ignoring interleaving. Exists to
// demonstrate the pitfall, not to certify programs.
inline CtVerdict check_flawed_ct(const ExecEnv& base, const std::string& entry,
                                 const KeyFn& key, const SecretSpace& secrets) {
  CtVerdict v;
  struct Seen {
    std::vector<Word> leaks;
    size_t case_index;
    std::vector<size_t> script;
  };
  std::map<std::string, std::map<std::vector<Word>, Seen>> fn;
  for (size_t i = 0; i < secrets.cases.size(); ++i) {
    const CtCase& c = secrets.cases[i];
    ExecEnv env = detail::env_for_case(base, c);
    for (auto& run : enumerate_runs(env, entry, c.args)) {
      if (run.outcome.status == RunStatus::ErrorStuck ||
          run.outcome.status == RunStatus::FuelExhausted) {
        v.kind = CtVerdict::Kind::Inconclusive;
        v.note = std::string("execution ") + status_name(run.outcome.status) +
                 ": " + run.outcome.detail;
        return v;
      }
      if (!run.outcome.terminated()) continue;
      auto [branches, leaks] = split_events(run.outcome.leak);
      std::string k = key(c, run.outcome);
      auto [it, fresh] =
          fn[k].emplace(branches, Seen{leaks, i, run.script});
      if (!fresh && it->second.leaks != leaks) {
        v.kind = CtVerdict::Kind::Leaky;
        v.note = "B(k) |-> L(k) is not single-valued for key '" + k + "'";
        auto mk_ref = [&](size_t ci, const std::vector<size_t>& script) {
          ExecEnv e2 = detail::env_for_case(base, secrets.cases[ci]);
          return RunRef{ci, nlohmann::json{{"script", script}},
                        exec_replay(e2, entry, secrets.cases[ci].args, script)};
        };
        v.left = mk_ref(it->second.case_index, it->second.script);
        v.right = mk_ref(i, run.script);
        return v;
      }
    }
  }
  for (auto& [k, fmap] : fn)
    for (auto& [b, seen] : fmap) v.flawed_witness[k][b] = seen.leaks;
  return v;
}

}  // namespace ctlab
