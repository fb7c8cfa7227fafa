#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctlab/interp.hpp"
#include "ctlab/passes.hpp"

namespace ctlab {

// One differential configuration for contract checking: the pass input in
// executable form, the artifact, and the run parameters.
struct PassCheckConfig {
  Program source;  // the pass input (flat inputs are embedded)
  const PassArtifact* artifact = nullptr;
  std::string entry;
  std::vector<Word> args;
  MemState mem;
  InputPolicy inputs;
  ContentPolicy contents = ContentPolicy::constant_byte(0xAA);
  ChoiceUniverse universe = ChoiceUniverse::defaults();
  uint64_t fuel = 1'000'000;
  std::vector<Oracle> contexts;  // low oracles for oracle-bearing passes
};

struct PassCheckReport {
  bool ok = true;
  size_t cases = 0;
  size_t checked = 0;
  size_t skipped_benign = 0;
  std::string first_failure;

  void fail(const std::string& msg) {
    if (ok) {
      ok = false;
      first_failure = msg;
    }
  }
};

namespace passcheck_detail {

inline std::vector<Word> in_script(const IOTrace& io) {
  std::vector<Word> ws;
  for (const auto& e : io)
    if (e.kind == IOKind::In) ws.push_back(e.value);
  return ws;
}

inline std::string in_key(const IOTrace& io) {
  std::string s;
  for (const auto& e : io)
    if (e.kind == IOKind::In) s += e.value.str() + ",";
  return s;
}

struct TargetRun {
  bool benign = false;
  bool failed = false;
  std::string error;
  IOTrace io;
  LeakTrace leak;            // flat-level target
  MachineTrace machine;      // machine-level target
  std::vector<Word> returns;
};

// Runs the pass target deterministically under a low oracle with the given
// input script.
inline TargetRun run_target(const PassCheckConfig& cfg, const Oracle& low,
                            const std::vector<Word>& script) {
  TargetRun r;
  const PassArtifact& art = *cfg.artifact;
  if (auto* mp = std::get_if<MachineProgram>(&art.target)) {
    MachineState s0 =
        machine_initial(*mp, cfg.args, cfg.mem, cfg.contents.constant);
    MachineOutcome mo = mrun(*mp, s0, script, cfg.fuel);
    if (mo.status == RunStatus::BenignStuck) {
      r.benign = true;
      return r;
    }
    if (!mo.terminated()) {
      r.failed = true;
      r.error = std::string("machine run ") + status_name(mo.status) + " " +
                mo.detail;
      return r;
    }
    r.io = mo.state.io;
    r.machine = mo.state.leak;
    // return registers a0.. hold the entry function's returns
    for (unsigned i = 0; i < 8; ++i) r.returns.push_back(mo.state.regs[10 + i]);
    return r;
  }
  Program target_prog = std::holds_alternative<Program>(art.target)
                            ? std::get<Program>(art.target)
                            : embed(std::get<FlatProgram>(art.target));
  ExecEnv env;
  env.program = &target_prog;
  env.initial_mem = cfg.mem;
  env.inputs = InputPolicy::scripted(script);
  env.contents = cfg.contents;
  env.universe = cfg.universe;
  env.fuel = cfg.fuel;
  Outcome o = exec_oracle(env, cfg.entry, cfg.args, low);
  if (o.status == RunStatus::BenignStuck) {
    r.benign = true;
    return r;
  }
  if (!o.terminated()) {
    r.failed = true;
    r.error = std::string("target run ") + status_name(o.status) + " " + o.detail;
    return r;
  }
  r.io = o.io;
  r.leak = o.leak;
  r.returns = o.returns;
  return r;
}

inline std::vector<EnumRun> source_runs(const PassCheckConfig& cfg,
                                        const Oracle* high) {
  ExecEnv env;
  env.program = &cfg.source;
  env.initial_mem = cfg.mem;
  env.inputs = cfg.inputs;
  env.contents = cfg.contents;
  env.universe = cfg.universe;
  env.fuel = cfg.fuel;
  if (high) return enumerate_runs_oracle(env, cfg.entry, cfg.args, *high);
  return enumerate_runs(env, cfg.entry, cfg.args);
}

}  // namespace passcheck_detail

// Leakage contract, differential form: for every enumerated source
// execution with trace k_H and I/O t, the target under the same low context
// and inputs produces exactly t and gamma(k_H, ctx). Oracle-bearing passes
// run the source under oracle_transform(low).
inline PassCheckReport check_leakage_contract(const PassCheckConfig& cfg) {
  using namespace passcheck_detail;
  PassCheckReport rep;
  const PassArtifact& art = *cfg.artifact;
  bool machine_target = std::holds_alternative<MachineProgram>(art.target);
  std::vector<Oracle> ctxs = cfg.contexts;
  if (ctxs.empty() || machine_target) ctxs = {Oracle::unit(cfg.source.word_bits)};

  if (art.oracle_transform) {
    for (const Oracle& low : ctxs) {
      Oracle high = (*art.oracle_transform)(low);
      LowContext ctx;
      ctx.low_oracle = low;
      if (machine_target)
        ctx.sp = Word::of(art.machine_target().sp0, cfg.source.word_bits);
      for (const auto& run : source_runs(cfg, &high)) {
        rep.cases++;
        const Outcome& o = run.outcome;
        if (o.benign()) {
          rep.skipped_benign++;
          continue;
        }
        if (!o.terminated()) {
          rep.fail(std::string("source run ") + status_name(o.status) + " " +
                   o.detail);
          continue;
        }
        TargetRun t = run_target(cfg, low, in_script(o.io));
        if (t.benign) {
          rep.skipped_benign++;
          continue;
        }
        if (t.failed) {
          rep.fail(t.error);
          continue;
        }
        if (t.io != o.io) {
          rep.fail("target I/O differs from source I/O (inputs " +
                   in_key(o.io) + ")");
          continue;
        }
        if (machine_target) {
          MachineTrace expect = art.gamma_machine(o.leak, ctx);
          if (!(expect == t.machine)) {
            rep.fail("machine leak differs from gamma(source leak)");
            continue;
          }
          for (size_t i = 0; i < o.returns.size(); ++i)
            if (!(t.returns[i] == o.returns[i])) {
              rep.fail("return registers differ from source returns");
              break;
            }
        } else {
          LeakTrace expect = art.gamma(o.leak, ctx);
          if (!(expect == t.leak)) {
            rep.fail("target leak " + show(t.leak) + " != gamma " +
                     show(expect));
            continue;
          }
        }
        rep.checked++;
      }
    }
    return rep;
  }

  // No oracle transform (reordering): every target execution must be
  // gamma(k_H) of some source execution with the same I/O.
  std::vector<EnumRun> src = source_runs(cfg, nullptr);
  Program target_prog = std::get<Program>(art.target);
  ExecEnv tenv;
  tenv.program = &target_prog;
  tenv.initial_mem = cfg.mem;
  tenv.inputs = cfg.inputs;
  tenv.contents = cfg.contents;
  tenv.universe = cfg.universe;
  tenv.fuel = cfg.fuel;
  LowContext none;
  for (const auto& trun : enumerate_runs(tenv, cfg.entry, cfg.args)) {
    rep.cases++;
    const Outcome& t = trun.outcome;
    if (t.benign()) {
      rep.skipped_benign++;
      continue;
    }
    if (!t.terminated()) {
      rep.fail(std::string("target run ") + status_name(t.status));
      continue;
    }
    bool found = false;
    for (const auto& srun : src) {
      const Outcome& s = srun.outcome;
      if (!s.terminated() || s.io != t.io) continue;
      try {
        if (art.gamma(s.leak, none) == t.leak) {
          found = true;
          break;
        }
      } catch (ReplayError&) {
      }
    }
    if (!found)
      rep.fail("target execution with leak " + show(t.leak) +
               " has no source counterpart");
    else
      rep.checked++;
  }
  return rep;
}

// Oracle contract: the leakage contract plus determinism of the lifted
// oracle on the query prefixes arising in source traces.
inline PassCheckReport check_oracle_contract(const PassCheckConfig& cfg) {
  PassCheckReport rep = check_leakage_contract(cfg);
  const PassArtifact& art = *cfg.artifact;
  if (!art.oracle_transform) {
    rep.fail("pass exposes no oracle-transformation function");
    return rep;
  }
  std::vector<Oracle> ctxs = cfg.contexts;
  if (ctxs.empty() || std::holds_alternative<MachineProgram>(art.target))
    ctxs = {Oracle::unit(cfg.source.word_bits)};
  for (const Oracle& low : ctxs) {
    Oracle high = (*art.oracle_transform)(low);
    for (const auto& run : passcheck_detail::source_runs(cfg, &high)) {
      if (!run.outcome.terminated()) continue;
      LeakTrace prefix;
      for (const auto& e : run.outcome.leak) {
        if (e.kind == LeakKind::CompNonDet) {
          Word a1 = high.query(prefix);
          Word a2 = high.query(prefix);
          if (!(a1 == a2) || !(a1 == e.value)) {
            rep.fail("lifted oracle is not a deterministic resolver of the "
                     "source trace");
            return rep;
          }
        }
        prefix.push_back(e);
      }
    }
  }
  return rep;
}

// Predictor contract: pool the corresponding source traces per runtime
// input, build a predictor for each pool, and require the transformed
// predictor to predict every corresponding target trace.
inline PassCheckReport check_predictor_contract(const PassCheckConfig& cfg) {
  using namespace passcheck_detail;
  PassCheckReport rep;
  const PassArtifact& art = *cfg.artifact;
  bool machine_target = std::holds_alternative<MachineProgram>(art.target);
  std::vector<Oracle> ctxs = cfg.contexts;
  if (ctxs.empty() || machine_target) ctxs = {Oracle::unit(cfg.source.word_bits)};

  // pools of source traces and the target runs they correspond to
  std::map<std::string, std::vector<LeakTrace>> pools;
  struct Pending {
    std::string key;
    LeakTrace target_leak;
  };
  std::vector<Pending> targets;

  if (art.oracle_transform) {
    for (const Oracle& low : ctxs) {
      Oracle high = (*art.oracle_transform)(low);
      for (const auto& run : source_runs(cfg, &high)) {
        const Outcome& o = run.outcome;
        if (o.benign()) {
          rep.skipped_benign++;
          continue;
        }
        if (!o.terminated()) {
          rep.fail(std::string("source run ") + status_name(o.status));
          continue;
        }
        std::string key = in_key(o.io);
        pools[key].push_back(o.leak);
        TargetRun t = run_target(cfg, low, in_script(o.io));
        if (t.benign) {
          rep.skipped_benign++;
          continue;
        }
        if (t.failed) {
          rep.fail(t.error);
          continue;
        }
        targets.push_back(
            {key, machine_target
                      ? encode_machine_trace(t.machine, cfg.source.word_bits)
                      : t.leak});
      }
    }
  } else {
    std::vector<EnumRun> src = source_runs(cfg, nullptr);
    for (const auto& srun : src) {
      if (!srun.outcome.terminated()) continue;
      pools[in_key(srun.outcome.io)].push_back(srun.outcome.leak);
    }
    Program target_prog = std::get<Program>(art.target);
    ExecEnv tenv;
    tenv.program = &target_prog;
    tenv.initial_mem = cfg.mem;
    tenv.inputs = cfg.inputs;
    tenv.contents = cfg.contents;
    tenv.universe = cfg.universe;
    tenv.fuel = cfg.fuel;
    for (const auto& trun : enumerate_runs(tenv, cfg.entry, cfg.args)) {
      if (!trun.outcome.terminated()) continue;
      targets.push_back({in_key(trun.outcome.io), trun.outcome.leak});
    }
  }

  std::map<std::string, Predictor> preds;
  for (const auto& [key, traces] : pools) {
    auto trie = std::make_shared<TraceTrie>(trie_from_traces(traces));
    Predictor ph = Predictor::from_trie(trie);
    for (const auto& k : traces)
      if (!predicts(ph, k)) {
        rep.fail("pooled source predictor fails to predict a pooled trace");
        return rep;
      }
    preds.emplace(key, art.predictor_transform(ph));
  }

  for (const auto& t : targets) {
    rep.cases++;
    auto it = preds.find(t.key);
    if (it == preds.end()) {
      rep.fail("target execution with inputs [" + t.key +
               "] has no source pool");
      continue;
    }
    if (!predicts(it->second, t.target_leak)) {
      rep.fail("transformed predictor fails to predict a target trace (inputs [" +
               t.key + "])");
      continue;
    }
    rep.checked++;
  }
  return rep;
}

// The counterexample showing why reordering admits no oracle-transformation
// function: under a low oracle answering differently after Leak a1 and
// Leak a2, the target prints different values for the two public addresses,
// while the source prints the oracle's answer on the empty trace for both.
struct ReorderSeparation {
  bool reproduced = false;
  Word source_print_a1, source_print_a2;
  Word target_print_a1, target_print_a2;
  std::string analysis;
};

inline ReorderSeparation reorder_counterexample(const Program& p,
                                                const PassArtifact& art,
                                                Word a1, Word a2,
                                                const MemState& mem) {
  unsigned bits = p.word_bits;
  std::map<LeakTrace, Word> table;
  table[LeakTrace{leak(a1)}] = Word::of(7, bits);
  table[LeakTrace{leak(a2)}] = Word::of(9, bits);
  Oracle low = Oracle::table(std::move(table), Word::of(3, bits));

  auto out_of = [](const Outcome& o) {
    for (const auto& e : o.io)
      if (e.kind == IOKind::Out) return e.value;
    return Word();
  };
  ExecEnv env;
  env.program = &p;
  env.initial_mem = mem;
  Program target = std::get<Program>(art.target);
  ExecEnv tenv = env;
  tenv.program = &target;

  ReorderSeparation sep;
  sep.source_print_a1 = out_of(exec_oracle(env, p.entry, {a1}, low));
  sep.source_print_a2 = out_of(exec_oracle(env, p.entry, {a2}, low));
  sep.target_print_a1 = out_of(exec_oracle(tenv, p.entry, {a1}, low));
  sep.target_print_a2 = out_of(exec_oracle(tenv, p.entry, {a2}, low));
  sep.reproduced = sep.source_print_a1 == sep.source_print_a2 &&
                   !(sep.target_print_a1 == sep.target_print_a2);
  sep.analysis =
      "the source prints its oracle's answer on the empty trace, so a lifted "
      "oracle would have to answer both " +
      sep.target_print_a1.str() + " and " + sep.target_print_a2.str() +
      " at []; no single word does, so no oracle-transformation function "
      "exists";
  return sep;
}

}  // namespace ctlab
