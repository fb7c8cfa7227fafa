#pragma once

#include <memory>
#include <variant>
#include <vector>

#include "ctlab/interp.hpp"

namespace ctlab {

// Small-step configurations use an extended grammar: plain statements plus
// markers for the ends of allocation scopes and call frames.
struct KItem {
  struct Run { const Stmt* stmt; };
  struct EndAlloc { Word base; uint32_t size; };
  struct EndCall {
    std::shared_ptr<Locals> caller;
    std::vector<std::string> results;
    std::vector<std::string> ret_names;
  };
  std::variant<Run, EndAlloc, EndCall> item;
};

struct Config {
  std::vector<KItem> cont;  // back of the vector runs first
  MemState mem;
  Locals locals;
  IOTrace io;
  LeakTrace leak;
  size_t input_cursor = 0;
  uint64_t content_counter = 0;

  bool finished() const { return cont.empty(); }
};

struct StepOut {
  enum class Kind { Progress, Finished, Benign, Error } kind;
  StuckReason reason = StuckReason::None;
  std::vector<Config> succ;
};

inline Config initial_config(const ExecEnv& env, const std::string& entry,
                             const std::vector<Word>& args) {
  Config c;
  const FnDef* fn = env.program->find(entry);
  if (!fn || fn->params.size() != args.size())
    throw std::invalid_argument("bad entry for small-step config");
  c.mem = env.initial_mem;
  for (size_t i = 0; i < args.size(); ++i)
    c.locals[fn->params[i]] = Word::of(args[i].value(), env.program->word_bits);
  c.cont.push_back(KItem{KItem::Run{fn->body.get()}});
  return c;
}

namespace detail {

inline uint8_t smallstep_content(const ExecEnv& env, Config& c, size_t combo,
                                 uint32_t i) {
  switch (env.contents.kind) {
    case ContentPolicy::Kind::Constant:
      return env.contents.constant;
    case ContentPolicy::Kind::Seeded:
      return uint8_t(splitmix64(env.contents.seed ^ (0x5EEDull + c.content_counter + i)));
    case ContentPolicy::Kind::Domain: {
      size_t n = env.contents.domain.size();
      size_t idx = combo;
      for (uint32_t j = 0; j < i; ++j) idx /= n;
      return env.contents.domain[idx % n];
    }
  }
  return 0;
}

}  // namespace detail

// One small step. Branching choices (allocation base, fresh contents,
// random value, domain input) yield multiple successors.
inline StepOut step(const ExecEnv& env, const Config& c) {
  unsigned bits = env.program->word_bits;
  StepOut out{StepOut::Kind::Progress, StuckReason::None, {}};
  if (c.finished()) {
    out.kind = StepOut::Kind::Finished;
    return out;
  }
  Config base = c;
  KItem top = base.cont.back();
  base.cont.pop_back();

  if (auto* ea = std::get_if<KItem::EndAlloc>(&top.item)) {
    base.mem.erase_range(ea->base.value(), ea->size);
    out.succ.push_back(std::move(base));
    return out;
  }
  if (auto* ec = std::get_if<KItem::EndCall>(&top.item)) {
    Locals restored = *ec->caller;
    for (size_t i = 0; i < ec->results.size(); ++i) {
      auto it = base.locals.find(ec->ret_names[i]);
      if (it == base.locals.end()) {
        out.kind = StepOut::Kind::Error;
        out.reason = StuckReason::UndefinedVariable;
        return out;
      }
      restored[ec->results[i]] = it->second;
    }
    base.locals = std::move(restored);
    out.succ.push_back(std::move(base));
    return out;
  }

  const Stmt& s = *std::get<KItem::Run>(top.item).stmt;
  auto error = [&](StuckReason r) {
    out.kind = StepOut::Kind::Error;
    out.reason = r;
    return out;
  };
  auto benign = [&](StuckReason r) {
    out.kind = StepOut::Kind::Benign;
    out.reason = r;
    return out;
  };
  auto eval_in = [&](const Expr& e, Config& cfg, Word& v) -> bool {
    EvalResult r = eval_expr(e, cfg.locals, cfg.mem, bits);
    for (const auto& ev : r.delta) cfg.leak.push_back(ev);
    if (!r.value) return false;
    v = *r.value;
    return true;
  };

  if (std::holds_alternative<Stmt::Skip>(s.node)) {
    out.succ.push_back(std::move(base));
    return out;
  }
  if (auto* q = std::get_if<Stmt::Seq>(&s.node)) {
    base.cont.push_back(KItem{KItem::Run{q->second.get()}});
    base.cont.push_back(KItem{KItem::Run{q->first.get()}});
    out.succ.push_back(std::move(base));
    return out;
  }
  if (auto* a = std::get_if<Stmt::Assign>(&s.node)) {
    Word v;
    if (!eval_in(*a->value, base, v)) return error(StuckReason::UndefinedVariable);
    base.locals[a->target] = v;
    out.succ.push_back(std::move(base));
    return out;
  }
  if (auto* ld = std::get_if<Stmt::Load>(&s.node)) {
    Word addr;
    if (!eval_in(*ld->addr, base, addr)) return error(StuckReason::UndefinedVariable);
    auto v = base.mem.load(addr.value(), ld->width_bytes, bits);
    if (!v) return error(StuckReason::OutOfBoundsLoad);
    base.leak.push_back(leak(addr));
    base.locals[ld->target] = *v;
    out.succ.push_back(std::move(base));
    return out;
  }
  if (auto* st = std::get_if<Stmt::Store>(&s.node)) {
    Word val, addr;
    if (!eval_in(*st->value, base, val)) return error(StuckReason::UndefinedVariable);
    if (!eval_in(*st->addr, base, addr)) return error(StuckReason::UndefinedVariable);
    Word tr = st->width_bytes == 1 ? Word::of(val.value() & 0xFF, bits) : val;
    if (!base.mem.store(addr.value(), st->width_bytes, tr))
      return error(StuckReason::OutOfBoundsStore);
    base.leak.push_back(leak(addr));
    out.succ.push_back(std::move(base));
    return out;
  }
  if (auto* sa = std::get_if<Stmt::StackAlloc>(&s.node)) {
    unsigned wb = bits / 8;
    std::vector<Word> cands;
    for (Word b : env.universe.bases) {
      bool ok = b.value() % wb == 0 &&
                uint64_t(b.value()) + sa->size_bytes <= uint64_t(Word::mask(bits)) + 1;
      for (uint32_t i = 0; ok && i < sa->size_bytes; ++i)
        if (base.mem.bytes.count(b.value() + i)) ok = false;
      if (ok) cands.push_back(b);
    }
    if (cands.empty()) return benign(StuckReason::OutOfMemory);
    size_t combos = 1;
    if (env.contents.kind == ContentPolicy::Kind::Domain)
      for (uint32_t i = 0; i < sa->size_bytes; ++i)
        combos *= env.contents.domain.size();
    for (Word a : cands) {
      for (size_t combo = 0; combo < combos; ++combo) {
        Config nxt = base;
        nxt.leak.push_back(nondet(a));
        for (uint32_t i = 0; i < sa->size_bytes; ++i)
          nxt.mem.put_byte(a.value() + i,
                           detail::smallstep_content(env, nxt, combo, i));
        nxt.content_counter += sa->size_bytes;
        nxt.locals[sa->name] = a;
        nxt.cont.push_back(KItem{KItem::EndAlloc{a, sa->size_bytes}});
        nxt.cont.push_back(KItem{KItem::Run{sa->body.get()}});
        out.succ.push_back(std::move(nxt));
      }
    }
    return out;
  }
  if (auto* r = std::get_if<Stmt::Random>(&s.node)) {
    for (Word w : env.universe.randoms) {
      Config nxt = base;
      nxt.leak.push_back(nondet(w));
      nxt.locals[r->name] = w;
      out.succ.push_back(std::move(nxt));
    }
    if (out.succ.empty()) return error(StuckReason::BadConfig);
    return out;
  }
  if (auto* in = std::get_if<Stmt::Input>(&s.node)) {
    if (env.inputs.kind == InputPolicy::Kind::Scripted) {
      if (base.input_cursor >= env.inputs.words.size())
        return benign(StuckReason::NoInput);
      Word v = Word::of(env.inputs.words[base.input_cursor].value(), bits);
      base.input_cursor++;
      base.io.push_back(io_in(v));
      base.locals[in->target] = v;
      out.succ.push_back(std::move(base));
      return out;
    }
    const auto& dom = env.inputs.set_for(base.input_cursor);
    if (dom.empty()) return benign(StuckReason::NoInput);
    for (Word w : dom) {
      Config nxt = base;
      nxt.input_cursor++;
      nxt.io.push_back(io_in(w));
      nxt.locals[in->target] = w;
      out.succ.push_back(std::move(nxt));
    }
    return out;
  }
  if (auto* o = std::get_if<Stmt::Output>(&s.node)) {
    Word v;
    if (!eval_in(*o->value, base, v)) return error(StuckReason::UndefinedVariable);
    base.io.push_back(io_out(v));
    out.succ.push_back(std::move(base));
    return out;
  }
  if (auto* i = std::get_if<Stmt::If>(&s.node)) {
    Word cnd;
    if (!eval_in(*i->cond, base, cnd)) return error(StuckReason::UndefinedVariable);
    bool b = cnd.truthy();
    base.leak.push_back(leak(Word::of(b ? 1 : 0, bits)));
    base.cont.push_back(
        KItem{KItem::Run{(b ? i->then_branch : i->else_branch).get()}});
    out.succ.push_back(std::move(base));
    return out;
  }
  if (auto* w = std::get_if<Stmt::While>(&s.node)) {
    Word cnd;
    if (!eval_in(*w->cond, base, cnd)) return error(StuckReason::UndefinedVariable);
    bool b = cnd.truthy();
    base.leak.push_back(leak(Word::of(b ? 1 : 0, bits)));
    if (b) {
      base.cont.push_back(KItem{KItem::Run{&s}});
      base.cont.push_back(KItem{KItem::Run{w->body.get()}});
    }
    out.succ.push_back(std::move(base));
    return out;
  }
  const auto& call = std::get<Stmt::Call>(s.node);
  const FnDef* callee = env.program->find(call.callee);
  if (!callee) return error(StuckReason::UndefinedFunction);
  if (callee->params.size() != call.args.size() ||
      callee->returns.size() != call.results.size())
    return error(StuckReason::ArityMismatch);
  Locals inner;
  for (size_t i = 0; i < call.args.size(); ++i) {
    Word v;
    if (!eval_in(*call.args[i], base, v)) return error(StuckReason::UndefinedVariable);
    inner[callee->params[i]] = v;
  }
  auto saved = std::make_shared<Locals>(std::move(base.locals));
  base.locals = std::move(inner);
  base.cont.push_back(KItem{KItem::EndCall{saved, call.results, callee->returns}});
  base.cont.push_back(KItem{KItem::Run{callee->body.get()}});
  out.succ.push_back(std::move(base));
  return out;
}

// Bounded exhaustive search over small-step executions; collects the same
// outcome structure as the big-step enumerator so the two can be diffed.
inline std::vector<Outcome> smallstep_enumerate(const ExecEnv& env,
                                                const std::string& entry,
                                                const std::vector<Word>& args) {
  const FnDef* fn = env.program->find(entry);
  std::vector<Outcome> results;
  struct WorkItem {
    Config cfg;
    uint64_t steps;
  };
  std::vector<WorkItem> work;
  work.push_back({initial_config(env, entry, args), 0});
  size_t explored = 0;
  while (!work.empty()) {
    if (++explored > env.max_branches * 64)
      throw std::runtime_error("small-step search exceeded budget");
    WorkItem wi = std::move(work.back());
    work.pop_back();
    auto emit = [&](RunStatus st, StuckReason re, const Config& cfg) {
      Outcome o;
      o.status = st;
      o.reason = re;
      o.mem = cfg.mem;
      o.locals = cfg.locals;
      o.io = cfg.io;
      o.leak = cfg.leak;
      if (st == RunStatus::Terminated)
        for (const auto& r : fn->returns) {
          auto it = cfg.locals.find(r);
          if (it == cfg.locals.end()) {
            o.status = RunStatus::ErrorStuck;
            o.reason = StuckReason::UndefinedVariable;
            o.returns.clear();
            break;
          }
          o.returns.push_back(it->second);
        }
      results.push_back(std::move(o));
    };
    if (wi.cfg.finished()) {
      emit(RunStatus::Terminated, StuckReason::None, wi.cfg);
      continue;
    }
    if (wi.steps >= env.fuel) {
      emit(RunStatus::FuelExhausted, StuckReason::None, wi.cfg);
      continue;
    }
    StepOut so = step(env, wi.cfg);
    switch (so.kind) {
      case StepOut::Kind::Progress:
        for (auto& succ : so.succ)
          work.push_back({std::move(succ), wi.steps + 1});
        break;
      case StepOut::Kind::Finished:
        emit(RunStatus::Terminated, StuckReason::None, wi.cfg);
        break;
      case StepOut::Kind::Benign:
        emit(RunStatus::BenignStuck, so.reason, wi.cfg);
        break;
      case StepOut::Kind::Error:
        emit(RunStatus::ErrorStuck, so.reason, wi.cfg);
        break;
    }
  }
  std::map<std::string, Outcome> dedup;
  for (auto& o : results) dedup.emplace(o.identity(), std::move(o));
  std::vector<Outcome> out;
  for (auto& [_, o] : dedup) out.push_back(std::move(o));
  return out;
}

}  // namespace ctlab
