#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctlab/ast.hpp"
#include "ctlab/oracle.hpp"
#include "ctlab/trace.hpp"

namespace ctlab {

// Byte-granularity sparse memory. Loads and stores require every touched
// byte to already be in the domain; words are little-endian.
struct MemState {
  std::map<uint32_t, uint8_t> bytes;

  friend bool operator==(const MemState&, const MemState&) = default;

  bool contains(uint32_t addr, unsigned n) const {
    for (unsigned i = 0; i < n; ++i)
      if (!bytes.count(addr + i)) return false;
    return true;
  }

  std::optional<Word> load(uint32_t addr, unsigned nbytes, unsigned bits) const {
    uint32_t v = 0;
    for (unsigned i = 0; i < nbytes; ++i) {
      auto it = bytes.find(addr + i);
      if (it == bytes.end()) return std::nullopt;
      v |= uint32_t(it->second) << (8 * i);
    }
    return Word::of(v, bits);
  }

  bool store(uint32_t addr, unsigned nbytes, Word v) {
    if (!contains(addr, nbytes)) return false;
    for (unsigned i = 0; i < nbytes; ++i)
      bytes[addr + i] = uint8_t(v.value() >> (8 * i));
    return true;
  }

  // Unchecked writes for setting up initial memory.
  void put_byte(uint32_t addr, uint8_t b) { bytes[addr] = b; }
  void put_word(uint32_t addr, Word v) {
    for (unsigned i = 0; i < v.bytes(); ++i)
      bytes[addr + i] = uint8_t(v.value() >> (8 * i));
  }
  void erase_range(uint32_t addr, unsigned n) {
    for (unsigned i = 0; i < n; ++i) bytes.erase(addr + i);
  }

  std::string dump() const {
    std::string s;
    for (auto [a, b] : bytes) s += std::to_string(a) + ":" + std::to_string(b) + ";";
    return s;
  }
};

using Locals = std::map<std::string, Word>;

struct InputPolicy {
  enum class Kind { Scripted, Domain } kind = Kind::Scripted;
  std::vector<Word> words;              // script
  std::vector<std::vector<Word>> sets;  // per-call domains; the last reused

  static InputPolicy scripted(std::vector<Word> ws) {
    InputPolicy p;
    p.kind = Kind::Scripted;
    p.words = std::move(ws);
    return p;
  }
  static InputPolicy domain(std::vector<Word> ws) {
    InputPolicy p;
    p.kind = Kind::Domain;
    p.sets = {std::move(ws)};
    return p;
  }
  static InputPolicy domains(std::vector<std::vector<Word>> per_call) {
    InputPolicy p;
    p.kind = Kind::Domain;
    p.sets = std::move(per_call);
    return p;
  }
  const std::vector<Word>& set_for(size_t call) const {
    static const std::vector<Word> empty;
    if (sets.empty()) return empty;
    return sets[std::min(call, sets.size() - 1)];
  }
};

struct ContentPolicy {
  enum class Kind { Constant, Seeded, Domain } kind = Kind::Constant;
  uint8_t constant = 0;
  uint64_t seed = 0;
  std::vector<uint8_t> domain;

  static ContentPolicy constant_byte(uint8_t b) {
    ContentPolicy c;
    c.kind = Kind::Constant;
    c.constant = b;
    return c;
  }
  static ContentPolicy seeded(uint64_t s) {
    ContentPolicy c;
    c.kind = Kind::Seeded;
    c.seed = s;
    return c;
  }
  static ContentPolicy domain_bytes(std::vector<uint8_t> d) {
    ContentPolicy c;
    c.kind = Kind::Domain;
    c.domain = std::move(d);
    return c;
  }
};

// Finite candidate sets for the nondeterministic choices; the documented
// finitization of the semantics' unbounded quantifiers.
struct ChoiceUniverse {
  std::vector<Word> bases;
  std::vector<Word> randoms;

  static ChoiceUniverse defaults(unsigned bits = 32) {
    return {{Word::of(64, bits), Word::of(128, bits), Word::of(192, bits)},
            {Word::of(0, bits), Word::of(1, bits)}};
  }
};

struct ExecEnv {
  const Program* program = nullptr;
  MemState initial_mem;
  InputPolicy inputs;
  ContentPolicy contents = ContentPolicy::constant_byte(0);
  ChoiceUniverse universe = ChoiceUniverse::defaults();
  uint64_t fuel = 1'000'000;
  size_t max_branches = 1u << 20;
};

enum class RunStatus : uint8_t { Terminated, BenignStuck, ErrorStuck, FuelExhausted };

enum class StuckReason : uint8_t {
  None,
  OutOfMemory,
  NoInput,
  UndefinedVariable,
  UndefinedFunction,
  ArityMismatch,
  OutOfBoundsLoad,
  OutOfBoundsStore,
  BadConfig,
};

inline const char* status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Terminated: return "terminated";
    case RunStatus::BenignStuck: return "benign_stuck";
    case RunStatus::ErrorStuck: return "error_stuck";
    case RunStatus::FuelExhausted: return "fuel_exhausted";
  }
  return "?";
}

inline const char* reason_name(StuckReason r) {
  switch (r) {
    case StuckReason::None: return "";
    case StuckReason::OutOfMemory: return "out_of_memory";
    case StuckReason::NoInput: return "no_input";
    case StuckReason::UndefinedVariable: return "undefined_variable";
    case StuckReason::UndefinedFunction: return "undefined_function";
    case StuckReason::ArityMismatch: return "arity_mismatch";
    case StuckReason::OutOfBoundsLoad: return "oob_load";
    case StuckReason::OutOfBoundsStore: return "oob_store";
    case StuckReason::BadConfig: return "bad_config";
  }
  return "?";
}

struct Outcome {
  RunStatus status = RunStatus::Terminated;
  StuckReason reason = StuckReason::None;
  std::string detail;
  MemState mem;
  Locals locals;
  IOTrace io;
  LeakTrace leak;
  std::vector<Word> returns;

  bool terminated() const { return status == RunStatus::Terminated; }
  bool benign() const { return status == RunStatus::BenignStuck; }

  nlohmann::json to_json() const {
    nlohmann::json rets = nlohmann::json::array();
    for (auto w : returns) rets.push_back(w.value());
    nlohmann::json j{{"status", status_name(status)},
                     {"io", ctlab::to_json(io)},
                     {"leak", ctlab::to_json(leak)},
                     {"returns", rets}};
    if (status == RunStatus::BenignStuck || status == RunStatus::ErrorStuck)
      j["reason"] = reason_name(reason);
    if (!detail.empty()) j["detail"] = detail;
    return j;
  }

  // Identity used when collecting outcome sets (locals are intentionally
  // excluded; they are frame-internal temporaries).
  std::string identity() const {
    return std::string(status_name(status)) + "|" + reason_name(reason) + "|" +
           show(io) + "|" + show(leak) + "|" + [this] {
             std::string s;
             for (auto w : returns) s += w.str() + ",";
             return s;
           }() + "|" + mem.dump();
  }
};

// ---- expression evaluation (shared by the big-step and small-step engines) ----

struct EvalResult {
  std::optional<Word> value;
  LeakTrace delta;           // divu/remu leak both operands
  std::string undefined_var; // set when value is absent
};

inline void eval_expr_into(const Expr& e, const Locals& l, unsigned bits,
                           EvalResult& r) {
  if (!r.undefined_var.empty()) return;
  if (auto* lt = std::get_if<Expr::Lit>(&e.node)) {
    r.value = lt->value;
    return;
  }
  if (auto* v = std::get_if<Expr::Var>(&e.node)) {
    auto it = l.find(v->name);
    if (it == l.end()) {
      r.value.reset();
      r.undefined_var = v->name;
      return;
    }
    r.value = it->second;
    return;
  }
  const auto& b = std::get<Expr::Bin>(e.node);
  eval_expr_into(*b.lhs, l, bits, r);
  if (!r.value) return;
  Word lhs = *r.value;
  eval_expr_into(*b.rhs, l, bits, r);
  if (!r.value) return;
  Word rhs = *r.value;
  switch (b.op) {
    case BinOp::Add: r.value = lhs.add(rhs); break;
    case BinOp::Sub: r.value = lhs.sub(rhs); break;
    case BinOp::Mul: r.value = lhs.mul(rhs); break;
    case BinOp::Divu:
      r.delta.push_back(leak(lhs));
      r.delta.push_back(leak(rhs));
      r.value = lhs.divu(rhs);
      break;
    case BinOp::Remu:
      r.delta.push_back(leak(lhs));
      r.delta.push_back(leak(rhs));
      r.value = lhs.remu(rhs);
      break;
    case BinOp::And: r.value = lhs.band(rhs); break;
    case BinOp::Or: r.value = lhs.bor(rhs); break;
    case BinOp::Xor: r.value = lhs.bxor(rhs); break;
    case BinOp::Shl: r.value = lhs.shl(rhs); break;
    case BinOp::Shr: r.value = lhs.shr(rhs); break;
    case BinOp::Eq: r.value = lhs.eq(rhs); break;
    case BinOp::Ne: r.value = lhs.ne(rhs); break;
    case BinOp::Ltu: r.value = lhs.ltu(rhs); break;
    case BinOp::Lts: r.value = lhs.lts(rhs); break;
  }
}

inline EvalResult eval_expr(const Expr& e, const Locals& l, const MemState&,
                            unsigned bits) {
  EvalResult r;
  eval_expr_into(e, l, bits, r);
  return r;
}

// ---- choice resolution ----

enum class ChoiceKind : uint8_t { AllocBase, RandomValue, ContentByte, InputWord };

struct Choice {
  ChoiceKind kind;
  Word value;
  friend bool operator==(const Choice&, const Choice&) = default;
};

class ExecDriver {
 public:
  virtual ~ExecDriver() = default;
  // Resolve one nondeterministic choice. `candidates` is the valid finite
  // candidate list (may be ignored by oracle-backed drivers); nullopt means
  // no choice is available.
  virtual std::optional<Word> pick(ChoiceKind kind,
                                   std::span<const Word> candidates,
                                   const LeakTrace& k) = 0;
};

// Allocation and random draws answered by an oracle on the current trace,
// everything else deterministic. Realizes the determinized execution.
class OracleDriver final : public ExecDriver {
 public:
  explicit OracleDriver(const Oracle& a) : oracle_(&a) {}
  std::optional<Word> pick(ChoiceKind kind, std::span<const Word> candidates,
                           const LeakTrace& k) override {
    if (kind == ChoiceKind::AllocBase || kind == ChoiceKind::RandomValue)
      return oracle_->query(k);
    if (candidates.empty()) return std::nullopt;
    return candidates[0];
  }

 private:
  const Oracle* oracle_;
};

// Replays an index script; when the script runs out, takes the first
// candidate and queues the siblings. Driving this to exhaustion enumerates
// executions (not oracle specifications; see the trace-module notes).
class ScriptEnumDriver final : public ExecDriver {
 public:
  ScriptEnumDriver(std::vector<size_t> script,
                   std::vector<std::vector<size_t>>* pending, bool strict_replay)
      : script_(std::move(script)), pending_(pending), strict_(strict_replay) {}

  std::optional<Word> pick(ChoiceKind, std::span<const Word> candidates,
                           const LeakTrace&) override {
    if (candidates.empty()) return std::nullopt;
    size_t idx = 0;
    if (cursor_ < script_.size()) {
      idx = script_[cursor_];
      if (idx >= candidates.size())
        throw std::logic_error("choice script out of range");
    } else {
      if (strict_) throw std::logic_error("replay script exhausted");
      script_.push_back(0);
      if (pending_)
        for (size_t i = 1; i < candidates.size(); ++i) {
          auto sibling = script_;
          sibling.back() = i;
          pending_->push_back(std::move(sibling));
        }
    }
    ++cursor_;
    return candidates[idx];
  }

  const std::vector<size_t>& script() const { return script_; }

 private:
  std::vector<size_t> script_;
  size_t cursor_ = 0;
  std::vector<std::vector<size_t>>* pending_;
  bool strict_;
};

// Allocation and random draws answered by the oracle; input and content
// choices enumerated. Used by the compiler differential harness, where the
// oracle determinizes compiler-resolved nondeterminism but runtime input
// remains free.
class HybridEnumDriver final : public ExecDriver {
 public:
  HybridEnumDriver(const Oracle& a, std::vector<size_t> script,
                   std::vector<std::vector<size_t>>* pending)
      : oracle_(a), rest_(std::move(script), pending, false) {}

  std::optional<Word> pick(ChoiceKind kind, std::span<const Word> candidates,
                           const LeakTrace& k) override {
    if (kind == ChoiceKind::AllocBase || kind == ChoiceKind::RandomValue)
      return oracle_.pick(kind, candidates, k);
    return rest_.pick(kind, candidates, k);
  }

  const std::vector<size_t>& script() const { return rest_.script(); }

 private:
  OracleDriver oracle_;
  ScriptEnumDriver rest_;
};

// ---- the big-step engine ----

namespace detail {

class Interp {
 public:
  Interp(const ExecEnv& env, ExecDriver& driver)
      : env_(env), prog_(*env.program), bits_(env.program->word_bits),
        driver_(driver), fuel_(env.fuel) {
    mem_ = env.initial_mem;
  }

  Outcome run(const std::string& entry, const std::vector<Word>& args) {
    const FnDef* fn = prog_.find(entry);
    Outcome out;
    if (!fn) {
      stop(RunStatus::ErrorStuck, StuckReason::UndefinedFunction, entry);
      return finish(out, {});
    }
    if (fn->params.size() != args.size()) {
      stop(RunStatus::ErrorStuck, StuckReason::ArityMismatch, entry);
      return finish(out, {});
    }
    Locals loc;
    for (size_t i = 0; i < args.size(); ++i)
      loc[fn->params[i]] = Word::of(args[i].value(), bits_);
    if (exec(*fn->body, loc)) {
      for (const auto& r : fn->returns) {
        auto it = loc.find(r);
        if (it == loc.end()) {
          stop(RunStatus::ErrorStuck, StuckReason::UndefinedVariable, r);
          break;
        }
        out.returns.push_back(it->second);
      }
    }
    return finish(out, std::move(loc));
  }

  const std::vector<Choice>& choices() const { return choices_; }

 private:
  Outcome finish(Outcome& out, Locals loc) {
    out.status = status_;
    out.reason = reason_;
    out.detail = detail_;
    if (status_ != RunStatus::Terminated) out.returns.clear();
    out.mem = std::move(mem_);
    out.locals = std::move(loc);
    out.io = std::move(io_);
    out.leak = std::move(k_);
    return out;
  }

  void stop(RunStatus s, StuckReason r, std::string detail = "") {
    status_ = s;
    reason_ = r;
    detail_ = std::move(detail);
  }

  bool eval(const Expr& e, Locals& l, Word& out) {
    EvalResult r = eval_expr(e, l, mem_, bits_);
    for (const auto& ev : r.delta) k_.push_back(ev);
    if (!r.value) {
      stop(RunStatus::ErrorStuck, StuckReason::UndefinedVariable, r.undefined_var);
      return false;
    }
    out = *r.value;
    return true;
  }

  bool valid_alloc(Word a, uint32_t size) const {
    unsigned wb = bits_ / 8;
    if (a.value() % wb != 0) return false;
    if (uint64_t(a.value()) + size > (uint64_t(Word::mask(bits_)) + 1)) return false;
    for (uint32_t i = 0; i < size; ++i)
      if (mem_.bytes.count(a.value() + i)) return false;
    return true;
  }

  uint8_t content_byte(std::span<const Word> domain_words) {
    switch (env_.contents.kind) {
      case ContentPolicy::Kind::Constant:
        return env_.contents.constant;
      case ContentPolicy::Kind::Seeded:
        return uint8_t(ctlab::detail::splitmix64(env_.contents.seed ^
                                                 (0x5EEDull + content_counter_++)));
      case ContentPolicy::Kind::Domain: {
        auto w = driver_.pick(ChoiceKind::ContentByte, domain_words, k_);
        uint8_t b = uint8_t(w ? w->value() : 0);
        if (w) choices_.push_back({ChoiceKind::ContentByte, *w});
        return b;
      }
    }
    return 0;
  }

  bool exec(const Stmt& s0, Locals& l) {
    const Stmt* s = &s0;
    for (;;) {
      if (fuel_ == 0) {
        stop(RunStatus::FuelExhausted, StuckReason::None);
        return false;
      }
      --fuel_;
      if (std::holds_alternative<Stmt::Skip>(s->node)) return true;
      if (auto* q = std::get_if<Stmt::Seq>(&s->node)) {
        if (!exec(*q->first, l)) return false;
        s = q->second.get();
        continue;
      }
      if (auto* a = std::get_if<Stmt::Assign>(&s->node)) {
        Word v;
        if (!eval(*a->value, l, v)) return false;
        l[a->target] = v;
        return true;
      }
      if (auto* ld = std::get_if<Stmt::Load>(&s->node)) {
        Word addr;
        if (!eval(*ld->addr, l, addr)) return false;
        auto v = mem_.load(addr.value(), ld->width_bytes, bits_);
        if (!v) {
          stop(RunStatus::ErrorStuck, StuckReason::OutOfBoundsLoad, addr.str());
          return false;
        }
        k_.push_back(leak(addr));
        l[ld->target] = *v;
        return true;
      }
      if (auto* st = std::get_if<Stmt::Store>(&s->node)) {
        Word val, addr;
        if (!eval(*st->value, l, val)) return false;
        if (!eval(*st->addr, l, addr)) return false;
        Word tr = st->width_bytes == 1 ? Word::of(val.value() & 0xFF, bits_) : val;
        if (!mem_.store(addr.value(), st->width_bytes, tr)) {
          stop(RunStatus::ErrorStuck, StuckReason::OutOfBoundsStore, addr.str());
          return false;
        }
        k_.push_back(leak(addr));
        return true;
      }
      if (auto* sa = std::get_if<Stmt::StackAlloc>(&s->node)) {
        std::vector<Word> cands;
        for (Word b : env_.universe.bases)
          if (valid_alloc(b, sa->size_bytes)) cands.push_back(b);
        auto a = driver_.pick(ChoiceKind::AllocBase, cands, k_);
        if (!a || !valid_alloc(*a, sa->size_bytes)) {
          stop(RunStatus::BenignStuck, StuckReason::OutOfMemory);
          return false;
        }
        choices_.push_back({ChoiceKind::AllocBase, *a});
        k_.push_back(nondet(*a));
        std::vector<Word> dom;
        if (env_.contents.kind == ContentPolicy::Kind::Domain)
          for (uint8_t b : env_.contents.domain) dom.push_back(Word::of(b, bits_));
        for (uint32_t i = 0; i < sa->size_bytes; ++i)
          mem_.put_byte(a->value() + i, content_byte(dom));
        l[sa->name] = *a;
        if (!exec(*sa->body, l)) return false;
        mem_.erase_range(a->value(), sa->size_bytes);
        return true;
      }
      if (auto* r = std::get_if<Stmt::Random>(&s->node)) {
        auto w = driver_.pick(ChoiceKind::RandomValue, env_.universe.randoms, k_);
        if (!w) {
          stop(RunStatus::ErrorStuck, StuckReason::BadConfig, "empty random universe");
          return false;
        }
        choices_.push_back({ChoiceKind::RandomValue, *w});
        k_.push_back(nondet(*w));
        l[r->name] = *w;
        return true;
      }
      if (auto* in = std::get_if<Stmt::Input>(&s->node)) {
        Word v;
        if (env_.inputs.kind == InputPolicy::Kind::Scripted) {
          if (input_cursor_ >= env_.inputs.words.size()) {
            stop(RunStatus::BenignStuck, StuckReason::NoInput);
            return false;
          }
          v = Word::of(env_.inputs.words[input_cursor_++].value(), bits_);
        } else {
          const auto& dom = env_.inputs.set_for(input_cursor_);
          auto w = driver_.pick(ChoiceKind::InputWord, dom, k_);
          if (!w) {
            stop(RunStatus::BenignStuck, StuckReason::NoInput);
            return false;
          }
          ++input_cursor_;
          choices_.push_back({ChoiceKind::InputWord, *w});
          v = *w;
        }
        io_.push_back(io_in(v));
        l[in->target] = v;
        return true;
      }
      if (auto* o = std::get_if<Stmt::Output>(&s->node)) {
        Word v;
        if (!eval(*o->value, l, v)) return false;
        io_.push_back(io_out(v));
        return true;
      }
      if (auto* i = std::get_if<Stmt::If>(&s->node)) {
        Word c;
        if (!eval(*i->cond, l, c)) return false;
        bool b = c.truthy();
        k_.push_back(leak(Word::of(b ? 1 : 0, bits_)));
        s = (b ? i->then_branch : i->else_branch).get();
        continue;
      }
      if (auto* w = std::get_if<Stmt::While>(&s->node)) {
        for (;;) {
          if (fuel_ == 0) {
            stop(RunStatus::FuelExhausted, StuckReason::None);
            return false;
          }
          --fuel_;
          Word c;
          if (!eval(*w->cond, l, c)) return false;
          bool b = c.truthy();
          k_.push_back(leak(Word::of(b ? 1 : 0, bits_)));
          if (!b) return true;
          if (!exec(*w->body, l)) return false;
        }
      }
      const auto& call = std::get<Stmt::Call>(s->node);
      const FnDef* callee = prog_.find(call.callee);
      if (!callee) {
        stop(RunStatus::ErrorStuck, StuckReason::UndefinedFunction, call.callee);
        return false;
      }
      if (callee->params.size() != call.args.size() ||
          callee->returns.size() != call.results.size()) {
        stop(RunStatus::ErrorStuck, StuckReason::ArityMismatch, call.callee);
        return false;
      }
      Locals inner;
      for (size_t i = 0; i < call.args.size(); ++i) {
        Word v;
        if (!eval(*call.args[i], l, v)) return false;
        inner[callee->params[i]] = v;
      }
      if (!exec(*callee->body, inner)) return false;
      for (size_t i = 0; i < call.results.size(); ++i) {
        auto it = inner.find(callee->returns[i]);
        if (it == inner.end()) {
          stop(RunStatus::ErrorStuck, StuckReason::UndefinedVariable,
               callee->returns[i]);
          return false;
        }
        l[call.results[i]] = it->second;
      }
      return true;
    }
  }

  const ExecEnv& env_;
  const Program& prog_;
  unsigned bits_;
  ExecDriver& driver_;
  MemState mem_;
  IOTrace io_;
  LeakTrace k_;
  uint64_t fuel_;
  size_t input_cursor_ = 0;
  uint64_t content_counter_ = 0;
  std::vector<Choice> choices_;
  RunStatus status_ = RunStatus::Terminated;
  StuckReason reason_ = StuckReason::None;
  std::string detail_;
};

}  // namespace detail

// Determinized execution: every StackAlloc/Random draw is the oracle's
// answer on the trace so far.
inline Outcome exec_oracle(const ExecEnv& env, const std::string& entry,
                           const std::vector<Word>& args, const Oracle& a) {
  OracleDriver d(a);
  detail::Interp it(env, d);
  return it.run(entry, args);
}

struct EnumRun {
  Outcome outcome;
  std::vector<size_t> script;    // index decisions, replayable
  std::vector<Choice> choices;   // resolved values in order
};

// Exhaustive enumeration of executions over the environment's finite
// choice sets (allocation bases, random values, content bytes, input words).
inline std::vector<EnumRun> enumerate_runs(const ExecEnv& env,
                                           const std::string& entry,
                                           const std::vector<Word>& args) {
  std::vector<EnumRun> out;
  std::vector<std::vector<size_t>> work;
  work.push_back({});
  while (!work.empty()) {
    if (out.size() > env.max_branches)
      throw std::runtime_error("enumeration exceeded max_branches");
    std::vector<size_t> script = std::move(work.back());
    work.pop_back();
    ScriptEnumDriver d(std::move(script), &work, false);
    detail::Interp it(env, d);
    Outcome o = it.run(entry, args);
    out.push_back({std::move(o), d.script(), it.choices()});
  }
  return out;
}

// Enumerates input/content nondeterminism while the oracle determinizes
// allocations and random draws.
inline std::vector<EnumRun> enumerate_runs_oracle(const ExecEnv& env,
                                                  const std::string& entry,
                                                  const std::vector<Word>& args,
                                                  const Oracle& a) {
  std::vector<EnumRun> out;
  std::vector<std::vector<size_t>> work;
  work.push_back({});
  while (!work.empty()) {
    if (out.size() > env.max_branches)
      throw std::runtime_error("enumeration exceeded max_branches");
    std::vector<size_t> script = std::move(work.back());
    work.pop_back();
    HybridEnumDriver d(a, std::move(script), &work);
    detail::Interp it(env, d);
    Outcome o = it.run(entry, args);
    out.push_back({std::move(o), d.script(), it.choices()});
  }
  return out;
}

// Re-run a previously enumerated branch.
inline Outcome exec_replay(const ExecEnv& env, const std::string& entry,
                           const std::vector<Word>& args,
                           const std::vector<size_t>& script) {
  ScriptEnumDriver d(script, nullptr, true);
  detail::Interp it(env, d);
  return it.run(entry, args);
}

// Deduplicated outcome set, in a canonical deterministic order.
inline std::vector<Outcome> exec_enumerate(const ExecEnv& env,
                                           const std::string& entry,
                                           const std::vector<Word>& args) {
  auto runs = enumerate_runs(env, entry, args);
  std::map<std::string, Outcome> dedup;
  for (auto& r : runs) dedup.emplace(r.outcome.identity(), std::move(r.outcome));
  std::vector<Outcome> out;
  out.reserve(dedup.size());
  for (auto& [_, o] : dedup) out.push_back(std::move(o));
  return out;
}

// ---- postcondition checking in the three judgment styles ----

struct CheckMode {
  enum class Kind { OmniAll, OracleRun, OracleStar } kind;
  std::optional<Oracle> oracle;

  static CheckMode omni_all() { return {Kind::OmniAll, std::nullopt}; }
  static CheckMode oracle_run(Oracle a) { return {Kind::OracleRun, std::move(a)}; }
  static CheckMode oracle_star(Oracle a) { return {Kind::OracleStar, std::move(a)}; }
};

struct Verdict {
  bool holds = true;
  std::optional<Outcome> counterexample;
  std::string note;
};

inline Verdict check_post(const ExecEnv& env, const std::string& entry,
                          const std::vector<Word>& args,
                          const std::function<bool(const Outcome&)>& post,
                          const CheckMode& mode) {
  Verdict v;
  auto fail = [&](const Outcome& o, std::string note) {
    v.holds = false;
    v.counterexample = o;
    v.note = std::move(note);
  };
  if (mode.kind == CheckMode::Kind::OracleRun) {
    // the oracle determinizes allocations and random draws; input and
    // content nondeterminism stays universally quantified
    for (const auto& run : enumerate_runs_oracle(env, entry, args, *mode.oracle)) {
      const Outcome& o = run.outcome;
      switch (o.status) {
        case RunStatus::Terminated:
          if (!post(o)) {
            fail(o, "postcondition failed");
            return v;
          }
          break;
        case RunStatus::BenignStuck:
          break;  // vacuous
        default:
          fail(o, "execution stuck or out of fuel");
          return v;
      }
    }
    return v;
  }
  auto outcomes = exec_enumerate(env, entry, args);
  for (const auto& o : outcomes) {
    switch (o.status) {
      case RunStatus::Terminated: {
        bool required = mode.kind == CheckMode::Kind::OmniAll ||
                        compatible(o.leak, *mode.oracle);
        if (required && !post(o)) {
          fail(o, "postcondition failed");
          return v;
        }
        break;
      }
      case RunStatus::BenignStuck:
        break;  // vacuous
      default:
        fail(o, "execution stuck or out of fuel");
        return v;
    }
  }
  return v;
}

}  // namespace ctlab
