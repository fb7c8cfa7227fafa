#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ctlab/flat.hpp"
#include "ctlab/machine.hpp"
#include "ctlab/oracle.hpp"
#include "ctlab/predict.hpp"

namespace ctlab {

struct CompileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ReplayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PatternMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The context a leakage-transformation function may consult besides the
// source trace. Which fields a pass needs is listed in its schema; gamma
// never sees source memory, locals or secrets.
struct LowContext {
  std::optional<Oracle> low_oracle;
  std::optional<Word> sp;
  std::optional<Word> code_base;
};

// A compiled program bundled with its executable transformation functions.
struct PassArtifact {
  std::string name;
  std::variant<Program, FlatProgram, MachineProgram> target;

  // Exactly one of gamma / gamma_machine is set, matching the target level.
  std::function<LeakTrace(const LeakTrace&, const LowContext&)> gamma;
  std::function<MachineTrace(const LeakTrace&, const LowContext&)> gamma_machine;

  // Lifts a low-level oracle to a source oracle. Absent when the pass does
  // not admit oracle-transformation functions (reordering).
  std::optional<std::function<Oracle(const Oracle&)>> oracle_transform;

  std::function<Predictor(const Predictor&)> predictor_transform;

  std::vector<std::string> schema;  // context fields gamma consumes

  const FlatProgram& flat_target() const { return std::get<FlatProgram>(target); }
  const MachineProgram& machine_target() const {
    return std::get<MachineProgram>(target);
  }
};

namespace passes {

// Signals that a prefix replay consumed the whole given trace; the replayer
// records what it was about to consume.
struct EndOfPrefix {};

// Trace-guided replay of a flat program: walks the statements, consuming
// each statement's leakage from the source trace (branch bits steer the
// walk). Subclasses override the hooks to emit pass-specific target events.
class FlatReplayer {
 public:
  FlatReplayer(const FlatProgram& prog, const LeakTrace& k)
      : prog_(prog), k_(k) {}
  virtual ~FlatReplayer() = default;

  // Replays a complete trace; throws ReplayError if k is not a trace of the
  // program.
  void run_full() {
    const FFnDef* entry = prog_.find(prog_.entry);
    if (!entry) throw ReplayError("no entry function");
    enter_function(*entry, true);
    walk(*entry->body);
    exit_function(*entry, true);
    if (pos_ != k_.size()) throw ReplayError("trailing events in source trace");
  }

  // Replays a proper prefix; returns when the prefix is exhausted. The
  // statement that was about to consume an event is left in pending().
  void run_prefix() {
    const FFnDef* entry = prog_.find(prog_.entry);
    if (!entry) throw ReplayError("no entry function");
    try {
      enter_function(*entry, true);
      walk(*entry->body);
      exit_function(*entry, true);
    } catch (EndOfPrefix&) {
      return;
    }
    throw ReplayError("prefix is a complete trace; no pending query");
  }

  const FStmt* pending() const { return pending_; }

 protected:
  virtual void enter_function(const FFnDef&, bool) {}
  virtual void exit_function(const FFnDef&, bool) {}
  virtual void stmt_set(const FStmt&, const FStmt::Set&) {}
  virtual void stmt_bin(const FStmt&, const FStmt::Bin&, const Word* div_lhs,
                        const Word* div_rhs) {}
  virtual void stmt_load(const FStmt&, const FStmt::Load&, Word addr) {}
  virtual void stmt_store(const FStmt&, const FStmt::Store&, Word addr) {}
  virtual void enter_alloc(const FStmt&, const FStmt::Alloc&, Word base) {}
  virtual void exit_alloc(const FStmt&, const FStmt::Alloc&, Word base) {}
  virtual void stmt_random(const FStmt&, const FStmt::Random&, Word value) {}
  virtual void stmt_input(const FStmt&, const FStmt::Input&) {}
  virtual void stmt_output(const FStmt&, const FStmt::Output&) {}
  virtual void on_branch(const FStmt&, bool taken, bool is_while) {}
  virtual void begin_call(const FStmt&, const FStmt::Call&) {}
  virtual void end_call(const FStmt&, const FStmt::Call&) {}

  Word take_leak(const FStmt& at) {
    if (pos_ == k_.size()) {
      pending_ = &at;
      throw EndOfPrefix{};
    }
    if (k_[pos_].kind != LeakKind::Leak)
      throw ReplayError("expected Leak event at position " + std::to_string(pos_));
    return k_[pos_++].value;
  }

  Word take_nondet(const FStmt& at) {
    if (pos_ == k_.size()) {
      pending_ = &at;
      throw EndOfPrefix{};
    }
    if (k_[pos_].kind != LeakKind::CompNonDet)
      throw ReplayError("expected CompNonDet event at position " +
                        std::to_string(pos_));
    return k_[pos_++].value;
  }

  void walk(const FStmt& s) {
    if (std::holds_alternative<FStmt::Skip>(s.node)) return;
    if (auto* x = std::get_if<FStmt::Set>(&s.node)) {
      stmt_set(s, *x);
      return;
    }
    if (auto* x = std::get_if<FStmt::Bin>(&s.node)) {
      if (x->op == BinOp::Divu || x->op == BinOp::Remu) {
        Word a = take_leak(s);
        Word b = take_leak(s);
        stmt_bin(s, *x, &a, &b);
      } else {
        stmt_bin(s, *x, nullptr, nullptr);
      }
      return;
    }
    if (auto* x = std::get_if<FStmt::Load>(&s.node)) {
      stmt_load(s, *x, take_leak(s));
      return;
    }
    if (auto* x = std::get_if<FStmt::Store>(&s.node)) {
      stmt_store(s, *x, take_leak(s));
      return;
    }
    if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
      Word base = take_nondet(s);
      enter_alloc(s, *x, base);
      walk(*x->body);
      exit_alloc(s, *x, base);
      return;
    }
    if (auto* x = std::get_if<FStmt::Random>(&s.node)) {
      Word v = take_nondet(s);
      stmt_random(s, *x, v);
      return;
    }
    if (auto* x = std::get_if<FStmt::Input>(&s.node)) {
      stmt_input(s, *x);
      return;
    }
    if (auto* x = std::get_if<FStmt::Output>(&s.node)) {
      stmt_output(s, *x);
      return;
    }
    if (auto* x = std::get_if<FStmt::If>(&s.node)) {
      bool taken = take_leak(s).truthy();
      on_branch(s, taken, false);
      walk(taken ? *x->then_branch : *x->else_branch);
      return;
    }
    if (auto* x = std::get_if<FStmt::While>(&s.node)) {
      for (;;) {
        bool taken = take_leak(s).truthy();
        on_branch(s, taken, true);
        if (!taken) return;
        walk(*x->body);
      }
    }
    if (auto* x = std::get_if<FStmt::Call>(&s.node)) {
      const FFnDef* callee = prog_.find(x->callee);
      if (!callee) throw ReplayError("call to unknown function " + x->callee);
      begin_call(s, *x);
      enter_function(*callee, false);
      walk(*callee->body);
      exit_function(*callee, false);
      end_call(s, *x);
      return;
    }
    const auto& q = std::get<FStmt::Seq>(s.node);
    walk(*q.first);
    walk(*q.second);
  }

  const FlatProgram& prog_;
  const LeakTrace& k_;
  size_t pos_ = 0;
  const FStmt* pending_ = nullptr;
};

// Variable universe of a function body (params, returns and every name
// defined anywhere).
inline void collect_vars(const FStmt& s, std::vector<std::string>& out) {
  auto add = [&out](const std::string& v) {
    for (const auto& x : out)
      if (x == v) return;
    out.push_back(v);
  };
  auto add_op = [&](const FOperand& o) {
    if (o.is_var()) add(o.var);
  };
  if (auto* x = std::get_if<FStmt::Set>(&s.node)) {
    add(x->dst);
    add_op(x->src);
  } else if (auto* x = std::get_if<FStmt::Bin>(&s.node)) {
    add(x->dst);
    add_op(x->lhs);
    add_op(x->rhs);
  } else if (auto* x = std::get_if<FStmt::Load>(&s.node)) {
    add(x->dst);
    add(x->addr);
  } else if (auto* x = std::get_if<FStmt::Store>(&s.node)) {
    add(x->addr);
    add(x->value);
  } else if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
    add(x->dst);
    collect_vars(*x->body, out);
  } else if (auto* x = std::get_if<FStmt::Random>(&s.node)) {
    add(x->dst);
  } else if (auto* x = std::get_if<FStmt::Input>(&s.node)) {
    add(x->dst);
  } else if (auto* x = std::get_if<FStmt::Output>(&s.node)) {
    add(x->src);
  } else if (auto* x = std::get_if<FStmt::If>(&s.node)) {
    add(x->cond);
    collect_vars(*x->then_branch, out);
    collect_vars(*x->else_branch, out);
  } else if (auto* x = std::get_if<FStmt::While>(&s.node)) {
    add(x->cond);
    collect_vars(*x->body, out);
  } else if (auto* x = std::get_if<FStmt::Call>(&s.node)) {
    for (const auto& r : x->results) add(r);
    for (const auto& a : x->args) add(a);
  } else if (auto* x = std::get_if<FStmt::Seq>(&s.node)) {
    collect_vars(*x->first, out);
    collect_vars(*x->second, out);
  }
}

inline std::vector<std::string> function_vars(const FFnDef& f) {
  std::vector<std::string> vars;
  for (const auto& p : f.params) vars.push_back(p);
  collect_vars(*f.body, vars);
  for (const auto& r : f.returns) {
    bool found = false;
    for (const auto& v : vars) found = found || v == r;
    if (!found) vars.push_back(r);
  }
  return vars;
}

}  // namespace passes
}  // namespace ctlab
