#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "ctlab/ast.hpp"

namespace ctlab {

struct Diagnostic {
  enum class Kind {
    UndefinedVariable,
    UndefinedFunction,
    ArityMismatch,
    BadAllocSize,
    DuplicateName,
    RandomDisabled,
    NoEntry,
  };
  Kind kind;
  std::string subject;   // variable/function name
  std::string function;  // enclosing function
  uint32_t size = 0;     // for BadAllocSize

  std::string message() const {
    switch (kind) {
      case Kind::UndefinedVariable:
        return "undefined variable '" + subject + "' in " + function;
      case Kind::UndefinedFunction:
        return "undefined function '" + subject + "'";
      case Kind::ArityMismatch:
        return "arity mismatch calling '" + subject + "' in " + function;
      case Kind::BadAllocSize:
        return "stackalloc size " + std::to_string(size) + " in " + function +
               " is not a positive word multiple";
      case Kind::DuplicateName:
        return "duplicate parameter/return name '" + subject + "' in " + function;
      case Kind::RandomDisabled:
        return "random construct used in " + function +
               " but the demo construct is disabled";
      case Kind::NoEntry:
        return "entry function '" + subject + "' is not defined";
    }
    return "";
  }
};

struct ValidateOptions {
  bool allow_random = true;  // the `random as x` demo construct
};

namespace detail {

using Assigned = std::set<std::string>;

struct Validator {
  const Program& p;
  const ValidateOptions& opts;
  std::vector<Diagnostic>& out;
  const FnDef* fn = nullptr;

  void diag(Diagnostic::Kind k, std::string subject, uint32_t size = 0) {
    out.push_back({k, std::move(subject), fn ? fn->name : "", size});
  }

  void check_expr(const Expr& e, const Assigned& a) {
    if (auto* v = std::get_if<Expr::Var>(&e.node)) {
      if (!a.count(v->name)) diag(Diagnostic::Kind::UndefinedVariable, v->name);
    } else if (auto* b = std::get_if<Expr::Bin>(&e.node)) {
      check_expr(*b->lhs, a);
      check_expr(*b->rhs, a);
    }
  }

  // Definite-assignment: returns the set of names assigned on every path.
  Assigned check_stmt(const Stmt& s, Assigned a) {
    if (std::holds_alternative<Stmt::Skip>(s.node)) return a;
    if (auto* x = std::get_if<Stmt::Assign>(&s.node)) {
      check_expr(*x->value, a);
      a.insert(x->target);
      return a;
    }
    if (auto* x = std::get_if<Stmt::Load>(&s.node)) {
      check_expr(*x->addr, a);
      a.insert(x->target);
      return a;
    }
    if (auto* x = std::get_if<Stmt::Store>(&s.node)) {
      check_expr(*x->addr, a);
      check_expr(*x->value, a);
      return a;
    }
    if (auto* x = std::get_if<Stmt::StackAlloc>(&s.node)) {
      unsigned wb = p.word_bits / 8;
      if (x->size_bytes == 0 || x->size_bytes % wb != 0)
        diag(Diagnostic::Kind::BadAllocSize, x->name, x->size_bytes);
      a.insert(x->name);
      return check_stmt(*x->body, std::move(a));
    }
    if (auto* x = std::get_if<Stmt::Random>(&s.node)) {
      if (!opts.allow_random) diag(Diagnostic::Kind::RandomDisabled, x->name);
      a.insert(x->name);
      return a;
    }
    if (auto* x = std::get_if<Stmt::Input>(&s.node)) {
      a.insert(x->target);
      return a;
    }
    if (auto* x = std::get_if<Stmt::Output>(&s.node)) {
      check_expr(*x->value, a);
      return a;
    }
    if (auto* x = std::get_if<Stmt::If>(&s.node)) {
      check_expr(*x->cond, a);
      Assigned t = check_stmt(*x->then_branch, a);
      Assigned e = check_stmt(*x->else_branch, a);
      Assigned merged;
      std::set_intersection(t.begin(), t.end(), e.begin(), e.end(),
                            std::inserter(merged, merged.begin()));
      return merged;
    }
    if (auto* x = std::get_if<Stmt::While>(&s.node)) {
      check_expr(*x->cond, a);
      check_stmt(*x->body, a);  // body may run zero times
      return a;
    }
    if (auto* x = std::get_if<Stmt::Call>(&s.node)) {
      for (const auto& arg : x->args) check_expr(*arg, a);
      const FnDef* callee = p.find(x->callee);
      if (!callee) {
        diag(Diagnostic::Kind::UndefinedFunction, x->callee);
      } else if (callee->params.size() != x->args.size() ||
                 callee->returns.size() != x->results.size()) {
        diag(Diagnostic::Kind::ArityMismatch, x->callee);
      }
      for (const auto& r : x->results) a.insert(r);
      return a;
    }
    const auto& q = std::get<Stmt::Seq>(s.node);
    return check_stmt(*q.second, check_stmt(*q.first, std::move(a)));
  }

  void check_fn(const FnDef& f) {
    fn = &f;
    std::set<std::string> seen;
    for (const auto& n : f.params)
      if (!seen.insert(n).second) diag(Diagnostic::Kind::DuplicateName, n);
    for (const auto& n : f.returns)
      if (!seen.insert(n).second) diag(Diagnostic::Kind::DuplicateName, n);
    Assigned a(f.params.begin(), f.params.end());
    a = check_stmt(*f.body, std::move(a));
    for (const auto& r : f.returns)
      if (!a.count(r)) diag(Diagnostic::Kind::UndefinedVariable, r);
    fn = nullptr;
  }
};

}  // namespace detail

inline std::vector<Diagnostic> validate(const Program& p,
                                        ValidateOptions opts = {}) {
  std::vector<Diagnostic> out;
  detail::Validator v{p, opts, out};
  if (!p.find(p.entry))
    out.push_back({Diagnostic::Kind::NoEntry, p.entry, "", 0});
  for (const auto& f : p.functions) v.check_fn(f);
  return out;
}

}  // namespace ctlab
