#pragma once

#include <sstream>
#include <string>

#include "ctlab/ast.hpp"

namespace ctlab {
namespace detail {

inline int expr_prec(const Expr& e) {
  if (!std::holds_alternative<Expr::Bin>(e.node)) return 8;
  switch (std::get<Expr::Bin>(e.node).op) {
    case BinOp::Or: return 0;
    case BinOp::Xor: return 1;
    case BinOp::And: return 2;
    case BinOp::Eq:
    case BinOp::Ne: return 3;
    case BinOp::Ltu:
    case BinOp::Lts: return 4;
    case BinOp::Shl:
    case BinOp::Shr: return 5;
    case BinOp::Add:
    case BinOp::Sub: return 6;
    default: return 7;
  }
}

inline void format_expr(std::ostream& os, const Expr& e, int min_prec) {
  int p = expr_prec(e);
  bool parens = p < min_prec;
  if (parens) os << "(";
  if (auto* l = std::get_if<Expr::Lit>(&e.node)) {
    os << l->value.value();
  } else if (auto* v = std::get_if<Expr::Var>(&e.node)) {
    os << v->name;
  } else {
    const auto& b = std::get<Expr::Bin>(e.node);
    format_expr(os, *b.lhs, p);
    os << " " << binop_name(b.op) << " ";
    format_expr(os, *b.rhs, p + 1);  // left-associative
  }
  if (parens) os << ")";
}

inline void format_stmt(std::ostream& os, const Stmt& s, unsigned word_bits) {
  unsigned wb = word_bits / 8;
  if (std::holds_alternative<Stmt::Skip>(s.node)) {
    os << "skip;";
  } else if (auto* a = std::get_if<Stmt::Assign>(&s.node)) {
    os << a->target << " = ";
    format_expr(os, *a->value, 0);
    os << ";";
  } else if (auto* l = std::get_if<Stmt::Load>(&s.node)) {
    os << l->target << " = " << (l->width_bytes == wb ? "load" : "load1") << "(";
    format_expr(os, *l->addr, 0);
    os << ");";
  } else if (auto* st = std::get_if<Stmt::Store>(&s.node)) {
    os << (st->width_bytes == wb ? "store" : "store1") << "(";
    format_expr(os, *st->addr, 0);
    os << ", ";
    format_expr(os, *st->value, 0);
    os << ");";
  } else if (auto* sa = std::get_if<Stmt::StackAlloc>(&s.node)) {
    os << "stackalloc " << sa->size_bytes << " as " << sa->name << " { ";
    if (!std::holds_alternative<Stmt::Skip>(sa->body->node)) {
      format_stmt(os, *sa->body, word_bits);
      os << " ";
    }
    os << "}";
  } else if (auto* r = std::get_if<Stmt::Random>(&s.node)) {
    os << "random as " << r->name << ";";
  } else if (auto* in = std::get_if<Stmt::Input>(&s.node)) {
    os << in->target << " = input();";
  } else if (auto* out = std::get_if<Stmt::Output>(&s.node)) {
    os << "output(";
    format_expr(os, *out->value, 0);
    os << ");";
  } else if (auto* i = std::get_if<Stmt::If>(&s.node)) {
    os << "if (";
    format_expr(os, *i->cond, 0);
    os << ") { ";
    if (!std::holds_alternative<Stmt::Skip>(i->then_branch->node)) {
      format_stmt(os, *i->then_branch, word_bits);
      os << " ";
    }
    os << "}";
    if (!std::holds_alternative<Stmt::Skip>(i->else_branch->node)) {
      os << " else { ";
      format_stmt(os, *i->else_branch, word_bits);
      os << " }";
    }
  } else if (auto* w = std::get_if<Stmt::While>(&s.node)) {
    os << "while (";
    format_expr(os, *w->cond, 0);
    os << ") { ";
    if (!std::holds_alternative<Stmt::Skip>(w->body->node)) {
      format_stmt(os, *w->body, word_bits);
      os << " ";
    }
    os << "}";
  } else if (auto* c = std::get_if<Stmt::Call>(&s.node)) {
    for (size_t k = 0; k < c->results.size(); ++k)
      os << (k ? ", " : "") << c->results[k];
    if (!c->results.empty()) os << " = ";
    os << c->callee << "(";
    for (size_t k = 0; k < c->args.size(); ++k) {
      if (k) os << ", ";
      format_expr(os, *c->args[k], 0);
    }
    os << ");";
  } else {
    const auto& q = std::get<Stmt::Seq>(s.node);
    format_stmt(os, *q.first, word_bits);
    os << " ";
    format_stmt(os, *q.second, word_bits);
  }
}

}  // namespace detail

// Canonical single-line-per-function rendering; parse(format(p)) is
// structurally equal to p for valid programs.
inline std::string format(const Program& p) {
  std::ostringstream os;
  bool first = true;
  for (const auto& f : p.functions) {
    if (!first) os << "\n";
    first = false;
    os << "fn " << f.name << "(";
    for (size_t i = 0; i < f.params.size(); ++i)
      os << (i ? ", " : "") << f.params[i];
    os << ")";
    if (!f.returns.empty()) {
      os << " -> (";
      for (size_t i = 0; i < f.returns.size(); ++i)
        os << (i ? ", " : "") << f.returns[i];
      os << ")";
    }
    os << " { ";
    detail::format_stmt(os, *f.body, p.word_bits);
    os << " }";
  }
  return os.str();
}

}  // namespace ctlab
