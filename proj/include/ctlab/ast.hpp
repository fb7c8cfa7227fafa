#pragma once

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "ctlab/word.hpp"

namespace ctlab {

enum class BinOp {
  Add, Sub, Mul, Divu, Remu, And, Or, Xor, Shl, Shr, Eq, Ne, Ltu, Lts
};

inline const char* binop_name(BinOp op) {
  switch (op) {
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::Divu: return "/";
    case BinOp::Remu: return "%";
    case BinOp::And: return "&";
    case BinOp::Or: return "|";
    case BinOp::Xor: return "^";
    case BinOp::Shl: return "<<";
    case BinOp::Shr: return ">>";
    case BinOp::Eq: return "==";
    case BinOp::Ne: return "!=";
    case BinOp::Ltu: return "<";
    case BinOp::Lts: return "<s";
  }
  return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  struct Lit { Word value; };
  struct Var { std::string name; };
  struct Bin { BinOp op; ExprPtr lhs, rhs; };
  std::variant<Lit, Var, Bin> node;
};

inline ExprPtr lit(Word w) { return std::make_shared<Expr>(Expr{Expr::Lit{w}}); }
inline ExprPtr var(std::string name) {
  return std::make_shared<Expr>(Expr{Expr::Var{std::move(name)}});
}
inline ExprPtr bin(BinOp op, ExprPtr a, ExprPtr b) {
  return std::make_shared<Expr>(Expr{Expr::Bin{op, std::move(a), std::move(b)}});
}

struct Stmt;
using StmtPtr = std::shared_ptr<const Stmt>;

struct Stmt {
  struct Skip {};
  struct Assign { std::string target; ExprPtr value; };
  // Loads and stores are statements, not expressions; width is 1 byte or a
  // full word (bytes() of the program width).
  struct Load { std::string target; ExprPtr addr; unsigned width_bytes; };
  struct Store { ExprPtr addr; ExprPtr value; unsigned width_bytes; };
  struct StackAlloc { uint32_t size_bytes; std::string name; StmtPtr body; };
  struct Random { std::string name; };
  struct Input { std::string target; };
  struct Output { ExprPtr value; };
  struct If { ExprPtr cond; StmtPtr then_branch, else_branch; };
  struct While { ExprPtr cond; StmtPtr body; };
  struct Call { std::vector<std::string> results; std::string callee;
                std::vector<ExprPtr> args; };
  struct Seq { StmtPtr first, second; };

  std::variant<Skip, Assign, Load, Store, StackAlloc, Random, Input, Output,
               If, While, Call, Seq>
      node;
};

inline StmtPtr skip() { return std::make_shared<Stmt>(Stmt{Stmt::Skip{}}); }
inline StmtPtr assign(std::string x, ExprPtr e) {
  return std::make_shared<Stmt>(Stmt{Stmt::Assign{std::move(x), std::move(e)}});
}
inline StmtPtr load(std::string x, ExprPtr a, unsigned w) {
  return std::make_shared<Stmt>(Stmt{Stmt::Load{std::move(x), std::move(a), w}});
}
inline StmtPtr store(ExprPtr a, ExprPtr v, unsigned w) {
  return std::make_shared<Stmt>(Stmt{Stmt::Store{std::move(a), std::move(v), w}});
}
inline StmtPtr stackalloc(uint32_t n, std::string x, StmtPtr body) {
  return std::make_shared<Stmt>(
      Stmt{Stmt::StackAlloc{n, std::move(x), std::move(body)}});
}
inline StmtPtr random_stmt(std::string x) {
  return std::make_shared<Stmt>(Stmt{Stmt::Random{std::move(x)}});
}
inline StmtPtr input_stmt(std::string x) {
  return std::make_shared<Stmt>(Stmt{Stmt::Input{std::move(x)}});
}
inline StmtPtr output_stmt(ExprPtr e) {
  return std::make_shared<Stmt>(Stmt{Stmt::Output{std::move(e)}});
}
inline StmtPtr if_stmt(ExprPtr c, StmtPtr t, StmtPtr e) {
  return std::make_shared<Stmt>(
      Stmt{Stmt::If{std::move(c), std::move(t), std::move(e)}});
}
inline StmtPtr while_stmt(ExprPtr c, StmtPtr b) {
  return std::make_shared<Stmt>(Stmt{Stmt::While{std::move(c), std::move(b)}});
}
inline StmtPtr call_stmt(std::vector<std::string> rs, std::string f,
                         std::vector<ExprPtr> as) {
  return std::make_shared<Stmt>(
      Stmt{Stmt::Call{std::move(rs), std::move(f), std::move(as)}});
}
inline StmtPtr seq(StmtPtr a, StmtPtr b) {
  return std::make_shared<Stmt>(Stmt{Stmt::Seq{std::move(a), std::move(b)}});
}

// Right-folds a statement list; the empty list is skip.
inline StmtPtr seq_of(std::vector<StmtPtr> stmts) {
  if (stmts.empty()) return skip();
  StmtPtr acc = stmts.back();
  for (size_t i = stmts.size() - 1; i-- > 0;) acc = seq(stmts[i], acc);
  return acc;
}

struct FnDef {
  std::string name;
  std::vector<std::string> params;
  std::vector<std::string> returns;
  StmtPtr body;
};

struct Program {
  std::vector<FnDef> functions;  // declaration order
  std::string entry;
  unsigned word_bits = 32;

  const FnDef* find(const std::string& name) const {
    for (const auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }
};

// Structural equality (used by round-trip tests).

inline bool expr_equal(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  if (auto* la = std::get_if<Expr::Lit>(&a.node))
    return la->value == std::get<Expr::Lit>(b.node).value;
  if (auto* va = std::get_if<Expr::Var>(&a.node))
    return va->name == std::get<Expr::Var>(b.node).name;
  const auto& ba = std::get<Expr::Bin>(a.node);
  const auto& bb = std::get<Expr::Bin>(b.node);
  return ba.op == bb.op && expr_equal(*ba.lhs, *bb.lhs) &&
         expr_equal(*ba.rhs, *bb.rhs);
}

inline bool stmt_equal(const Stmt& a, const Stmt& b) {
  if (a.node.index() != b.node.index()) return false;
  using S = Stmt;
  if (std::holds_alternative<S::Skip>(a.node)) return true;
  if (auto* x = std::get_if<S::Assign>(&a.node)) {
    const auto& y = std::get<S::Assign>(b.node);
    return x->target == y.target && expr_equal(*x->value, *y.value);
  }
  if (auto* x = std::get_if<S::Load>(&a.node)) {
    const auto& y = std::get<S::Load>(b.node);
    return x->target == y.target && x->width_bytes == y.width_bytes &&
           expr_equal(*x->addr, *y.addr);
  }
  if (auto* x = std::get_if<S::Store>(&a.node)) {
    const auto& y = std::get<S::Store>(b.node);
    return x->width_bytes == y.width_bytes && expr_equal(*x->addr, *y.addr) &&
           expr_equal(*x->value, *y.value);
  }
  if (auto* x = std::get_if<S::StackAlloc>(&a.node)) {
    const auto& y = std::get<S::StackAlloc>(b.node);
    return x->size_bytes == y.size_bytes && x->name == y.name &&
           stmt_equal(*x->body, *y.body);
  }
  if (auto* x = std::get_if<S::Random>(&a.node))
    return x->name == std::get<S::Random>(b.node).name;
  if (auto* x = std::get_if<S::Input>(&a.node))
    return x->target == std::get<S::Input>(b.node).target;
  if (auto* x = std::get_if<S::Output>(&a.node))
    return expr_equal(*x->value, *std::get<S::Output>(b.node).value);
  if (auto* x = std::get_if<S::If>(&a.node)) {
    const auto& y = std::get<S::If>(b.node);
    return expr_equal(*x->cond, *y.cond) &&
           stmt_equal(*x->then_branch, *y.then_branch) &&
           stmt_equal(*x->else_branch, *y.else_branch);
  }
  if (auto* x = std::get_if<S::While>(&a.node)) {
    const auto& y = std::get<S::While>(b.node);
    return expr_equal(*x->cond, *y.cond) && stmt_equal(*x->body, *y.body);
  }
  if (auto* x = std::get_if<S::Call>(&a.node)) {
    const auto& y = std::get<S::Call>(b.node);
    if (x->results != y.results || x->callee != y.callee ||
        x->args.size() != y.args.size())
      return false;
    for (size_t i = 0; i < x->args.size(); ++i)
      if (!expr_equal(*x->args[i], *y.args[i])) return false;
    return true;
  }
  const auto& sa = std::get<S::Seq>(a.node);
  const auto& sb = std::get<S::Seq>(b.node);
  return stmt_equal(*sa.first, *sb.first) && stmt_equal(*sa.second, *sb.second);
}

inline bool program_equal(const Program& a, const Program& b) {
  if (a.entry != b.entry || a.word_bits != b.word_bits ||
      a.functions.size() != b.functions.size())
    return false;
  for (size_t i = 0; i < a.functions.size(); ++i) {
    const auto& fa = a.functions[i];
    const auto& fb = b.functions[i];
    if (fa.name != fb.name || fa.params != fb.params ||
        fa.returns != fb.returns || !stmt_equal(*fa.body, *fb.body))
      return false;
  }
  return true;
}

}  // namespace ctlab
