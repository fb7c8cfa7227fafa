#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ctlab/ast.hpp"
#include "json.hpp"

namespace ctlab {

// Three-address form: every compound operand is a variable or immediate,
// no nested expressions.
struct FOperand {
  enum class Kind : uint8_t { Var, Imm } kind = Kind::Var;
  std::string var;
  Word imm;

  static FOperand of_var(std::string v) {
    FOperand o;
    o.kind = Kind::Var;
    o.var = std::move(v);
    return o;
  }
  static FOperand of_imm(Word w) {
    FOperand o;
    o.kind = Kind::Imm;
    o.imm = w;
    return o;
  }
  bool is_var() const { return kind == Kind::Var; }

  std::string str() const { return is_var() ? var : imm.str(); }
};

struct FStmt;
using FStmtPtr = std::shared_ptr<const FStmt>;

struct FStmt {
  struct Skip {};
  struct Set { std::string dst; FOperand src; };
  struct Bin { std::string dst; BinOp op; FOperand lhs, rhs; };
  struct Load { std::string dst; std::string addr; unsigned width_bytes; };
  struct Store { std::string addr; std::string value; unsigned width_bytes; };
  struct Alloc { uint32_t size_bytes; std::string dst; FStmtPtr body; };
  struct Random { std::string dst; };
  struct Input { std::string dst; };
  struct Output { std::string src; };
  struct If { std::string cond; FStmtPtr then_branch, else_branch; };
  struct While { std::string cond; FStmtPtr body; };
  struct Call { std::vector<std::string> results; std::string callee;
                std::vector<std::string> args; };
  struct Seq { FStmtPtr first, second; };

  std::variant<Skip, Set, Bin, Load, Store, Alloc, Random, Input, Output, If,
               While, Call, Seq>
      node;
};

inline FStmtPtr fskip() { return std::make_shared<FStmt>(FStmt{FStmt::Skip{}}); }
inline FStmtPtr fset(std::string d, FOperand s) {
  return std::make_shared<FStmt>(FStmt{FStmt::Set{std::move(d), std::move(s)}});
}
inline FStmtPtr fbin(std::string d, BinOp op, FOperand a, FOperand b) {
  return std::make_shared<FStmt>(
      FStmt{FStmt::Bin{std::move(d), op, std::move(a), std::move(b)}});
}
inline FStmtPtr fload(std::string d, std::string a, unsigned w) {
  return std::make_shared<FStmt>(FStmt{FStmt::Load{std::move(d), std::move(a), w}});
}
inline FStmtPtr fstore(std::string a, std::string v, unsigned w) {
  return std::make_shared<FStmt>(FStmt{FStmt::Store{std::move(a), std::move(v), w}});
}
inline FStmtPtr falloc(uint32_t n, std::string d, FStmtPtr body) {
  return std::make_shared<FStmt>(
      FStmt{FStmt::Alloc{n, std::move(d), std::move(body)}});
}
inline FStmtPtr frandom(std::string d) {
  return std::make_shared<FStmt>(FStmt{FStmt::Random{std::move(d)}});
}
inline FStmtPtr finput(std::string d) {
  return std::make_shared<FStmt>(FStmt{FStmt::Input{std::move(d)}});
}
inline FStmtPtr foutput(std::string s) {
  return std::make_shared<FStmt>(FStmt{FStmt::Output{std::move(s)}});
}
inline FStmtPtr fif(std::string c, FStmtPtr t, FStmtPtr e) {
  return std::make_shared<FStmt>(
      FStmt{FStmt::If{std::move(c), std::move(t), std::move(e)}});
}
inline FStmtPtr fwhile(std::string c, FStmtPtr b) {
  return std::make_shared<FStmt>(FStmt{FStmt::While{std::move(c), std::move(b)}});
}
inline FStmtPtr fcall(std::vector<std::string> rs, std::string f,
                      std::vector<std::string> as) {
  return std::make_shared<FStmt>(
      FStmt{FStmt::Call{std::move(rs), std::move(f), std::move(as)}});
}
inline FStmtPtr fseq(FStmtPtr a, FStmtPtr b) {
  return std::make_shared<FStmt>(FStmt{FStmt::Seq{std::move(a), std::move(b)}});
}
inline FStmtPtr fseq_of(std::vector<FStmtPtr> stmts) {
  if (stmts.empty()) return fskip();
  FStmtPtr acc = stmts.back();
  for (size_t i = stmts.size() - 1; i-- > 0;) acc = fseq(stmts[i], acc);
  return acc;
}

struct FFnDef {
  std::string name;
  std::vector<std::string> params;
  std::vector<std::string> returns;
  FStmtPtr body;
};

struct FlatProgram {
  std::vector<FFnDef> functions;
  std::string entry;
  unsigned word_bits = 32;

  const FFnDef* find(const std::string& name) const {
    for (const auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }
};

// Flat programs execute through the source interpreter via this embedding;
// operand evaluation leaks nothing, so the flat semantics coincide with the
// source semantics of the embedded program.
inline ExprPtr embed_operand(const FOperand& o) {
  return o.is_var() ? var(o.var) : lit(o.imm);
}

inline StmtPtr embed_stmt(const FStmt& s) {
  if (std::holds_alternative<FStmt::Skip>(s.node)) return skip();
  if (auto* x = std::get_if<FStmt::Set>(&s.node))
    return assign(x->dst, embed_operand(x->src));
  if (auto* x = std::get_if<FStmt::Bin>(&s.node))
    return assign(x->dst,
                  bin(x->op, embed_operand(x->lhs), embed_operand(x->rhs)));
  if (auto* x = std::get_if<FStmt::Load>(&s.node))
    return load(x->dst, var(x->addr), x->width_bytes);
  if (auto* x = std::get_if<FStmt::Store>(&s.node))
    return store(var(x->addr), var(x->value), x->width_bytes);
  if (auto* x = std::get_if<FStmt::Alloc>(&s.node))
    return stackalloc(x->size_bytes, x->dst, embed_stmt(*x->body));
  if (auto* x = std::get_if<FStmt::Random>(&s.node)) return random_stmt(x->dst);
  if (auto* x = std::get_if<FStmt::Input>(&s.node)) return input_stmt(x->dst);
  if (auto* x = std::get_if<FStmt::Output>(&s.node))
    return output_stmt(var(x->src));
  if (auto* x = std::get_if<FStmt::If>(&s.node))
    return if_stmt(var(x->cond), embed_stmt(*x->then_branch),
                   embed_stmt(*x->else_branch));
  if (auto* x = std::get_if<FStmt::While>(&s.node))
    return while_stmt(var(x->cond), embed_stmt(*x->body));
  if (auto* x = std::get_if<FStmt::Call>(&s.node)) {
    std::vector<ExprPtr> args;
    for (const auto& a : x->args) args.push_back(var(a));
    return call_stmt(x->results, x->callee, std::move(args));
  }
  const auto& q = std::get<FStmt::Seq>(s.node);
  return seq(embed_stmt(*q.first), embed_stmt(*q.second));
}

inline Program embed(const FlatProgram& fp) {
  Program p;
  p.entry = fp.entry;
  p.word_bits = fp.word_bits;
  for (const auto& f : fp.functions)
    p.functions.push_back({f.name, f.params, f.returns, embed_stmt(*f.body)});
  return p;
}

// ---- listing / JSON ----

namespace detail {

inline void print_fstmt(std::ostream& os, const FStmt& s, int indent,
                        unsigned word_bits) {
  std::string pad(size_t(indent) * 2, ' ');
  unsigned wb = word_bits / 8;
  if (std::holds_alternative<FStmt::Skip>(s.node)) {
    os << pad << "skip\n";
  } else if (auto* x = std::get_if<FStmt::Set>(&s.node)) {
    os << pad << x->dst << " = " << x->src.str() << "\n";
  } else if (auto* x = std::get_if<FStmt::Bin>(&s.node)) {
    os << pad << x->dst << " = " << x->lhs.str() << " " << binop_name(x->op)
       << " " << x->rhs.str() << "\n";
  } else if (auto* x = std::get_if<FStmt::Load>(&s.node)) {
    os << pad << x->dst << " = " << (x->width_bytes == wb ? "load " : "load1 ")
       << x->addr << "\n";
  } else if (auto* x = std::get_if<FStmt::Store>(&s.node)) {
    os << pad << (x->width_bytes == wb ? "store " : "store1 ") << x->addr
       << " <- " << x->value << "\n";
  } else if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
    os << pad << "stackalloc " << x->size_bytes << " as " << x->dst << ":\n";
    print_fstmt(os, *x->body, indent + 1, word_bits);
  } else if (auto* x = std::get_if<FStmt::Random>(&s.node)) {
    os << pad << "random as " << x->dst << "\n";
  } else if (auto* x = std::get_if<FStmt::Input>(&s.node)) {
    os << pad << x->dst << " = input\n";
  } else if (auto* x = std::get_if<FStmt::Output>(&s.node)) {
    os << pad << "output " << x->src << "\n";
  } else if (auto* x = std::get_if<FStmt::If>(&s.node)) {
    os << pad << "if " << x->cond << ":\n";
    print_fstmt(os, *x->then_branch, indent + 1, word_bits);
    os << pad << "else:\n";
    print_fstmt(os, *x->else_branch, indent + 1, word_bits);
  } else if (auto* x = std::get_if<FStmt::While>(&s.node)) {
    os << pad << "while " << x->cond << ":\n";
    print_fstmt(os, *x->body, indent + 1, word_bits);
  } else if (auto* x = std::get_if<FStmt::Call>(&s.node)) {
    os << pad;
    for (size_t i = 0; i < x->results.size(); ++i)
      os << (i ? ", " : "") << x->results[i];
    if (!x->results.empty()) os << " = ";
    os << "call " << x->callee << "(";
    for (size_t i = 0; i < x->args.size(); ++i) os << (i ? ", " : "") << x->args[i];
    os << ")\n";
  } else {
    const auto& q = std::get<FStmt::Seq>(s.node);
    print_fstmt(os, *q.first, indent, word_bits);
    print_fstmt(os, *q.second, indent, word_bits);
  }
}

inline nlohmann::json fstmt_json(const FStmt& s) {
  using nlohmann::json;
  auto op_json = [](const FOperand& o) {
    return o.is_var() ? json{{"var", o.var}} : json{{"imm", o.imm.value()}};
  };
  if (std::holds_alternative<FStmt::Skip>(s.node)) return json{{"skip", json::object()}};
  if (auto* x = std::get_if<FStmt::Set>(&s.node))
    return json{{"set", {{"dst", x->dst}, {"src", op_json(x->src)}}}};
  if (auto* x = std::get_if<FStmt::Bin>(&s.node))
    return json{{"bin",
                 {{"dst", x->dst},
                  {"op", binop_name(x->op)},
                  {"lhs", op_json(x->lhs)},
                  {"rhs", op_json(x->rhs)}}}};
  if (auto* x = std::get_if<FStmt::Load>(&s.node))
    return json{{"load", {{"dst", x->dst}, {"addr", x->addr}, {"width", x->width_bytes}}}};
  if (auto* x = std::get_if<FStmt::Store>(&s.node))
    return json{{"store", {{"addr", x->addr}, {"value", x->value}, {"width", x->width_bytes}}}};
  if (auto* x = std::get_if<FStmt::Alloc>(&s.node))
    return json{{"stackalloc",
                 {{"size", x->size_bytes}, {"dst", x->dst}, {"body", fstmt_json(*x->body)}}}};
  if (auto* x = std::get_if<FStmt::Random>(&s.node))
    return json{{"random", {{"dst", x->dst}}}};
  if (auto* x = std::get_if<FStmt::Input>(&s.node))
    return json{{"input", {{"dst", x->dst}}}};
  if (auto* x = std::get_if<FStmt::Output>(&s.node))
    return json{{"output", {{"src", x->src}}}};
  if (auto* x = std::get_if<FStmt::If>(&s.node))
    return json{{"if",
                 {{"cond", x->cond},
                  {"then", fstmt_json(*x->then_branch)},
                  {"else", fstmt_json(*x->else_branch)}}}};
  if (auto* x = std::get_if<FStmt::While>(&s.node))
    return json{{"while", {{"cond", x->cond}, {"body", fstmt_json(*x->body)}}}};
  if (auto* x = std::get_if<FStmt::Call>(&s.node))
    return json{{"call",
                 {{"results", x->results}, {"callee", x->callee}, {"args", x->args}}}};
  const auto& q = std::get<FStmt::Seq>(s.node);
  return json{{"seq", {fstmt_json(*q.first), fstmt_json(*q.second)}}};
}

}  // namespace detail

inline std::string print(const FlatProgram& fp) {
  std::ostringstream os;
  for (const auto& f : fp.functions) {
    os << "fn " << f.name << "(";
    for (size_t i = 0; i < f.params.size(); ++i) os << (i ? ", " : "") << f.params[i];
    os << ")";
    if (!f.returns.empty()) {
      os << " -> (";
      for (size_t i = 0; i < f.returns.size(); ++i)
        os << (i ? ", " : "") << f.returns[i];
      os << ")";
    }
    os << ":\n";
    detail::print_fstmt(os, *f.body, 1, fp.word_bits);
  }
  return os.str();
}

inline nlohmann::json flat_to_json(const FlatProgram& fp) {
  nlohmann::json fns = nlohmann::json::array();
  for (const auto& f : fp.functions)
    fns.push_back({{"name", f.name},
                   {"params", f.params},
                   {"returns", f.returns},
                   {"body", detail::fstmt_json(*f.body)}});
  return {{"entry", fp.entry}, {"word_bits", fp.word_bits}, {"functions", fns}};
}

}  // namespace ctlab
