#pragma once

#include "ctlab/passes/artifact.hpp"

namespace ctlab {
namespace passes {

// Expression flattening into three-address form. Literal operands are
// materialized into temporaries (folded later by use_immediates); statement
// order preserves evaluation order, so the pass is leakage-preserving.
class Flattener {
 public:
  explicit Flattener(unsigned word_bits) : bits_(word_bits) {}

  FlatProgram run(const Program& p) {
    FlatProgram fp;
    fp.entry = p.entry;
    fp.word_bits = p.word_bits;
    for (const auto& f : p.functions) {
      temp_ = 0;
      fp.functions.push_back({f.name, f.params, f.returns, flatten(*f.body)});
    }
    return fp;
  }

 private:
  std::string fresh() { return "t$" + std::to_string(temp_++); }

  std::string to_var(const Expr& e, std::vector<FStmtPtr>& out) {
    if (auto* v = std::get_if<Expr::Var>(&e.node)) return v->name;
    if (auto* l = std::get_if<Expr::Lit>(&e.node)) {
      std::string t = fresh();
      out.push_back(fset(t, FOperand::of_imm(l->value)));
      return t;
    }
    const auto& b = std::get<Expr::Bin>(e.node);
    std::string lv = to_var(*b.lhs, out);
    std::string rv = to_var(*b.rhs, out);
    std::string t = fresh();
    out.push_back(fbin(t, b.op, FOperand::of_var(lv), FOperand::of_var(rv)));
    return t;
  }

  void assign_into(const std::string& dst, const Expr& e,
                   std::vector<FStmtPtr>& out) {
    if (auto* l = std::get_if<Expr::Lit>(&e.node)) {
      out.push_back(fset(dst, FOperand::of_imm(l->value)));
      return;
    }
    if (auto* v = std::get_if<Expr::Var>(&e.node)) {
      out.push_back(fset(dst, FOperand::of_var(v->name)));
      return;
    }
    const auto& b = std::get<Expr::Bin>(e.node);
    std::string lv = to_var(*b.lhs, out);
    std::string rv = to_var(*b.rhs, out);
    out.push_back(fbin(dst, b.op, FOperand::of_var(lv), FOperand::of_var(rv)));
  }

  FStmtPtr flatten(const Stmt& s) {
    std::vector<FStmtPtr> out;
    flatten_into(s, out);
    return fseq_of(std::move(out));
  }

  void flatten_into(const Stmt& s, std::vector<FStmtPtr>& out) {
    if (std::holds_alternative<Stmt::Skip>(s.node)) return;
    if (auto* x = std::get_if<Stmt::Assign>(&s.node)) {
      assign_into(x->target, *x->value, out);
      return;
    }
    if (auto* x = std::get_if<Stmt::Load>(&s.node)) {
      std::string a = to_var(*x->addr, out);
      out.push_back(fload(x->target, a, x->width_bytes));
      return;
    }
    if (auto* x = std::get_if<Stmt::Store>(&s.node)) {
      // value evaluates before the address, matching the source semantics
      std::string v = to_var(*x->value, out);
      std::string a = to_var(*x->addr, out);
      out.push_back(fstore(a, v, x->width_bytes));
      return;
    }
    if (auto* x = std::get_if<Stmt::StackAlloc>(&s.node)) {
      out.push_back(falloc(x->size_bytes, x->name, flatten(*x->body)));
      return;
    }
    if (auto* x = std::get_if<Stmt::Random>(&s.node)) {
      out.push_back(frandom(x->name));
      return;
    }
    if (auto* x = std::get_if<Stmt::Input>(&s.node)) {
      out.push_back(finput(x->target));
      return;
    }
    if (auto* x = std::get_if<Stmt::Output>(&s.node)) {
      out.push_back(foutput(to_var(*x->value, out)));
      return;
    }
    if (auto* x = std::get_if<Stmt::If>(&s.node)) {
      std::string c = to_var(*x->cond, out);
      out.push_back(fif(c, flatten(*x->then_branch), flatten(*x->else_branch)));
      return;
    }
    if (auto* x = std::get_if<Stmt::While>(&s.node)) {
      // cond computation runs before the loop and again at the end of the
      // body, so the flat While tests a plain variable
      std::vector<FStmtPtr> cond_stmts;
      std::string c;
      if (auto* v = std::get_if<Expr::Var>(&x->cond->node)) {
        c = v->name;
      } else {
        c = to_var(*x->cond, cond_stmts);
      }
      for (const auto& cs : cond_stmts) out.push_back(cs);
      std::vector<FStmtPtr> body;
      flatten_into(*x->body, body);
      for (const auto& cs : cond_stmts) body.push_back(cs);
      out.push_back(fwhile(c, fseq_of(std::move(body))));
      return;
    }
    if (auto* x = std::get_if<Stmt::Call>(&s.node)) {
      std::vector<std::string> args;
      for (const auto& a : x->args) args.push_back(to_var(*a, out));
      out.push_back(fcall(x->results, x->callee, std::move(args)));
      return;
    }
    const auto& q = std::get<Stmt::Seq>(s.node);
    flatten_into(*q.first, out);
    flatten_into(*q.second, out);
  }

  unsigned bits_;
  int temp_ = 0;
};

}  // namespace passes

// Flattening is leakage-preserving; all three transformation functions are
// identities.
inline PassArtifact flatten(const Program& p) {
  PassArtifact art;
  art.name = "flatten";
  art.target = passes::Flattener(p.word_bits).run(p);
  art.gamma = [](const LeakTrace& k, const LowContext&) { return k; };
  art.oracle_transform = [](const Oracle& a) { return a; };
  art.predictor_transform = [](const Predictor& p) { return p; };
  return art;
}

}  // namespace ctlab
