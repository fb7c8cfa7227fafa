#pragma once

#include "ctlab/passes/artifact.hpp"

namespace ctlab {

namespace passes {
namespace reorder_detail {

inline void flatten_seq(const StmtPtr& s, std::vector<StmtPtr>& out) {
  if (auto* q = std::get_if<Stmt::Seq>(&s->node)) {
    flatten_seq(q->first, out);
    flatten_seq(q->second, out);
  } else {
    out.push_back(s);
  }
}

inline bool expr_mentions(const Expr& e, const std::string& name) {
  if (auto* v = std::get_if<Expr::Var>(&e.node)) return v->name == name;
  if (auto* b = std::get_if<Expr::Bin>(&e.node))
    return expr_mentions(*b->lhs, name) || expr_mentions(*b->rhs, name);
  return false;
}

}  // namespace reorder_detail
}  // namespace passes

// The reordering demonstration: { random as x; z = load(w); output(x) }
// becomes { z = load(w); random as x; output(x) }. The pass admits leakage-
// and predictor-transformation functions but no oracle-transformation
// function (the separating example for the two compiler contracts).
inline PassArtifact reorder_random(const Program& p) {
  using namespace passes::reorder_detail;
  const FnDef* entry = p.find(p.entry);
  if (!entry) throw PatternMismatch("no entry function");
  std::vector<StmtPtr> stmts;
  flatten_seq(entry->body, stmts);
  if (stmts.size() != 3) throw PatternMismatch("expected exactly 3 statements");
  auto* rnd = std::get_if<Stmt::Random>(&stmts[0]->node);
  auto* ld = std::get_if<Stmt::Load>(&stmts[1]->node);
  auto* outp = std::get_if<Stmt::Output>(&stmts[2]->node);
  if (!rnd || !ld || !outp)
    throw PatternMismatch("expected random; load; output");
  if (expr_mentions(*ld->addr, rnd->name))
    throw PatternMismatch("load must be independent of the random draw");
  auto* ov = std::get_if<Expr::Var>(&outp->value->node);
  if (!ov || ov->name != rnd->name)
    throw PatternMismatch("output must print the random draw");

  Program q = p;
  for (auto& f : q.functions)
    if (f.name == q.entry) f.body = seq(stmts[1], seq(stmts[0], stmts[2]));

  unsigned bits = p.word_bits;
  PassArtifact art;
  art.name = "reorder_random";
  art.target = std::move(q);
  // [CompNonDet x, Leak w]  |->  [Leak w, CompNonDet x]
  art.gamma = [](const LeakTrace& k, const LowContext&) {
    if (k.size() != 2 || k[0].kind != LeakKind::CompNonDet ||
        k[1].kind != LeakKind::Leak)
      throw ReplayError("not a source trace of the reorder pattern");
    return LeakTrace{k[1], k[0]};
  };
  art.oracle_transform = std::nullopt;
  art.predictor_transform = [bits](const Predictor& ph) {
    return Predictor::derived(
        [ph, bits](const LeakTrace& k) {
          if (k.empty()) {
            // the leaked address is independent of the branch, so probing
            // the source predictor past an arbitrary draw is sound
            PredictorOut q = ph(LeakTrace{nondet(Word::of(0, bits))});
            return q.is_leak() ? q : PredictorOut::end();
          }
          if (k.size() == 1 && k[0].kind == LeakKind::Leak)
            return PredictorOut::branch();
          if (k.size() == 2 && k[0].kind == LeakKind::Leak &&
              k[1].kind == LeakKind::CompNonDet)
            return PredictorOut::end();
          return PredictorOut::end();
        },
        "reorder");
  };
  return art;
}

}  // namespace ctlab
