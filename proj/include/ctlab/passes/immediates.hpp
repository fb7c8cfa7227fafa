#pragma once

#include <map>

#include "ctlab/passes/artifact.hpp"

namespace ctlab {
namespace passes {

namespace imm_detail {

struct DefInfo {
  int defs = 0;
  bool is_const = false;
  Word value;
};

inline void scan_defs(const FStmt& s, std::map<std::string, DefInfo>& info) {
  auto def = [&](const std::string& d) { info[d].defs++; };
  if (auto* x = std::get_if<FStmt::Set>(&s.node)) {
    auto& di = info[x->dst];
    di.defs++;
    if (!x->src.is_var()) {
      di.is_const = true;
      di.value = x->src.imm;
    }
  } else if (auto* x = std::get_if<FStmt::Bin>(&s.node)) {
    def(x->dst);
  } else if (auto* x = std::get_if<FStmt::Load>(&s.node)) {
    def(x->dst);
  } else if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
    def(x->dst);
    scan_defs(*x->body, info);
  } else if (auto* x = std::get_if<FStmt::Random>(&s.node)) {
    def(x->dst);
  } else if (auto* x = std::get_if<FStmt::Input>(&s.node)) {
    def(x->dst);
  } else if (auto* x = std::get_if<FStmt::If>(&s.node)) {
    scan_defs(*x->then_branch, info);
    scan_defs(*x->else_branch, info);
  } else if (auto* x = std::get_if<FStmt::While>(&s.node)) {
    scan_defs(*x->body, info);
  } else if (auto* x = std::get_if<FStmt::Call>(&s.node)) {
    for (const auto& r : x->results) def(r);
  } else if (auto* x = std::get_if<FStmt::Seq>(&s.node)) {
    scan_defs(*x->first, info);
    scan_defs(*x->second, info);
  }
}

inline FStmtPtr rewrite(const FStmt& s,
                        const std::map<std::string, DefInfo>& info) {
  auto fold = [&](const FOperand& o) {
    if (o.is_var()) {
      auto it = info.find(o.var);
      if (it != info.end() && it->second.defs == 1 && it->second.is_const)
        return FOperand::of_imm(it->second.value);
    }
    return o;
  };
  if (auto* x = std::get_if<FStmt::Set>(&s.node))
    return fset(x->dst, fold(x->src));
  if (auto* x = std::get_if<FStmt::Bin>(&s.node))
    return fbin(x->dst, x->op, fold(x->lhs), fold(x->rhs));
  if (auto* x = std::get_if<FStmt::Alloc>(&s.node))
    return falloc(x->size_bytes, x->dst, rewrite(*x->body, info));
  if (auto* x = std::get_if<FStmt::If>(&s.node))
    return fif(x->cond, rewrite(*x->then_branch, info),
               rewrite(*x->else_branch, info));
  if (auto* x = std::get_if<FStmt::While>(&s.node))
    return fwhile(x->cond, rewrite(*x->body, info));
  if (auto* x = std::get_if<FStmt::Seq>(&s.node))
    return fseq(rewrite(*x->first, info), rewrite(*x->second, info));
  return std::make_shared<FStmt>(s);
}

}  // namespace imm_detail
}  // namespace passes

// Folds variables with a single constant definition into immediate operands
// of Set/Bin statements. Values are unchanged, so leakage is unchanged and
// all transforms are identities. The defining Set survives for dead-code
// elimination to clean up.
inline PassArtifact use_immediates(const FlatProgram& p) {
  FlatProgram out;
  out.entry = p.entry;
  out.word_bits = p.word_bits;
  for (const auto& f : p.functions) {
    std::map<std::string, passes::imm_detail::DefInfo> info;
    passes::imm_detail::scan_defs(*f.body, info);
    for (const auto& prm : f.params) info[prm].defs++;  // params are defs
    out.functions.push_back(
        {f.name, f.params, f.returns, passes::imm_detail::rewrite(*f.body, info)});
  }
  PassArtifact art;
  art.name = "use_immediates";
  art.target = std::move(out);
  art.gamma = [](const LeakTrace& k, const LowContext&) { return k; };
  art.oracle_transform = [](const Oracle& a) { return a; };
  art.predictor_transform = [](const Predictor& pr) { return pr; };
  return art;
}

}  // namespace ctlab
