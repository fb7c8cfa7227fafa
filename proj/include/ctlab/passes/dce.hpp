#pragma once

#include <memory>
#include <set>

#include "ctlab/passes/artifact.hpp"

namespace ctlab {
namespace passes {
namespace dce_detail {

using VarSet = std::set<std::string>;
using DeadSet = std::set<const FStmt*>;

inline void op_uses(const FOperand& o, VarSet& s) {
  if (o.is_var()) s.insert(o.var);
}

// Backward liveness over the structured IR; statements already in `dead`
// are treated as no-ops. Returns live-before.
inline VarSet live(const FStmt& s, VarSet after, const DeadSet& dead) {
  if (dead.count(&s)) return after;
  if (std::holds_alternative<FStmt::Skip>(s.node)) return after;
  if (auto* x = std::get_if<FStmt::Set>(&s.node)) {
    after.erase(x->dst);
    op_uses(x->src, after);
    return after;
  }
  if (auto* x = std::get_if<FStmt::Bin>(&s.node)) {
    after.erase(x->dst);
    op_uses(x->lhs, after);
    op_uses(x->rhs, after);
    return after;
  }
  if (auto* x = std::get_if<FStmt::Load>(&s.node)) {
    after.erase(x->dst);
    after.insert(x->addr);
    return after;
  }
  if (auto* x = std::get_if<FStmt::Store>(&s.node)) {
    after.insert(x->addr);
    after.insert(x->value);
    return after;
  }
  if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
    VarSet b = live(*x->body, std::move(after), dead);
    b.erase(x->dst);
    return b;
  }
  if (auto* x = std::get_if<FStmt::Random>(&s.node)) {
    after.erase(x->dst);
    return after;
  }
  if (auto* x = std::get_if<FStmt::Input>(&s.node)) {
    after.erase(x->dst);
    return after;
  }
  if (auto* x = std::get_if<FStmt::Output>(&s.node)) {
    after.insert(x->src);
    return after;
  }
  if (auto* x = std::get_if<FStmt::If>(&s.node)) {
    VarSet t = live(*x->then_branch, after, dead);
    VarSet e = live(*x->else_branch, after, dead);
    t.insert(e.begin(), e.end());
    t.insert(x->cond);
    return t;
  }
  if (auto* x = std::get_if<FStmt::While>(&s.node)) {
    VarSet cur = after;
    cur.insert(x->cond);
    for (;;) {
      VarSet body = live(*x->body, cur, dead);
      body.insert(after.begin(), after.end());
      body.insert(x->cond);
      if (body == cur) return cur;
      cur = std::move(body);
    }
  }
  if (auto* x = std::get_if<FStmt::Call>(&s.node)) {
    for (const auto& r : x->results) after.erase(r);
    for (const auto& a : x->args) after.insert(a);
    return after;
  }
  const auto& q = std::get<FStmt::Seq>(s.node);
  return live(*q.first, live(*q.second, std::move(after), dead), dead);
}

// Marks newly removable statements. Removing a Load or a division drops its
// leakage; removing a Random drops its nondet event. Allocations, stores,
// calls and I/O always survive.
inline void mark(const FStmt& s, const VarSet& after, DeadSet& dead,
                 bool& changed) {
  auto try_kill = [&](const std::string& dst) {
    if (!dead.count(&s) && !after.count(dst)) {
      dead.insert(&s);
      changed = true;
    }
  };
  if (auto* x = std::get_if<FStmt::Set>(&s.node)) return try_kill(x->dst);
  if (auto* x = std::get_if<FStmt::Bin>(&s.node)) return try_kill(x->dst);
  if (auto* x = std::get_if<FStmt::Load>(&s.node)) return try_kill(x->dst);
  if (auto* x = std::get_if<FStmt::Random>(&s.node)) return try_kill(x->dst);
  if (auto* x = std::get_if<FStmt::Alloc>(&s.node))
    return mark(*x->body, after, dead, changed);
  if (auto* x = std::get_if<FStmt::If>(&s.node)) {
    mark(*x->then_branch, after, dead, changed);
    mark(*x->else_branch, after, dead, changed);
    return;
  }
  if (auto* x = std::get_if<FStmt::While>(&s.node)) {
    VarSet cur = after;
    cur.insert(x->cond);
    for (;;) {
      VarSet body = live(*x->body, cur, dead);
      body.insert(after.begin(), after.end());
      body.insert(x->cond);
      if (body == cur) break;
      cur = std::move(body);
    }
    mark(*x->body, cur, dead, changed);
    return;
  }
  if (auto* x = std::get_if<FStmt::Seq>(&s.node)) {
    VarSet mid = live(*x->second, after, dead);
    mark(*x->first, mid, dead, changed);
    mark(*x->second, after, dead, changed);
    return;
  }
}

inline FStmtPtr rebuild(const FStmtPtr& s, const DeadSet& dead) {
  if (dead.count(s.get())) return fskip();
  if (auto* x = std::get_if<FStmt::Alloc>(&s->node))
    return falloc(x->size_bytes, x->dst, rebuild(x->body, dead));
  if (auto* x = std::get_if<FStmt::If>(&s->node))
    return fif(x->cond, rebuild(x->then_branch, dead),
               rebuild(x->else_branch, dead));
  if (auto* x = std::get_if<FStmt::While>(&s->node))
    return fwhile(x->cond, rebuild(x->body, dead));
  if (auto* x = std::get_if<FStmt::Seq>(&s->node)) {
    FStmtPtr a = rebuild(x->first, dead);
    FStmtPtr b = rebuild(x->second, dead);
    bool askip = std::holds_alternative<FStmt::Skip>(a->node);
    bool bskip = std::holds_alternative<FStmt::Skip>(b->node);
    if (askip && bskip) return fskip();
    if (askip) return b;
    if (bskip) return a;
    return fseq(a, b);
  }
  return s;
}

struct DceMeta {
  std::shared_ptr<const FlatProgram> source;
  DeadSet dead;
  bool survives(const FStmt& s) const { return !dead.count(&s); }
};

// gamma: replay the source program over the source trace, re-emitting only
// surviving statements' leakage.
class DceGamma : public FlatReplayer {
 public:
  DceGamma(const DceMeta& meta, const LeakTrace& k)
      : FlatReplayer(*meta.source, k), meta_(meta), bits_(meta.source->word_bits) {}

  LeakTrace out;

 protected:
  void stmt_bin(const FStmt& s, const FStmt::Bin&, const Word* a,
                const Word* b) override {
    if (a && meta_.survives(s)) {
      out.push_back(leak(*a));
      out.push_back(leak(*b));
    }
  }
  void stmt_load(const FStmt& s, const FStmt::Load&, Word addr) override {
    if (meta_.survives(s)) out.push_back(leak(addr));
  }
  void stmt_store(const FStmt&, const FStmt::Store&, Word addr) override {
    out.push_back(leak(addr));
  }
  void enter_alloc(const FStmt&, const FStmt::Alloc&, Word base) override {
    out.push_back(nondet(base));
  }
  void stmt_random(const FStmt& s, const FStmt::Random&, Word v) override {
    if (meta_.survives(s)) out.push_back(nondet(v));
  }
  void on_branch(const FStmt&, bool taken, bool) override {
    out.push_back(leak(Word::of(taken ? 1 : 0, bits_)));
  }

 private:
  const DceMeta& meta_;
  unsigned bits_;
};

struct StopWalk {};

// predictor transform: simulate the source program forward, learning source
// events from the high-level predictor and matching surviving events against
// the queried target prefix.
class DcePredict {
 public:
  DcePredict(std::shared_ptr<const DceMeta> meta, Predictor ph,
             const LeakTrace& kl)
      : meta_(std::move(meta)), ph_(std::move(ph)), kl_(kl),
        bits_(meta_->source->word_bits) {}

  PredictorOut run() {
    const FFnDef* entry = meta_->source->find(meta_->source->entry);
    if (!entry) return PredictorOut::end();
    try {
      walk(*entry->body);
    } catch (StopWalk&) {
      return result_;
    }
    return PredictorOut::end();
  }

 private:
  [[noreturn]] void stop(PredictorOut r) {
    result_ = r;
    throw StopWalk{};
  }

  void spend() {
    if (fuel_-- == 0) stop(PredictorOut::end());
  }

  // next source event per the high-level predictor
  Word expect_leak() {
    PredictorOut q = ph_(kh_);
    if (!q.is_leak()) stop(PredictorOut::end());
    return q.value;
  }
  void expect_branch() {
    if (!ph_(kh_).is_branch()) stop(PredictorOut::end());
  }

  // a surviving Leak event: appears in the target trace
  void target_leak(Word w) {
    if (pos_ == kl_.size()) stop(PredictorOut::leak(w));
    if (!(kl_[pos_] == leak(w))) stop(PredictorOut::end());
    ++pos_;
  }
  // a surviving CompNonDet event: its payload comes from the target prefix
  Word target_nondet() {
    if (pos_ == kl_.size()) stop(PredictorOut::branch());
    if (kl_[pos_].kind != LeakKind::CompNonDet) stop(PredictorOut::end());
    return kl_[pos_++].value;
  }

  void walk(const FStmt& s) {
    spend();
    if (auto* x = std::get_if<FStmt::Bin>(&s.node)) {
      if (x->op != BinOp::Divu && x->op != BinOp::Remu) return;
      bool alive = meta_->survives(s);
      for (int i = 0; i < 2; ++i) {
        Word w = expect_leak();
        if (alive) target_leak(w);
        kh_.push_back(leak(w));
      }
      return;
    }
    if (std::holds_alternative<FStmt::Load>(s.node) ||
        std::holds_alternative<FStmt::Store>(s.node)) {
      Word w = expect_leak();
      if (meta_->survives(s)) target_leak(w);
      kh_.push_back(leak(w));
      return;
    }
    if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
      expect_branch();
      Word a = target_nondet();  // allocations always survive
      kh_.push_back(nondet(a));
      walk(*x->body);
      return;
    }
    if (std::holds_alternative<FStmt::Random>(s.node)) {
      expect_branch();
      if (meta_->survives(s)) {
        Word w = target_nondet();
        kh_.push_back(nondet(w));
      } else {
        // the continuation is independent of the eliminated draw; any
        // payload extends to a predicted source trace
        kh_.push_back(nondet(Word::of(0, bits_)));
      }
      return;
    }
    if (auto* x = std::get_if<FStmt::If>(&s.node)) {
      Word b = expect_leak();
      target_leak(b);
      kh_.push_back(leak(b));
      walk(b.truthy() ? *x->then_branch : *x->else_branch);
      return;
    }
    if (auto* x = std::get_if<FStmt::While>(&s.node)) {
      for (;;) {
        spend();
        Word b = expect_leak();
        target_leak(b);
        kh_.push_back(leak(b));
        if (!b.truthy()) return;
        walk(*x->body);
      }
    }
    if (auto* x = std::get_if<FStmt::Call>(&s.node)) {
      const FFnDef* callee = meta_->source->find(x->callee);
      if (!callee) stop(PredictorOut::end());
      walk(*callee->body);
      return;
    }
    if (auto* x = std::get_if<FStmt::Seq>(&s.node)) {
      walk(*x->first);
      walk(*x->second);
      return;
    }
    // Skip/Set/Input/Output and non-div Bin leak nothing
  }

  std::shared_ptr<const DceMeta> meta_;
  Predictor ph_;
  const LeakTrace& kl_;
  unsigned bits_;
  LeakTrace kh_;
  size_t pos_ = 0;
  uint64_t fuel_ = 100000;
  PredictorOut result_ = PredictorOut::end();
};

}  // namespace dce_detail
}  // namespace passes

// Conservative dead-code elimination: assignments, loads and random draws
// whose targets are never used afterwards are removed, together with their
// leakage and nondet events.
inline PassArtifact dead_code_elim(const FlatProgram& p) {
  using namespace passes::dce_detail;
  auto meta = std::make_shared<DceMeta>();
  meta->source = std::make_shared<FlatProgram>(p);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& f : meta->source->functions) {
      VarSet at_end(f.returns.begin(), f.returns.end());
      mark(*f.body, at_end, meta->dead, changed);
    }
  }
  FlatProgram out;
  out.entry = p.entry;
  out.word_bits = p.word_bits;
  for (const auto& f : meta->source->functions)
    out.functions.push_back(
        {f.name, f.params, f.returns, rebuild(f.body, meta->dead)});

  PassArtifact art;
  art.name = "dead_code_elim";
  art.target = std::move(out);
  art.gamma = [meta](const LeakTrace& k, const LowContext&) {
    DceGamma g(*meta, k);
    g.run_full();
    return g.out;
  };
  art.oracle_transform = [meta](const Oracle& low) {
    return Oracle::derived(
        [meta, low](const LeakTrace& k1) {
          DceGamma g(*meta, k1);
          g.run_prefix();
          const FStmt* at = g.pending();
          if (!at) throw ReplayError("oracle query does not end at a choice");
          if (std::holds_alternative<FStmt::Alloc>(at->node))
            return low.query(g.out);
          if (std::holds_alternative<FStmt::Random>(at->node)) {
            if (meta->survives(*at)) return low.query(g.out);
            return Word::of(0, meta->source->word_bits);  // eliminated draw
          }
          throw ReplayError("oracle query does not end at a choice");
        },
        "dce");
  };
  art.predictor_transform = [meta](const Predictor& ph) {
    return Predictor::derived(
        [meta, ph](const LeakTrace& kl) {
          return passes::dce_detail::DcePredict(meta, ph, kl).run();
        },
        "dce");
  };
  return art;
}

}  // namespace ctlab
