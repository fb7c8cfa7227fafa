#pragma once

#include <algorithm>
#include <map>
#include <memory>

#include "ctlab/passes/artifact.hpp"

namespace ctlab {
namespace passes {
namespace frame_detail {

constexpr const char* kFpVar = "fp$";

struct FnFrame {
  uint32_t total = 0;
  std::map<const FStmt*, uint32_t> offsets;  // source Alloc node -> offset
};

struct FrameMeta {
  std::shared_ptr<const FlatProgram> source;
  std::map<std::string, FnFrame> frames;
  bool any_random = false;

  const FnFrame& frame_of(const std::string& fn) const {
    return frames.at(fn);
  }
  uint32_t frame_of_stmt(const FStmt& s) const {
    for (const auto& [_, fi] : frames) {
      auto it = fi.offsets.find(&s);
      if (it != fi.offsets.end()) return it->second;
    }
    throw ReplayError("unknown allocation node");
  }
};

// Offsets by syntactic pre-order position: sequences sum, branches overlay
// (max), loop bodies reuse their offsets each iteration.
inline uint32_t assign_offsets(const FStmt& s, uint32_t base, FnFrame& fi) {
  if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
    fi.offsets[&s] = base;
    return x->size_bytes + assign_offsets(*x->body, base + x->size_bytes, fi);
  }
  if (auto* x = std::get_if<FStmt::If>(&s.node)) {
    uint32_t t = assign_offsets(*x->then_branch, base, fi);
    uint32_t e = assign_offsets(*x->else_branch, base, fi);
    return std::max(t, e);
  }
  if (auto* x = std::get_if<FStmt::While>(&s.node))
    return assign_offsets(*x->body, base, fi);
  if (auto* x = std::get_if<FStmt::Seq>(&s.node)) {
    uint32_t a = assign_offsets(*x->first, base, fi);
    return a + assign_offsets(*x->second, base + a, fi);
  }
  return 0;
}

inline FStmtPtr rewrite(const FStmtPtr& s, const FnFrame& fi, unsigned bits) {
  if (auto* x = std::get_if<FStmt::Alloc>(&s->node)) {
    uint32_t off = fi.offsets.at(s.get());
    FStmtPtr addr = fbin(x->dst, BinOp::Add, FOperand::of_var(kFpVar),
                         FOperand::of_imm(Word::of(off, bits)));
    return fseq(addr, rewrite(x->body, fi, bits));
  }
  if (auto* x = std::get_if<FStmt::If>(&s->node))
    return fif(x->cond, rewrite(x->then_branch, fi, bits),
               rewrite(x->else_branch, fi, bits));
  if (auto* x = std::get_if<FStmt::While>(&s->node))
    return fwhile(x->cond, rewrite(x->body, fi, bits));
  if (auto* x = std::get_if<FStmt::Seq>(&s->node))
    return fseq(rewrite(x->first, fi, bits), rewrite(x->second, fi, bits));
  return s;
}

inline bool has_random(const FStmt& s) {
  if (std::holds_alternative<FStmt::Random>(s.node)) return true;
  if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) return has_random(*x->body);
  if (auto* x = std::get_if<FStmt::If>(&s.node))
    return has_random(*x->then_branch) || has_random(*x->else_branch);
  if (auto* x = std::get_if<FStmt::While>(&s.node)) return has_random(*x->body);
  if (auto* x = std::get_if<FStmt::Seq>(&s.node))
    return has_random(*x->first) || has_random(*x->second);
  return false;
}

// gamma: the low oracle resolves each function's frame pointer; source
// allocation events are consumed without emission and their region
// addresses are rewritten onto the frame.
class FrameGamma : public FlatReplayer {
 public:
  FrameGamma(const FrameMeta& meta, const LeakTrace& k, const Oracle* low)
      : FlatReplayer(*meta.source, k), meta_(meta), low_(low),
        bits_(meta.source->word_bits) {}

  LeakTrace out;

  Word current_fp() const {
    if (fns_.empty() || !fns_.back().has_frame)
      throw ReplayError("allocation outside any frame");
    return fns_.back().fp;
  }

 protected:
  struct FnCtx {
    bool has_frame;
    Word fp;
  };
  struct Region {
    uint32_t src_base;
    uint32_t size;
    uint32_t tgt_base;
  };

  void enter_function(const FFnDef& fn, bool) override {
    const FnFrame& fi = meta_.frame_of(fn.name);
    FnCtx ctx{fi.total > 0, Word()};
    if (ctx.has_frame) {
      if (!low_) throw ReplayError("frame gamma needs a low oracle");
      ctx.fp = low_->query(out);
      out.push_back(nondet(ctx.fp));
    }
    fns_.push_back(ctx);
  }
  void exit_function(const FFnDef&, bool) override { fns_.pop_back(); }

  void enter_alloc(const FStmt& s, const FStmt::Alloc& a, Word base) override {
    uint32_t off = meta_.frame_of_stmt(s);
    regions_.push_back({base.value(), a.size_bytes,
                        current_fp().value() + off});
  }
  void exit_alloc(const FStmt&, const FStmt::Alloc&, Word) override {
    regions_.pop_back();
  }

  Word remap(Word addr) const {
    for (auto it = regions_.rbegin(); it != regions_.rend(); ++it)
      if (addr.value() >= it->src_base && addr.value() < it->src_base + it->size)
        return Word::of(it->tgt_base + (addr.value() - it->src_base), bits_);
    return addr;
  }

  void stmt_bin(const FStmt&, const FStmt::Bin&, const Word* a,
                const Word* b) override {
    if (a) {
      out.push_back(leak(*a));
      out.push_back(leak(*b));
    }
  }
  void stmt_load(const FStmt&, const FStmt::Load&, Word addr) override {
    out.push_back(leak(remap(addr)));
  }
  void stmt_store(const FStmt&, const FStmt::Store&, Word addr) override {
    out.push_back(leak(remap(addr)));
  }
  void stmt_random(const FStmt&, const FStmt::Random&, Word) override {
    // randoms stay in the target; the payload is the low oracle's answer at
    // this point, independent of the source draw
    if (!low_) throw ReplayError("frame gamma needs a low oracle");
    out.push_back(nondet(low_->query(out)));
  }
  void on_branch(const FStmt&, bool taken, bool) override {
    out.push_back(leak(Word::of(taken ? 1 : 0, bits_)));
  }

  const FrameMeta& meta_;
  const Oracle* low_;
  unsigned bits_;
  std::vector<FnCtx> fns_;
  std::vector<Region> regions_;
};

struct StopWalk {};

// predictor transform: walk the source forward under the high-level
// predictor, instantiating each source allocation at its frame slot, so the
// simulated source events coincide with the target events.
class FramePredict {
 public:
  FramePredict(std::shared_ptr<const FrameMeta> meta, Predictor ph,
               const LeakTrace& kl)
      : meta_(std::move(meta)), ph_(std::move(ph)), kl_(kl),
        bits_(meta_->source->word_bits) {}

  PredictorOut run() {
    const FFnDef* entry = meta_->source->find(meta_->source->entry);
    if (!entry) return PredictorOut::end();
    try {
      enter_fn(*entry);
      walk(*entry->body);
      exit_fn();
    } catch (StopWalk&) {
      return result_;
    }
    return PredictorOut::end();
  }

 private:
  struct FnCtx {
    bool has_frame;
    Word fp;
  };

  [[noreturn]] void stop(PredictorOut r) {
    result_ = r;
    throw StopWalk{};
  }
  void spend() {
    if (fuel_-- == 0) stop(PredictorOut::end());
  }

  Word expect_leak() {
    PredictorOut q = ph_(kh_);
    if (!q.is_leak()) stop(PredictorOut::end());
    return q.value;
  }
  void expect_branch() {
    if (!ph_(kh_).is_branch()) stop(PredictorOut::end());
  }

  void target_leak(Word w) {
    if (pos_ == kl_.size()) stop(PredictorOut::leak(w));
    if (!(kl_[pos_] == leak(w))) stop(PredictorOut::end());
    ++pos_;
  }
  Word target_nondet() {
    if (pos_ == kl_.size()) stop(PredictorOut::branch());
    if (kl_[pos_].kind != LeakKind::CompNonDet) stop(PredictorOut::end());
    return kl_[pos_++].value;
  }

  void enter_fn(const FFnDef& fn) {
    const FnFrame& fi = meta_->frame_of(fn.name);
    FnCtx ctx{fi.total > 0, Word()};
    if (ctx.has_frame) ctx.fp = target_nondet();  // the frame event
    fns_.push_back(ctx);
  }
  void exit_fn() { fns_.pop_back(); }

  void walk(const FStmt& s) {
    spend();
    if (auto* x = std::get_if<FStmt::Bin>(&s.node)) {
      if (x->op != BinOp::Divu && x->op != BinOp::Remu) return;
      for (int i = 0; i < 2; ++i) {
        Word w = expect_leak();
        target_leak(w);
        kh_.push_back(leak(w));
      }
      return;
    }
    if (std::holds_alternative<FStmt::Load>(s.node) ||
        std::holds_alternative<FStmt::Store>(s.node)) {
      // the instantiated source run places regions at their frame slots, so
      // the address predicted by P_H is already the target address
      Word w = expect_leak();
      target_leak(w);
      kh_.push_back(leak(w));
      return;
    }
    if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
      expect_branch();
      uint32_t off = meta_->frame_of_stmt(s);
      if (fns_.empty() || !fns_.back().has_frame) stop(PredictorOut::end());
      Word a = Word::of(fns_.back().fp.value() + off, bits_);
      kh_.push_back(nondet(a));  // no target event for the allocation itself
      walk(*x->body);
      return;
    }
    if (std::holds_alternative<FStmt::Random>(s.node)) {
      expect_branch();
      Word w = target_nondet();  // randoms survive unchanged
      kh_.push_back(nondet(w));
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
      enter_fn(*callee);
      walk(*callee->body);
      exit_fn();
      return;
    }
    if (auto* x = std::get_if<FStmt::Seq>(&s.node)) {
      walk(*x->first);
      walk(*x->second);
      return;
    }
  }

  std::shared_ptr<const FrameMeta> meta_;
  Predictor ph_;
  const LeakTrace& kl_;
  unsigned bits_;
  LeakTrace kh_;
  size_t pos_ = 0;
  uint64_t fuel_ = 100000;
  PredictorOut result_ = PredictorOut::end();
  std::vector<FnCtx> fns_;
};

}  // namespace frame_detail
}  // namespace passes

// Hoists every stack allocation of a function into one entry allocation of
// the summed (max over branches) size; each original allocation becomes
// frame pointer + static offset. Functions without allocations get no frame.
inline PassArtifact frame_alloc(const FlatProgram& p) {
  using namespace passes::frame_detail;
  auto meta = std::make_shared<FrameMeta>();
  meta->source = std::make_shared<FlatProgram>(p);

  FlatProgram out;
  out.entry = p.entry;
  out.word_bits = p.word_bits;
  for (const auto& f : meta->source->functions) {
    FnFrame fi;
    fi.total = assign_offsets(*f.body, 0, fi);
    meta->any_random = meta->any_random || has_random(*f.body);
    FStmtPtr body = rewrite(f.body, fi, p.word_bits);
    if (fi.total > 0) body = falloc(fi.total, kFpVar, body);
    out.functions.push_back({f.name, f.params, f.returns, body});
    meta->frames[f.name] = std::move(fi);
  }

  bool needs_oracle =
      meta->any_random ||
      std::any_of(meta->frames.begin(), meta->frames.end(),
                  [](const auto& kv) { return kv.second.total > 0; });

  PassArtifact art;
  art.name = "frame_alloc";
  art.target = std::move(out);
  if (needs_oracle) art.schema = {"low_oracle"};
  art.gamma = [meta](const LeakTrace& k, const LowContext& ctx) {
    const Oracle* low = ctx.low_oracle ? &*ctx.low_oracle : nullptr;
    FrameGamma g(*meta, k, low);
    g.run_full();
    return g.out;
  };
  art.oracle_transform = [meta](const Oracle& low) {
    return Oracle::derived(
        [meta, low](const LeakTrace& k1) {
          FrameGamma g(*meta, k1, &low);
          g.run_prefix();
          const FStmt* at = g.pending();
          if (at && std::holds_alternative<FStmt::Alloc>(at->node))
            return Word::of(g.current_fp().value() + meta->frame_of_stmt(*at),
                            meta->source->word_bits);
          if (at && std::holds_alternative<FStmt::Random>(at->node))
            return low.query(g.out);
          throw ReplayError("oracle query does not end at a choice");
        },
        "frame_alloc");
  };
  art.predictor_transform = [meta](const Predictor& ph) {
    return Predictor::derived(
        [meta, ph](const LeakTrace& kl) {
          return passes::frame_detail::FramePredict(meta, ph, kl).run();
        },
        "frame_alloc");
  };
  return art;
}

}  // namespace ctlab
