#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>

#include "ctlab/passes/artifact.hpp"

namespace ctlab {

struct CodeLayout {
  uint32_t code_base = 0x1000;
  uint32_t sp0 = 0x4000;
};

namespace passes {
namespace cg_detail {

constexpr uint8_t kRegZero = 0, kRegRa = 1, kRegSp = 2;
constexpr uint8_t kScratch0 = 5, kScratch1 = 6;
constexpr uint8_t kArg0 = 10;  // a0..a7 = x10..x17
inline const std::vector<uint8_t>& var_pool() {
  static const std::vector<uint8_t> pool = {8,  9,  18, 19, 20, 21, 22, 23,
                                            24, 25, 26, 27, 28, 29, 30, 31};
  return pool;
}

// Why an instruction exists; the trace-guided replay uses this to decide
// which instructions consume source events.
enum class Origin : uint8_t {
  Plain, FrameAddi, SrcLoad, SrcStore, SrcDiv, SrcBranch, Save, Restore
};

struct CgMeta {
  std::shared_ptr<const FlatProgram> source;  // post-frame_alloc form
  MachineProgram prog;
  std::map<uint32_t, Origin> origin;
};

struct FnInfo {
  std::map<std::string, uint8_t> reg;  // variable -> register
  std::vector<uint8_t> used_regs;      // in allocation order
  uint32_t frame_bytes = 0;            // entry allocation size
  bool makes_calls = false;
  uint32_t need = 0;                   // frame + save area
  uint32_t off = 0;                    // stack band top (sp-relative)
  int label = -1;
};

class CodeGenerator {
 public:
  CodeGenerator(const FlatProgram& p, const CodeLayout& layout)
      : p_(p), layout_(layout) {
    if (p.word_bits != 32)
      throw CompileError("codegen supports 32-bit words only");
  }

  CgMeta run() {
    analyze();
    for (const auto& f : p_.functions) compile_fn(f);
    CgMeta meta;
    meta.source = std::make_shared<FlatProgram>(p_);
    meta.prog.entry = layout_.code_base + 4 * uint32_t(label_at(fns_.at(p_.entry).label));
    meta.prog.sp0 = layout_.sp0;
    meta.prog.word_bits = p_.word_bits;
    meta.prog.stack_bytes = stack_total_;
    for (const auto& [name, fi] : fns_)
      meta.prog.fn_positions[name] = layout_.code_base + 4 * uint32_t(label_at(fi.label));
    for (size_t i = 0; i < instrs_.size(); ++i) {
      uint32_t pos = layout_.code_base + 4 * uint32_t(i);
      Instr in = instrs_[i];
      if (fixup_.count(i)) {
        size_t target = label_at(fixup_.at(i));
        in.imm = int32_t(4 * (int64_t(target) - int64_t(i)));
      }
      meta.prog.code[pos] = in;
      meta.origin[pos] = origins_[i];
    }
    return meta;
  }

 private:
  size_t label_at(int label) const { return labels_.at(label); }

  void analyze() {
    // per-function register map, frame shape, save-area need
    for (const auto& f : p_.functions) {
      FnInfo fi;
      fi.label = next_label_++;
      std::vector<std::string> vars = function_vars(f);
      if (vars.size() > var_pool().size())
        throw CompileError("function " + f.name + " needs more than " +
                           std::to_string(var_pool().size()) + " registers");
      for (size_t i = 0; i < vars.size(); ++i) {
        fi.reg[vars[i]] = var_pool()[i];
        fi.used_regs.push_back(var_pool()[i]);
      }
      if (f.params.size() > 8 || f.returns.size() > 8)
        throw CompileError("more than 8 parameters or returns in " + f.name);
      shape_check(*f.body, true, fi);
      fi.need = fi.frame_bytes +
                (fi.makes_calls ? 4u * uint32_t(1 + fi.used_regs.size()) : 0u);
      fns_[f.name] = fi;
    }
    // stack bands: callees sit directly below their deepest caller
    stack_total_ = chain_need(p_.entry, 0);
    fns_.at(p_.entry).off = stack_total_;
    assign_offsets_from(p_.entry);
  }

  uint32_t chain_need(const std::string& fn, int depth) {
    if (depth > 64) throw CompileError("recursion is not supported");
    const FFnDef* f = p_.find(fn);
    if (!f) throw CompileError("call to undefined function " + fn);
    uint32_t deepest = 0;
    for (const auto& callee : callees(*f->body))
      deepest = std::max(deepest, chain_need(callee, depth + 1));
    return fns_.at(fn).need + deepest;
  }

  void assign_offsets_from(const std::string& fn) {
    const FFnDef* f = p_.find(fn);
    FnInfo& fi = fns_.at(fn);
    for (const auto& callee : callees(*f->body)) {
      FnInfo& ci = fns_.at(callee);
      uint32_t off = fi.off - fi.need;
      if (ci.off == 0 || off < ci.off) {
        ci.off = off;
        assign_offsets_from(callee);
      }
    }
  }

  std::vector<std::string> callees(const FStmt& s) const {
    std::vector<std::string> out;
    std::function<void(const FStmt&)> go = [&](const FStmt& x) {
      if (auto* c = std::get_if<FStmt::Call>(&x.node)) out.push_back(c->callee);
      if (auto* a = std::get_if<FStmt::Alloc>(&x.node)) go(*a->body);
      if (auto* i = std::get_if<FStmt::If>(&x.node)) {
        go(*i->then_branch);
        go(*i->else_branch);
      }
      if (auto* w = std::get_if<FStmt::While>(&x.node)) go(*w->body);
      if (auto* q = std::get_if<FStmt::Seq>(&x.node)) {
        go(*q->first);
        go(*q->second);
      }
    };
    go(s);
    return out;
  }

  // codegen expects frame_alloc form: at most one allocation, at the
  // function entry; random draws cannot be compiled to the deterministic
  // machine.
  void shape_check(const FStmt& s, bool at_entry, FnInfo& fi) {
    if (auto* a = std::get_if<FStmt::Alloc>(&s.node)) {
      if (!at_entry || fi.frame_bytes != 0)
        throw CompileError("stackalloc not in frame_alloc entry form");
      fi.frame_bytes = a->size_bytes;
      shape_check(*a->body, false, fi);
      return;
    }
    if (std::holds_alternative<FStmt::Random>(s.node))
      throw CompileError("random draws cannot be compiled to machine code");
    if (std::holds_alternative<FStmt::Call>(s.node)) fi.makes_calls = true;
    if (auto* i = std::get_if<FStmt::If>(&s.node)) {
      shape_check(*i->then_branch, false, fi);
      shape_check(*i->else_branch, false, fi);
    }
    if (auto* w = std::get_if<FStmt::While>(&s.node)) shape_check(*w->body, false, fi);
    if (auto* q = std::get_if<FStmt::Seq>(&s.node)) {
      shape_check(*q->first, at_entry, fi);
      shape_check(*q->second, false, fi);
    }
  }

  // ---- assembly ----

  void emit(Instr i, Origin o) {
    instrs_.push_back(i);
    origins_.push_back(o);
  }
  void emit_to_label(Instr i, Origin o, int label) {
    fixup_[instrs_.size()] = label;
    emit(i, o);
  }
  int make_label() { return next_label_++; }
  void bind(int label) { labels_[label] = instrs_.size(); }

  uint8_t reg_of(const FnInfo& fi, const std::string& v) const {
    auto it = fi.reg.find(v);
    if (it == fi.reg.end()) throw CompileError("unknown variable " + v);
    return it->second;
  }

  uint8_t operand_reg(const FnInfo& fi, const FOperand& o, uint8_t scratch) {
    if (o.is_var()) return reg_of(fi, o.var);
    emit({MOp::Addi, scratch, kRegZero, 0, int32_t(o.imm.value())}, Origin::Plain);
    return scratch;
  }

  void compile_fn(const FFnDef& f) {
    FnInfo& fi = fns_.at(f.name);
    bind(fi.label);
    for (size_t i = 0; i < f.params.size(); ++i)
      emit({MOp::Addi, reg_of(fi, f.params[i]), uint8_t(kArg0 + i), 0, 0},
           Origin::Plain);
    compile_stmt(*f.body, fi);
    for (size_t i = 0; i < f.returns.size(); ++i)
      emit({MOp::Addi, uint8_t(kArg0 + i), reg_of(fi, f.returns[i]), 0, 0},
           Origin::Plain);
    emit({MOp::Jalr, kRegZero, kRegRa, 0, 0}, Origin::Plain);
  }

  void compile_stmt(const FStmt& s, FnInfo& fi) {
    if (std::holds_alternative<FStmt::Skip>(s.node)) return;
    if (auto* x = std::get_if<FStmt::Set>(&s.node)) {
      if (x->src.is_var())
        emit({MOp::Addi, reg_of(fi, x->dst), reg_of(fi, x->src.var), 0, 0},
             Origin::Plain);
      else
        emit({MOp::Addi, reg_of(fi, x->dst), kRegZero, 0,
              int32_t(x->src.imm.value())},
             Origin::Plain);
      return;
    }
    if (auto* x = std::get_if<FStmt::Bin>(&s.node)) {
      compile_bin(*x, fi);
      return;
    }
    if (auto* x = std::get_if<FStmt::Load>(&s.node)) {
      emit({x->width_bytes == 1 ? MOp::Lb : MOp::Lw, reg_of(fi, x->dst),
            reg_of(fi, x->addr), 0, 0},
           Origin::SrcLoad);
      return;
    }
    if (auto* x = std::get_if<FStmt::Store>(&s.node)) {
      emit({x->width_bytes == 1 ? MOp::Sb : MOp::Sw, 0, reg_of(fi, x->addr),
            reg_of(fi, x->value), 0},
           Origin::SrcStore);
      return;
    }
    if (auto* x = std::get_if<FStmt::Alloc>(&s.node)) {
      // frame at the top of this function's stack band
      emit({MOp::Addi, reg_of(fi, x->dst), kRegSp, 0,
            int32_t(fi.off - x->size_bytes)},
           Origin::FrameAddi);
      compile_stmt(*x->body, fi);
      return;
    }
    if (std::holds_alternative<FStmt::Random>(s.node))
      throw CompileError("random draws cannot be compiled to machine code");
    if (auto* x = std::get_if<FStmt::Input>(&s.node)) {
      emit({MOp::EIn, reg_of(fi, x->dst), 0, 0, 0}, Origin::Plain);
      return;
    }
    if (auto* x = std::get_if<FStmt::Output>(&s.node)) {
      emit({MOp::EOut, 0, reg_of(fi, x->src), 0, 0}, Origin::Plain);
      return;
    }
    if (auto* x = std::get_if<FStmt::If>(&s.node)) {
      int else_l = make_label(), end_l = make_label();
      emit_to_label({MOp::Beq, 0, reg_of(fi, x->cond), kRegZero, 0},
                    Origin::SrcBranch, else_l);
      compile_stmt(*x->then_branch, fi);
      bool has_else = !std::holds_alternative<FStmt::Skip>(x->else_branch->node);
      if (has_else) {
        emit_to_label({MOp::Jal, kRegZero, 0, 0, 0}, Origin::Plain, end_l);
        bind(else_l);
        compile_stmt(*x->else_branch, fi);
        bind(end_l);
      } else {
        bind(else_l);
      }
      return;
    }
    if (auto* x = std::get_if<FStmt::While>(&s.node)) {
      int top_l = make_label(), end_l = make_label();
      bind(top_l);
      emit_to_label({MOp::Beq, 0, reg_of(fi, x->cond), kRegZero, 0},
                    Origin::SrcBranch, end_l);
      compile_stmt(*x->body, fi);
      emit_to_label({MOp::Jal, kRegZero, 0, 0, 0}, Origin::Plain, top_l);
      bind(end_l);
      return;
    }
    if (auto* x = std::get_if<FStmt::Call>(&s.node)) {
      const FnInfo& ci = fns_.at(x->callee);
      int32_t save_base = int32_t(fi.off - fi.need);
      emit({MOp::Sw, 0, kRegSp, kRegRa, save_base}, Origin::Save);
      for (size_t i = 0; i < fi.used_regs.size(); ++i)
        emit({MOp::Sw, 0, kRegSp, fi.used_regs[i], save_base + 4 * int32_t(i + 1)},
             Origin::Save);
      for (size_t i = 0; i < x->args.size(); ++i)
        emit({MOp::Addi, uint8_t(kArg0 + i), reg_of(fi, x->args[i]), 0, 0},
             Origin::Plain);
      emit_to_label({MOp::Jal, kRegRa, 0, 0, 0}, Origin::Plain, ci.label);
      emit({MOp::Lw, kRegRa, kRegSp, 0, save_base}, Origin::Restore);
      for (size_t i = 0; i < fi.used_regs.size(); ++i)
        emit({MOp::Lw, fi.used_regs[i], kRegSp, 0, save_base + 4 * int32_t(i + 1)},
             Origin::Restore);
      for (size_t i = 0; i < x->results.size(); ++i)
        emit({MOp::Addi, reg_of(fi, x->results[i]), uint8_t(kArg0 + i), 0, 0},
             Origin::Plain);
      return;
    }
    const auto& q = std::get<FStmt::Seq>(s.node);
    compile_stmt(*q.first, fi);
    compile_stmt(*q.second, fi);
  }

  void compile_bin(const FStmt::Bin& x, FnInfo& fi) {
    uint8_t rd = reg_of(fi, x.dst);
    // add with an immediate operand folds into Addi
    if (x.op == BinOp::Add && !x.rhs.is_var() && x.lhs.is_var()) {
      emit({MOp::Addi, rd, reg_of(fi, x.lhs.var), 0, int32_t(x.rhs.imm.value())},
           Origin::Plain);
      return;
    }
    if (x.op == BinOp::Add && !x.lhs.is_var() && x.rhs.is_var()) {
      emit({MOp::Addi, rd, reg_of(fi, x.rhs.var), 0, int32_t(x.lhs.imm.value())},
           Origin::Plain);
      return;
    }
    uint8_t r1 = operand_reg(fi, x.lhs, kScratch0);
    uint8_t r2 = operand_reg(fi, x.rhs, kScratch1);
    auto simple = [&](MOp op, Origin o = Origin::Plain) {
      emit({op, rd, r1, r2, 0}, o);
    };
    switch (x.op) {
      case BinOp::Add: simple(MOp::Add); return;
      case BinOp::Sub: simple(MOp::Sub); return;
      case BinOp::Mul: simple(MOp::Mul); return;
      case BinOp::Divu: simple(MOp::Divu, Origin::SrcDiv); return;
      case BinOp::Remu: simple(MOp::Remu, Origin::SrcDiv); return;
      case BinOp::And: simple(MOp::And); return;
      case BinOp::Or: simple(MOp::Or); return;
      case BinOp::Xor: simple(MOp::Xor); return;
      case BinOp::Shl: simple(MOp::Sll); return;
      case BinOp::Shr: simple(MOp::Srl); return;
      case BinOp::Ltu: simple(MOp::Sltu); return;
      case BinOp::Lts: simple(MOp::Slt); return;
      case BinOp::Eq:
        emit({MOp::Xor, kScratch0, r1, r2, 0}, Origin::Plain);
        emit({MOp::Addi, kScratch1, kRegZero, 0, 1}, Origin::Plain);
        emit({MOp::Sltu, rd, kScratch0, kScratch1, 0}, Origin::Plain);
        return;
      case BinOp::Ne:
        emit({MOp::Xor, kScratch0, r1, r2, 0}, Origin::Plain);
        emit({MOp::Sltu, rd, kRegZero, kScratch0, 0}, Origin::Plain);
        return;
    }
  }

  const FlatProgram& p_;
  CodeLayout layout_;
  std::map<std::string, FnInfo> fns_;
  std::vector<Instr> instrs_;
  std::vector<Origin> origins_;
  std::map<int, size_t> labels_;
  std::map<size_t, int> fixup_;
  int next_label_ = 0;
  uint32_t stack_total_ = 0;
};

// Walks the compiled code guided by the source leakage trace, reproducing
// the machine trace without any access to program state. Register contents
// are tracked only where control flow needs them (sp, ra, save slots).
class CgSim {
 public:
  CgSim(const CgMeta& m, const LeakTrace& kh, uint32_t sp_val)
      : m_(m), kh_(kh), sp_(sp_val) {}

  MachineTrace out;

  void run_full() {
    walk();
    if (pos_ != kh_.size())
      throw ReplayError("trailing source events after machine replay");
  }

  // Runs until the source prefix is exhausted; the pending query must be a
  // frame allocation, whose machine address is returned.
  Word pending_frame_answer() {
    try {
      walk();
    } catch (EndOfPrefix&) {
      if (pending_frame_) return *pending_frame_;
      throw ReplayError("oracle query does not end at an allocation");
    }
    throw ReplayError("prefix is a complete trace; no pending query");
  }

 private:
  Word take_leak() {
    if (pos_ == kh_.size()) throw EndOfPrefix{};
    if (kh_[pos_].kind != LeakKind::Leak)
      throw ReplayError("expected Leak in source trace");
    return kh_[pos_++].value;
  }
  Word take_nondet(uint32_t frame_addr) {
    if (pos_ == kh_.size()) {
      pending_frame_ = Word::of(frame_addr, m_.prog.word_bits);
      throw EndOfPrefix{};
    }
    if (kh_[pos_].kind != LeakKind::CompNonDet)
      throw ReplayError("expected CompNonDet in source trace");
    return kh_[pos_++].value;
  }

  void walk() {
    unsigned bits = m_.prog.word_bits;
    std::array<std::optional<uint32_t>, 32> known{};
    known[kRegZero] = 0;
    known[kRegSp] = sp_;
    known[kRegRa] = kHaltPc;
    std::map<uint32_t, std::optional<uint32_t>> slots;
    uint32_t pc = m_.prog.entry;
    uint64_t fuel = 10'000'000;
    while (pc != kHaltPc) {
      if (fuel-- == 0) throw ReplayError("machine replay out of fuel");
      auto it = m_.prog.code.find(pc);
      if (it == m_.prog.code.end())
        throw ReplayError("replay fell off the code at pc " + std::to_string(pc));
      const Instr& i = it->second;
      Origin og = m_.origin.at(pc);
      out.push_back(mev_fetch(Word::of(pc, bits)));
      uint32_t next = pc + 4;
      auto set_known = [&](uint8_t r, std::optional<uint32_t> v) {
        if (r != 0) known[r] = v;
      };
      auto get_known = [&](uint8_t r) -> std::optional<uint32_t> {
        return r == 0 ? std::optional<uint32_t>(0) : known[r];
      };
      switch (i.op) {
        case MOp::Addi: {
          if (og == Origin::FrameAddi) {
            uint32_t addr = sp_ + uint32_t(i.imm);
            Word fp = take_nondet(addr);
            if (fp.value() != addr)
              throw ReplayError("source frame pointer disagrees with layout");
            set_known(i.rd, addr);
          } else {
            auto v = get_known(i.rs1);
            set_known(i.rd, v ? std::optional<uint32_t>(*v + uint32_t(i.imm))
                              : std::nullopt);
          }
          out.push_back(mev_op());
          break;
        }
        case MOp::Add:
          out.push_back(mev_add());
          set_known(i.rd, std::nullopt);
          break;
        case MOp::Sub: case MOp::And: case MOp::Or: case MOp::Xor:
        case MOp::Mul: case MOp::Sltu: case MOp::Slt: case MOp::Sll:
        case MOp::Srl:
          out.push_back(mev_op());
          set_known(i.rd, std::nullopt);
          break;
        case MOp::Divu: case MOp::Remu: {
          Word a = take_leak();
          Word b = take_leak();
          out.push_back(mev_div(a, b));
          set_known(i.rd, std::nullopt);
          break;
        }
        case MOp::Lw: case MOp::Lb: {
          if (og == Origin::Restore) {
            auto base = get_known(i.rs1);
            if (!base) throw ReplayError("restore from unknown base");
            uint32_t addr = *base + uint32_t(i.imm);
            out.push_back(mev_lw(Word::of(addr, bits)));
            auto slot = slots.find(addr);
            set_known(i.rd, slot == slots.end() ? std::nullopt : slot->second);
          } else {
            out.push_back(mev_lw(take_leak()));
            set_known(i.rd, std::nullopt);
          }
          break;
        }
        case MOp::Sw: case MOp::Sb: {
          if (og == Origin::Save) {
            auto base = get_known(i.rs1);
            if (!base) throw ReplayError("save to unknown base");
            uint32_t addr = *base + uint32_t(i.imm);
            out.push_back(mev_sw(Word::of(addr, bits)));
            slots[addr] = get_known(i.rs2);
          } else {
            out.push_back(mev_sw(take_leak()));
          }
          break;
        }
        case MOp::Beq: {
          bool src_bit = take_leak().truthy();
          bool taken = !src_bit;
          out.push_back(mev_beq(taken));
          if (taken) next = pc + uint32_t(i.imm);
          break;
        }
        case MOp::Bne: case MOp::Blt:
          throw ReplayError("unexpected branch kind in generated code");
        case MOp::Jal:
          set_known(i.rd, pc + 4);
          next = pc + uint32_t(i.imm);
          break;
        case MOp::Jalr: {
          auto base = get_known(i.rs1);
          if (!base) throw ReplayError("jalr through unknown register");
          uint32_t target = *base + uint32_t(i.imm);
          out.push_back(mev_jalr(Word::of(target, bits)));
          set_known(i.rd, pc + 4);
          next = target;
          break;
        }
        case MOp::EIn:
          set_known(i.rd, std::nullopt);
          break;
        case MOp::EOut:
          break;
      }
      pc = next;
    }
  }

  const CgMeta& m_;
  const LeakTrace& kh_;
  uint32_t sp_;
  size_t pos_ = 0;
  std::optional<Word> pending_frame_;
};

}  // namespace cg_detail
}  // namespace passes

// Machine-code generation. All nondeterminism is resolved: frames become
// sp-relative arithmetic, so the target needs no oracle and the source
// oracle is computed from the code layout alone.
inline PassArtifact codegen(const FlatProgram& p, const CodeLayout& layout = {}) {
  using namespace passes::cg_detail;
  auto meta = std::make_shared<CgMeta>(CodeGenerator(p, layout).run());

  PassArtifact art;
  art.name = "codegen";
  art.target = meta->prog;
  art.schema = {"sp"};
  art.gamma_machine = [meta](const LeakTrace& kh, const LowContext& ctx) {
    uint32_t sp = ctx.sp ? ctx.sp->value() : meta->prog.sp0;
    CgSim sim(*meta, kh, sp);
    sim.run_full();
    return sim.out;
  };
  // there is no nondeterminism at machine level; the low oracle is ignored
  art.oracle_transform = [meta](const Oracle&) {
    return Oracle::derived(
        [meta](const LeakTrace& k1) {
          CgSim sim(*meta, k1, meta->prog.sp0);
          return sim.pending_frame_answer();
        },
        "codegen");
  };
  // a machine-level predictor is just a machine-level leakage trace: run the
  // high-level predictor to its unique trace and map it down
  art.predictor_transform = [meta](const Predictor& ph) {
    Oracle high = Oracle::derived(
        [meta](const LeakTrace& k1) {
          CgSim sim(*meta, k1, meta->prog.sp0);
          return sim.pending_frame_answer();
        },
        "codegen");
    auto kh = run_predictor(ph, high, 100000);
    std::shared_ptr<LeakTrace> kl = std::make_shared<LeakTrace>();
    if (kh) {
      CgSim sim(*meta, *kh, meta->prog.sp0);
      sim.run_full();
      *kl = encode_machine_trace(sim.out, meta->prog.word_bits);
    }
    return Predictor::derived(
        [kl](const LeakTrace& k) {
          if (k.size() < kl->size() && is_prefix(k, *kl))
            return PredictorOut::leak((*kl)[k.size()].value);
          return PredictorOut::end();
        },
        "machine_chain");
  };
  return art;
}

}  // namespace ctlab
