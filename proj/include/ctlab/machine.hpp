#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctlab/interp.hpp"
#include "ctlab/word.hpp"

namespace ctlab {

// Toy RV32I-flavored register machine, the compiler target and the trusted
// bottom of the differential tests. 32 registers, x0 hardwired to zero,
// 4-byte instructions, EIn/EOut instead of ecalls. Lb zero-extends.
enum class MOp : uint8_t {
  Addi, Add, Sub, And, Or, Xor, Mul, Divu, Remu, Sltu, Slt, Sll, Srl,
  Lw, Lb, Sw, Sb, Beq, Bne, Blt, Jal, Jalr, EIn, EOut
};

inline const char* mop_name(MOp op) {
  switch (op) {
    case MOp::Addi: return "addi";
    case MOp::Add: return "add";
    case MOp::Sub: return "sub";
    case MOp::And: return "and";
    case MOp::Or: return "or";
    case MOp::Xor: return "xor";
    case MOp::Mul: return "mul";
    case MOp::Divu: return "divu";
    case MOp::Remu: return "remu";
    case MOp::Sltu: return "sltu";
    case MOp::Slt: return "slt";
    case MOp::Sll: return "sll";
    case MOp::Srl: return "srl";
    case MOp::Lw: return "lw";
    case MOp::Lb: return "lb";
    case MOp::Sw: return "sw";
    case MOp::Sb: return "sb";
    case MOp::Beq: return "beq";
    case MOp::Bne: return "bne";
    case MOp::Blt: return "blt";
    case MOp::Jal: return "jal";
    case MOp::Jalr: return "jalr";
    case MOp::EIn: return "ein";
    case MOp::EOut: return "eout";
  }
  return "?";
}

struct Instr {
  MOp op;
  uint8_t rd = 0, rs1 = 0, rs2 = 0;
  int32_t imm = 0;  // also the branch/jump byte offset
};

// pc value that means "returned from the entry function".
constexpr uint32_t kHaltPc = 0xFFFFFFF0u;

struct MachineProgram {
  std::map<uint32_t, Instr> code;         // position -> instruction
  uint32_t entry = 0;
  std::map<std::string, uint32_t> fn_positions;
  uint32_t sp0 = 0;
  uint32_t stack_bytes = 0;               // stack region is [sp0, sp0+stack_bytes)
  unsigned word_bits = 32;
};

enum class MEvKind : uint8_t {
  Fetch, LeakAdd, LeakOp, LeakLw, LeakSw, LeakBeq, LeakBne, LeakBlt, LeakDiv,
  LeakJalr
};

struct MachineEvent {
  MEvKind kind;
  Word a, b;   // address / div operands / jalr target
  bool flag = false;  // branch taken-bit
  friend bool operator==(const MachineEvent&, const MachineEvent&) = default;

  std::string str() const {
    switch (kind) {
      case MEvKind::Fetch: return "Fetch " + a.str();
      case MEvKind::LeakAdd: return "LeakAdd";
      case MEvKind::LeakOp: return "LeakOp";
      case MEvKind::LeakLw: return "LeakLw " + a.str();
      case MEvKind::LeakSw: return "LeakSw " + a.str();
      case MEvKind::LeakBeq: return std::string("LeakBeq ") + (flag ? "1" : "0");
      case MEvKind::LeakBne: return std::string("LeakBne ") + (flag ? "1" : "0");
      case MEvKind::LeakBlt: return std::string("LeakBlt ") + (flag ? "1" : "0");
      case MEvKind::LeakDiv: return "LeakDiv " + a.str() + " " + b.str();
      case MEvKind::LeakJalr: return "LeakJalr " + a.str();
    }
    return "?";
  }
};

using MachineTrace = std::vector<MachineEvent>;

inline MachineEvent mev_fetch(Word addr) { return {MEvKind::Fetch, addr, Word(), false}; }
inline MachineEvent mev_add() { return {MEvKind::LeakAdd, Word(), Word(), false}; }
inline MachineEvent mev_op() { return {MEvKind::LeakOp, Word(), Word(), false}; }
inline MachineEvent mev_lw(Word addr) { return {MEvKind::LeakLw, addr, Word(), false}; }
inline MachineEvent mev_sw(Word addr) { return {MEvKind::LeakSw, addr, Word(), false}; }
inline MachineEvent mev_beq(bool t) { return {MEvKind::LeakBeq, Word(), Word(), t}; }
inline MachineEvent mev_bne(bool t) { return {MEvKind::LeakBne, Word(), Word(), t}; }
inline MachineEvent mev_blt(bool t) { return {MEvKind::LeakBlt, Word(), Word(), t}; }
inline MachineEvent mev_div(Word x, Word y) { return {MEvKind::LeakDiv, x, y, false}; }
inline MachineEvent mev_jalr(Word target) { return {MEvKind::LeakJalr, target, Word(), false}; }

inline std::string show(const MachineTrace& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.size(); ++i) s += (i ? ", " : "") + t[i].str();
  return s + "]";
}

struct MachineState {
  std::array<Word, 32> regs{};
  MemState mem;
  uint32_t pc = 0;
  IOTrace io;
  MachineTrace leak;
};

// Leakage of one instruction given the registers it will read. Addresses
// and branch decisions leak; data values do not (divider operands being the
// deliberate exception).
inline MachineTrace instr_leakage(const Instr& i, const std::array<Word, 32>& regs,
                                  unsigned bits = 32) {
  auto r = [&](uint8_t n) { return n == 0 ? Word::of(0, bits) : regs[n]; };
  switch (i.op) {
    case MOp::Add: return {mev_add()};
    case MOp::Lw:
    case MOp::Lb: return {mev_lw(r(i.rs1).add(Word::of(uint32_t(i.imm), bits)))};
    case MOp::Sw:
    case MOp::Sb: return {mev_sw(r(i.rs1).add(Word::of(uint32_t(i.imm), bits)))};
    case MOp::Beq: return {mev_beq(r(i.rs1) == r(i.rs2))};
    case MOp::Bne: return {mev_bne(!(r(i.rs1) == r(i.rs2)))};
    case MOp::Blt: return {mev_blt(r(i.rs1).lts(r(i.rs2)).truthy())};
    case MOp::Divu:
    case MOp::Remu: return {mev_div(r(i.rs1), r(i.rs2))};
    case MOp::Jalr: return {mev_jalr(r(i.rs1).add(Word::of(uint32_t(i.imm), bits)))};
    case MOp::Jal: return {};
    case MOp::EIn:
    case MOp::EOut: return {};
    default: return {mev_op()};
  }
}

struct MachineOutcome {
  RunStatus status = RunStatus::Terminated;
  StuckReason reason = StuckReason::None;
  std::string detail;
  MachineState state;
  uint64_t executed = 0;

  bool terminated() const { return status == RunStatus::Terminated; }
};

// Deterministic run: steps until pc reaches the halt sentinel. One Fetch per
// executed instruction, then that instruction's leakage events.
inline MachineOutcome mrun(const MachineProgram& prog, MachineState s0,
                           const std::vector<Word>& inputs, uint64_t fuel) {
  unsigned bits = prog.word_bits;
  MachineOutcome out;
  MachineState& s = s0;
  size_t in_cursor = 0;
  auto rd = [&](uint8_t n) { return n == 0 ? Word::of(0, bits) : s.regs[n]; };
  auto wr = [&](uint8_t n, Word v) {
    if (n != 0) s.regs[n] = v;
  };
  auto stop = [&](RunStatus st, StuckReason re, std::string d = "") {
    out.status = st;
    out.reason = re;
    out.detail = std::move(d);
  };
  while (s.pc != kHaltPc) {
    if (out.executed >= fuel) {
      stop(RunStatus::FuelExhausted, StuckReason::None);
      break;
    }
    if (s.pc % 4 != 0) {
      stop(RunStatus::ErrorStuck, StuckReason::OutOfBoundsLoad, "unaligned pc");
      break;
    }
    auto it = prog.code.find(s.pc);
    if (it == prog.code.end()) {
      stop(RunStatus::ErrorStuck, StuckReason::OutOfBoundsLoad,
           "no instruction at pc " + std::to_string(s.pc));
      break;
    }
    const Instr& i = it->second;
    s.leak.push_back(mev_fetch(Word::of(s.pc, bits)));
    for (auto& e : instr_leakage(i, s.regs, bits)) s.leak.push_back(e);
    ++out.executed;
    uint32_t next = s.pc + 4;
    Word immw = Word::of(uint32_t(i.imm), bits);
    switch (i.op) {
      case MOp::Addi: wr(i.rd, rd(i.rs1).add(immw)); break;
      case MOp::Add: wr(i.rd, rd(i.rs1).add(rd(i.rs2))); break;
      case MOp::Sub: wr(i.rd, rd(i.rs1).sub(rd(i.rs2))); break;
      case MOp::And: wr(i.rd, rd(i.rs1).band(rd(i.rs2))); break;
      case MOp::Or: wr(i.rd, rd(i.rs1).bor(rd(i.rs2))); break;
      case MOp::Xor: wr(i.rd, rd(i.rs1).bxor(rd(i.rs2))); break;
      case MOp::Mul: wr(i.rd, rd(i.rs1).mul(rd(i.rs2))); break;
      case MOp::Divu: wr(i.rd, rd(i.rs1).divu(rd(i.rs2))); break;
      case MOp::Remu: wr(i.rd, rd(i.rs1).remu(rd(i.rs2))); break;
      case MOp::Sltu: wr(i.rd, rd(i.rs1).ltu(rd(i.rs2))); break;
      case MOp::Slt: wr(i.rd, rd(i.rs1).lts(rd(i.rs2))); break;
      case MOp::Sll: wr(i.rd, rd(i.rs1).shl(rd(i.rs2))); break;
      case MOp::Srl: wr(i.rd, rd(i.rs1).shr(rd(i.rs2))); break;
      case MOp::Lw: {
        uint32_t a = rd(i.rs1).add(immw).value();
        auto v = s.mem.load(a, bits / 8, bits);
        if (!v) {
          stop(RunStatus::ErrorStuck, StuckReason::OutOfBoundsLoad,
               std::to_string(a));
          break;
        }
        wr(i.rd, *v);
        break;
      }
      case MOp::Lb: {
        uint32_t a = rd(i.rs1).add(immw).value();
        auto v = s.mem.load(a, 1, bits);
        if (!v) {
          stop(RunStatus::ErrorStuck, StuckReason::OutOfBoundsLoad,
               std::to_string(a));
          break;
        }
        wr(i.rd, *v);
        break;
      }
      case MOp::Sw: {
        uint32_t a = rd(i.rs1).add(immw).value();
        if (!s.mem.store(a, bits / 8, rd(i.rs2))) {
          stop(RunStatus::ErrorStuck, StuckReason::OutOfBoundsStore,
               std::to_string(a));
          break;
        }
        break;
      }
      case MOp::Sb: {
        uint32_t a = rd(i.rs1).add(immw).value();
        if (!s.mem.store(a, 1, Word::of(rd(i.rs2).value() & 0xFF, bits))) {
          stop(RunStatus::ErrorStuck, StuckReason::OutOfBoundsStore,
               std::to_string(a));
          break;
        }
        break;
      }
      case MOp::Beq:
        if (rd(i.rs1) == rd(i.rs2)) next = s.pc + uint32_t(i.imm);
        break;
      case MOp::Bne:
        if (!(rd(i.rs1) == rd(i.rs2))) next = s.pc + uint32_t(i.imm);
        break;
      case MOp::Blt:
        if (rd(i.rs1).lts(rd(i.rs2)).truthy()) next = s.pc + uint32_t(i.imm);
        break;
      case MOp::Jal:
        wr(i.rd, Word::of(s.pc + 4, bits));
        next = s.pc + uint32_t(i.imm);
        break;
      case MOp::Jalr: {
        uint32_t target = rd(i.rs1).add(immw).value();
        wr(i.rd, Word::of(s.pc + 4, bits));
        next = target;
        break;
      }
      case MOp::EIn: {
        if (in_cursor >= inputs.size()) {
          stop(RunStatus::BenignStuck, StuckReason::NoInput);
          break;
        }
        Word v = Word::of(inputs[in_cursor++].value(), bits);
        s.io.push_back(io_in(v));
        wr(i.rd, v);
        break;
      }
      case MOp::EOut:
        s.io.push_back(io_out(rd(i.rs1)));
        break;
    }
    if (out.status != RunStatus::Terminated) break;
    s.pc = next;
  }
  out.state = std::move(s0);
  return out;
}

// Initial state for running a compiled entry function: arguments in the
// argument registers, return address at the halt sentinel, the stack region
// present and filled with a constant.
inline MachineState machine_initial(const MachineProgram& mp,
                                    const std::vector<Word>& args,
                                    const MemState& mem, uint8_t stack_fill) {
  MachineState s;
  s.pc = mp.entry;
  s.mem = mem;
  s.regs[1] = Word::of(kHaltPc, mp.word_bits);
  s.regs[2] = Word::of(mp.sp0, mp.word_bits);
  for (size_t i = 0; i < args.size() && i < 8; ++i)
    s.regs[10 + i] = Word::of(args[i].value(), mp.word_bits);
  for (uint32_t i = 0; i < mp.stack_bytes; ++i)
    s.mem.put_byte(mp.sp0 + i, stack_fill);
  return s;
}

// Leakage events encoded as words so machine traces can serve as leakage
// traces for the predictor calculus (kind tag in the top nibble).
inline Word encode_event(const MachineEvent& e, unsigned bits = 32) {
  uint32_t tag = uint32_t(e.kind);
  uint32_t payload = (e.a.value() & 0x00FFFFFFu) ^ (e.b.value() << 4) ^
                     (e.flag ? 0x08000000u : 0);
  return Word::of((tag << 28) | (payload & 0x0FFFFFFFu), bits);
}

inline LeakTrace encode_machine_trace(const MachineTrace& t, unsigned bits = 32) {
  LeakTrace k;
  k.reserve(t.size());
  for (const auto& e : t) k.push_back(leak(encode_event(e, bits)));
  return k;
}

// ---- JSON ----

inline nlohmann::json instr_to_json(uint32_t pos, const Instr& i) {
  return {{"pos", pos},     {"op", mop_name(i.op)}, {"rd", i.rd},
          {"rs1", i.rs1},   {"rs2", i.rs2},         {"imm", i.imm}};
}

inline nlohmann::json machine_to_json(const MachineProgram& p) {
  nlohmann::json instrs = nlohmann::json::array();
  for (const auto& [pos, i] : p.code) instrs.push_back(instr_to_json(pos, i));
  return {{"entry", p.entry},
          {"sp0", p.sp0},
          {"stack_bytes", p.stack_bytes},
          {"word_bits", p.word_bits},
          {"functions", p.fn_positions},
          {"instrs", instrs}};
}

inline nlohmann::json to_json(const MachineEvent& e) {
  switch (e.kind) {
    case MEvKind::Fetch: return {{"fetch", e.a.value()}};
    case MEvKind::LeakAdd: return {{"add", nullptr}};
    case MEvKind::LeakOp: return {{"op", nullptr}};
    case MEvKind::LeakLw: return {{"lw", e.a.value()}};
    case MEvKind::LeakSw: return {{"sw", e.a.value()}};
    case MEvKind::LeakBeq: return {{"beq", e.flag}};
    case MEvKind::LeakBne: return {{"bne", e.flag}};
    case MEvKind::LeakBlt: return {{"blt", e.flag}};
    case MEvKind::LeakDiv: return {{"div", {e.a.value(), e.b.value()}}};
    case MEvKind::LeakJalr: return {{"jalr", e.a.value()}};
  }
  return {};
}

inline nlohmann::json to_json(const MachineTrace& t) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : t) a.push_back(to_json(e));
  return a;
}

inline std::string machine_listing(const MachineProgram& p) {
  std::string s;
  for (const auto& [pos, i] : p.code) {
    for (const auto& [name, fpos] : p.fn_positions)
      if (fpos == pos) s += name + ":\n";
    s += "  " + std::to_string(pos) + ": " + mop_name(i.op) + " x" +
         std::to_string(i.rd) + ", x" + std::to_string(i.rs1) + ", x" +
         std::to_string(i.rs2) + ", " + std::to_string(i.imm) + "\n";
  }
  return s;
}

}  // namespace ctlab
