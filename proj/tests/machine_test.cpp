#include <gtest/gtest.h>

#include <random>

#include "ctlab/machine.hpp"
#include "test_util.hpp"

using namespace ctlab;
using ctlab_test::w32;

namespace {

MachineProgram straightline(std::vector<Instr> instrs, uint32_t base = 0x1000) {
  MachineProgram p;
  p.entry = base;
  instrs.push_back({MOp::Jalr, 0, 1, 0, 0});  // return through ra
  for (size_t i = 0; i < instrs.size(); ++i)
    p.code[base + 4 * uint32_t(i)] = instrs[i];
  return p;
}

MachineState boot(const MachineProgram& p) {
  MachineState s;
  s.pc = p.entry;
  s.regs[1] = w32(kHaltPc);
  return s;
}

}  // namespace

TEST(InstrLeakage, AddLeaksNoArguments) {
  std::array<Word, 32> regs{};
  regs[2] = w32(11);
  regs[3] = w32(22);
  auto ev = instr_leakage({MOp::Add, 1, 2, 3, 0}, regs);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].kind, MEvKind::LeakAdd);
}

TEST(InstrLeakage, LoadLeaksItsAddress) {
  std::array<Word, 32> regs{};
  regs[2] = w32(40);
  auto ev = instr_leakage({MOp::Lw, 5, 2, 0, 8}, regs);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].kind, MEvKind::LeakLw);
  EXPECT_EQ(ev[0].a.value(), 48u);
}

TEST(InstrLeakage, BltLeaksSignedComparison) {
  std::array<Word, 32> regs{};
  regs[1] = w32(3);
  regs[2] = w32(7);
  auto ev = instr_leakage({MOp::Blt, 0, 1, 2, -8}, regs);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].kind, MEvKind::LeakBlt);
  EXPECT_TRUE(ev[0].flag);
  regs[1] = w32(0x80000000);  // negative under signed comparison
  ev = instr_leakage({MOp::Blt, 0, 2, 1, -8}, regs);
  EXPECT_FALSE(ev[0].flag);
}

TEST(InstrLeakage, DivLeaksOperands) {
  std::array<Word, 32> regs{};
  regs[4] = w32(7);
  regs[5] = w32(2);
  auto ev = instr_leakage({MOp::Divu, 3, 4, 5, 0}, regs);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].kind, MEvKind::LeakDiv);
  EXPECT_EQ(ev[0].a.value(), 7u);
  EXPECT_EQ(ev[0].b.value(), 2u);
}

TEST(Mrun, AddiThenHalt) {
  MachineProgram p = straightline({{MOp::Addi, 5, 0, 0, 5}});
  MachineOutcome o = mrun(p, boot(p), {}, 100);
  ASSERT_TRUE(o.terminated());
  EXPECT_EQ(o.state.regs[5].value(), 5u);
  ASSERT_EQ(o.state.leak.size(), 4u);
  EXPECT_EQ(o.state.leak[0], mev_fetch(w32(0x1000)));
  EXPECT_EQ(o.state.leak[1], mev_op());
  EXPECT_EQ(o.state.leak[2], mev_fetch(w32(0x1004)));
  EXPECT_EQ(o.state.leak[3], mev_jalr(w32(kHaltPc)));
}

TEST(Mrun, RegisterZeroIsHardwired) {
  MachineProgram p = straightline({{MOp::Addi, 0, 0, 0, 77},
                                   {MOp::Addi, 5, 0, 0, 0}});
  MachineOutcome o = mrun(p, boot(p), {}, 100);
  ASSERT_TRUE(o.terminated());
  EXPECT_EQ(o.state.regs[5].value(), 0u);
}

TEST(Mrun, EOutProducesIO) {
  MachineProgram p = straightline({{MOp::Addi, 5, 0, 0, 15},
                                   {MOp::EOut, 0, 5, 0, 0}});
  MachineOutcome o = mrun(p, boot(p), {}, 100);
  ASSERT_TRUE(o.terminated());
  EXPECT_EQ(o.state.io, (IOTrace{io_out(w32(15))}));
}

TEST(Mrun, EInConsumesScriptAndStops) {
  MachineProgram p = straightline({{MOp::EIn, 5, 0, 0, 0},
                                   {MOp::EIn, 6, 0, 0, 0}});
  MachineOutcome o = mrun(p, boot(p), {w32(9)}, 100);
  EXPECT_EQ(o.status, RunStatus::BenignStuck);
  EXPECT_EQ(o.reason, StuckReason::NoInput);
  EXPECT_EQ(o.state.regs[5].value(), 9u);
}

TEST(Mrun, UnknownPcIsError) {
  MachineProgram p = straightline({{MOp::Jal, 0, 0, 0, 0x100}});
  MachineOutcome o = mrun(p, boot(p), {}, 100);
  EXPECT_EQ(o.status, RunStatus::ErrorStuck);
}

TEST(Mrun, OutOfDomainStoreIsError) {
  MachineProgram p = straightline({{MOp::Sw, 0, 0, 5, 64}});
  MachineOutcome o = mrun(p, boot(p), {}, 100);
  EXPECT_EQ(o.status, RunStatus::ErrorStuck);
  EXPECT_EQ(o.reason, StuckReason::OutOfBoundsStore);
}

TEST(Mrun, UnalignedPcIsError) {
  MachineProgram p = straightline({{MOp::Addi, 5, 0, 0, 0x1001},
                                   {MOp::Jalr, 0, 5, 0, 0}});
  MachineOutcome o = mrun(p, boot(p), {}, 100);
  EXPECT_EQ(o.status, RunStatus::ErrorStuck);
  EXPECT_EQ(o.detail, "unaligned pc");
}

TEST(Mrun, BltLoopCountsDown) {
  // x5 = 0; x6 = 3; loop: x5 += 1; blt x5, x6, loop
  MachineProgram p = straightline({{MOp::Addi, 5, 0, 0, 0},
                                   {MOp::Addi, 6, 0, 0, 3},
                                   {MOp::Addi, 5, 5, 0, 1},
                                   {MOp::Blt, 0, 5, 6, -4}});
  MachineOutcome o = mrun(p, boot(p), {}, 1000);
  ASSERT_TRUE(o.terminated());
  EXPECT_EQ(o.state.regs[5].value(), 3u);
  // the loop branch leaks its taken-bit: taken, taken, not taken
  std::vector<bool> blt_bits;
  for (const auto& e : o.state.leak)
    if (e.kind == MEvKind::LeakBlt) blt_bits.push_back(e.flag);
  EXPECT_EQ(blt_bits, (std::vector<bool>{true, true, false}));
}

namespace {

// Random straight-line programs over safe opcodes plus a scratch memory
// window; always ends by returning through ra.
MachineProgram random_program(std::mt19937_64& rng, MachineState& s0) {
  std::vector<Instr> instrs;
  size_t n = 3 + rng() % 12;
  for (size_t i = 0; i < n; ++i) {
    switch (rng() % 8) {
      case 0: instrs.push_back({MOp::Addi, uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), 0, int32_t(rng() % 64)}); break;
      case 1: instrs.push_back({MOp::Add, uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), 0}); break;
      case 2: instrs.push_back({MOp::Xor, uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), 0}); break;
      case 3: instrs.push_back({MOp::Divu, uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), 0}); break;
      case 4: instrs.push_back({MOp::Sltu, uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), uint8_t(5 + rng() % 8), 0}); break;
      case 5: {
        // in-window load: x14 holds the window base
        instrs.push_back({MOp::Lw, uint8_t(5 + rng() % 8), 14, 0, int32_t(4 * (rng() % 4))});
        break;
      }
      case 6: instrs.push_back({MOp::Sw, 0, 14, uint8_t(5 + rng() % 8), int32_t(4 * (rng() % 4))}); break;
      default: instrs.push_back({MOp::EOut, 0, uint8_t(5 + rng() % 8), 0, 0}); break;
    }
  }
  MachineProgram p = straightline(std::move(instrs));
  s0 = boot(p);
  s0.regs[14] = w32(0x2000);
  for (uint32_t i = 0; i < 16; ++i) s0.mem.put_byte(0x2000 + i, uint8_t(rng()));
  for (int r = 5; r < 13; ++r) s0.regs[r] = w32(uint32_t(rng()));
  return p;
}

}  // namespace

TEST(Mrun, DeterminismAndFetchCompleteness) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    MachineState s0;
    MachineProgram p = random_program(rng, s0);
    MachineOutcome o1 = mrun(p, s0, {}, 1000);
    MachineOutcome o2 = mrun(p, s0, {}, 1000);
    ASSERT_TRUE(o1.terminated());
    EXPECT_EQ(o1.state.regs, o2.state.regs);
    EXPECT_EQ(o1.state.mem, o2.state.mem);
    EXPECT_TRUE(o1.state.leak == o2.state.leak);
    EXPECT_EQ(o1.state.io, o2.state.io);
    size_t fetches = 0;
    for (const auto& e : o1.state.leak)
      if (e.kind == MEvKind::Fetch) ++fetches;
    EXPECT_EQ(fetches, o1.executed);
  }
}

TEST(MachineJson, InstrListShape) {
  MachineProgram p = straightline({{MOp::Addi, 5, 0, 0, 7}});
  nlohmann::json j = machine_to_json(p);
  EXPECT_EQ(j["instrs"].size(), 2u);
  EXPECT_EQ(j["instrs"][0]["op"], "addi");
  EXPECT_EQ(j["instrs"][0]["pos"], 0x1000);
  EXPECT_EQ(j["entry"], 0x1000);
}

TEST(MachineEncode, EventWordsDistinguishKinds) {
  Word f = encode_event(mev_fetch(w32(0x1000)));
  Word l = encode_event(mev_lw(w32(0x1000)));
  Word s = encode_event(mev_sw(w32(0x1000)));
  EXPECT_FALSE(f == l);
  EXPECT_FALSE(l == s);
  EXPECT_FALSE(encode_event(mev_beq(true)) == encode_event(mev_beq(false)));
}
