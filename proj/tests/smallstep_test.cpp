#include <gtest/gtest.h>

#include "ctlab/parser.hpp"
#include "ctlab/smallstep.hpp"
#include "test_util.hpp"

using namespace ctlab;
using ctlab_test::parse_corpus;
using ctlab_test::w32;

namespace {

ExecEnv base_env(const Program& p) {
  ExecEnv env;
  env.program = &p;
  env.contents = ContentPolicy::constant_byte(0);
  return env;
}

std::set<std::string> terminated_set(const std::vector<Outcome>& outs) {
  std::set<std::string> s;
  for (const auto& o : outs)
    if (o.terminated())
      s.insert(show(o.io) + "|" + show(o.leak) + "|" + [&o] {
        std::string r;
        for (auto wd : o.returns) r += wd.str() + ",";
        return r;
      }());
  return s;
}

}  // namespace

TEST(Step, SkipSeq) {
  Program p = parse("fn main() { skip; skip; }");
  ExecEnv env = base_env(p);
  Config c = initial_config(env, "main", {});
  // Seq unfolds, then each skip steps away
  StepOut s1 = step(env, c);
  ASSERT_EQ(s1.succ.size(), 1u);
  EXPECT_EQ(s1.succ[0].cont.size(), 2u);
  StepOut s2 = step(env, s1.succ[0]);
  ASSERT_EQ(s2.succ.size(), 1u);
  EXPECT_EQ(s2.succ[0].cont.size(), 1u);
}

TEST(Step, AssignmentEvaluatesInOneStep) {
  Program p = parse("fn main() { x = 1 + 2; }");
  ExecEnv env = base_env(p);
  Config c = initial_config(env, "main", {});
  StepOut s = step(env, c);
  ASSERT_EQ(s.succ.size(), 1u);
  EXPECT_TRUE(s.succ[0].finished());
  EXPECT_EQ(s.succ[0].locals.at("x").value(), 3u);
}

TEST(Step, StackAllocBranchesOverBases) {
  Program p = parse("fn main() { stackalloc 4 as x { skip; } }");
  ExecEnv env = base_env(p);
  env.universe.bases = {w32(64), w32(128)};
  Config c = initial_config(env, "main", {});
  StepOut s = step(env, c);
  ASSERT_EQ(s.succ.size(), 2u);
  EXPECT_EQ(s.succ[0].leak, (LeakTrace{nondet(64)}));
  EXPECT_EQ(s.succ[1].leak, (LeakTrace{nondet(128)}));
  // each successor carries the allocation-scope end marker
  for (const auto& succ : s.succ) {
    bool has_end = false;
    for (const auto& item : succ.cont)
      has_end = has_end || std::holds_alternative<KItem::EndAlloc>(item.item);
    EXPECT_TRUE(has_end);
  }
}

TEST(Step, PrefixMonotonicity) {
  Program p = parse_corpus("countdown.ct");
  ExecEnv env = base_env(p);
  std::vector<Config> frontier{initial_config(env, "countdown", {w32(2)})};
  for (int depth = 0; depth < 50 && !frontier.empty(); ++depth) {
    std::vector<Config> next;
    for (const auto& c : frontier) {
      StepOut s = step(env, c);
      for (const auto& succ : s.succ) {
        EXPECT_TRUE(is_prefix(c.leak, succ.leak));
        next.push_back(succ);
      }
    }
    frontier = std::move(next);
  }
}

TEST(Agreement, SeededContentsMatchAcrossEngines) {
  Program p = parse("fn main() -> (v) { stackalloc 4 as s { v = load1(s + 1); } }");
  ExecEnv env;
  env.program = &p;
  env.contents = ContentPolicy::seeded(21);
  auto big = terminated_set(exec_enumerate(env, "main", {}));
  auto small = terminated_set(smallstep_enumerate(env, "main", {}));
  EXPECT_EQ(big, small);
  EXPECT_EQ(big.size(), 3u);  // three bases, returns include the seeded byte
}

TEST(Agreement, CorpusPrograms) {
  struct Cfg {
    std::string file, entry;
    std::vector<Word> args;
    std::function<void(ExecEnv&)> tweak;
  };
  std::vector<Cfg> cfgs = {
      {"swap.ct", "swap", {w32(16), w32(20)},
       [](ExecEnv& e) {
         e.initial_mem.put_word(16, w32(1));
         e.initial_mem.put_word(20, w32(2));
       }},
      {"stack_swap.ct", "stack_swap", {},
       [](ExecEnv& e) { e.contents = ContentPolicy::domain_bytes({0x00, 0xAA}); }},
      {"stackalloc_and_print.ct", "stackalloc_and_print", {}, {}},
      {"countdown.ct", "countdown", {w32(2)}, {}},
      {"login.ct", "login", {},
       [](ExecEnv& e) {
         e.initial_mem.put_word(1024, w32(7));
         e.inputs = InputPolicy::domains({{w32(0)}, {w32(7), w32(9)}});
       }},
      {"semiprime.ct", "semiprime", {},
       [](ExecEnv& e) { e.inputs = InputPolicy::scripted({w32(3), w32(5)}); }},
      {"mod_const.ct", "mod_const", {w32(42)}, {}},
      {"reorder_demo.ct", "reorder_demo", {w32(16)},
       [](ExecEnv& e) { e.initial_mem.put_word(16, w32(5)); }},
      {"memequal.ct", "memequal", {w32(16), w32(48), w32(2)},
       [](ExecEnv& e) {
         for (uint32_t i = 0; i < 2; ++i) {
           e.initial_mem.put_byte(16 + i, uint8_t(i));
           e.initial_mem.put_byte(48 + i, uint8_t(i));
         }
       }},
      {"password_checker.ct", "password_checker", {w32(1024)},
       [](ExecEnv& e) {
         for (uint32_t i = 0; i < 8; ++i) e.initial_mem.put_byte(1024 + i, 97);
         e.inputs = InputPolicy::domains({{w32(97), w32(10)}});
       }},
  };
  for (const auto& cfg : cfgs) {
    Program p = parse_corpus(cfg.file);
    ExecEnv env = base_env(p);
    if (cfg.tweak) cfg.tweak(env);
    auto big = terminated_set(exec_enumerate(env, cfg.entry, cfg.args));
    auto small = terminated_set(smallstep_enumerate(env, cfg.entry, cfg.args));
    EXPECT_EQ(big, small) << cfg.file;
    EXPECT_FALSE(big.empty()) << cfg.file;
  }
}
