#include <gtest/gtest.h>

#include "ctlab/ctcheck.hpp"
#include "ctlab/parser.hpp"
#include "test_util.hpp"

using namespace ctlab;
using ctlab_test::enumerate_table_oracles;
using ctlab_test::parse_corpus;
using ctlab_test::w32;

namespace {

ExecEnv base_env(const Program& p) {
  ExecEnv env;
  env.program = &p;
  env.contents = ContentPolicy::constant_byte(0);
  return env;
}

KeyFn const_key() {
  return [](const CtCase&, const Outcome&) { return std::string("all"); };
}

SecretSpace swap_secrets() {
  SecretSpace s;
  for (uint32_t a : {0u, 1u})
    for (uint32_t b : {0u, 1u}) {
      CtCase c;
      c.label = std::to_string(a) + std::to_string(b);
      c.args = {w32(16), w32(20)};
      c.mem.put_word(16, w32(a));
      c.mem.put_word(20, w32(b));
      s.cases.push_back(c);
    }
  return s;
}

SecretSpace countdown_secrets() {
  SecretSpace s;
  for (uint32_t x : {1u, 2u}) {
    CtCase c;
    c.label = "x=" + std::to_string(x);
    c.args = {w32(x)};
    s.cases.push_back(c);
  }
  return s;
}

// username public, password table and attempt secret
SecretSpace login_secrets() {
  SecretSpace s;
  for (uint32_t u : {0u, 1u})
    for (uint32_t pw0 : {7u, 9u})
      for (uint32_t att : {7u, 9u}) {
        CtCase c;
        c.label = "u" + std::to_string(u) + "pw" + std::to_string(pw0) + "a" +
                  std::to_string(att);
        c.mem.put_word(1024, w32(pw0));
        c.mem.put_word(1028, w32(pw0 == 7 ? 9 : 7));
        c.inputs = InputPolicy::scripted({w32(u), w32(att)});
        s.cases.push_back(c);
      }
  return s;
}

KeyFn login_key_username_only() {
  return [](const CtCase&, const Outcome& o) {
    return o.io.empty() ? std::string("?") : o.io[0].value.str();
  };
}

KeyFn login_key_with_eqbit(unsigned bits) {
  return [bits](const CtCase& c, const Outcome& o) {
    if (o.io.size() < 2) return std::string("?");
    Word u = o.io[0].value;
    Word att = o.io[1].value;
    auto pw = c.mem.load(1024 + 4 * u.value(), bits / 8, bits);
    std::string eq = pw && *pw == att ? "1" : "0";
    return u.str() + "/" + eq;
  };
}

}  // namespace

TEST(NaiveCt, SwapIsConstantTime) {
  Program p = parse_corpus("swap.ct");
  CtVerdict v = check_naive_ct(base_env(p), "swap", const_key(), swap_secrets());
  ASSERT_TRUE(v.constant_time()) << v.note;
  ASSERT_EQ(v.trace_witness.size(), 1u);
  EXPECT_EQ(v.trace_witness.begin()->second,
            (LeakTrace{leak(16), leak(20), leak(16), leak(20)}));
}

TEST(NaiveCt, RefusesNondeterministicPrograms) {
  Program p = parse_corpus("stack_swap.ct");
  CtVerdict v = check_naive_ct(base_env(p), "stack_swap", const_key(), {{CtCase{}}});
  EXPECT_EQ(v.kind, CtVerdict::Kind::Inconclusive);
}

TEST(NaiveCt, LoginLeakyWithUsernameKeyOnly) {
  Program p = parse_corpus("login.ct");
  CtVerdict v = check_naive_ct(base_env(p), "login", login_key_username_only(),
                               login_secrets());
  ASSERT_TRUE(v.leaky()) << v.note;
  ASSERT_TRUE(v.left && v.right);
  // the two runs differ in the branch bit
  EXPECT_NE(show(v.left->outcome.leak), show(v.right->outcome.leak));
}

TEST(NaiveCt, LoginConstantTimeWithEqualityBit) {
  Program p = parse_corpus("login.ct");
  CtVerdict v = check_naive_ct(base_env(p), "login", login_key_with_eqbit(32),
                               login_secrets());
  EXPECT_TRUE(v.constant_time()) << v.note;
}

TEST(NaiveCt, ModConstLeaksItsArgument) {
  Program p = parse_corpus("mod_const.ct");
  SecretSpace s;
  for (uint32_t x : {5u, 6u}) {
    CtCase c;
    c.args = {w32(x)};
    c.label = std::to_string(x);
    s.cases.push_back(c);
  }
  CtVerdict v = check_naive_ct(base_env(p), "mod_const", const_key(), s);
  EXPECT_TRUE(v.leaky());
}

TEST(OracleCt, StackSwapAcrossOraclesAndSecrets) {
  Program p = parse_corpus("stack_swap.ct");
  SecretSpace s;
  for (uint32_t fill : {0u, 1u, 2u, 3u}) {
    CtCase c;
    c.label = "fill" + std::to_string(fill);
    c.mem.put_word(8, w32(fill));  // unrelated secret cell
    s.cases.push_back(c);
  }
  std::vector<Oracle> oracles = {Oracle::bump(w32(64), w32(16)),
                                 Oracle::bump(w32(128), w32(16)),
                                 Oracle::seeded(1), Oracle::seeded(2)};
  CtVerdict v =
      check_oracle_ct(base_env(p), "stack_swap", const_key(), s, oracles);
  ASSERT_TRUE(v.constant_time()) << v.note;
  // per-oracle traces differ but secrets do not matter
  ASSERT_EQ(v.trace_witness.size(), 4u);
  for (const auto& [key, trace] : v.trace_witness) {
    ASSERT_EQ(trace.size(), 5u);
    Word x = trace[0].value;
    EXPECT_EQ(trace[1].value, x);
    EXPECT_EQ(trace[2].value, x.add(w32(1)));
  }
}

TEST(OracleCt, CountdownLeaky) {
  Program p = parse_corpus("countdown.ct");
  CtVerdict v = check_oracle_ct(base_env(p), "countdown", const_key(),
                                countdown_secrets(),
                                {Oracle::bump(w32(64), w32(16))});
  ASSERT_TRUE(v.leaky());
  ASSERT_TRUE(v.left && v.right);
  EXPECT_EQ(v.left->outcome.leak.size() + v.right->outcome.leak.size(), 8u);
}

TEST(OracleCt, SwapDegenerate) {
  Program p = parse_corpus("swap.ct");
  CtVerdict v = check_oracle_ct(base_env(p), "swap", const_key(), swap_secrets(),
                                {Oracle::seeded(3)});
  EXPECT_TRUE(v.constant_time());
}

TEST(PredictorCt, StackSwapTree) {
  Program p = parse_corpus("stack_swap.ct");
  ExecEnv env = base_env(p);
  env.universe.bases = {w32(64), w32(128)};
  SecretSpace s;
  for (uint32_t fill : {0u, 1u}) {
    CtCase c;
    c.label = "fill" + std::to_string(fill);
    c.mem.put_word(8, w32(fill));
    s.cases.push_back(c);
  }
  CtVerdict v = check_predictor_ct(env, "stack_swap", const_key(), s);
  ASSERT_TRUE(v.constant_time()) << v.note;
  const LeakageTree& t = *v.tree_witness.at("all");
  ASSERT_EQ(t.kind, LeakageTree::Kind::Branch);
  EXPECT_TRUE(t.cases.count(64));
  EXPECT_TRUE(t.cases.count(128));
  EXPECT_EQ(t.cases.at(64)->kind, LeakageTree::Kind::Leak);
}

TEST(PredictorCt, CountdownLeakyWithReplayableWitness) {
  Program p = parse_corpus("countdown.ct");
  ExecEnv env = base_env(p);
  CtVerdict v =
      check_predictor_ct(env, "countdown", const_key(), countdown_secrets());
  ASSERT_TRUE(v.leaky()) << v.note;
  ASSERT_TRUE(v.left && v.right);
  // witnesses replay to the recorded traces
  for (const auto& ref : {*v.left, *v.right}) {
    ExecEnv renv = env;
    renv.initial_mem = countdown_secrets().cases[ref.case_index].mem;
    std::vector<size_t> script = ref.context.at("script").get<std::vector<size_t>>();
    Outcome again = exec_replay(renv, "countdown",
                                countdown_secrets().cases[ref.case_index].args,
                                script);
    EXPECT_EQ(show(again.leak), show(ref.outcome.leak));
  }
}

TEST(PredictorCt, MemequalContentsDoNotMatter) {
  Program p = parse_corpus("memequal.ct");
  ExecEnv env = base_env(p);
  SecretSpace s;
  for (uint32_t b0 : {0u, 1u})
    for (uint32_t b1 : {0u, 1u})
      for (uint32_t c0 : {0u, 1u})
        for (uint32_t c1 : {0u, 1u}) {
          CtCase c;
          c.label = std::to_string(b0) + std::to_string(b1) +
                    std::to_string(c0) + std::to_string(c1);
          c.args = {w32(16), w32(48), w32(2)};
          c.mem.put_byte(16, uint8_t(b0));
          c.mem.put_byte(17, uint8_t(b1));
          c.mem.put_byte(48, uint8_t(c0));
          c.mem.put_byte(49, uint8_t(c1));
          s.cases.push_back(c);
        }
  CtVerdict v = check_predictor_ct(env, "memequal", const_key(), s);
  ASSERT_TRUE(v.constant_time()) << v.note;
  // a deterministic program: the tree is a pure leak chain
  const LeakageTree* t = v.tree_witness.at("all").get();
  while (t->kind == LeakageTree::Kind::Leak) t = t->child.get();
  EXPECT_EQ(t->kind, LeakageTree::Kind::Leaf);
}

TEST(FlawedCt, CountdownAcceptedAndFnHasTheAppendixShape) {
  Program p = parse_corpus("countdown.ct");
  CtVerdict v = check_flawed_ct(base_env(p), "countdown", const_key(),
                                countdown_secrets());
  ASSERT_TRUE(v.constant_time()) << v.note;
  const auto& fmap = v.flawed_witness.at("all");
  ASSERT_FALSE(fmap.empty());
  for (const auto& [branches, leaks] : fmap) {
    // f(b) = [1] x |b| ++ [0]
    ASSERT_EQ(leaks.size(), branches.size() + 1);
    for (size_t i = 0; i < branches.size(); ++i)
      EXPECT_EQ(leaks[i].value(), 1u);
    EXPECT_EQ(leaks.back().value(), 0u);
  }
}

TEST(FlawedCt, SwapTriviallyAccepted) {
  Program p = parse_corpus("swap.ct");
  CtVerdict v =
      check_flawed_ct(base_env(p), "swap", const_key(), swap_secrets());
  EXPECT_TRUE(v.constant_time());
}

TEST(FlawedVsPredictorGap, CountdownSeparates) {
  Program p = parse_corpus("countdown.ct");
  ExecEnv env = base_env(p);
  EXPECT_TRUE(check_flawed_ct(env, "countdown", const_key(), countdown_secrets())
                  .constant_time());
  EXPECT_TRUE(check_predictor_ct(env, "countdown", const_key(), countdown_secrets())
                  .leaky());
}

TEST(OutputIndependence, StackallocAndPrint) {
  Program p = parse_corpus("stackalloc_and_print.ct");
  SecretSpace s;
  for (uint32_t fill : {0u, 1u}) {
    CtCase c;
    c.label = std::to_string(fill);
    c.mem.put_word(8, w32(fill));
    s.cases.push_back(c);
  }
  std::vector<Oracle> oracles = {Oracle::bump(w32(64), w32(16)),
                                 Oracle::bump(w32(128), w32(16))};
  CtVerdict v = check_output_independence(base_env(p), "stackalloc_and_print",
                                          const_key(), s, oracles);
  ASSERT_TRUE(v.constant_time()) << v.note;
  std::set<uint32_t> printed;
  for (const auto& [k, outs] : v.out_witness) {
    ASSERT_EQ(outs.size(), 1u);
    printed.insert(outs[0].value());
  }
  EXPECT_EQ(printed, (std::set<uint32_t>{64u, 128u}));
}

TEST(OutputIndependence, PrintingALoadedSecretIsLeaky) {
  Program p = parse("fn main(a) { x = load(a); output(x); }");
  SecretSpace s;
  for (uint32_t v0 : {3u, 4u}) {
    CtCase c;
    c.label = std::to_string(v0);
    c.args = {w32(16)};
    c.mem.put_word(16, w32(v0));
    s.cases.push_back(c);
  }
  CtVerdict v = check_output_independence(base_env(p), "main", const_key(), s,
                                          {Oracle::unit()});
  EXPECT_TRUE(v.leaky());
}

TEST(Inconclusive, ErrorStuckExecutionIsReported) {
  Program p = parse("fn main(a) { x = load(a); }");
  SecretSpace s;
  CtCase c;
  c.args = {w32(4096)};  // nothing mapped there
  c.label = "oob";
  s.cases.push_back(c);
  CtVerdict v = check_naive_ct(base_env(p), "main", const_key(), s);
  EXPECT_EQ(v.kind, CtVerdict::Kind::Inconclusive);
  ASSERT_TRUE(v.left.has_value());
  EXPECT_EQ(v.left->outcome.status, RunStatus::ErrorStuck);
  CtVerdict vp = check_predictor_ct(base_env(p), "main", const_key(), s);
  EXPECT_EQ(vp.kind, CtVerdict::Kind::Inconclusive);
}

TEST(Inconclusive, AllBenignClassIsReported) {
  Program p = parse_corpus("semiprime.ct");
  SecretSpace s;
  CtCase c;
  c.label = "starved";
  c.inputs = InputPolicy::scripted({w32(3)});  // second input missing
  s.cases.push_back(c);
  CtVerdict v = check_naive_ct(base_env(p), "semiprime", const_key(), s);
  EXPECT_EQ(v.kind, CtVerdict::Kind::Inconclusive);
}

// getline's leakage depends only on the number of inputs consumed, the
// destination and the limit, never on the characters themselves.
TEST(PredictorCt, GetlineLeaksOnlyTheLength) {
  Program p = parse_corpus("password_checker.ct");
  ExecEnv env = base_env(p);
  env.inputs = InputPolicy::domain({w32(97), w32(98), w32(10)});
  SecretSpace s;
  CtCase c;
  c.label = "buffer";
  c.args = {w32(256), w32(4)};
  for (uint32_t i = 0; i < 4; ++i) c.mem.put_byte(256 + i, 0);
  c.inputs = env.inputs;
  s.cases.push_back(c);
  KeyFn entered_length = [](const CtCase&, const Outcome& o) {
    return o.returns.empty() ? std::string("?") : o.returns[0].str();
  };
  CtVerdict v = check_predictor_ct(env, "getline", entered_length, s);
  ASSERT_TRUE(v.constant_time()) << v.note;
  // one class per entered length 0..4
  EXPECT_EQ(v.tree_witness.size(), 5u);
}

TEST(Monotonicity, EnlargingSecretSpaceNeverHidesLeaks) {
  Program p = parse_corpus("countdown.ct");
  ExecEnv env = base_env(p);
  SecretSpace small = countdown_secrets();
  SecretSpace big = small;
  CtCase extra;
  extra.label = "x=3";
  extra.args = {w32(3)};
  big.cases.push_back(extra);
  auto v_small = check_oracle_ct(env, "countdown", const_key(), small,
                                 {Oracle::bump(w32(64), w32(16))});
  auto v_big = check_oracle_ct(env, "countdown", const_key(), big,
                               {Oracle::bump(w32(64), w32(16))});
  EXPECT_TRUE(v_small.leaky());
  EXPECT_TRUE(v_big.leaky());
}

// Ordering of the notions: predictor CT agrees with oracle CT over all
// table oracles drawn from the same universe.
TEST(NotionOrdering, PredictorIffOracleOverTableOracles) {
  struct Case {
    std::string file, entry;
    SecretSpace secrets;
    std::function<void(ExecEnv&)> tweak;
    KeyFn key;
  };
  std::vector<Case> cases;
  cases.push_back({"swap.ct", "swap", swap_secrets(), {}, const_key()});
  cases.push_back({"stack_swap.ct", "stack_swap", {{CtCase{}}}, {}, const_key()});
  cases.push_back({"countdown.ct", "countdown", countdown_secrets(), {}, const_key()});
  cases.push_back({"mod_const.ct", "mod_const",
                   [] {
                     SecretSpace s;
                     for (uint32_t x : {5u, 6u}) {
                       CtCase c;
                       c.args = {w32(x)};
                       c.label = std::to_string(x);
                       s.cases.push_back(c);
                     }
                     return s;
                   }(),
                   {}, const_key()});
  for (auto& cs : cases) {
    Program p = parse_corpus(cs.file);
    ExecEnv env = base_env(p);
    if (cs.tweak) cs.tweak(env);
    CtVerdict pred = check_predictor_ct(env, cs.entry, cs.key, cs.secrets);
    // oracle CT over all table oracles with answers in the universe,
    // reachable query points drawn from every secret case
    std::vector<Oracle> oracles;
    for (const auto& c : cs.secrets.cases) {
      ExecEnv cenv = env;
      cenv.initial_mem = c.mem;
      cenv.inputs = c.inputs;
      auto os = enumerate_table_oracles(cenv, cs.entry, c.args,
                                        env.universe.bases);
      oracles.insert(oracles.end(), os.begin(), os.end());
    }
    CtVerdict orc = check_oracle_ct(env, cs.entry, cs.key, cs.secrets, oracles);
    EXPECT_EQ(pred.constant_time(), orc.constant_time()) << cs.file;
  }
}
