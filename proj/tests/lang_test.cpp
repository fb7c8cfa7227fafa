#include <gtest/gtest.h>

#include <random>

#include "ctlab/format.hpp"
#include "ctlab/parser.hpp"
#include "ctlab/validate.hpp"
#include "test_util.hpp"

using namespace ctlab;
using ctlab_test::corpus_files;
using ctlab_test::parse_corpus;
using ctlab_test::read_corpus_text;

TEST(Parse, SmallestProgram) {
  Program p = parse("fn main() { skip; }");
  ASSERT_EQ(p.functions.size(), 1u);
  EXPECT_EQ(p.entry, "main");
  EXPECT_TRUE(std::holds_alternative<Stmt::Skip>(p.functions[0].body->node));
}

TEST(Parse, MemequalShape) {
  Program p = parse_corpus("memequal.ct");
  const FnDef* f = p.find("memequal");
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->params, (std::vector<std::string>{"x", "y", "n"}));
  EXPECT_EQ(f->returns, (std::vector<std::string>{"r"}));
  // r = 0; while (n) { ... }; r = (r == 0)
  bool has_while = false;
  std::function<void(const Stmt&)> scan = [&](const Stmt& s) {
    if (std::holds_alternative<Stmt::While>(s.node)) has_while = true;
    if (auto* q = std::get_if<Stmt::Seq>(&s.node)) {
      scan(*q->first);
      scan(*q->second);
    }
  };
  scan(*f->body);
  EXPECT_TRUE(has_while);
}

TEST(Parse, MalformedInput) {
  try {
    parse("fn f( {");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 1);
    EXPECT_GT(e.column, 1);
    EXPECT_FALSE(e.expected.empty());
  }
}

TEST(Parse, OperatorPrecedence) {
  Program p = parse("fn f(a, b, c) -> (r) { r = a | b ^ c & a == b; }");
  Program q = parse("fn f(a, b, c) -> (r) { r = a | (b ^ (c & (a == b))); }");
  EXPECT_TRUE(program_equal(p, q));
}

TEST(Parse, SignedLessThanToken) {
  Program p = parse("fn f(a, s) -> (r) { r = a <s s; }");
  const auto& body = p.functions[0].body;
  const auto& asg = std::get<Stmt::Assign>(body->node);
  EXPECT_EQ(std::get<Expr::Bin>(asg.value->node).op, BinOp::Lts);
  // with a space it is unsigned less-than against the variable s
  Program q = parse("fn f(a, s) -> (r) { r = a < s; }");
  const auto& asg2 = std::get<Stmt::Assign>(q.functions[0].body->node);
  EXPECT_EQ(std::get<Expr::Bin>(asg2.value->node).op, BinOp::Ltu);
}

TEST(Format, CanonicalSkip) {
  Program p = parse("fn main() {   skip;  }");
  EXPECT_EQ(format(p), "fn main() { skip; }");
}

TEST(Format, RoundTripCorpus) {
  for (const auto& name : corpus_files()) {
    Program p = parse(read_corpus_text(name));
    Program q = parse(format(p));
    EXPECT_TRUE(program_equal(p, q)) << name;
  }
}

TEST(Format, Idempotent) {
  for (const auto& name : corpus_files()) {
    Program p = parse(read_corpus_text(name));
    std::string once = format(p);
    std::string twice = format(parse(once));
    EXPECT_EQ(once, twice) << name;
  }
}

TEST(Validate, CorpusIsClean) {
  for (const auto& name : corpus_files()) {
    Program p = parse(read_corpus_text(name));
    auto diags = validate(p);
    EXPECT_TRUE(diags.empty()) << name << ": "
                               << (diags.empty() ? "" : diags[0].message());
  }
}

TEST(Validate, UndefinedFunction) {
  Program p = parse("fn main() { g(); }");
  auto diags = validate(p);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::UndefinedFunction);
  EXPECT_EQ(diags[0].subject, "g");
}

TEST(Validate, BadAllocSize) {
  Program p = parse("fn main() { stackalloc 3 as x { skip; } }");
  auto diags = validate(p);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::BadAllocSize);
  EXPECT_EQ(diags[0].size, 3u);
}

TEST(Validate, UseBeforeAssignment) {
  Program p = parse("fn main() { y = x; x = 1; }");
  auto diags = validate(p);
  ASSERT_FALSE(diags.empty());
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::UndefinedVariable);
  EXPECT_EQ(diags[0].subject, "x");
}

TEST(Validate, IfBranchesMerge) {
  // assigned in only one branch: not definitely assigned afterwards
  Program p = parse("fn f(c) { if (c) { x = 1; } output(x); }");
  EXPECT_FALSE(validate(p).empty());
  Program q = parse("fn f(c) { if (c) { x = 1; } else { x = 2; } output(x); }");
  EXPECT_TRUE(validate(q).empty());
}

TEST(Validate, ArityMismatch) {
  Program p = parse("fn g(a) -> (r) { r = a; } fn main() { x = g(1, 2); }");
  auto diags = validate(p);
  ASSERT_FALSE(diags.empty());
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::ArityMismatch);
}

TEST(Validate, RandomGate) {
  Program p = parse("fn main() { random as x; output(x); }");
  EXPECT_TRUE(validate(p).empty());
  ValidateOptions opts;
  opts.allow_random = false;
  auto diags = validate(p, opts);
  ASSERT_FALSE(diags.empty());
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::RandomDisabled);
}

TEST(Validate, UnassignedReturn) {
  Program p = parse("fn f() -> (r) { skip; }");
  auto diags = validate(p);
  ASSERT_FALSE(diags.empty());
  EXPECT_EQ(diags[0].kind, Diagnostic::Kind::UndefinedVariable);
  EXPECT_EQ(diags[0].subject, "r");
}

// Random small programs with empty diagnostics never get error-stuck on
// undefined names.
namespace {

class ProgramGen {
 public:
  explicit ProgramGen(uint64_t seed) : rng_(seed) {}

  Program gen() {
    Program p;
    p.word_bits = 32;
    p.entry = "main";
    FnDef f;
    f.name = "main";
    f.params = {"a", "b"};
    vars_ = {"a", "b"};
    f.body = gen_stmt(3);
    p.functions.push_back(f);
    return p;
  }

 private:
  std::string any_var() { return vars_[rng_() % vars_.size()]; }

  ExprPtr gen_expr(int depth) {
    switch (rng_() % (depth > 0 ? 3 : 2)) {
      case 0: return lit(Word::of(uint32_t(rng_() % 8), 32));
      case 1: return var(any_var());
      default: {
        BinOp op = static_cast<BinOp>(rng_() % 14);
        return bin(op, gen_expr(depth - 1), gen_expr(depth - 1));
      }
    }
  }

  StmtPtr gen_stmt(int depth) {
    if (depth == 0) return skip();
    switch (rng_() % 7) {
      case 0: return seq(gen_stmt(depth - 1), gen_stmt(depth - 1));
      case 1: {
        std::string x = "v" + std::to_string(rng_() % 3);
        StmtPtr s = assign(x, gen_expr(2));
        vars_.push_back(x);
        return s;
      }
      case 2:
        return if_stmt(gen_expr(1), gen_stmt(depth - 1), gen_stmt(depth - 1));
      case 3:
        return output_stmt(gen_expr(2));
      case 4: {
        std::string x = "w" + std::to_string(rng_() % 2);
        vars_.push_back(x);
        size_t before = vars_.size();
        StmtPtr body = gen_stmt(depth - 1);
        (void)before;
        return stackalloc(4, x, body);
      }
      case 5: {
        std::string x = "i" + std::to_string(rng_() % 2);
        vars_.push_back(x);
        return input_stmt(x);
      }
      default:
        return skip();
    }
  }

  std::mt19937_64 rng_;
  std::vector<std::string> vars_;
};

}  // namespace

TEST(Format, RoundTripGeneratedPrograms) {
  // parsing normalizes sequence nesting, so round-trip from the parsed form
  for (uint64_t seed = 1000; seed < 1200; ++seed) {
    ProgramGen gen(seed);
    Program q = parse(format(gen.gen()));
    EXPECT_TRUE(program_equal(parse(format(q)), q)) << "seed " << seed;
    EXPECT_EQ(format(q), format(parse(format(q)))) << "seed " << seed;
  }
}

TEST(Validate, SoundForInterpreter) {
  int accepted = 0;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    ProgramGen gen(seed);
    Program p = gen.gen();
    if (!validate(p).empty()) continue;
    ++accepted;
    ExecEnv env;
    env.program = &p;
    env.inputs = InputPolicy::domain({Word::of(0, 32), Word::of(1, 32)});
    env.contents = ContentPolicy::constant_byte(0);
    env.fuel = 10000;
    for (const auto& o : exec_enumerate(env, "main", {Word::of(1, 32), Word::of(2, 32)})) {
      if (o.status == RunStatus::ErrorStuck) {
        EXPECT_NE(o.reason, StuckReason::UndefinedVariable)
            << "seed " << seed << ": " << o.detail;
        EXPECT_NE(o.reason, StuckReason::UndefinedFunction)
            << "seed " << seed << ": " << o.detail;
      }
    }
  }
  EXPECT_GT(accepted, 50);  // the generator mostly emits valid programs
}
