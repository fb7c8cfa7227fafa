#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctlab/ast.hpp"

namespace ctlab {

struct ParseError : std::runtime_error {
  ParseError(int line, int column, std::string expected, std::string got)
      : std::runtime_error("parse error at " + std::to_string(line) + ":" +
                           std::to_string(column) + ": expected " + expected +
                           ", got '" + got + "'"),
        line(line),
        column(column),
        expected(std::move(expected)),
        got(std::move(got)) {}
  int line;
  int column;
  std::string expected;
  std::string got;
};

struct ParseOptions {
  unsigned word_bits = 32;
};

namespace detail {

struct Token {
  enum class Kind { Ident, Number, Punct, Eof };
  Kind kind;
  std::string text;
  uint64_t number = 0;
  int line = 1, column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip_ws();
    tok_.line = line_;
    tok_.column = col_;
    if (pos_ >= src_.size()) {
      tok_ = Token{Token::Kind::Eof, "<eof>", 0, line_, col_};
      return;
    }
    char c = src_[pos_];
    if (std::isalpha((unsigned char)c) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_'))
        bump();
      tok_ = Token{Token::Kind::Ident, std::string(src_.substr(start, pos_ - start)),
                   0, tok_.line, tok_.column};
      return;
    }
    if (std::isdigit((unsigned char)c)) {
      size_t start = pos_;
      uint64_t v = 0;
      if (c == '0' && pos_ + 1 < src_.size() &&
          (src_[pos_ + 1] == 'x' || src_[pos_ + 1] == 'X')) {
        bump();
        bump();
        while (pos_ < src_.size() && std::isxdigit((unsigned char)src_[pos_])) {
          char d = src_[pos_];
          v = v * 16 + (std::isdigit((unsigned char)d)
                            ? d - '0'
                            : std::tolower((unsigned char)d) - 'a' + 10);
          bump();
        }
      } else {
        while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) {
          v = v * 10 + (src_[pos_] - '0');
          bump();
        }
      }
      tok_ = Token{Token::Kind::Number, std::string(src_.substr(start, pos_ - start)),
                   v, tok_.line, tok_.column};
      return;
    }
    // multi-char operators first
    auto two = src_.substr(pos_, 2);
    for (const char* op : {"->", "<<", ">>", "==", "!="}) {
      if (two == op) {
        bump();
        bump();
        tok_ = Token{Token::Kind::Punct, op, 0, tok_.line, tok_.column};
        return;
      }
    }
    // '<s' is signed-less-than when the 's' is not part of an identifier
    if (two == "<s" && (pos_ + 2 >= src_.size() ||
                        (!std::isalnum((unsigned char)src_[pos_ + 2]) &&
                         src_[pos_ + 2] != '_'))) {
      bump();
      bump();
      tok_ = Token{Token::Kind::Punct, "<s", 0, tok_.line, tok_.column};
      return;
    }
    bump();
    tok_ = Token{Token::Kind::Punct, std::string(1, c), 0, tok_.line, tok_.column};
  }

  void skip_ws() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
      } else if (std::isspace((unsigned char)c)) {
        bump();
      } else {
        break;
      }
    }
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

class Parser {
 public:
  Parser(std::string_view src, ParseOptions opts) : lx_(src), opts_(opts) {}

  Program parse_program() {
    Program p;
    p.word_bits = opts_.word_bits;
    while (lx_.peek().kind != Token::Kind::Eof) p.functions.push_back(parse_fn());
    if (p.functions.empty())
      fail("at least one function definition");
    p.entry = p.find("main") ? "main" : p.functions.front().name;
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& expected) {
    const Token& t = lx_.peek();
    throw ParseError(t.line, t.column, expected, t.text);
  }

  bool at_punct(std::string_view s) const {
    return lx_.peek().kind == Token::Kind::Punct && lx_.peek().text == s;
  }
  bool at_kw(std::string_view s) const {
    return lx_.peek().kind == Token::Kind::Ident && lx_.peek().text == s;
  }
  void expect_punct(std::string_view s) {
    if (!at_punct(s)) fail("'" + std::string(s) + "'");
    lx_.take();
  }
  void expect_kw(std::string_view s) {
    if (!at_kw(s)) fail("'" + std::string(s) + "'");
    lx_.take();
  }

  static bool is_keyword(const std::string& s) {
    for (const char* k : {"fn", "skip", "stackalloc", "as", "random", "input",
                          "output", "if", "else", "while", "load", "load1",
                          "store", "store1"})
      if (s == k) return true;
    return false;
  }

  std::string expect_ident() {
    if (lx_.peek().kind != Token::Kind::Ident || is_keyword(lx_.peek().text))
      fail("identifier");
    return lx_.take().text;
  }

  uint64_t expect_number() {
    if (lx_.peek().kind != Token::Kind::Number) fail("number");
    return lx_.take().number;
  }

  FnDef parse_fn() {
    expect_kw("fn");
    FnDef f;
    f.name = expect_ident();
    expect_punct("(");
    if (!at_punct(")")) {
      f.params.push_back(expect_ident());
      while (at_punct(",")) {
        lx_.take();
        f.params.push_back(expect_ident());
      }
    }
    expect_punct(")");
    if (at_punct("->")) {
      lx_.take();
      expect_punct("(");
      f.returns.push_back(expect_ident());
      while (at_punct(",")) {
        lx_.take();
        f.returns.push_back(expect_ident());
      }
      expect_punct(")");
    }
    f.body = parse_block();
    return f;
  }

  StmtPtr parse_block() {
    expect_punct("{");
    std::vector<StmtPtr> stmts;
    while (!at_punct("}")) {
      if (lx_.peek().kind == Token::Kind::Eof) fail("'}'");
      stmts.push_back(parse_stmt());
    }
    lx_.take();
    return seq_of(std::move(stmts));
  }

  StmtPtr parse_stmt() {
    if (at_kw("skip")) {
      lx_.take();
      expect_punct(";");
      return skip();
    }
    if (at_kw("stackalloc")) {
      lx_.take();
      uint32_t n = static_cast<uint32_t>(expect_number());
      expect_kw("as");
      std::string x = expect_ident();
      StmtPtr body = parse_block();
      return stackalloc(n, x, body);
    }
    if (at_kw("random")) {
      lx_.take();
      expect_kw("as");
      std::string x = expect_ident();
      expect_punct(";");
      return random_stmt(x);
    }
    if (at_kw("output")) {
      lx_.take();
      expect_punct("(");
      ExprPtr e = parse_expr();
      expect_punct(")");
      expect_punct(";");
      return output_stmt(e);
    }
    if (at_kw("store") || at_kw("store1")) {
      bool byte = lx_.take().text == "store1";
      expect_punct("(");
      ExprPtr addr = parse_expr();
      expect_punct(",");
      ExprPtr val = parse_expr();
      expect_punct(")");
      expect_punct(";");
      return store(addr, val, byte ? 1 : opts_.word_bits / 8);
    }
    if (at_kw("if")) {
      lx_.take();
      expect_punct("(");
      ExprPtr c = parse_expr();
      expect_punct(")");
      StmtPtr t = parse_block();
      StmtPtr e = skip();
      if (at_kw("else")) {
        lx_.take();
        e = parse_block();
      }
      return if_stmt(c, t, e);
    }
    if (at_kw("while")) {
      lx_.take();
      expect_punct("(");
      ExprPtr c = parse_expr();
      expect_punct(")");
      StmtPtr b = parse_block();
      return while_stmt(c, b);
    }

    // assignment, load, input, or call (possibly multi-result)
    std::vector<std::string> names;
    names.push_back(expect_ident());
    while (at_punct(",")) {
      lx_.take();
      names.push_back(expect_ident());
    }
    if (names.size() == 1 && at_punct("(")) {
      // call with no results
      return finish_call({}, names[0]);
    }
    expect_punct("=");
    if (at_kw("input")) {
      if (names.size() != 1) fail("single target for input");
      lx_.take();
      expect_punct("(");
      expect_punct(")");
      expect_punct(";");
      return input_stmt(names[0]);
    }
    if (at_kw("load") || at_kw("load1")) {
      if (names.size() != 1) fail("single target for load");
      bool byte = lx_.take().text == "load1";
      expect_punct("(");
      ExprPtr addr = parse_expr();
      expect_punct(")");
      expect_punct(";");
      return load(names[0], addr, byte ? 1 : opts_.word_bits / 8);
    }
    if (lx_.peek().kind == Token::Kind::Ident && !is_keyword(lx_.peek().text)) {
      // could be a call `f(...)` or a variable expression
      std::string id = lx_.take().text;
      if (at_punct("(")) return finish_call(names, id);
      if (names.size() != 1) fail("call after multiple targets");
      ExprPtr e = parse_expr_after_atom(var(id));
      expect_punct(";");
      return assign(names[0], e);
    }
    if (names.size() != 1) fail("call after multiple targets");
    ExprPtr e = parse_expr();
    expect_punct(";");
    return assign(names[0], e);
  }

  StmtPtr finish_call(std::vector<std::string> results, std::string callee) {
    expect_punct("(");
    std::vector<ExprPtr> args;
    if (!at_punct(")")) {
      args.push_back(parse_expr());
      while (at_punct(",")) {
        lx_.take();
        args.push_back(parse_expr());
      }
    }
    expect_punct(")");
    expect_punct(";");
    return call_stmt(std::move(results), std::move(callee), std::move(args));
  }

  // Precedence levels, loosest first: | ^ & (==,!=) (<,<s) (<<,>>) (+,-) (*,/,%)
  static int prec_of(std::string_view op) {
    if (op == "|") return 0;
    if (op == "^") return 1;
    if (op == "&") return 2;
    if (op == "==" || op == "!=") return 3;
    if (op == "<" || op == "<s") return 4;
    if (op == "<<" || op == ">>") return 5;
    if (op == "+" || op == "-") return 6;
    if (op == "*" || op == "/" || op == "%") return 7;
    return -1;
  }

  static BinOp op_of(std::string_view op) {
    if (op == "|") return BinOp::Or;
    if (op == "^") return BinOp::Xor;
    if (op == "&") return BinOp::And;
    if (op == "==") return BinOp::Eq;
    if (op == "!=") return BinOp::Ne;
    if (op == "<") return BinOp::Ltu;
    if (op == "<s") return BinOp::Lts;
    if (op == "<<") return BinOp::Shl;
    if (op == ">>") return BinOp::Shr;
    if (op == "+") return BinOp::Add;
    if (op == "-") return BinOp::Sub;
    if (op == "*") return BinOp::Mul;
    if (op == "/") return BinOp::Divu;
    return BinOp::Remu;
  }

  ExprPtr parse_expr() { return parse_bin(parse_atom(), 0); }

  ExprPtr parse_expr_after_atom(ExprPtr atom) { return parse_bin(std::move(atom), 0); }

  ExprPtr parse_bin(ExprPtr lhs, int min_prec) {
    while (lx_.peek().kind == Token::Kind::Punct) {
      int p = prec_of(lx_.peek().text);
      if (p < min_prec) break;
      std::string op = lx_.take().text;
      ExprPtr rhs = parse_atom();
      while (lx_.peek().kind == Token::Kind::Punct &&
             prec_of(lx_.peek().text) > p)
        rhs = parse_bin(std::move(rhs), prec_of(lx_.peek().text));
      lhs = bin(op_of(op), std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  ExprPtr parse_atom() {
    if (at_punct("(")) {
      lx_.take();
      ExprPtr e = parse_expr();
      expect_punct(")");
      return e;
    }
    if (lx_.peek().kind == Token::Kind::Number)
      return lit(Word::of(lx_.take().number, opts_.word_bits));
    if (lx_.peek().kind == Token::Kind::Ident && !is_keyword(lx_.peek().text))
      return var(lx_.take().text);
    fail("expression");
  }

  Lexer lx_;
  ParseOptions opts_;
};

}  // namespace detail

inline Program parse(std::string_view source, ParseOptions opts = {}) {
  return detail::Parser(source, opts).parse_program();
}

}  // namespace ctlab
