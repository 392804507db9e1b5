#pragma once

// Small arithmetic expression compiler for inline right-hand sides.
//
// Grammar:
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('+' | '-') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Names resolve to slots supplied at compile time (state variables first,
// then parameters). Functions: sin cos tan exp log sqrt abs tanh sinh cosh
// atan, pow(a,b), min(a,b), max(a,b).

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cyclecert/errors.hpp"

namespace cyclecert {

class Expression {
 public:
  Expression() = default;

  /// Compiles `text`; `slots` maps each admissible name to its index in the
  /// value span passed to evaluate().
  static Expression compile(std::string_view text,
                            const std::unordered_map<std::string, int>& slots) {
    Parser parser(text, slots);
    Expression e;
    e.root_ = parser.parse();
    e.nodes_ = std::move(parser.nodes);
    e.text_ = std::string(text);
    return e;
  }

  double evaluate(std::span<const double> values) const { return eval(root_, values); }

  const std::string& text() const { return text_; }

 private:
  enum class Op {
    kConst, kSlot, kAdd, kSub, kMul, kDiv, kPow, kNeg,
    kSin, kCos, kTan, kExp, kLog, kSqrt, kAbs, kTanh, kSinh, kCosh, kAtan,
    kMin, kMax,
  };

  struct Node {
    Op op;
    double value = 0.0;
    int slot = -1;
    int lhs = -1;
    int rhs = -1;
  };

  double eval(int id, std::span<const double> v) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::kConst: return n.value;
      case Op::kSlot: return v[static_cast<std::size_t>(n.slot)];
      case Op::kAdd: return eval(n.lhs, v) + eval(n.rhs, v);
      case Op::kSub: return eval(n.lhs, v) - eval(n.rhs, v);
      case Op::kMul: return eval(n.lhs, v) * eval(n.rhs, v);
      case Op::kDiv: return eval(n.lhs, v) / eval(n.rhs, v);
      case Op::kPow: return power(eval(n.lhs, v), eval(n.rhs, v));
      case Op::kNeg: return -eval(n.lhs, v);
      case Op::kSin: return std::sin(eval(n.lhs, v));
      case Op::kCos: return std::cos(eval(n.lhs, v));
      case Op::kTan: return std::tan(eval(n.lhs, v));
      case Op::kExp: return std::exp(eval(n.lhs, v));
      case Op::kLog: return std::log(eval(n.lhs, v));
      case Op::kSqrt: return std::sqrt(eval(n.lhs, v));
      case Op::kAbs: return std::abs(eval(n.lhs, v));
      case Op::kTanh: return std::tanh(eval(n.lhs, v));
      case Op::kSinh: return std::sinh(eval(n.lhs, v));
      case Op::kCosh: return std::cosh(eval(n.lhs, v));
      case Op::kAtan: return std::atan(eval(n.lhs, v));
      case Op::kMin: return std::fmin(eval(n.lhs, v), eval(n.rhs, v));
      case Op::kMax: return std::fmax(eval(n.lhs, v), eval(n.rhs, v));
    }
    return 0.0;
  }

  // Small integer exponents are expanded so that u^2 matches u*u exactly.
  static double power(double base, double exponent) {
    if (exponent == std::floor(exponent) && std::abs(exponent) <= 8.0) {
      int k = static_cast<int>(std::abs(exponent));
      double r = 1.0;
      for (int i = 0; i < k; ++i) r *= base;
      return exponent < 0 ? 1.0 / r : r;
    }
    return std::pow(base, exponent);
  }

  struct Parser {
    Parser(std::string_view t, const std::unordered_map<std::string, int>& s)
        : text(t), slots(s) {}

    std::string_view text;
    const std::unordered_map<std::string, int>& slots;
    std::size_t pos = 0;
    std::vector<Node> nodes;

    int parse() {
      int root = expr();
      skip();
      if (pos != text.size()) fail("unexpected trailing input");
      return root;
    }

    [[noreturn]] void fail(const std::string& what) const {
      throw Error(ErrorKind::kInput, "malformed expression '" + std::string(text) +
                                         "' at column " + std::to_string(pos) + ": " + what);
    }

    void skip() {
      while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    bool accept(char c) {
      skip();
      if (pos < text.size() && text[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    int add(Node n) {
      nodes.push_back(n);
      return static_cast<int>(nodes.size()) - 1;
    }

    int expr() {
      int lhs = term();
      for (;;) {
        if (accept('+')) lhs = add({Op::kAdd, 0, -1, lhs, term()});
        else if (accept('-')) lhs = add({Op::kSub, 0, -1, lhs, term()});
        else return lhs;
      }
    }

    int term() {
      int lhs = unary();
      for (;;) {
        if (accept('*')) lhs = add({Op::kMul, 0, -1, lhs, unary()});
        else if (accept('/')) lhs = add({Op::kDiv, 0, -1, lhs, unary()});
        else return lhs;
      }
    }

    int unary() {
      if (accept('-')) return add({Op::kNeg, 0, -1, unary(), -1});
      if (accept('+')) return unary();
      return power();
    }

    int power() {
      int base = atom();
      if (accept('^')) return add({Op::kPow, 0, -1, base, unary()});
      return base;
    }

    int atom() {
      skip();
      if (pos >= text.size()) fail("unexpected end of input");
      char c = text[pos];
      if (c == '(') {
        ++pos;
        int inner = expr();
        if (!accept(')')) fail("expected ')'");
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
      fail(std::string("unexpected character '") + c + "'");
    }

    int number() {
      std::string buf(text.substr(pos));
      char* end = nullptr;
      double v = std::strtod(buf.c_str(), &end);
      if (end == buf.c_str()) fail("bad number");
      pos += static_cast<std::size_t>(end - buf.c_str());
      return add({Op::kConst, v, -1, -1, -1});
    }

    int name() {
      std::size_t start = pos;
      while (pos < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
        ++pos;
      std::string id(text.substr(start, pos - start));
      if (accept('(')) return call(id);
      if (id == "pi") return add({Op::kConst, 3.14159265358979323846, -1, -1, -1});
      auto it = slots.find(id);
      if (it == slots.end()) fail("unknown name '" + id + "'");
      return add({Op::kSlot, 0, it->second, -1, -1});
    }

    int call(const std::string& id) {
      static const std::unordered_map<std::string, Op> unary_ops = {
          {"sin", Op::kSin},   {"cos", Op::kCos},   {"tan", Op::kTan},
          {"exp", Op::kExp},   {"log", Op::kLog},   {"sqrt", Op::kSqrt},
          {"abs", Op::kAbs},   {"tanh", Op::kTanh}, {"sinh", Op::kSinh},
          {"cosh", Op::kCosh}, {"atan", Op::kAtan},
      };
      static const std::unordered_map<std::string, Op> binary_ops = {
          {"pow", Op::kPow}, {"min", Op::kMin}, {"max", Op::kMax}};
      int first = expr();
      if (auto u = unary_ops.find(id); u != unary_ops.end()) {
        if (!accept(')')) fail("expected ')' after argument of " + id);
        return add({u->second, 0, -1, first, -1});
      }
      if (auto b = binary_ops.find(id); b != binary_ops.end()) {
        if (!accept(',')) fail(id + " takes two arguments");
        int second = expr();
        if (!accept(')')) fail("expected ')' after arguments of " + id);
        return add({b->second, 0, -1, first, second});
      }
      fail("unknown function '" + id + "'");
    }
  };

  std::vector<Node> nodes_;
  int root_ = -1;
  std::string text_;
};

}  // namespace cyclecert
