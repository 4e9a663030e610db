#pragma once

// Reward DSL. A program is a list of weighted terms:
//
//   # comment
//   term track weight 1.0 = exp(-square(vx - vx_cmd));
//   term gaps  weight -0.5 = frac_below(height_scan, -0.5);
//
// Expressions combine literals, feature names, + - * /, unary minus and a
// fixed function set. Evaluation is total: division by (near) zero yields 0,
// every intermediate is clamped to [-1e6, 1e6] and NaN collapses to 0.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "esds/common.hpp"

namespace esds {

inline constexpr int kRewardGrammarVersion = 1;
inline constexpr double kRewardClamp = 1e6;
inline constexpr double kDivisionGuard = 1e-9;

enum class Func { Exp, Abs, Tanh, Square, Clip, Min, Max, Sum, Mean, Std, FracBelow, FracAbove };

enum class ValueKind { Scalar, Vector };

struct FuncInfo {
  Func func;
  std::string_view name;
  std::vector<ValueKind> params;
};

inline const std::vector<FuncInfo>& function_table() {
  using V = ValueKind;
  static const std::vector<FuncInfo> table = {
      {Func::Exp, "exp", {V::Scalar}},
      {Func::Abs, "abs", {V::Scalar}},
      {Func::Tanh, "tanh", {V::Scalar}},
      {Func::Square, "square", {V::Scalar}},
      {Func::Clip, "clip", {V::Scalar, V::Scalar, V::Scalar}},
      {Func::Min, "min", {V::Scalar, V::Scalar}},
      {Func::Max, "max", {V::Scalar, V::Scalar}},
      {Func::Sum, "sum", {V::Vector}},
      {Func::Mean, "mean", {V::Vector}},
      {Func::Std, "std", {V::Vector}},
      {Func::FracBelow, "frac_below", {V::Vector, V::Scalar}},
      {Func::FracAbove, "frac_above", {V::Vector, V::Scalar}},
  };
  return table;
}

inline const FuncInfo* find_function(std::string_view name) {
  for (const auto& f : function_table())
    if (f.name == name) return &f;
  return nullptr;
}

inline const FuncInfo& function_info(Func func) {
  for (const auto& f : function_table())
    if (f.func == func) return f;
  return function_table().front();
}

struct Expr {
  enum class Kind { Number, Feature, Call, Neg, Add, Sub, Mul, Div };

  Kind kind = Kind::Number;
  double value = 0.0;  // Number
  std::string name;    // Feature
  Func func = Func::Exp;
  std::vector<Expr> args;  // operands for Call / Neg / binary ops
  int line = 0;
  int col = 0;
  int slot = -1;  // feature slot after binding

  static Expr number(double v) {
    Expr e;
    e.kind = Kind::Number;
    e.value = v;
    return e;
  }
  static Expr feature(std::string n) {
    Expr e;
    e.kind = Kind::Feature;
    e.name = std::move(n);
    return e;
  }
  static Expr unary(Kind k, Expr operand) {
    Expr e;
    e.kind = k;
    e.args.push_back(std::move(operand));
    return e;
  }
  static Expr binary(Kind k, Expr lhs, Expr rhs) {
    Expr e;
    e.kind = k;
    e.args.push_back(std::move(lhs));
    e.args.push_back(std::move(rhs));
    return e;
  }
  static Expr call(Func f, std::vector<Expr> a) {
    Expr e;
    e.kind = Kind::Call;
    e.func = f;
    e.args = std::move(a);
    return e;
  }
};

/// Structural equality; ignores source positions and binding slots.
inline bool same_structure(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case Expr::Kind::Number:
      if (a.value != b.value) return false;
      break;
    case Expr::Kind::Feature:
      if (a.name != b.name) return false;
      break;
    case Expr::Kind::Call:
      if (a.func != b.func) return false;
      break;
    default: break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (!same_structure(a.args[i], b.args[i])) return false;
  return true;
}

struct RewardTerm {
  std::string name;
  double weight = 1.0;
  Expr expr;
  int line = 0;
};

struct RewardProgram {
  std::vector<RewardTerm> terms;
  std::string source_text;
  int version = kRewardGrammarVersion;

  const RewardTerm* find(std::string_view name) const {
    for (const auto& t : terms)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline bool same_structure(const RewardProgram& a, const RewardProgram& b) {
  if (a.terms.size() != b.terms.size()) return false;
  for (std::size_t i = 0; i < a.terms.size(); ++i) {
    const auto& x = a.terms[i];
    const auto& y = b.terms[i];
    if (x.name != y.name || x.weight != y.weight || !same_structure(x.expr, y.expr)) return false;
  }
  return true;
}

class SyntaxError : public Error {
 public:
  SyntaxError(int line, int col, std::string expected, const std::string& found)
      : Error(ErrorCode::SyntaxError, std::to_string(line) + ":" + std::to_string(col) + ": expected " + expected +
                                          ", found " + found),
        line_(line),
        col_(col),
        expected_(std::move(expected)) {}

  int line() const noexcept { return line_; }
  int col() const noexcept { return col_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  int line_;
  int col_;
  std::string expected_;
};

namespace dsl_detail {

struct Token {
  enum class Kind { Ident, Number, Symbol, End };
  Kind kind = Kind::End;
  std::string text;
  double number = 0.0;
  int line = 1;
  int col = 1;

  std::string describe() const {
    if (kind == Kind::End) return "end of input";
    return "'" + text + "'";
  }
};

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token tok;
    tok.line = line;
    tok.col = col;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      tok.kind = Token::Kind::Ident;
      tok.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && src[j] == '.') {
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
          j = k;
        }
      }
      tok.kind = Token::Kind::Number;
      tok.text = std::string(src.substr(i, j - i));
      tok.number = std::strtod(tok.text.c_str(), nullptr);
      if (!std::isfinite(tok.number)) throw SyntaxError(line, col, "finite number", "'" + tok.text + "'");
      advance(j - i);
    } else if (std::string_view("+-*/(),;=").find(c) != std::string_view::npos) {
      tok.kind = Token::Kind::Symbol;
      tok.text = std::string(1, c);
      advance(1);
    } else {
      throw SyntaxError(line, col, "token", "'" + std::string(1, c) + "'");
    }
    out.push_back(std::move(tok));
  }
  Token end;
  end.line = line;
  end.col = col;
  out.push_back(end);
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  RewardProgram program() {
    RewardProgram prog;
    while (peek().kind != Token::Kind::End) prog.terms.push_back(term(prog));
    return prog;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& take() { return tokens_[pos_++]; }

  bool is_symbol(std::string_view s) const { return peek().kind == Token::Kind::Symbol && peek().text == s; }

  void expect_symbol(std::string_view s) {
    if (!is_symbol(s)) throw SyntaxError(peek().line, peek().col, "'" + std::string(s) + "'", peek().describe());
    ++pos_;
  }

  void expect_keyword(std::string_view kw) {
    if (peek().kind != Token::Kind::Ident || peek().text != kw)
      throw SyntaxError(peek().line, peek().col, "'" + std::string(kw) + "'", peek().describe());
    ++pos_;
  }

  RewardTerm term(const RewardProgram& sofar) {
    RewardTerm t;
    t.line = peek().line;
    expect_keyword("term");
    if (peek().kind != Token::Kind::Ident) throw SyntaxError(peek().line, peek().col, "term name", peek().describe());
    const Token& name = take();
    if (sofar.find(name.text))
      throw Error(ErrorCode::DuplicateTerm, std::to_string(name.line) + ":" + std::to_string(name.col) +
                                                ": duplicate term '" + name.text + "'");
    t.name = name.text;
    expect_keyword("weight");
    double sign = 1.0;
    if (is_symbol("-")) {
      sign = -1.0;
      ++pos_;
    } else if (is_symbol("+")) {
      ++pos_;
    }
    if (peek().kind != Token::Kind::Number) throw SyntaxError(peek().line, peek().col, "weight value", peek().describe());
    t.weight = sign * take().number;
    expect_symbol("=");
    t.expr = expression();
    expect_symbol(";");
    return t;
  }

  Expr expression() {
    Expr lhs = product();
    while (is_symbol("+") || is_symbol("-")) {
      const Token& op = take();
      Expr rhs = product();
      Expr e = Expr::binary(op.text == "+" ? Expr::Kind::Add : Expr::Kind::Sub, std::move(lhs), std::move(rhs));
      e.line = op.line;
      e.col = op.col;
      lhs = std::move(e);
    }
    return lhs;
  }

  Expr product() {
    Expr lhs = unary();
    while (is_symbol("*") || is_symbol("/")) {
      const Token& op = take();
      Expr rhs = unary();
      Expr e = Expr::binary(op.text == "*" ? Expr::Kind::Mul : Expr::Kind::Div, std::move(lhs), std::move(rhs));
      e.line = op.line;
      e.col = op.col;
      lhs = std::move(e);
    }
    return lhs;
  }

  Expr unary() {
    if (is_symbol("-")) {
      const Token& op = take();
      Expr e = Expr::unary(Expr::Kind::Neg, unary());
      e.line = op.line;
      e.col = op.col;
      return e;
    }
    return primary();
  }

  Expr primary() {
    const Token& tok = peek();
    if (tok.kind == Token::Kind::Number) {
      ++pos_;
      Expr e = Expr::number(tok.number);
      e.line = tok.line;
      e.col = tok.col;
      return e;
    }
    if (tok.kind == Token::Kind::Ident) {
      ++pos_;
      if (is_symbol("(")) {
        const FuncInfo* info = find_function(tok.text);
        if (!info)
          throw Error(ErrorCode::UnknownFunction, std::to_string(tok.line) + ":" + std::to_string(tok.col) +
                                                      ": unknown function '" + tok.text + "'");
        ++pos_;
        std::vector<Expr> args;
        if (!is_symbol(")")) {
          args.push_back(expression());
          while (is_symbol(",")) {
            ++pos_;
            args.push_back(expression());
          }
        }
        expect_symbol(")");
        if (args.size() != info->params.size())
          throw SyntaxError(tok.line, tok.col, std::to_string(info->params.size()) + " argument(s) to " + tok.text,
                            std::to_string(args.size()));
        Expr e = Expr::call(info->func, std::move(args));
        e.line = tok.line;
        e.col = tok.col;
        return e;
      }
      Expr e = Expr::feature(tok.text);
      e.line = tok.line;
      e.col = tok.col;
      return e;
    }
    if (is_symbol("(")) {
      ++pos_;
      Expr e = expression();
      expect_symbol(")");
      return e;
    }
    throw SyntaxError(tok.line, tok.col, "expression", tok.describe());
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

inline int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub: return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::Div: return 2;
    case Expr::Kind::Neg: return 3;
    default: return 4;
  }
}

inline void write_expr(const Expr& e, std::string& out) {
  auto child = [&](const Expr& c, bool parens) {
    if (parens) out += '(';
    write_expr(c, out);
    if (parens) out += ')';
  };
  switch (e.kind) {
    case Expr::Kind::Number: out += format_roundtrip(e.value); break;
    case Expr::Kind::Feature: out += e.name; break;
    case Expr::Kind::Call: {
      out += function_info(e.func).name;
      out += '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        write_expr(e.args[i], out);
      }
      out += ')';
      break;
    }
    case Expr::Kind::Neg:
      out += '-';
      child(e.args[0], precedence(e.args[0]) < 3 || e.args[0].kind == Expr::Kind::Neg);
      break;
    default: {
      const int p = precedence(e);
      child(e.args[0], precedence(e.args[0]) < p);
      switch (e.kind) {
        case Expr::Kind::Add: out += " + "; break;
        case Expr::Kind::Sub: out += " - "; break;
        case Expr::Kind::Mul: out += " * "; break;
        default: out += " / "; break;
      }
      child(e.args[1], precedence(e.args[1]) <= p);
    }
  }
}

}  // namespace dsl_detail

/// Parses program text. Throws SyntaxError (with line, column and what was
/// expected), or Error with UnknownFunction / DuplicateTerm.
inline RewardProgram parse_reward(std::string_view text) {
  dsl_detail::Parser parser(dsl_detail::tokenize(text));
  RewardProgram prog = parser.program();
  prog.source_text = std::string(text);
  return prog;
}

inline std::string serialize(const Expr& e) {
  std::string out;
  dsl_detail::write_expr(e, out);
  return out;
}

/// Canonical program text; parse(serialize(p)) is structurally equal to p.
inline std::string serialize(const RewardProgram& prog) {
  std::string out;
  for (const auto& t : prog.terms) {
    out += "term " + t.name + " weight " + format_roundtrip(t.weight) + " = ";
    dsl_detail::write_expr(t.expr, out);
    out += ";\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature schema and environment

struct FeatureDef {
  std::string name;
  ValueKind kind = ValueKind::Scalar;
  int length = 1;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureDef> defs) {
    for (auto& d : defs) add(std::move(d));
  }

  int add(FeatureDef def) {
    const int slot = static_cast<int>(defs_.size());
    index_.emplace(def.name, slot);
    defs_.push_back(std::move(def));
    return slot;
  }

  std::optional<int> slot(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view name) const { return slot(name).has_value(); }
  const FeatureDef& at(int slot) const { return defs_[static_cast<std::size_t>(slot)]; }
  const std::vector<FeatureDef>& defs() const { return defs_; }
  std::size_t size() const { return defs_.size(); }

 private:
  std::vector<FeatureDef> defs_;
  std::unordered_map<std::string, int> index_;
};

/// Per-step feature values laid out by schema slot.
class FeatureEnv {
 public:
  explicit FeatureEnv(const FeatureSchema& schema) : schema_(&schema) {
    scalars_.assign(schema.size(), 0.0);
    vectors_.resize(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const auto& d = schema.at(static_cast<int>(i));
      if (d.kind == ValueKind::Vector) vectors_[i].assign(static_cast<std::size_t>(d.length), 0.0);
    }
  }

  const FeatureSchema& schema() const { return *schema_; }

  void set(int slot, double v) { scalars_[static_cast<std::size_t>(slot)] = v; }
  void set(std::string_view name, double v) { set(require(name), v); }
  std::span<double> vec(int slot) { return vectors_[static_cast<std::size_t>(slot)]; }
  void set(std::string_view name, std::span<const double> v) {
    auto& dst = vectors_[static_cast<std::size_t>(require(name))];
    dst.assign(v.begin(), v.end());
  }

  double scalar(int slot) const { return scalars_[static_cast<std::size_t>(slot)]; }
  std::span<const double> vector(int slot) const { return vectors_[static_cast<std::size_t>(slot)]; }

 private:
  int require(std::string_view name) const {
    auto s = schema_->slot(name);
    if (!s) throw Error(ErrorCode::UnknownFeature, "feature '" + std::string(name) + "' not in schema");
    return *s;
  }

  const FeatureSchema* schema_;
  std::vector<double> scalars_;
  std::vector<std::vector<double>> vectors_;
};

struct ValidationIssue {
  std::string term;
  std::string message;
  ErrorCode code = ErrorCode::ValidationFailed;
};

namespace dsl_detail {

inline std::string where(const Expr& e) { return std::to_string(e.line) + ":" + std::to_string(e.col) + ": "; }

inline std::optional<ValueKind> check(const Expr& e, const FeatureSchema& schema, const std::string& term,
                                      std::vector<ValidationIssue>& issues) {
  using K = Expr::Kind;
  switch (e.kind) {
    case K::Number: return ValueKind::Scalar;
    case K::Feature: {
      auto slot = schema.slot(e.name);
      if (!slot) {
        issues.push_back({term, where(e) + "unknown feature '" + e.name + "'", ErrorCode::UnknownFeature});
        return std::nullopt;
      }
      return schema.at(*slot).kind;
    }
    case K::Call: {
      const auto& info = function_info(e.func);
      bool ok = true;
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        auto kind = check(e.args[i], schema, term, issues);
        if (!kind) {
          ok = false;
          continue;
        }
        if (i < info.params.size() && *kind != info.params[i]) {
          issues.push_back({term,
                            where(e.args[i]) + std::string(info.name) + " argument " + std::to_string(i + 1) +
                                " must be a " + (info.params[i] == ValueKind::Vector ? "vector" : "scalar"),
                            ErrorCode::ValidationFailed});
          ok = false;
        }
      }
      if (!ok) return std::nullopt;
      return ValueKind::Scalar;
    }
    default: {
      bool ok = true;
      for (const auto& a : e.args) {
        auto kind = check(a, schema, term, issues);
        if (!kind) {
          ok = false;
        } else if (*kind != ValueKind::Scalar) {
          issues.push_back({term, where(a) + "arithmetic on a vector; reduce it with sum/mean/std/frac_* first",
                            ErrorCode::ValidationFailed});
          ok = false;
        }
      }
      if (!ok) return std::nullopt;
      return ValueKind::Scalar;
    }
  }
}

inline void bind_slots(Expr& e, const FeatureSchema& schema) {
  if (e.kind == Expr::Kind::Feature) e.slot = *schema.slot(e.name);
  for (auto& a : e.args) bind_slots(a, schema);
}

}  // namespace dsl_detail

/// Every problem in the program, not just the first.
inline std::vector<ValidationIssue> validate(const RewardProgram& prog, const FeatureSchema& schema) {
  std::vector<ValidationIssue> issues;
  for (const auto& t : prog.terms) {
    if (!std::isfinite(t.weight)) issues.push_back({t.name, "weight must be finite", ErrorCode::ValidationFailed});
    auto kind = dsl_detail::check(t.expr, schema, t.name, issues);
    if (kind && *kind != ValueKind::Scalar)
      issues.push_back({t.name, "term must evaluate to a scalar", ErrorCode::ValidationFailed});
  }
  if (prog.terms.empty()) issues.push_back({"", "program has no terms", ErrorCode::ValidationFailed});
  return issues;
}

inline std::string describe(const std::vector<ValidationIssue>& issues) {
  std::string out;
  for (const auto& i : issues) {
    if (!out.empty()) out += "; ";
    out += (i.term.empty() ? std::string("program") : "term '" + i.term + "'") + ": " + i.message;
  }
  return out;
}

/// A validated program with feature references resolved to schema slots.
class BoundReward {
 public:
  BoundReward(RewardProgram prog, const FeatureSchema& schema) : prog_(std::move(prog)) {
    const auto issues = validate(prog_, schema);
    if (!issues.empty()) {
      const bool unknown = std::any_of(issues.begin(), issues.end(),
                                       [](const auto& i) { return i.code == ErrorCode::UnknownFeature; });
      throw Error(unknown ? ErrorCode::UnknownFeature : ErrorCode::ValidationFailed, describe(issues));
    }
    for (auto& t : prog_.terms) dsl_detail::bind_slots(t.expr, schema);
  }

  const RewardProgram& program() const { return prog_; }
  std::size_t size() const { return prog_.terms.size(); }

 private:
  RewardProgram prog_;
};

struct RewardValue {
  double total = 0.0;
  std::vector<double> per_term;  // unweighted term values, program order
};

namespace dsl_detail {

inline double guard(double v) {
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, -kRewardClamp, kRewardClamp);
}

inline double eval_scalar(const Expr& e, const FeatureEnv& env);

inline std::span<const double> eval_vector(const Expr& e, const FeatureEnv& env) { return env.vector(e.slot); }

inline double eval_scalar(const Expr& e, const FeatureEnv& env) {
  using K = Expr::Kind;
  switch (e.kind) {
    case K::Number: return guard(e.value);
    case K::Feature: return guard(env.scalar(e.slot));
    case K::Neg: return guard(-eval_scalar(e.args[0], env));
    case K::Add: return guard(eval_scalar(e.args[0], env) + eval_scalar(e.args[1], env));
    case K::Sub: return guard(eval_scalar(e.args[0], env) - eval_scalar(e.args[1], env));
    case K::Mul: return guard(eval_scalar(e.args[0], env) * eval_scalar(e.args[1], env));
    case K::Div: {
      const double num = eval_scalar(e.args[0], env);
      const double den = eval_scalar(e.args[1], env);
      if (std::abs(den) < kDivisionGuard) return 0.0;
      return guard(num / den);
    }
    case K::Call: break;
  }
  auto arg = [&](std::size_t i) { return eval_scalar(e.args[i], env); };
  switch (e.func) {
    case Func::Exp: return guard(std::exp(arg(0)));
    case Func::Abs: return guard(std::abs(arg(0)));
    case Func::Tanh: return guard(std::tanh(arg(0)));
    case Func::Square: {
      const double x = arg(0);
      return guard(x * x);
    }
    case Func::Clip: {
      const double x = arg(0);
      const double lo = arg(1);
      const double hi = arg(2);
      return guard(std::min(std::max(x, lo), hi));
    }
    case Func::Min: return guard(std::min(arg(0), arg(1)));
    case Func::Max: return guard(std::max(arg(0), arg(1)));
    case Func::Sum:
    case Func::Mean:
    case Func::Std: {
      const auto v = eval_vector(e.args[0], env);
      if (v.empty()) return 0.0;
      double sum = 0.0;
      for (double x : v) sum += guard(x);
      if (e.func == Func::Sum) return guard(sum);
      const double mean = sum / static_cast<double>(v.size());
      if (e.func == Func::Mean) return guard(mean);
      double sq = 0.0;
      for (double x : v) sq += (guard(x) - mean) * (guard(x) - mean);
      return guard(std::sqrt(sq / static_cast<double>(v.size())));
    }
    case Func::FracBelow:
    case Func::FracAbove: {
      const auto v = eval_vector(e.args[0], env);
      if (v.empty()) return 0.0;
      const double thr = arg(1);
      std::size_t n = 0;
      for (double x : v) n += (e.func == Func::FracBelow ? x < thr : x > thr) ? 1 : 0;
      return static_cast<double>(n) / static_cast<double>(v.size());
    }
  }
  return 0.0;
}

}  // namespace dsl_detail

inline RewardValue evaluate(const BoundReward& reward, const FeatureEnv& env) {
  RewardValue out;
  out.per_term.reserve(reward.size());
  double total = 0.0;
  for (const auto& t : reward.program().terms) {
    const double v = dsl_detail::eval_scalar(t.expr, env);
    out.per_term.push_back(v);
    total = dsl_detail::guard(total + dsl_detail::guard(t.weight * v));
  }
  out.total = total;
  return out;
}

/// Convenience overload: validates and binds against the env's schema.
inline RewardValue evaluate(const RewardProgram& prog, const FeatureEnv& env) {
  return evaluate(BoundReward(prog, env.schema()), env);
}

inline RewardProgram load_reward(const std::string& path) { return parse_reward(read_file(path)); }

}  // namespace esds
