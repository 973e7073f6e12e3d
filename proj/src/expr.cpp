#include "nls/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

#include "nls/errors.hpp"

namespace nls {

VarContext::VarContext(std::vector<VarDecl> vars, double slit_eps)
    : vars_(std::move(vars)), slit_eps_(slit_eps) {
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (vars_[i].name == vars_[j].name) throw InputError("duplicate variable '" + vars_[i].name + "'");
    }
  }
  constants_.emplace("pi", std::numbers::pi);
}

VarContext VarContext::bundle(std::size_t n, std::size_t m, std::vector<VarRole> roles,
                              double slit_eps) {
  std::vector<VarDecl> vars;
  auto add = [&](VarRole role, const char* stem, std::size_t count) {
    for (const VarRole r : roles) {
      if (r != role) continue;
      for (std::size_t i = 1; i <= count; ++i) vars.push_back({stem + std::to_string(i), role});
    }
  };
  add(VarRole::Base, "x", n);
  add(VarRole::Fibre, "y", m);
  add(VarRole::BaseVelocity, "v", n);
  add(VarRole::FibreVelocity, "w", m);
  return VarContext(std::move(vars), slit_eps);
}

void VarContext::add_constant(const std::string& name, double value) {
  if (index_of(name) >= 0) throw InputError("constant '" + name + "' shadows a variable");
  constants_[name] = value;
}

long VarContext::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].name == name) return static_cast<long>(i);
  }
  return -1;
}

const double* VarContext::constant(std::string_view name) const {
  auto it = constants_.find(name);
  return it == constants_.end() ? nullptr : &it->second;
}

const char* func_name(Func f) {
  switch (f) {
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Tan: return "tan";
    case Func::Exp: return "exp";
    case Func::Log: return "log";
    case Func::Sqrt: return "sqrt";
    case Func::Abs: return "abs";
  }
  return "?";
}

namespace {

std::optional<Func> lookup_func(std::string_view name) {
  static constexpr std::array<Func, 7> all = {Func::Sin, Func::Cos,  Func::Tan, Func::Exp,
                                              Func::Log, Func::Sqrt, Func::Abs};
  for (Func f : all) {
    if (name == func_name(f)) return f;
  }
  return std::nullopt;
}

enum class Tok { Number, Ident, Op, LParen, RParen, Comma, End };

struct Token {
  Tok kind = Tok::End;
  std::size_t offset = 0;
  std::string_view text;
  double number = 0.0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  Token next() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    Token t;
    t.offset = pos_;
    if (pos_ >= s_.size()) return t;
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t e = pos_;
      while (e < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[e])) || s_[e] == '_')) ++e;
      t.kind = Tok::Ident;
      t.text = s_.substr(pos_, e - pos_);
      pos_ = e;
      return t;
    }
    t.text = s_.substr(pos_, 1);
    ++pos_;
    switch (c) {
      case '+': case '-': case '*': case '/': case '^': t.kind = Tok::Op; return t;
      case '(': t.kind = Tok::LParen; return t;
      case ')': t.kind = Tok::RParen; return t;
      case ',': t.kind = Tok::Comma; return t;
      default: throw SyntaxError(std::string("unexpected character '") + c + "'", t.offset);
    }
  }

 private:
  Token number() {
    Token t;
    t.offset = pos_;
    std::size_t e = pos_;
    auto digits = [&] {
      std::size_t start = e;
      while (e < s_.size() && std::isdigit(static_cast<unsigned char>(s_[e]))) ++e;
      return e > start;
    };
    bool any = digits();
    if (e < s_.size() && s_[e] == '.') {
      ++e;
      any = digits() || any;
    }
    if (!any) throw SyntaxError("malformed number", t.offset);
    if (e < s_.size() && (s_[e] == 'e' || s_[e] == 'E')) {
      std::size_t save = e;
      ++e;
      if (e < s_.size() && (s_[e] == '+' || s_[e] == '-')) ++e;
      if (!digits()) e = save;  // "2e" is the number 2 followed by an identifier
    }
    t.kind = Tok::Number;
    t.text = s_.substr(pos_, e - pos_);
    const std::string buf(t.text);
    t.number = std::strtod(buf.c_str(), nullptr);
    pos_ = e;
    return t;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

using NodePtr = std::shared_ptr<const ExprNode>;

class Parser {
 public:
  Parser(std::string_view text, const VarContext& ctx) : lex_(text), ctx_(ctx) { advance(); }

  NodePtr parse_all() {
    NodePtr e = expr();
    if (cur_.kind != Tok::End) throw SyntaxError("unexpected '" + std::string(cur_.text) + "'", cur_.offset);
    return e;
  }

 private:
  void advance() {
    prev_offset_ = cur_.offset;
    cur_ = lex_.next();
  }

  [[noreturn]] void fail(const std::string& what) {
    if (cur_.kind == Tok::End) throw SyntaxError("incomplete expression: " + what, prev_offset_);
    throw SyntaxError(what + ", found '" + std::string(cur_.text) + "'", cur_.offset);
  }

  bool at_op(char c) const { return cur_.kind == Tok::Op && cur_.text[0] == c; }

  static NodePtr binary(char op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Binary;
    n->op = op;
    n->children = {std::move(a), std::move(b)};
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    while (at_op('+') || at_op('-')) {
      const char op = cur_.text[0];
      advance();
      lhs = binary(op, lhs, term());
    }
    return lhs;
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (at_op('*') || at_op('/')) {
      const char op = cur_.text[0];
      advance();
      lhs = binary(op, lhs, unary());
    }
    return lhs;
  }

  NodePtr unary() {
    if (at_op('-')) {
      advance();
      auto n = std::make_shared<ExprNode>();
      n->kind = ExprKind::Negate;
      n->children = {unary()};
      return n;
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (at_op('^')) {
      advance();
      return binary('^', base, unary());
    }
    return base;
  }

  NodePtr primary() {
    if (cur_.kind == Tok::Number) {
      auto n = std::make_shared<ExprNode>();
      n->kind = ExprKind::Number;
      n->number = cur_.number;
      advance();
      return n;
    }
    if (cur_.kind == Tok::LParen) {
      advance();
      NodePtr inner = expr();
      if (cur_.kind != Tok::RParen) fail("expected ')'");
      advance();
      return inner;
    }
    if (cur_.kind == Tok::Ident) {
      const Token id = cur_;
      advance();
      if (cur_.kind == Tok::LParen) return call(id);
      if (lookup_func(id.text)) {
        throw SyntaxError("function '" + std::string(id.text) + "' needs an argument list", id.offset);
      }
      auto n = std::make_shared<ExprNode>();
      n->name = std::string(id.text);
      if (long idx = ctx_.index_of(id.text); idx >= 0) {
        n->kind = ExprKind::Variable;
        n->var_index = static_cast<std::size_t>(idx);
        return n;
      }
      if (const double* c = ctx_.constant(id.text)) {
        n->kind = ExprKind::NamedConstant;
        n->number = *c;
        return n;
      }
      throw UnknownIdentifier("unknown identifier '" + std::string(id.text) + "' at offset " +
                              std::to_string(id.offset));
    }
    fail("expected a number, identifier or '('");
  }

  NodePtr call(const Token& id) {
    const auto f = lookup_func(id.text);
    if (!f) {
      throw UnknownIdentifier("unknown function '" + std::string(id.text) + "' at offset " +
                              std::to_string(id.offset));
    }
    advance();  // '('
    std::vector<NodePtr> args;
    if (cur_.kind != Tok::RParen) {
      args.push_back(expr());
      while (cur_.kind == Tok::Comma) {
        advance();
        args.push_back(expr());
      }
    }
    if (cur_.kind != Tok::RParen) fail("expected ')' after function arguments");
    advance();
    if (args.size() != 1) {
      throw ArityError("function '" + std::string(id.text) + "' takes 1 argument, got " +
                       std::to_string(args.size()));
    }
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprKind::Call;
    n->func = *f;
    n->name = std::string(id.text);
    n->children = std::move(args);
    return n;
  }

  Lexer lex_;
  const VarContext& ctx_;
  Token cur_;
  std::size_t prev_offset_ = 0;
};

bool any_nonsmooth(const ExprNode& n) {
  if (n.kind == ExprKind::Call && (n.func == Func::Abs || n.func == Func::Sqrt)) return true;
  for (const auto& c : n.children) {
    if (any_nonsmooth(*c)) return true;
  }
  return false;
}

void render(const ExprNode& n, std::string& out) {
  switch (n.kind) {
    case ExprKind::Number: {
      std::array<char, 64> buf{};
      auto res = std::to_chars(buf.data(), buf.data() + buf.size(), n.number);
      std::string s(buf.data(), res.ptr);
      // "1e+20" style exponents lex back fine; bare "inf"/"nan" cannot occur
      out += s;
      return;
    }
    case ExprKind::NamedConstant:
    case ExprKind::Variable:
      out += n.name;
      return;
    case ExprKind::Negate:
      out += "(-";
      render(*n.children[0], out);
      out += ')';
      return;
    case ExprKind::Binary:
      out += '(';
      render(*n.children[0], out);
      out += n.op;
      render(*n.children[1], out);
      out += ')';
      return;
    case ExprKind::Call:
      out += func_name(n.func);
      out += '(';
      render(*n.children[0], out);
      out += ')';
      return;
  }
}

bool equal_nodes(const ExprNode& a, const ExprNode& b) {
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  switch (a.kind) {
    case ExprKind::Number:
      if (a.number != b.number) return false;
      break;
    case ExprKind::NamedConstant:
      if (a.name != b.name) return false;
      break;
    case ExprKind::Variable:
      if (a.var_index != b.var_index) return false;
      break;
    case ExprKind::Binary:
      if (a.op != b.op) return false;
      break;
    case ExprKind::Call:
      if (a.func != b.func) return false;
      break;
    case ExprKind::Negate:
      break;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!equal_nodes(*a.children[i], *b.children[i])) return false;
  }
  return true;
}

Jet2 eval_node(const ExprNode& n, std::span<const double> z, JetOrder order, double slit_eps) {
  const std::size_t k = z.size();
  switch (n.kind) {
    case ExprKind::Number:
    case ExprKind::NamedConstant:
      return Jet2::constant(n.number, k, order);
    case ExprKind::Variable:
      return Jet2::variable(z[n.var_index], n.var_index, k, order);
    case ExprKind::Negate:
      return -eval_node(*n.children[0], z, order, slit_eps);
    case ExprKind::Binary: {
      const Jet2 a = eval_node(*n.children[0], z, order, slit_eps);
      const Jet2 b = eval_node(*n.children[1], z, order, slit_eps);
      switch (n.op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '/': return a / b;
        case '^': return pow(a, b);
        default: break;
      }
      throw DomainError("unknown operator");
    }
    case ExprKind::Call: {
      const Jet2 a = eval_node(*n.children[0], z, order, slit_eps);
      switch (n.func) {
        case Func::Sin: return sin(a);
        case Func::Cos: return cos(a);
        case Func::Tan: return tan(a);
        case Func::Exp: return exp(a);
        case Func::Log: return log(a);
        case Func::Sqrt: return sqrt(a);
        case Func::Abs: return abs(a, slit_eps);
      }
      throw DomainError("unknown function");
    }
  }
  throw DomainError("corrupt expression node");
}

}  // namespace

bool ExprAst::uses_nonsmooth() const { return root_ && any_nonsmooth(*root_); }

ExprAst parse_expression(std::string_view text, const VarContext& ctx) {
  bool blank = true;
  for (char c : text) blank = blank && std::isspace(static_cast<unsigned char>(c));
  if (blank) throw SyntaxError("empty expression", 0);
  Parser p(text, ctx);
  return ExprAst(p.parse_all());
}

std::string to_string(const ExprAst& ast) {
  std::string out;
  if (!ast.empty()) render(ast.root(), out);
  return out;
}

bool structurally_equal(const ExprAst& a, const ExprAst& b) {
  if (a.empty() || b.empty()) return a.empty() == b.empty();
  return equal_nodes(a.root(), b.root());
}

ScalarField to_scalar_field(const ExprAst& ast, const VarContext& ctx, std::string label) {
  if (ast.empty()) throw InputError("empty expression");
  if (label.empty()) label = to_string(ast);
  const double eps = ctx.slit_eps();
  return ScalarField(
      ctx.size(),
      [ast, eps](std::span<const double> z, JetOrder order) { return eval_node(ast.root(), z, order, eps); },
      std::move(label));
}

ScalarField compile_expression(std::string_view text, const VarContext& ctx) {
  return to_scalar_field(parse_expression(text, ctx), ctx, std::string(text));
}

}  // namespace nls
