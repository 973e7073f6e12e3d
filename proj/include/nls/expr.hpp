#pragma once

// Scalar expression language used in model configuration files.
//
// Grammar (whitespace insensitive):
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | identifier | function '(' expr ')' | '(' expr ')'
//
// Numbers are decimal with an optional exponent (1, 2.5, .5, 3e-4).
// Functions: sin cos tan exp log sqrt abs. Implicit multiplication is
// not accepted, and '^' binds tighter than unary minus, so -x^2 == -(x^2).

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "nls/jet.hpp"

namespace nls {

enum class VarRole { Base, Fibre, BaseVelocity, FibreVelocity, Parameter };

struct VarDecl {
  std::string name;
  VarRole role;
};

/// Ordered variables an expression may reference, plus named constants.
class VarContext {
 public:
  VarContext() = default;
  explicit VarContext(std::vector<VarDecl> vars, double slit_eps = 1e-6);

  /// Variables x1..xn, y1..ym, v1..vn, w1..wm restricted to `roles`,
  /// in that order.
  static VarContext bundle(std::size_t n, std::size_t m, std::vector<VarRole> roles,
                           double slit_eps = 1e-6);

  void add_constant(const std::string& name, double value);

  std::size_t size() const { return vars_.size(); }
  const std::vector<VarDecl>& vars() const { return vars_; }
  /// Index of a variable, or -1.
  long index_of(std::string_view name) const;
  const double* constant(std::string_view name) const;
  double slit_eps() const { return slit_eps_; }

 private:
  std::vector<VarDecl> vars_;
  std::map<std::string, double, std::less<>> constants_;
  double slit_eps_ = 1e-6;
};

enum class ExprKind { Number, NamedConstant, Variable, Negate, Binary, Call };
enum class Func { Sin, Cos, Tan, Exp, Log, Sqrt, Abs };

struct ExprNode {
  ExprKind kind = ExprKind::Number;
  double number = 0.0;          // Number and NamedConstant
  std::size_t var_index = 0;    // Variable
  std::string name;             // Variable, NamedConstant, Call
  char op = 0;                  // Binary: + - * / ^
  Func func = Func::Sin;        // Call
  std::vector<std::shared_ptr<const ExprNode>> children;
};

/// Immutable parsed expression; copies share the tree.
class ExprAst {
 public:
  ExprAst() = default;
  explicit ExprAst(std::shared_ptr<const ExprNode> root) : root_(std::move(root)) {}

  const ExprNode& root() const { return *root_; }
  bool empty() const { return !root_; }
  /// True when any abs or sqrt call appears (non-smooth at the origin).
  bool uses_nonsmooth() const;

 private:
  std::shared_ptr<const ExprNode> root_;
};

ExprAst parse_expression(std::string_view text, const VarContext& ctx);

/// Fully parenthesised rendering that reparses to the same tree.
std::string to_string(const ExprAst& ast);

bool structurally_equal(const ExprAst& a, const ExprAst& b);

const char* func_name(Func f);

ScalarField to_scalar_field(const ExprAst& ast, const VarContext& ctx, std::string label = {});

/// parse_expression followed by to_scalar_field.
ScalarField compile_expression(std::string_view text, const VarContext& ctx);

}  // namespace nls
