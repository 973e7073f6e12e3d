#pragma once

// Shared helpers for the test binaries: model builders from expression
// text and a random expression generator.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nls/expr.hpp"
#include "nls/lagrangian.hpp"
#include "nls/reduction.hpp"
#include "nls/sampling.hpp"
#include "nls/splitting.hpp"

namespace nls::testing {

inline VarContext pullback_ctx(std::size_t n, std::size_t m, double eps = 1e-6) {
  return VarContext::bundle(n, m, {VarRole::Base, VarRole::Fibre, VarRole::BaseVelocity}, eps);
}

inline VarContext tm_ctx(std::size_t n, std::size_t m, double eps = 1e-6) {
  return VarContext::bundle(n, m, {VarRole::Base, VarRole::Fibre, VarRole::BaseVelocity, VarRole::FibreVelocity},
                            eps);
}

inline VarContext m_ctx(std::size_t n, std::size_t m) {
  return VarContext::bundle(n, m, {VarRole::Base, VarRole::Fibre});
}

inline SplittingSpec splitting(std::size_t n, std::size_t m, const std::vector<std::string>& hs) {
  const auto ctx = pullback_ctx(n, m);
  std::vector<ScalarField> fields;
  bool smooth = true;
  for (const auto& s : hs) {
    const auto ast = parse_expression(s, ctx);
    smooth = smooth && !ast.uses_nonsmooth();
    fields.push_back(to_scalar_field(ast, ctx, s));
  }
  return SplittingSpec::from_fields({n, m, 1e-6}, fields, smooth);
}

inline LagrangianSpec lagrangian(std::size_t n, std::size_t m, const std::string& text) {
  const auto ctx = tm_ctx(n, m);
  const auto ast = parse_expression(text, ctx);
  LagrangianSpec L{{n, m, 1e-6}, to_scalar_field(ast, ctx, text), std::nullopt, !ast.uses_nonsmooth()};
  L.check();
  return L;
}

/// Magnetic model from expressions in x1..xn; unspecified fields are zero
/// and g defaults to the identity.
struct MagneticText {
  std::size_t n = 1, m = 1;
  std::vector<std::vector<std::string>> g;
  Mat k;
  std::string V = "0";
  std::vector<std::string> A_base, A_fibre;
  std::vector<std::vector<std::vector<std::string>>> Upsilon, Kcurv;
  std::vector<Mat> C;

  MagneticModel build() const {
    std::vector<VarDecl> vars;
    for (std::size_t i = 1; i <= n; ++i) vars.push_back({"x" + std::to_string(i), VarRole::Base});
    const VarContext ctx(vars);
    auto f = [&](const std::string& t) { return compile_expression(t, ctx); };
    auto nested = [&](const std::vector<std::vector<std::vector<std::string>>>& src, std::size_t a, std::size_t b,
                      std::size_t c) {
      std::vector<std::vector<std::vector<ScalarField>>> out(a, std::vector<std::vector<ScalarField>>(b));
      for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
          for (std::size_t l = 0; l < c; ++l) out[i][j].push_back(f(src.empty() ? "0" : src[i][j][l]));
      return out;
    };
    MagneticModel M;
    M.n = n;
    M.m = m;
    M.g.assign(n, {});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) M.g[i].push_back(f(g.empty() ? (i == j ? "1" : "0") : g[i][j]));
    const auto mi = static_cast<Eigen::Index>(m);
    M.k = k.size() ? k : Mat::Identity(mi, mi);
    M.V = f(V);
    for (std::size_t i = 0; i < n; ++i) M.A_base.push_back(f(A_base.empty() ? "0" : A_base[i]));
    for (std::size_t a = 0; a < m; ++a) M.A_fibre.push_back(f(A_fibre.empty() ? "0" : A_fibre[a]));
    M.Upsilon = nested(Upsilon, n, m, m);
    M.Kcurv = nested(Kcurv, m, n, n);
    M.C = C.empty() ? std::vector<Mat>(m, Mat::Zero(mi, mi)) : C;
    return M;
  }
};

/// Action with K^b_g given as expressions in (x, y).
inline ActionSpec action(std::size_t n, std::size_t m, const std::vector<std::vector<std::string>>& K) {
  ActionSpec a;
  a.chart = {n, m, 1e-6};
  const auto ctx = m_ctx(n, m);
  for (const auto& row : K) {
    a.K.emplace_back();
    for (const auto& e : row) a.K.back().push_back(compile_expression(e, ctx));
  }
  const auto mi = static_cast<Eigen::Index>(m);
  a.C.assign(m, Mat::Zero(mi, mi));
  a.check();
  return a;
}

inline ScalarField field(const VarContext& ctx, const std::string& text) { return compile_expression(text, ctx); }

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

inline double max_abs(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Random expressions over variables z1..zk.
class ExprGen {
 public:
  ExprGen(std::uint64_t seed, std::size_t vars) : s_(seed), vars_(vars) {}

  /// Expressions that are smooth and defined everywhere on [-1, 1]^k.
  std::string smooth(int depth) {
    if (depth <= 0 || pick(4) == 0) return leaf();
    switch (pick(9)) {
      case 0: return "(" + smooth(depth - 1) + " + " + smooth(depth - 1) + ")";
      case 1: return "(" + smooth(depth - 1) + " - " + smooth(depth - 1) + ")";
      case 2: return "(" + smooth(depth - 1) + " * " + smooth(depth - 1) + ")";
      case 3: return smooth(depth - 1) + " / (2 + sin(" + smooth(depth - 1) + "))";
      case 4: return "sin(" + smooth(depth - 1) + ")";
      case 5: return "cos(" + smooth(depth - 1) + ")";
      case 6: return "exp(0.5 * sin(" + smooth(depth - 1) + "))";
      case 7: return "log(1.5 + cos(" + smooth(depth - 1) + "))";
      default: return "(" + smooth(depth - 1) + ")^2";
    }
  }

  /// Arbitrary grammar coverage for round-trip tests (may not evaluate).
  std::string any(int depth) {
    if (depth <= 0 || pick(5) == 0) return pick(3) == 0 ? number() : var();
    static const char* funcs[] = {"sin", "cos", "tan", "exp", "log", "sqrt", "abs"};
    switch (pick(8)) {
      case 0: return any(depth - 1) + "+" + any(depth - 1);
      case 1: return any(depth - 1) + " - " + any(depth - 1);
      case 2: return any(depth - 1) + "*" + any(depth - 1);
      case 3: return any(depth - 1) + " / " + any(depth - 1);
      case 4: return "(" + any(depth - 1) + ")^" + any(depth - 1);
      case 5: return "-" + any(depth - 1);
      case 6: return std::string(funcs[pick(7)]) + "(" + any(depth - 1) + ")";
      default: return "(" + any(depth - 1) + ")";
    }
  }

  std::string var() { return "z" + std::to_string(1 + pick(static_cast<int>(vars_))); }

  std::string number() {
    std::uniform_real_distribution<double> d(0.0, 3.0);
    const double x = d(s_);
    switch (pick(3)) {
      case 0: return std::to_string(pick(10));
      case 1: return std::to_string(x);
      default: return std::to_string(x) + "e-" + std::to_string(1 + pick(3));
    }
  }

 private:
  int pick(int k) { return static_cast<int>(s_() % static_cast<std::uint64_t>(k)); }
  std::string leaf() {
    if (pick(3) == 0) {
      std::uniform_real_distribution<double> d(-2.0, 2.0);
      return "(" + std::to_string(d(s_)) + ")";
    }
    return var();
  }

  std::mt19937_64 s_;
  std::size_t vars_;
};

inline VarContext z_ctx(std::size_t k) {
  std::vector<VarDecl> v;
  for (std::size_t i = 1; i <= k; ++i) v.push_back({"z" + std::to_string(i), VarRole::Parameter});
  return VarContext(v);
}

}  // namespace nls::testing
