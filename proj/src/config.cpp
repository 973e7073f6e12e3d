#include "nls/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "nls/errors.hpp"
#include "nls/expr.hpp"

namespace nls {

namespace {

using Index = Eigen::Index;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_number(std::string_view s) {
  double d = 0.0;
  const char* end = s.data() + s.size();
  const char* begin = s.data();
  if (!s.empty() && s.front() == '+') ++begin;
  const auto r = std::from_chars(begin, end, d);
  if (r.ec != std::errc() || r.ptr != end || begin == end) return std::nullopt;
  return d;
}

ConfigValue parse_scalar(const std::string& s, std::size_t line) {
  ConfigValue v;
  v.line = line;
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    v.kind = ConfigValue::Kind::Text;
    v.text = s.substr(1, s.size() - 2);
    if (v.text.find('"') != std::string::npos) throw ParseError("stray quote in value", line);
    return v;
  }
  const auto d = parse_number(s);
  if (!d) throw ParseError("expected a number, a quoted expression or a list, got '" + s + "'", line);
  v.number = *d;
  return v;
}

ConfigValue parse_value(const std::string& s, std::size_t line) {
  if (s.empty()) throw ParseError("missing value", line);
  if (s.front() != '[') return parse_scalar(s, line);
  if (s.back() != ']') throw ParseError("unterminated list", line);
  ConfigValue v;
  v.kind = ConfigValue::Kind::List;
  v.line = line;
  const std::string body = trim(std::string_view(s).substr(1, s.size() - 2));
  if (body.empty()) return v;
  std::string item;
  bool quoted = false;
  for (char ch : body) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      v.items.push_back(parse_scalar(trim(item), line));
      item.clear();
    } else {
      item += ch;
    }
  }
  if (quoted) throw ParseError("unterminated quote", line);
  v.items.push_back(parse_scalar(trim(item), line));
  return v;
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

// Typed access to one section, remembering which keys were used.
class Section {
 public:
  Section(std::string name, const RawSection& raw) : name_(std::move(name)), raw_(raw) {}

  const std::string& name() const { return name_; }
  bool has(const std::string& key) const { return raw_.entries.count(key) != 0; }
  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : raw_.entries) out.push_back(k);
    return out;
  }

  const ConfigValue& get(const std::string& key) const {
    const auto it = raw_.entries.find(key);
    if (it == raw_.entries.end()) throw ConfigError("[" + name_ + "] missing key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const {
    const ConfigValue& v = get(key);
    if (v.kind != ConfigValue::Kind::Number) fail(key, "expected a number");
    return v.number;
  }

  double number_or(const std::string& key, double def) const { return has(key) ? number(key) : def; }

  std::size_t count(const std::string& key, std::size_t min_value) const {
    const double d = number(key);
    if (d != static_cast<double>(static_cast<long long>(d)) || d < static_cast<double>(min_value)) {
      fail(key, "expected an integer >= " + std::to_string(min_value));
    }
    return static_cast<std::size_t>(d);
  }

  std::string text(const std::string& key) const {
    const ConfigValue& v = get(key);
    if (v.kind != ConfigValue::Kind::Text) fail(key, "expected a quoted expression");
    return v.text;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::size_t> size = std::nullopt) const {
    const ConfigValue& v = get(key);
    if (v.kind != ConfigValue::Kind::List) fail(key, "expected a list of numbers");
    std::vector<double> out;
    for (const auto& it : v.items) {
      if (it.kind != ConfigValue::Kind::Number) fail(key, "expected a list of numbers");
      out.push_back(it.number);
    }
    check_size(key, out.size(), size);
    return out;
  }

  std::vector<std::string> texts(const std::string& key, std::optional<std::size_t> size = std::nullopt) const {
    const ConfigValue& v = get(key);
    if (v.kind != ConfigValue::Kind::List) fail(key, "expected a list of quoted expressions");
    std::vector<std::string> out;
    for (const auto& it : v.items) {
      if (it.kind != ConfigValue::Kind::Text) fail(key, "expected a list of quoted expressions");
      out.push_back(it.text);
    }
    check_size(key, out.size(), size);
    return out;
  }

  std::size_t line_of(const std::string& key) const { return has(key) ? get(key).line : raw_.line; }

  void allow_only(const std::set<std::string>& keys) const {
    for (const auto& [k, v] : raw_.entries) {
      if (!keys.count(k)) throw ParseError("[" + name_ + "] unknown key '" + k + "'", v.line);
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ParseError("[" + name_ + "] " + key + ": " + what, line_of(key));
  }

 private:
  void check_size(const std::string& key, std::size_t got, std::optional<std::size_t> want) const {
    if (want && got != *want) {
      throw DimensionMismatch("[" + name_ + "] " + key + ": expected " + std::to_string(*want) + " entries, got " +
                              std::to_string(got) + " (line " + std::to_string(line_of(key)) + ")");
    }
  }

  std::string name_;
  const RawSection& raw_;
};

// Expression compile with errors mapped to the config line.
ScalarField compile_at(const Section& s, const std::string& key, const std::string& text, const VarContext& ctx,
                       bool* nonsmooth = nullptr) {
  try {
    const ExprAst ast = parse_expression(text, ctx);
    if (nonsmooth) *nonsmooth = *nonsmooth || ast.uses_nonsmooth();
    return to_scalar_field(ast, ctx, text);
  } catch (const InputError& e) {
    s.fail(key, std::string("in \"") + text + "\": " + e.what());
  }
}

std::pair<double, double> interval(const Section& s, const std::string& key) {
  const auto v = s.numbers(key, 2);
  if (!(v[0] < v[1])) s.fail(key, "expected [lo, hi] with lo < hi");
  return {v[0], v[1]};
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size())); }

std::vector<Mat> structure_constants(const Section& s, std::size_t m) {
  const auto mi = static_cast<Index>(m);
  std::vector<Mat> C(m, Mat::Zero(mi, mi));
  if (!s.has("C")) return C;
  const auto c = s.numbers("C", m * m * m);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) C[k](static_cast<Index>(a), static_cast<Index>(b)) = c[(k * m + a) * m + b];
  return C;
}

void build_splitting(ModelConfig& cfg, const Section& s) {
  const std::size_t m = cfg.chart.m;
  std::set<std::string> keys;
  for (std::size_t a = 1; a <= m; ++a) keys.insert("h" + std::to_string(a));
  // h<k> beyond the fibre dimension is a dimension error, not a typo
  for (const auto& key : s.keys()) {
    if (key.size() > 1 && key[0] == 'h' && key.find_first_not_of("0123456789", 1) == std::string::npos &&
        !keys.count(key)) {
      throw DimensionMismatch("[splitting] " + key + " given but fibre_dim = " + std::to_string(m));
    }
  }
  s.allow_only(keys);
  const VarContext ctx = VarContext::bundle(cfg.chart.n, m, {VarRole::Base, VarRole::Fibre, VarRole::BaseVelocity},
                                            cfg.chart.slit_eps);
  std::vector<ScalarField> fields;
  bool nonsmooth = false;
  for (std::size_t a = 1; a <= m; ++a) {
    const std::string key = "h" + std::to_string(a);
    if (!s.has(key)) {
      throw DimensionMismatch("[splitting] missing " + key + " for fibre_dim = " + std::to_string(m));
    }
    const std::string text = s.text(key);
    fields.push_back(compile_at(s, key, text, ctx, &nonsmooth));
    cfg.splitting_text.push_back(text);
  }
  cfg.splitting = SplittingSpec::from_fields(cfg.chart, fields, !nonsmooth);
}

void build_lagrangian(ModelConfig& cfg, const Section& s) {
  s.allow_only({"L", "homogeneity"});
  const VarContext ctx = VarContext::bundle(
      cfg.chart.n, cfg.chart.m, {VarRole::Base, VarRole::Fibre, VarRole::BaseVelocity, VarRole::FibreVelocity},
      cfg.chart.slit_eps);
  bool nonsmooth = false;
  cfg.lagrangian_text = s.text("L");
  LagrangianSpec L{cfg.chart, compile_at(s, "L", cfg.lagrangian_text, ctx, &nonsmooth), std::nullopt, true};
  L.smooth_at_zero = !nonsmooth;
  if (s.has("homogeneity")) L.homogeneity_degree = s.number("homogeneity");
  cfg.lagrangian = L;
}

void build_action(ModelConfig& cfg, const Section& s) {
  s.allow_only({"K", "C"});
  const std::size_t n = cfg.chart.n, m = cfg.chart.m;
  ActionSpec a = translation_action(cfg.chart);
  if (s.has("K")) {
    const auto K = s.texts("K", m * m);
    const VarContext ctx = VarContext::bundle(n, m, {VarRole::Base, VarRole::Fibre}, cfg.chart.slit_eps);
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t g = 0; g < m; ++g) a.K[b][g] = compile_at(s, "K", K[b * m + g], ctx);
  }
  a.C = structure_constants(s, m);
  try {
    a.check();
  } catch (const InputError& e) {
    throw ConfigError(std::string("[action] ") + e.what());
  }
  cfg.action = a;
}

void build_constraints(ModelConfig& cfg, const Section& s) {
  s.allow_only({"A", "A0"});
  const std::size_t n = cfg.chart.n, m = cfg.chart.m;
  const VarContext ctx = VarContext::bundle(n, m, {VarRole::Base, VarRole::Fibre}, cfg.chart.slit_eps);
  AffineConstraintSpec c;
  c.chart = cfg.chart;
  const auto A = s.texts("A", m * n);
  for (std::size_t a = 0; a < m; ++a) {
    c.A.emplace_back();
    for (std::size_t i = 0; i < n; ++i) c.A.back().push_back(compile_at(s, "A", A[a * n + i], ctx));
  }
  const auto A0 = s.has("A0") ? s.texts("A0", m) : std::vector<std::string>(m, "0");
  for (const auto& e : A0) c.A0.push_back(compile_at(s, "A0", e, ctx));
  cfg.constraints = c;
}

void build_magnetic(ModelConfig& cfg, const Section& s) {
  s.allow_only({"g", "k", "V", "A_base", "A_fibre", "Upsilon", "Kcurv", "C"});
  const std::size_t n = cfg.chart.n, m = cfg.chart.m;
  std::vector<VarDecl> vars;
  for (std::size_t i = 1; i <= n; ++i) vars.push_back({"x" + std::to_string(i), VarRole::Base});
  const VarContext ctx(vars, cfg.chart.slit_eps);
  auto list_or_zero = [&](const std::string& key, std::size_t size) {
    return s.has(key) ? s.texts(key, size) : std::vector<std::string>(size, "0");
  };
  MagneticModel M;
  M.n = n;
  M.m = m;
  std::vector<std::string> g(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g[i * n + j] = i == j ? "1" : "0";
  if (s.has("g")) g = s.texts("g", n * n);
  M.g.assign(n, {});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) M.g[i].push_back(compile_at(s, "g", g[i * n + j], ctx));
  const auto k = s.numbers("k", m * m);
  M.k = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      k.data(), static_cast<Index>(m), static_cast<Index>(m));
  M.V = compile_at(s, "V", s.has("V") ? s.text("V") : "0", ctx);
  for (const auto& e : list_or_zero("A_base", n)) M.A_base.push_back(compile_at(s, "A_base", e, ctx));
  for (const auto& e : list_or_zero("A_fibre", m)) M.A_fibre.push_back(compile_at(s, "A_fibre", e, ctx));
  const auto ups = list_or_zero("Upsilon", n * m * m);
  M.Upsilon.assign(n, std::vector<std::vector<ScalarField>>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t a = 0; a < m; ++a) M.Upsilon[i][b].push_back(compile_at(s, "Upsilon", ups[(i * m + b) * m + a], ctx));
  const auto kc = list_or_zero("Kcurv", m * n * n);
  M.Kcurv.assign(m, std::vector<std::vector<ScalarField>>(n));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) M.Kcurv[a][i].push_back(compile_at(s, "Kcurv", kc[(a * n + i) * n + j], ctx));
  M.C = structure_constants(s, m);
  try {
    M.check();
  } catch (const InputError& e) {
    throw ConfigError(std::string("[magnetic] ") + e.what());
  }
  cfg.magnetic = M;
}

void build_sode(ModelConfig& cfg, const Section& s) {
  s.allow_only({"f"});
  const std::size_t n = cfg.chart.n;
  const VarContext ctx = VarContext::bundle(n, 0, {VarRole::Base, VarRole::BaseVelocity}, cfg.chart.slit_eps);
  std::vector<ScalarField> f;
  for (const auto& e : s.texts("f", n)) f.push_back(compile_at(s, "f", e, ctx));
  const VectorField force(f);
  cfg.base_sode = SodeSpec(
      n, [force](const Vec& q, const Vec& u) { return force.value(as_span(concat(q, u))); }, "configured");
}

void build_simulation(ModelConfig& cfg, const Section& s) {
  s.allow_only({"t0", "t1", "dt", "ic", "seed", "samples", "box", "box_y", "box_v", "curve", "y0", "eval_points"});
  SimulationConfig& sim = cfg.simulation;
  sim.t0 = s.number_or("t0", sim.t0);
  sim.t1 = s.number_or("t1", sim.t1);
  sim.dt = s.number_or("dt", sim.dt);
  if (!(sim.dt > 0)) s.fail("dt", "must be positive");
  if (s.has("ic")) sim.ic = to_vec(s.numbers("ic"));
  if (s.has("seed")) sim.seed = s.count("seed", 0);
  if (s.has("samples")) sim.samples = s.count("samples", 1);
  if (s.has("box")) std::tie(sim.box_lo, sim.box_hi) = interval(s, "box");
  if (s.has("box_y")) sim.box_y = interval(s, "box_y");
  if (s.has("box_v")) sim.box_v = interval(s, "box_v");
  if (s.has("curve")) {
    sim.curve = s.texts("curve", cfg.chart.n);
    const VarContext ctx({{"t", VarRole::Parameter}}, cfg.chart.slit_eps);
    for (const auto& e : sim.curve) (void)compile_at(s, "curve", e, ctx);
  }
  if (s.has("y0")) sim.y0 = to_vec(s.numbers("y0", cfg.chart.m));
  if (s.has("eval_points")) {
    const auto flat = s.numbers("eval_points");
    const std::size_t k = 2 * cfg.chart.n + cfg.chart.m;
    if (flat.size() % k != 0) {
      throw DimensionMismatch("[simulation] eval_points: length must be a multiple of 2n + m = " + std::to_string(k));
    }
    for (std::size_t i = 0; i < flat.size(); i += k) {
      sim.eval_points.push_back(Eigen::Map<const Vec>(flat.data() + i, static_cast<Index>(k)));
    }
  }
}

}  // namespace

std::map<std::string, RawSection> parse_config_text(const std::string& text) {
  std::map<std::string, RawSection> out;
  std::istringstream in(text);
  std::string raw;
  std::string current;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError("malformed section header", line);
      current = trim(std::string_view(s).substr(1, s.size() - 2));
      if (current.empty()) throw ParseError("empty section name", line);
      if (out.count(current)) throw ParseError("duplicate section [" + current + "]", line);
      out[current].line = line;
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line);
    if (current.empty()) throw ParseError("key outside of any section", line);
    const std::string key = trim(std::string_view(s).substr(0, eq));
    if (key.empty()) throw ParseError("missing key", line);
    auto& sec = out[current];
    if (sec.entries.count(key)) throw ParseError("[" + current + "] duplicate key '" + key + "'", line);
    sec.entries[key] = parse_value(trim(std::string_view(s).substr(eq + 1)), line);
  }
  return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ModelConfig load_config_text(const std::string& text) {
  const auto raw = parse_config_text(text);
  static const std::set<std::string> known{"bundle",      "splitting", "lagrangian", "action",
                                           "constraints", "magnetic",  "sode",       "simulation"};
  for (const auto& [name, sec] : raw) {
    if (!known.count(name)) throw ParseError("unknown section [" + name + "]", sec.line);
  }
  const auto bundle_it = raw.find("bundle");
  if (bundle_it == raw.end()) throw ConfigError("missing section [bundle]");

  ModelConfig cfg;
  cfg.text = text;
  cfg.hash = fnv1a(text);
  {
    const Section b("bundle", bundle_it->second);
    b.allow_only({"base_dim", "fibre_dim", "slit_eps"});
    cfg.chart.n = b.count("base_dim", 1);
    cfg.chart.m = b.count("fibre_dim", 1);
    cfg.chart.slit_eps = b.number_or("slit_eps", 1e-6);
    if (!(cfg.chart.slit_eps > 0)) b.fail("slit_eps", "must be positive");
  }
  auto with = [&](const char* name, auto&& build) {
    const auto it = raw.find(name);
    if (it != raw.end()) build(cfg, Section(name, it->second));
  };
  with("splitting", build_splitting);
  with("lagrangian", build_lagrangian);
  with("action", build_action);
  with("constraints", build_constraints);
  with("magnetic", build_magnetic);
  with("sode", build_sode);
  with("simulation", build_simulation);
  return cfg;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str());
}

SampleBox ModelConfig::sample_box(std::size_t dim) const {
  SampleBox box = SampleBox::uniform(dim, simulation.box_lo, simulation.box_hi);
  const auto n = static_cast<Index>(chart.n), m = static_cast<Index>(chart.m);
  const bool bundle_layout = dim == chart.n * 2 + chart.m || dim == 2 * (chart.n + chart.m);
  if (!bundle_layout) return box;
  if (simulation.box_y) {
    box.lo.segment(n, m).setConstant(simulation.box_y->first);
    box.hi.segment(n, m).setConstant(simulation.box_y->second);
  }
  if (simulation.box_v) {
    box.lo.segment(n + m, n).setConstant(simulation.box_v->first);
    box.hi.segment(n + m, n).setConstant(simulation.box_v->second);
  }
  return box;
}

BaseCurve ModelConfig::base_curve() const {
  if (simulation.curve.empty()) throw ConfigError("[simulation] missing key 'curve'");
  const VarContext ctx({{"t", VarRole::Parameter}}, chart.slit_eps);
  std::vector<ScalarField> comps;
  for (const auto& e : simulation.curve) comps.push_back(compile_expression(e, ctx));
  BaseCurve c;
  c.position = [comps](double t) {
    Vec x(static_cast<Index>(comps.size()));
    for (std::size_t i = 0; i < comps.size(); ++i) x[static_cast<Index>(i)] = comps[i].value({&t, 1});
    return x;
  };
  c.velocity = [comps](double t) {
    Vec v(static_cast<Index>(comps.size()));
    for (std::size_t i = 0; i < comps.size(); ++i) v[static_cast<Index>(i)] = comps[i].eval({&t, 1}, JetOrder::First).gradient[0];
    return v;
  };
  return c;
}

}  // namespace nls
