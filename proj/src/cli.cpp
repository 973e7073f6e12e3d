#include "nls/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <charconv>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <ostream>

#include "nls/config.hpp"
#include "nls/errors.hpp"

namespace nls {

namespace {

using json = nlohmann::json;
using Index = Eigen::Index;

const std::vector<std::string> kCommands{"classify",    "lift-curve",        "induce",     "subduce",
                                         "project-verify", "el-simulate",    "nh-simulate", "magnetic-simulate",
                                         "curvature",   "unreduce",          "check-all"};

struct Options {
  std::string command;
  std::string config;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  double tol_structural = 1e-9;
  double tol_dynamic = 1e-6;
  std::optional<double> dt;
  std::optional<double> t1;
  bool timings = false;
};

json to_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const Mat& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vec(m.row(i).transpose())));
  return a;
}

std::vector<std::string> names(const char* prefix, std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= k; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

std::vector<std::string> tm_names(const BundleChart& c) {
  std::vector<std::string> out;
  for (const auto& block : {names("x", c.n), names("y", c.m), names("v", c.n), names("w", c.m)}) {
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

template <class T>
const T& need(const std::optional<T>& v, const char* section, const std::string& command) {
  if (!v) throw ConfigError("command '" + command + "' needs section [" + section + "]");
  return *v;
}

class Runner {
 public:
  Runner(Options opt, ModelConfig cfg, std::ostream& out) : opt_(std::move(opt)), cfg_(std::move(cfg)), out_(out) {
    seed_ = opt_.seed ? *opt_.seed : cfg_.simulation.seed.value_or(42);
    samples_ = opt_.samples ? *opt_.samples : cfg_.simulation.samples.value_or(200);
    if (opt_.dt) cfg_.simulation.dt = *opt_.dt;
    if (opt_.t1) cfg_.simulation.t1 = *opt_.t1;
  }

  void execute() {
    static const std::map<std::string, void (Runner::*)()> table{
        {"classify", &Runner::classify_cmd},       {"lift-curve", &Runner::lift_curve_cmd},
        {"induce", &Runner::induce_cmd},           {"subduce", &Runner::subduce_cmd},
        {"project-verify", &Runner::project_cmd},  {"el-simulate", &Runner::el_cmd},
        {"nh-simulate", &Runner::nh_cmd},          {"magnetic-simulate", &Runner::magnetic_cmd},
        {"curvature", &Runner::curvature_cmd},     {"unreduce", &Runner::unreduce_cmd},
        {"check-all", &Runner::check_all_cmd}};
    (this->*table.at(opt_.command))();
  }

  bool failed() const { return failed_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t samples() const { return samples_; }
  json& results() { return results_; }
  const json& checks() const { return checks_; }
  const std::vector<std::string>& artifacts() const { return artifacts_; }

 private:
  SampleOptions sampling(std::size_t dim) const {
    SampleOptions o;
    o.samples = samples_;
    o.seed = seed_;
    o.box = cfg_.sample_box(dim);
    return o;
  }

  std::size_t pullback_dim() const { return 2 * cfg_.chart.n + cfg_.chart.m; }
  std::size_t tm_dim() const { return 2 * (cfg_.chart.n + cfg_.chart.m); }

  InduceOptions induce_options() const {
    InduceOptions io;
    io.probe_seed = seed_;
    io.probe_box = cfg_.sample_box(pullback_dim());
    return io;
  }

  // residual must be strictly below the tolerance
  void check(const std::string& name, double value, double tol) {
    const bool pass = value < tol;
    checks_[name] = {{"value", value}, {"tolerance", tol}, {"pass", pass}};
    out_ << (pass ? "PASS " : "FAIL ") << name << " = " << format_real(value) << " (tol " << format_real(tol) << ")\n";
    failed_ = failed_ || !pass;
  }

  void check_error(const std::string& name, const std::exception& e) {
    checks_[name] = {{"value", nullptr}, {"pass", false}, {"error", e.what()}};
    out_ << "FAIL " << name << ": " << e.what() << "\n";
    failed_ = true;
  }

  Vec ic(std::size_t size) const {
    const auto& v = cfg_.simulation.ic;
    if (!v) throw ConfigError("command '" + opt_.command + "' needs [simulation] ic");
    if (static_cast<std::size_t>(v->size()) != size) {
      throw DimensionMismatch("[simulation] ic: expected " + std::to_string(size) + " entries, got " +
                              std::to_string(v->size()));
    }
    return *v;
  }

  std::vector<Vec> eval_points() const {
    if (!cfg_.simulation.eval_points.empty()) return cfg_.simulation.eval_points;
    return sample_points(cfg_.sample_box(pullback_dim()), 3, seed_);
  }

  void trajectory(const std::vector<std::string>& state_names, const TrajectoryRecord& tr) {
    const auto path = std::filesystem::path(opt_.out_dir) / "trajectory.csv";
    write_trajectory_csv(path, state_names, tr);
    artifacts_.push_back("trajectory.csv");
    results_["final_state"] = to_json(tr.final_state());
    results_["steps"] = tr.size() - 1;
  }

  const SplittingSpec& splitting() const { return need(cfg_.splitting, "splitting", opt_.command); }
  const LagrangianSpec& lagrangian() const { return need(cfg_.lagrangian, "lagrangian", opt_.command); }

  ActionSpec action() const { return cfg_.action ? *cfg_.action : translation_action(cfg_.chart); }

  void classify_cmd() {
    const ClassificationReport r = classify(splitting(), sampling(pullback_dim()));
    json res;
    for (const auto& [k, v] : r.residuals) res[k] = v ? json(*v) : json(nullptr);
    results_["verdict"] = verdict_name(r.verdict);
    results_["residuals"] = res;
    results_["evaluated"] = r.evaluated;
    results_["skipped"] = r.skipped;
    out_ << "verdict: " << verdict_name(r.verdict) << "\n";
  }

  void lift_curve_cmd() {
    const SplittingSpec& h = splitting();
    const Vec y0 = cfg_.simulation.y0 ? *cfg_.simulation.y0 : Vec::Zero(static_cast<Index>(cfg_.chart.m));
    const auto& s = cfg_.simulation;
    const TrajectoryRecord tr = horizontal_lift_curve(h, cfg_.base_curve(), y0, s.t0, s.t1, s.dt);
    trajectory(tm_names(cfg_.chart), tr);
    double defect = 0.0;
    for (const Vec& d : tr.diagnostics) defect = std::max(defect, d.cwiseAbs().maxCoeff());
    results_["y_final"] = to_json(TangentPointM::from_flat(cfg_.chart, tr.final_state()).y);
    results_["max_lift_defect"] = defect;
  }

  void induce_cmd() {
    const LagrangianSpec& L = lagrangian();
    const SplittingSpec h = induced_splitting(L, induce_options());
    check("defining_relation", defining_relation_check(L, h, sampling(pullback_dim())).max, opt_.tol_structural);
    json pts = json::array();
    for (const Vec& z : eval_points()) {
      const PullbackPoint p = PullbackPoint::from_flat(cfg_.chart, z);
      const InducedSolve sol = induced_solve(L, p, induce_options());
      pts.push_back({{"point", to_json(z)}, {"h", to_json(sol.w)}, {"newton_iterations", sol.final_iterations}});
    }
    results_["h_at"] = pts;
    results_["verdict"] = verdict_name(classify(h, sampling(pullback_dim())).verdict);
  }

  void subduce_cmd() {
    const LagrangianSpec& L = lagrangian();
    const SplittingSpec h = induced_splitting(L, induce_options());
    const SubducedLagrangian sub = subduce(L, h, sampling(pullback_dim()));
    check("y_independence", sub.y_independence, opt_.tol_structural);
    results_["y_ref"] = to_json(sub.y_ref);
    json pts = json::array();
    const auto n = static_cast<Index>(cfg_.chart.n), m = static_cast<Index>(cfg_.chart.m);
    for (const Vec& z : eval_points()) {
      const Vec xv = concat(Vec(z.head(n)), Vec(z.segment(n + m, n)));
      pts.push_back({{"x_v", to_json(xv)}, {"Lbar", sub.Lbar.value(as_span(xv))}});
    }
    results_["Lbar_at"] = pts;
  }

  void project_cmd() {
    const LagrangianSpec& L = lagrangian();
    const SplittingSpec h = induced_splitting(L, induce_options());
    const SubducedLagrangian sub = subduce(L, h, sampling(pullback_dim()));
    const PullbackPoint p0 = PullbackPoint::from_flat(cfg_.chart, ic(pullback_dim()));
    const auto& s = cfg_.simulation;
    const ProjectionReport r = projection_verify(L, h, sub, p0.x, p0.v, p0.y, s.t1 - s.t0, s.dt);
    check("base_deviation", r.base_deviation, opt_.tol_dynamic);
    check("horizontality_drift", r.horizontality_drift, opt_.tol_dynamic);
    check("reduced_el_residual", r.reduced_el_residual, opt_.tol_dynamic);
    results_["min_abs_det_lbar"] = r.min_abs_det_lbar;
    trajectory(tm_names(cfg_.chart), r.full);
  }

  void el_cmd() {
    const LagrangianSpec& L = lagrangian();
    const auto& s = cfg_.simulation;
    TrajectoryRecord tr = euler_lagrange_sode(L).integrate(ic(tm_dim()), s.t0, s.t1, s.dt);
    tr.diagnostic_names = {"energy"};
    double drift = 0.0;
    const double e0 = lagrangian_energy(L.L, tr.states.front());
    for (const Vec& st : tr.states) {
      const double e = lagrangian_energy(L.L, st);
      drift = std::max(drift, std::abs(e - e0));
      tr.diagnostics.push_back(Vec::Constant(1, e));
    }
    results_["energy_drift"] = drift;
    trajectory(tm_names(cfg_.chart), tr);
  }

  void nh_cmd() {
    const LagrangianSpec& L = lagrangian();
    const AffineConstraintSpec& c = need(cfg_.constraints, "constraints", opt_.command);
    const PullbackPoint p0 = PullbackPoint::from_flat(cfg_.chart, ic(pullback_dim()));
    const auto& s = cfg_.simulation;
    const TrajectoryRecord tr = integrate_constrained(L, c, {p0.x, p0.y, p0.v}, s.t1 - s.t0, s.dt);
    double residual = 0.0, drift = 0.0;
    for (const Vec& d : tr.diagnostics) {
      residual = std::max(residual, d[0]);
      drift = std::max(drift, std::abs(d[1] - tr.diagnostics.front()[1]));
    }
    check("constraint_residual", residual, 1e-12);
    results_["energy_drift"] = drift;
    trajectory(tm_names(cfg_.chart), tr);
  }

  void magnetic_cmd() {
    const MagneticModel& M = need(cfg_.magnetic, "magnetic", opt_.command);
    const auto& s = cfg_.simulation;
    const DecouplingReport d = decoupling_check(M, sampling(2 * cfg_.chart.n));
    results_["decoupling"] = {{"residual", d.residual},
                              {"decoupled", d.decoupled},
                              {"wbar_sensitivity", d.wbar_sensitivity},
                              {"base_el_mismatch", d.base_el_mismatch ? json(*d.base_el_mismatch) : json(nullptr)}};
    TrajectoryRecord tr = magnetic_lp_system(M).integrate(ic(pullback_dim()), s.t0, s.t1, s.dt);
    const Vec p0 = magnetic_fibre_momentum(M, tr.states.front());
    double drift = 0.0;
    for (const Vec& st : tr.states) drift = std::max(drift, (magnetic_fibre_momentum(M, st) - p0).cwiseAbs().maxCoeff());
    results_["fibre_momentum_drift"] = drift;
    std::vector<std::string> cols = names("x", cfg_.chart.n);
    for (const auto& block : {names("v", cfg_.chart.n), names("wb", cfg_.chart.m)}) cols.insert(cols.end(), block.begin(), block.end());
    trajectory(cols, tr);
  }

  void curvature_cmd() {
    const SplittingSpec& h = splitting();
    const Verdict v = classify(h, sampling(pullback_dim())).verdict;
    results_["verdict"] = verdict_name(v);
    const auto n = static_cast<Index>(cfg_.chart.n);
    json pts = json::array();
    if (v == Verdict::Ehresmann || v == Verdict::Affine) {
      const AffineSplittingData d = affine_decompose(h, sampling(pullback_dim()));
      double linearity = 0.0;
      for (const Vec& z : eval_points()) {
        const PullbackPoint p = PullbackPoint::from_flat(cfg_.chart, z);
        const AffineCurvature k = affine_curvature(d, p.x, p.y);
        json B = json::array();
        for (const Mat& b : k.B) B.push_back(to_json(b));
        pts.push_back({{"point", to_json(z)}, {"B", B}, {"A0i", to_json(k.A0i)}});
        // Rbar_0 is linear in zeta
        const TangentPointM w = horizontal_map(h, p);
        const Vec z1 = Vec::LinSpaced(n, 0.3, 1.1), z2 = Vec::LinSpaced(n, -0.7, 0.4);
        const Vec lhs = rbar_zero(d, Vec(2.0 * z1 - 3.0 * z2), w).w;
        const Vec rhs = 2.0 * rbar_zero(d, z1, w).w - 3.0 * rbar_zero(d, z2, w).w;
        linearity = std::max(linearity, (lhs - rhs).cwiseAbs().maxCoeff());
      }
      check("rbar0_linearity", linearity, opt_.tol_structural);
    } else {
      for (const Vec& z : eval_points()) {
        const PullbackPoint p = PullbackPoint::from_flat(cfg_.chart, z);
        for (Index i = 0; i < n; ++i)
          for (Index j = i + 1; j < n; ++j) {
            const PointwiseCurvature c = curvature_pointwise(h, Vec::Unit(n, i), Vec::Unit(n, j), p.x, p.y);
            pts.push_back({{"point", to_json(z)}, {"i", i + 1}, {"j", j + 1}, {"value", to_json(Vec(c.value.w))},
                           {"extension_gap", c.extension_gap}});
          }
      }
    }
    results_["curvature_at"] = pts;
  }

  void unreduce_cmd() {
    const SplittingSpec& h = splitting();
    const SodeSpec& gbar = need(cfg_.base_sode, "sode", opt_.command);
    const ActionSpec a = action();
    const SodeSpec gamma = unreduce(gbar, h, a, sampling(pullback_dim()));
    check("submersion", submersion_residual(gamma, gbar, cfg_.chart, sampling(tm_dim())).max, opt_.tol_structural);
    const LiftIdentityReport li = lift_identity_check(h, a, gbar, sampling(tm_dim()));
    check("S(Xi)=Delta_v", li.xi_vs_delta_v.max, opt_.tol_structural);
    check("S(Gamma_bar^Vilms)=Delta_h", li.vilms_vs_delta_h.max, opt_.tol_structural);
    Vec s0;
    if (cfg_.simulation.ic && static_cast<std::size_t>(cfg_.simulation.ic->size()) == pullback_dim()) {
      s0 = horizontal_map(h, PullbackPoint::from_flat(cfg_.chart, *cfg_.simulation.ic)).flat();
    } else {
      s0 = ic(tm_dim());
    }
    const auto& s = cfg_.simulation;
    const TrajectoryRecord tr = gamma.integrate(s0, s.t0, s.t1, s.dt);
    const double drift = horizontality_drift(h, tr);
    const TangentPointM p0 = TangentPointM::from_flat(cfg_.chart, s0);
    if ((p0.w - h.value(mu(p0))).cwiseAbs().maxCoeff() == 0.0) {
      check("horizontality_drift", drift, opt_.tol_dynamic);
    } else {
      results_["horizontality_drift"] = drift;
    }
    trajectory(tm_names(cfg_.chart), tr);
  }

  template <class F>
  void guarded(const std::string& name, F&& f) {
    try {
      f();
    } catch (const VerificationError& e) {
      check_error(name, e);
    } catch (const NumericalError& e) {
      check_error(name, e);
    }
  }

  void check_all_cmd() {
    const std::size_t pd = pullback_dim();
    if (cfg_.splitting) {
      const SplittingSpec& h = *cfg_.splitting;
      results_["splitting_verdict"] = verdict_name(classify(h, sampling(pd)).verdict);
      if (cfg_.action) {
        guarded("splitting_principal", [&] { check("splitting_principal", principal_check(h, *cfg_.action, sampling(pd)).max, 1e-7); });
        guarded("splitting_domega", [&] {
          results_["splitting_domega"] = connection_test_domega(h, *cfg_.action, sampling(pd)).max;
        });
      }
    }
    if (cfg_.lagrangian) {
      const LagrangianSpec& L = *cfg_.lagrangian;
      std::optional<SplittingSpec> h;
      guarded("induced_splitting", [&] { h = induced_splitting(L, induce_options()); });
      if (h) {
        guarded("defining_relation",
                [&] { check("defining_relation", defining_relation_check(L, *h, sampling(pd)).max, opt_.tol_structural); });
        bool symmetric = false;
        guarded("symmetry_condition", [&] {
          const double r = symmetry_condition_check(L, *h, sampling(pd)).max;
          check("symmetry_condition", r, opt_.tol_structural);
          symmetric = r < opt_.tol_structural;
        });
        guarded("tangency", [&] { check("tangency", tangency_check(L, *h, sampling(pd)).max, opt_.tol_dynamic); });
        if (symmetric) {
          guarded("y_independence", [&] {
            check("y_independence", subduce(L, *h, sampling(pd)).y_independence, opt_.tol_structural);
          });
        }
        if (L.homogeneity_degree) {
          guarded("induced_euler", [&] {
            check("induced_euler", homogeneity_of_induced(L, *h, sampling(tm_dim())).max, opt_.tol_dynamic);
          });
        }
        if (cfg_.action) {
          const ActionSpec& a = *cfg_.action;
          guarded("invariance", [&] { check("invariance", invariance_check(L, a, sampling(tm_dim())).max, opt_.tol_structural); });
          guarded("momentum_on_horizontal", [&] {
            check("momentum_on_horizontal", momentum_on_horizontal(L, a, *h, sampling(pd)).max, opt_.tol_structural);
          });
          guarded("induced_principal", [&] { check("induced_principal", principal_check(*h, a, sampling(pd)).max, 1e-7); });
        }
      }
    }
    if (cfg_.constraints) {
      const SplittingSpec h = affine_splitting(*cfg_.constraints);
      results_["constraint_verdict"] = verdict_name(classify(h, sampling(pd)).verdict);
    }
    if (cfg_.magnetic) {
      const DecouplingReport d = decoupling_check(*cfg_.magnetic, sampling(2 * cfg_.chart.n));
      results_["decoupling"] = {{"residual", d.residual}, {"decoupled", d.decoupled}, {"wbar_sensitivity", d.wbar_sensitivity}};
    }
    if (cfg_.splitting && cfg_.base_sode) {
      guarded("submersion", [&] {
        const SodeSpec gamma = unreduce(*cfg_.base_sode, *cfg_.splitting, action(), sampling(pd));
        check("submersion", submersion_residual(gamma, *cfg_.base_sode, cfg_.chart, sampling(tm_dim())).max,
              opt_.tol_structural);
      });
    }
  }

  Options opt_;
  ModelConfig cfg_;
  std::ostream& out_;
  std::uint64_t seed_ = 42;
  std::size_t samples_ = 200;
  json results_ = json::object();
  json checks_ = json::object();
  std::vector<std::string> artifacts_;
  bool failed_ = false;
};

std::string hex64(std::uint64_t h) {
  char buf[17];
  const auto r = std::to_chars(buf, buf + 16, h, 16);
  std::string s(buf, r.ptr);
  return std::string(16 - s.size(), '0') + s;
}

void write_report(const Options& opt, const json& report) {
  std::filesystem::create_directories(opt.out_dir);
  std::ofstream f(std::filesystem::path(opt.out_dir) / "report.json", std::ios::binary);
  f << report.dump(2) << "\n";
}

}  // namespace

std::string format_real(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<std::string>& state_names,
                          const TrajectoryRecord& tr) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << "t";
  for (const auto& n : state_names) f << "," << n;
  for (const auto& n : tr.diagnostic_names) f << "," << n;
  f << "\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    f << format_real(tr.times[k]);
    for (Index i = 0; i < tr.states[k].size(); ++i) f << "," << format_real(tr.states[k][i]);
    if (k < tr.diagnostics.size()) {
      for (Index i = 0; i < tr.diagnostics[k].size(); ++i) f << "," << format_real(tr.diagnostics[k][i]);
    }
    f << "\n";
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Nonlinear splittings toolkit", "nlsplit"};
  app.add_option("command", opt.command, "Command to run")->required()->check(CLI::IsMember(kCommands));
  app.add_option("--config", opt.config, "Model configuration file")->required();
  app.add_option("--out-dir", opt.out_dir, "Directory for report.json and trajectory.csv");
  app.add_option("--seed", opt.seed, "Sampling seed (default 42)");
  app.add_option("--samples", opt.samples, "Number of sample points (default 200)");
  app.add_option("--tol-structural", opt.tol_structural, "Tolerance for structural identities");
  app.add_option("--tol-dynamic", opt.tol_dynamic, "Tolerance for trajectory comparisons");
  app.add_option("--dt", opt.dt, "Integrator step");
  app.add_option("--t1", opt.t1, "Final time");
  app.add_flag("--timings", opt.timings, "Record wall-clock timings in report.json");

  std::vector<std::string> argv_store{"nlsplit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const auto start = std::chrono::steady_clock::now();
  json report = {{"command", opt.command},
                 {"tolerances", {{"structural", opt.tol_structural}, {"dynamic", opt.tol_dynamic}}}};
  int code = 0;
  try {
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + opt.out_dir + ": " + ec.message());
    Runner r(opt, load_config(opt.config), out);
    report["seed"] = r.seed();
    report["samples"] = r.samples();
    try {
      r.execute();
      code = r.failed() ? 1 : 0;
    } catch (...) {
      report["checks"] = r.checks();
      report["results"] = r.results();
      throw;
    }
    report["checks"] = r.checks();
    report["results"] = r.results();
    report["artifacts"] = r.artifacts();
  } catch (const InputError& e) {
    code = 2;
    report["error"] = {{"kind", "config"}, {"message", e.what()}};
  } catch (const VerificationError& e) {
    code = 1;
    report["error"] = {{"kind", "verification"}, {"message", e.what()}};
  } catch (const NumericalError& e) {
    code = 3;
    report["error"] = {{"kind", "numerical"}, {"message", e.what()}};
  }
  if (std::ifstream probe(opt.config, std::ios::binary); probe) {
    std::ostringstream ss;
    ss << probe.rdbuf();
    report["config_hash"] = "fnv1a:" + hex64(fnv1a(ss.str()));
  }
  report["exit_code"] = code;
  report["status"] = code == 0 ? "pass" : code == 1 ? "fail" : "error";
  if (opt.timings) {
    report["timings_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  if (report.contains("error")) err << "error: " << report["error"]["message"].get<std::string>() << "\n";
  try {
    write_report(opt, report);
  } catch (const std::exception& e) {
    err << "error: cannot write report: " << e.what() << "\n";
    return code == 0 ? 2 : code;
  }
  out << "status: " << report["status"].get<std::string>() << "\n";
  return code;
}

}  // namespace nls
