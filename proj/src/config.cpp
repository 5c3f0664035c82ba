#include "stotop/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "stotop/error.hpp"

namespace stotop {

namespace {

constexpr auto kCfg = ErrorCode::Configuration;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view key, std::string_view v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  require(ec == std::errc() && p == v.data() + v.size() && std::isfinite(x),
          "config key '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'", kCfg);
  return x;
}

template <class Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  require(ec == std::errc() && p == v.data() + v.size(),
          "config key '" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'", kCfg);
  return x;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(kCfg, "config key '" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}
template <class Int>
std::string fmt_int(Int x) {
  return std::to_string(x);
}

LinearSolverKind parse_solver(std::string_view v) {
  if (v == "auto") return LinearSolverKind::Auto;
  if (v == "direct") return LinearSolverKind::Direct;
  if (v == "pcg") return LinearSolverKind::Pcg;
  fail(kCfg, "solver.kind must be auto, direct or pcg, got '" + std::string(v) + "'");
}
std::string solver_name(LinearSolverKind k) {
  return k == LinearSolverKind::Direct ? "direct" : (k == LinearSolverKind::Pcg ? "pcg" : "auto");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
  /// Part of the trajectory digest.
  bool digest = true;
};

#define STOTOP_DOUBLE(KEY, MEMBER) \
  Field{KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_double(KEY, v); }, \
        [](const RunConfig& c) { return fmt(c.MEMBER); }}
#define STOTOP_INT(KEY, MEMBER, TYPE) \
  Field{KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_int<TYPE>(KEY, v); }, \
        [](const RunConfig& c) { return fmt_int(c.MEMBER); }}
#define STOTOP_BOOL(KEY, MEMBER) \
  Field{KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_bool(KEY, v); }, \
        [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f{
        Field{"preset", [](RunConfig& c, std::string_view v) { c.preset = std::string(v); },
              [](const RunConfig& c) { return c.preset; }},
        STOTOP_DOUBLE("mesh.h", mesh_h),
        STOTOP_DOUBLE("simp.filter_radius", filter_radius),
        STOTOP_DOUBLE("simp.penalty", simp_penalty),
        STOTOP_DOUBLE("simp.emin", simp_emin),
        STOTOP_DOUBLE("simp.projection_nu", projection_nu),
        Field{"schedule.beta_pr", [](RunConfig& c, std::string_view v) { c.beta_pr = std::string(v); },
              [](const RunConfig& c) { return c.beta_pr; }},
        STOTOP_DOUBLE("problem.volume_fraction", volume_fraction),
        STOTOP_DOUBLE("problem.initial_density", initial_density),
        STOTOP_DOUBLE("problem.spring", spring),
        STOTOP_DOUBLE("problem.objective_scale", objective_scale),
        STOTOP_DOUBLE("material.nu", poisson),
        STOTOP_DOUBLE("primitive.mu", primitive_mu),
        STOTOP_DOUBLE("primitive.beta_ks", primitive_beta_ks),
        STOTOP_DOUBLE("primitive.lambda_reg", primitive_lambda_reg),
        STOTOP_DOUBLE("primitive.perturbation", primitive_perturbation),
        STOTOP_DOUBLE("primitive.beta_h", primitive_beta_h),
        Field{"optimizer.name", [](RunConfig& c, std::string_view v) { c.optimizer = parse_optimizer(v); },
              [](const RunConfig& c) { return optimizer_name(c.optimizer); }},
        STOTOP_DOUBLE("optimizer.eta", learning.eta),
        STOTOP_DOUBLE("optimizer.epsilon", learning.epsilon),
        STOTOP_DOUBLE("optimizer.zeta", learning.zeta),
        STOTOP_DOUBLE("optimizer.beta_m", learning.beta_m),
        STOTOP_DOUBLE("optimizer.beta_v", learning.beta_v),
        STOTOP_INT("optimizer.m", learning.m_inner, std::size_t),
        STOTOP_DOUBLE("gcmma.asyinit", gcmma.asyinit),
        STOTOP_DOUBLE("gcmma.asyincr", gcmma.asyincr),
        STOTOP_DOUBLE("gcmma.asydecr", gcmma.asydecr),
        STOTOP_DOUBLE("gcmma.move", gcmma.move),
        STOTOP_DOUBLE("gcmma.albefa", gcmma.albefa),
        STOTOP_DOUBLE("gcmma.raa0", gcmma.raa0),
        STOTOP_INT("gcmma.max_inner", gcmma.max_inner, int),
        STOTOP_DOUBLE("gcmma.dual_tol", gcmma.dual_tolerance),
        STOTOP_DOUBLE("gcmma.c", gcmma.c),
        STOTOP_DOUBLE("gcmma.d", gcmma.d),
        STOTOP_DOUBLE("gcmma.conservative_tol", gcmma.conservative_tolerance),
        Field{"gcmma.constraints",
              [](RunConfig& c, std::string_view v) {
                if (v == "native") c.gcmma_constraints = GcmmaConstraintMode::Native;
                else if (v == "penalty") c.gcmma_constraints = GcmmaConstraintMode::Penalty;
                else fail(kCfg, "gcmma.constraints must be native or penalty, got '" + std::string(v) + "'");
              },
              [](const RunConfig& c) {
                return std::string(c.gcmma_constraints == GcmmaConstraintMode::Native ? "native" : "penalty");
              }},
        STOTOP_INT("uq.n", n, std::size_t),
        STOTOP_DOUBLE("uq.lambda", lambda),
        STOTOP_DOUBLE("uq.lambda_constraint", lambda_constraint),
        STOTOP_DOUBLE("uq.kappa", kappa),
        STOTOP_INT("uq.seed", seed, std::uint64_t),
        STOTOP_BOOL("uq.resample", resample),
        STOTOP_BOOL("uq.deterministic", deterministic),
        STOTOP_INT("uq.ns", learning.ns, std::size_t),
        Field{"solver.kind", [](RunConfig& c, std::string_view v) { c.solver = parse_solver(v); },
              [](const RunConfig& c) { return solver_name(c.solver); }},
        STOTOP_DOUBLE("solver.tol", solver_tol),
    };
    // Run-control keys do not change the trajectory of the iterations they cover.
    std::vector<Field> control{
        STOTOP_INT("schedule.max_iters", max_iters, std::int64_t),
        STOTOP_INT("schedule.log_every", log_every, std::int64_t),
        STOTOP_INT("schedule.snapshot_every", snapshot_every, std::int64_t),
        STOTOP_INT("schedule.checkpoint_every", checkpoint_every, std::int64_t),
        Field{"output.dir", [](RunConfig& c, std::string_view v) { c.output_dir = std::string(v); },
              [](const RunConfig& c) { return c.output_dir; }},
        STOTOP_BOOL("output.wall_time", wall_time),
        STOTOP_INT("run.threads", threads, int),
        STOTOP_INT("validation.samples", validation_samples, std::size_t),
    };
    for (auto& c : control) {
      c.digest = false;
      f.push_back(std::move(c));
    }
    return f;
  }();
  return table;
}

#undef STOTOP_DOUBLE
#undef STOTOP_INT
#undef STOTOP_BOOL

const Field& field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  fail(kCfg, "unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) { field(trim(key)).set(*this, trim(value)); }

std::string RunConfig::get(std::string_view key) const { return field(trim(key)).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& f : fields()) s += f.key + " = " + f.get(*this) + "\n";
  return s;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t RunConfig::digest() const {
  std::string s;
  for (const auto& f : fields())
    if (f.digest) s += f.key + "=" + f.get(*this) + "\n";
  return fnv1a(s);
}

std::string RunConfig::resolved_schedule() const {
  if (beta_pr != "auto") return beta_pr;
  if (preset.rfind("example2", 0) == 0) return optimizer == OptimizerKind::Adam ? "0:2,400:20" : "0:5,400:20";
  return "none";
}

double RunConfig::resolved_h() const { return mesh_h; }

int RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  if (const char* env = std::getenv("STOTOP_THREADS")) {
    int t = 0;
    const std::string_view v(env);
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), t);
    require(ec == std::errc() && p == v.data() + v.size() && t >= 1,
            "STOTOP_THREADS must be a positive integer, got '" + std::string(v) + "'", kCfg);
    return t;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void RunConfig::validate() const {
  bool known = false;
  for (const auto& p : preset_names()) known = known || p == preset;
  require(known, "unknown preset '" + preset + "'", ErrorCode::InvalidInput);
  require(mesh_h > 0.0, "mesh.h must be positive", kCfg);
  require(max_iters >= 1, "schedule.max_iters must be at least 1", kCfg);
  require(log_every >= 0 && snapshot_every >= 0 && checkpoint_every >= 0, "cadences must be non-negative", kCfg);
  require(n >= 1, "uq.n must be at least 1", kCfg);
  require(lambda >= 0.0, "uq.lambda must be non-negative", kCfg);
  const double lc = lambda_constraint < 0.0 ? lambda : lambda_constraint;
  require((lambda == 0.0 && lc == 0.0) || n >= 2, "variance terms (lambda != 0) need uq.n >= 2", kCfg);
  require(kappa >= 0.0, "uq.kappa must be non-negative", kCfg);
  require(threads >= 0, "run.threads must be non-negative", kCfg);
  require(validation_samples >= 2, "validation.samples must be at least 2", kCfg);
  require(solver_tol > 0.0, "solver.tol must be positive", kCfg);
  require(objective_scale > 0.0, "problem.objective_scale must be positive", kCfg);
  learning.validate(optimizer);
  if (optimizer == OptimizerKind::Gcmma) gcmma.validate();
  if (optimizer == OptimizerKind::Sag || optimizer == OptimizerKind::Svrg) {
    require(lambda == 0.0 && lc == 0.0, "SAG and SVRG average per-sample gradients and need uq.lambda = 0", kCfg);
    require(n <= learning.ns, "uq.n cannot exceed the sample pool uq.ns", kCfg);
  }
  const std::string sched = resolved_schedule();
  if (sched != "none") ProjectionSchedule::parse(sched);
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"example1-beam", "example2-bedding-3d", "example2-bedding-2d",
                                              "mbb-deterministic"};
  return names;
}

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  if (name == "example1-beam") {
    c.mesh_h = 0.05;
    c.volume_fraction = 0.5;
    c.spring = 1e-6;
    c.optimizer = OptimizerKind::Adam;
    c.learning.eta = 0.01;
    c.max_iters = 500;
  } else if (name == "example2-bedding-3d" || name == "example2-bedding-2d") {
    c.mesh_h = name == "example2-bedding-3d" ? 0.1 : 0.05;
    c.volume_fraction = 0.15;
    c.initial_density = 0.15;
    c.spring = 0.0;
    c.optimizer = OptimizerKind::Adam;
    c.learning.eta = 0.25;
    c.max_iters = 800;
  } else if (name == "mbb-deterministic") {
    c.mesh_h = 1.0;
    c.volume_fraction = 0.5;
    c.initial_density = 0.5;
    c.spring = 0.0;
    c.optimizer = OptimizerKind::Gcmma;
    c.n = 1;
    c.lambda = 0.0;
    c.deterministic = true;
    c.beta_pr = "none";
    c.max_iters = 200;
  } else {
    std::string list;
    for (const auto& p : preset_names()) list += (list.empty() ? "" : ", ") + p;
    fail(ErrorCode::InvalidInput, "unknown preset '" + std::string(name) + "' (available: " + list + ")");
  }
  return c;
}

RunConfig parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  std::string preset;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = line;
    if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    require(eq != std::string_view::npos, "config line " + std::to_string(lineno) + " is not 'key = value'", kCfg);
    std::string key(trim(l.substr(0, eq))), value(trim(l.substr(eq + 1)));
    require(!key.empty(), "config line " + std::to_string(lineno) + " has an empty key", kCfg);
    if (key == "preset") preset = value;
    else entries.emplace_back(std::move(key), std::move(value));
  }
  RunConfig c = preset_config(preset.empty() ? "example1-beam" : preset);
  for (const auto& [k, v] : entries) c.set(k, v);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), "cannot read config file '" + path + "'", ErrorCode::Io);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::unique_ptr<Problem> make_problem(const RunConfig& c) {
  c.validate();
  const double h = c.mesh_h;
  SolverOptions solver;
  solver.kind = c.solver;
  solver.pcg_tolerance = c.solver_tol;
  const ElasticMaterial material{1.0, c.poisson};
  auto count = [h](double length, const char* what) {
    const double r = length / h;
    const long k = std::lround(r);
    require(k >= 1 && std::abs(r - static_cast<double>(k)) < 1e-6,
            std::string("mesh.h must divide the ") + what + " into whole elements", kCfg);
    return static_cast<int>(k);
  };

  if (c.preset == "example1-beam") {
    PrimitiveProblemSpec s;
    s.h = h;
    count(s.length, "beam length");
    count(s.height, "beam height");
    s.params.mu = c.primitive_mu;
    s.params.beta_ks = c.primitive_beta_ks;
    s.params.lambda_reg = c.primitive_lambda_reg;
    s.params.perturbation = c.primitive_perturbation;
    s.params.beta_h = c.primitive_beta_h;
    s.material = material;
    s.mass_fraction = c.volume_fraction;
    s.spring = c.spring;
    s.solver = solver;
    return std::make_unique<PrimitiveProblem>(s);
  }

  SimpProblemSpec s;
  s.name = c.preset;
  s.h = h;
  s.filter_radius = c.filter_radius;
  s.simp = SimpParams{c.simp_penalty, material.E0, c.simp_emin};
  s.material = material;
  const std::string sched = c.resolved_schedule();
  s.projection = sched != "none";
  if (s.projection) s.schedule = ProjectionSchedule::parse(sched);
  s.projection_nu = c.projection_nu;
  s.volume_fraction = c.volume_fraction;
  s.initial_value = c.initial_density;
  s.spring = c.spring;
  s.objective_scale = c.objective_scale;
  s.solver = solver;
  if (c.preset == "mbb-deterministic") {
    s.scenario = SimpScenario::MbbHalfBeam;
    s.design_dims = {count(60.0, "MBB length"), count(20.0, "MBB height")};
  } else {
    // 1 x 1 x 1.33 design region over a 1 x 1 x 0.67 bedding, 2.0 high in total.
    s.scenario = SimpScenario::Bedding;
    const int side = count(1.0, "unit footprint");
    const int total = count(2.0, "domain height");
    const int design = static_cast<int>(std::lround(1.33 / h));
    s.bedding_layers = total - design;
    s.design_dims = c.preset == "example2-bedding-3d" ? std::vector<int>{side, side, design}
                                                      : std::vector<int>{side, design};
  }
  return std::make_unique<SimpProblem>(s);
}

}  // namespace stotop
