#include "stotop/runner.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "stotop/error.hpp"
#include "stotop/io.hpp"
#include "stotop/sampling.hpp"

namespace stotop {

// ---------------------------------------------------------------------------
// Sample fan-out

SampleEvaluator::SampleEvaluator(const Problem& problem, int threads) : problem_(problem) {
  require(threads >= 1, "thread count must be positive", ErrorCode::Configuration);
  for (int t = 0; t < threads; ++t) workspaces_.push_back(problem.make_workspace());
}

std::vector<SampleRecord> SampleEvaluator::evaluate(const PreparedDesign& design,
                                                    const std::vector<std::vector<double>>& xis,
                                                    bool with_gradients) {
  const std::size_t n = xis.size();
  std::vector<SampleRecord> out(n);
  const std::size_t T = std::min(workspaces_.size(), n);
  if (T <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = problem_.evaluate(design, xis[i], *workspaces_[0], with_gradients);
    return out;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < T; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += T) {
          try {
            out[i] = problem_.evaluate(design, xis[i], *workspaces_[t], with_gradients);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  // Report the failure of the lowest sample index, whatever thread hit it first.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------
// Convergence log

std::string convergence_header(std::size_t num_constraints) {
  std::string s = "iter,R_hat";
  for (std::size_t j = 0; j < num_constraints; ++j) s += ",C_hat_" + std::to_string(j + 1);
  return s + ",var_f,grad_norm,vol_frac,inner_iters,wall_ms";
}

std::string convergence_row(const ConvergenceRecord& r, bool with_wall_time) {
  std::string s = std::to_string(r.iteration) + "," + format_number(r.R_hat);
  for (double c : r.C_hat) s += "," + format_number(c);
  s += "," + format_number(r.var_f) + "," + format_number(r.grad_norm) + "," + format_number(r.vol_frac) + "," +
       std::to_string(r.inner_iters);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", with_wall_time ? r.wall_ms : 0.0);
  return s + "," + buf;
}

// ---------------------------------------------------------------------------
// Checkpoints and design files

namespace {

constexpr const char* kCheckpointTag = "stotop-checkpoint";
constexpr const char* kDesignTag = "stotop-design";

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 16);
  require(pos == s.size(), "malformed digest '" + s + "'", ErrorCode::Io);
  return v;
}

std::int64_t parse_i64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoll(s, &pos);
  require(pos == s.size(), "malformed integer '" + s + "'", ErrorCode::Io);
  return v;
}

}  // namespace

std::string Checkpoint::serialize() const {
  TextArchive a;
  a.tag = kCheckpointTag;
  a.scalars["preset"] = preset;
  a.scalars["digest"] = hex64(digest);
  a.scalars["iteration"] = std::to_string(iteration);
  a.scalars["opt.steps"] = std::to_string(optimizer.steps);
  a.scalars["opt.inner"] = std::to_string(optimizer.inner);
  a.scalars["opt.table_rows"] = std::to_string(optimizer.table.size());
  a.scalars["gcmma.outer"] = std::to_string(gcmma.outer);
  a.scalars["gcmma.scale"] = format_hex(gcmma_scale);
  a.vectors["theta"] = theta;
  a.vectors["opt.a"] = optimizer.a;
  a.vectors["opt.a_h"] = optimizer.a_h;
  a.vectors["opt.a_theta"] = optimizer.a_theta;
  a.vectors["opt.m"] = optimizer.m;
  a.vectors["opt.v"] = optimizer.v;
  std::vector<double> table;
  for (const auto& row : optimizer.table) table.insert(table.end(), row.begin(), row.end());
  a.vectors["opt.table"] = std::move(table);
  a.vectors["opt.table_sum"] = optimizer.table_sum;
  a.vectors["opt.anchor"] = optimizer.anchor;
  a.vectors["opt.h_best"] = optimizer.h_best;
  a.vectors["gcmma.x_prev1"] = gcmma.x_prev1;
  a.vectors["gcmma.x_prev2"] = gcmma.x_prev2;
  a.vectors["gcmma.L"] = gcmma.asymptotes.L;
  a.vectors["gcmma.U"] = gcmma.asymptotes.U;
  return a.serialize();
}

Checkpoint Checkpoint::parse(const std::string& text) {
  const TextArchive a = TextArchive::parse(text);
  require(a.tag == kCheckpointTag, "not a checkpoint file (tag '" + a.tag + "')", ErrorCode::Io);
  require(a.version == 1, "unsupported checkpoint version " + std::to_string(a.version), ErrorCode::Io);
  Checkpoint c;
  c.preset = a.scalar("preset");
  c.digest = parse_hex64(a.scalar("digest"));
  c.iteration = parse_i64(a.scalar("iteration"));
  c.optimizer.steps = parse_i64(a.scalar("opt.steps"));
  c.optimizer.inner = parse_i64(a.scalar("opt.inner"));
  c.gcmma.outer = parse_i64(a.scalar("gcmma.outer"));
  c.gcmma_scale = parse_hex(a.scalar("gcmma.scale"));
  c.theta = a.vector("theta");
  c.optimizer.a = a.vector("opt.a");
  c.optimizer.a_h = a.vector("opt.a_h");
  c.optimizer.a_theta = a.vector("opt.a_theta");
  c.optimizer.m = a.vector("opt.m");
  c.optimizer.v = a.vector("opt.v");
  const auto rows = static_cast<std::size_t>(parse_i64(a.scalar("opt.table_rows")));
  const auto& table = a.vector("opt.table");
  if (rows > 0) {
    require(table.size() % rows == 0, "checkpoint SAG table is ragged", ErrorCode::Io);
    const std::size_t cols = table.size() / rows;
    for (std::size_t r = 0; r < rows; ++r)
      c.optimizer.table.emplace_back(table.begin() + static_cast<std::ptrdiff_t>(r * cols),
                                     table.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
  c.optimizer.table_sum = a.vector("opt.table_sum");
  c.optimizer.anchor = a.vector("opt.anchor");
  c.optimizer.h_best = a.vector("opt.h_best");
  c.gcmma.x_prev1 = a.vector("gcmma.x_prev1");
  c.gcmma.x_prev2 = a.vector("gcmma.x_prev2");
  c.gcmma.asymptotes.L = a.vector("gcmma.L");
  c.gcmma.asymptotes.U = a.vector("gcmma.U");
  return c;
}

void Checkpoint::save(const std::string& path) const { write_text_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) { return parse(read_text_file(path)); }

std::string DesignFile::serialize() const {
  TextArchive a;
  a.tag = kDesignTag;
  a.scalars["preset"] = preset;
  a.scalars["iteration"] = std::to_string(iteration);
  a.vectors["theta"] = theta;
  return a.serialize();
}

DesignFile DesignFile::load(const std::string& path) {
  const TextArchive a = TextArchive::parse(read_text_file(path));
  require(a.tag == kDesignTag || a.tag == kCheckpointTag, "'" + path + "' is neither a design nor a checkpoint",
          ErrorCode::Io);
  DesignFile d;
  d.preset = a.scalar("preset");
  d.iteration = parse_i64(a.scalar("iteration"));
  d.theta = a.vector("theta");
  return d;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

RobustConfig robust_of(const RunConfig& c) {
  RobustConfig r;
  r.lambda = c.lambda;
  r.lambda_constraint = c.lambda_constraint;
  r.kappa = {c.kappa};
  return r;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

const char* code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::InvalidState: return "invalid-state";
    case ErrorCode::SolverFailure: return "solver-failure";
    case ErrorCode::Configuration: return "configuration";
    case ErrorCode::DomainVoid: return "domain-void";
    case ErrorCode::StepRejected: return "step-rejected";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace

Runner::Runner(RunConfig config)
    : config_(std::move(config)),
      problem_(make_problem(config_)),
      evaluator_(*problem_, config_.resolved_threads()),
      robust_(robust_of(config_)),
      box_(problem_->bounds()),
      theta_(problem_->initial_design()) {
  box_.clamp(theta_);
  const auto& spec = problem_->random_spec();
  if (config_.optimizer == OptimizerKind::Sag || config_.optimizer == OptimizerKind::Svrg) {
    pool_.reserve(config_.learning.ns);
    for (std::size_t i = 0; i < config_.learning.ns; ++i)
      pool_.push_back(config_.deterministic ? spec.midpoint()
                                            : draw_sample(spec, {config_.seed, kPoolStream}, 0, i));
  }
}

Runner::Runner(RunConfig config, const Checkpoint& ck) : Runner(std::move(config)) {
  require(ck.preset == config_.preset, "checkpoint preset '" + ck.preset + "' differs from config preset '" +
                                           config_.preset + "'", ErrorCode::InvalidInput);
  require(ck.digest == config_.digest(), "checkpoint was written with a different configuration (digest mismatch)",
          ErrorCode::InvalidInput);
  require(ck.theta.size() == problem_->num_variables(), "checkpoint design length does not match the problem",
          ErrorCode::InvalidInput);
  theta_ = ck.theta;
  iteration_ = ck.iteration;
  opt_ = ck.optimizer;
  gcmma_ = ck.gcmma;
  gcmma_scale_ = ck.gcmma_scale;
}

std::vector<std::vector<double>> Runner::pool_samples(std::span<const std::size_t> indices) const {
  std::vector<std::vector<double>> xs;
  xs.reserve(indices.size());
  for (std::size_t i : indices) xs.push_back(pool_.at(i));
  return xs;
}

std::vector<double> Runner::per_sample_gradient(const SampleRecord& r) const {
  RobustConfig mean_only = robust_;
  mean_only.lambda = 0.0;
  mean_only.lambda_constraint = 0.0;
  return estimate(std::span<const SampleRecord>(&r, 1), mean_only).h_hat;
}

const ConvergenceRecord& Runner::step() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t k = iteration_;
  const std::size_t n = config_.n;
  const auto& spec = problem_->random_spec();
  if (!prepared_ || prepared_->iteration != k) prepared_ = problem_->prepare(theta_, k);

  ConvergenceRecord rec;
  rec.iteration = k;
  const bool pooled = config_.optimizer == OptimizerKind::Sag || config_.optimizer == OptimizerKind::Svrg;
  std::vector<std::size_t> picks;
  std::vector<std::vector<double>> xis;
  if (pooled) {
    picks = draw_indices(config_.learning.ns, n, {config_.seed, kSelectionStream}, k);
    xis = pool_samples(picks);
    rec.batch_id = k;
  } else if (config_.deterministic || spec.empty()) {
    xis.assign(n, spec.midpoint());
  } else {
    rec.batch_id = config_.resample ? k : 0;
    xis = draw_batch(spec, n, {config_.seed, kTrainingStream}, rec.batch_id).samples;
  }

  const auto records = evaluator_.evaluate(*prepared_, xis, true);
  const StochasticGradientReport report = estimate(records, robust_);
  std::vector<double> next = theta_;
  const LearningParams& lp = config_.learning;

  switch (config_.optimizer) {
    case OptimizerKind::Sgd: sgd_step(next, report.h_hat, lp.eta, box_); break;
    case OptimizerKind::AdaGrad: adagrad_step(opt_, next, report.h_hat, lp, box_); break;
    case OptimizerKind::Adadelta: adadelta_step(opt_, next, report.h_hat, lp, box_); break;
    case OptimizerKind::Adam: adam_step(opt_, next, report.h_hat, lp, box_); break;
    case OptimizerKind::Sag: {
      std::vector<std::vector<double>> d;
      for (const auto& r : records) d.push_back(per_sample_gradient(r));
      OptimizerState trial = opt_;
      if (trial.table.empty()) sag_init(trial, lp.ns, next.size());
      for (std::size_t i = 0; i < picks.size(); ++i) sag_update(trial, picks[i], d[i]);
      sag_step(trial, next, lp, box_);
      opt_ = std::move(trial);
      break;
    }
    case OptimizerKind::Svrg: {
      OptimizerState trial = opt_;
      if (svrg_needs_anchor(trial, lp)) {
        std::vector<std::size_t> all(lp.ns);
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const auto full = evaluator_.evaluate(*prepared_, pool_samples(all), true);
        svrg_set_anchor(trial, theta_, estimate(full, robust_).h_hat);
      }
      std::vector<double> h_anchor;
      if (trial.anchor == theta_) {
        h_anchor = report.h_hat;
      } else {
        const auto at_anchor = problem_->prepare(trial.anchor, k);
        h_anchor = estimate(evaluator_.evaluate(*at_anchor, xis, true), robust_).h_hat;
      }
      svrg_step(trial, next, report.h_hat, h_anchor, lp, box_);
      opt_ = std::move(trial);
      break;
    }
    case OptimizerKind::Gcmma: {
      const bool native = config_.gcmma_constraints == GcmmaConstraintMode::Native;
      auto to_eval = [&](const StochasticGradientReport& rep, double scale) {
        GcmmaEvaluation e;
        if (native) {
          e.f0 = rep.R_hat;
          e.df0 = rep.grad_R;
          std::tie(e.fi, e.dfi) = native_constraints(rep, robust_);
        } else {
          e.f0 = rep.penalized;
          e.df0 = rep.h_hat;
        }
        e.f0 *= scale;
        for (double& x : e.df0) x *= scale;
        return e;
      };
      double scale = gcmma_scale_;
      if (scale == 0.0) {
        const double f0 = std::abs(native ? report.R_hat : report.penalized);
        scale = f0 > 0.0 && std::isfinite(f0) ? 1.0 / f0 : 1.0;
      }
      // Candidates are re-evaluated on the same frozen batch.
      GcmmaEvaluator ev = [&](std::span<const double> x, bool grads) {
        const auto p = problem_->prepare(x, k);
        return to_eval(estimate(evaluator_.evaluate(*p, xis, grads), robust_), scale);
      };
      GcmmaState trial = gcmma_;
      const GcmmaStepResult r = gcmma_outer_iteration(trial, next, to_eval(report, scale), ev, box_, config_.gcmma);
      gcmma_ = std::move(trial);
      gcmma_scale_ = scale;
      rec.inner_iters = r.inner_iterations;
      rec.kkt_residual = r.max_kkt_residual;
      if (r.capped && log_)
        log_("warning: GCMMA inner loop reached its cap of " + std::to_string(config_.gcmma.max_inner) +
             " at iteration " + std::to_string(k) + "; candidate accepted");
      break;
    }
  }

  theta_ = std::move(next);
  iteration_ = k + 1;
  prepared_ = problem_->prepare(theta_, iteration_);

  rec.R_hat = report.R_hat;
  rec.C_hat = report.C_hat;
  rec.var_f = report.f.variance;
  rec.grad_norm = norm2(report.h_hat);
  rec.penalized = report.penalized;
  rec.vol_frac = problem_->volume_fraction(*prepared_);
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  records_.push_back(std::move(rec));
  return records_.back();
}

Checkpoint Runner::checkpoint() const {
  Checkpoint c;
  c.preset = config_.preset;
  c.digest = config_.digest();
  c.iteration = iteration_;
  c.theta = theta_;
  c.optimizer = opt_;
  c.gcmma = gcmma_;
  c.gcmma_scale = gcmma_scale_;
  return c;
}

DesignFile Runner::design() const { return DesignFile{config_.preset, iteration_, theta_}; }

std::string Runner::output_path(const std::string& name) const {
  return (std::filesystem::path(config_.output_dir) / name).string();
}

void Runner::write_checkpoint() const { checkpoint().save(output_path("checkpoint.txt")); }

void Runner::export_design(const std::string& dir) const { export_fields(*problem_, theta_, iteration_, dir); }

void Runner::run() {
  std::error_code ec;
  std::filesystem::create_directories(config_.output_dir, ec);
  require(!ec, "cannot create output directory '" + config_.output_dir + "': " + ec.message(), ErrorCode::Io);
  write_text_file(output_path("config.txt"), config_.to_text());

  // Keep only rows before the resume point so an interrupted run's tail is not duplicated.
  const std::string csv = output_path("convergence.csv");
  const std::string header = convergence_header(problem_->num_constraints());
  std::string kept = header + "\n";
  if (iteration_ > 0 && std::filesystem::exists(csv)) {
    std::istringstream in(read_text_file(csv));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) < iteration_) kept += line + "\n";
    }
  }
  write_text_file(csv, kept);
  write_checkpoint();

  std::ofstream log_file(csv, std::ios::app);
  require(static_cast<bool>(log_file), "cannot append to '" + csv + "'", ErrorCode::Io);
  while (iteration_ < config_.max_iters) {
    try {
      step();
    } catch (const std::exception& e) {
      nlohmann::json j;
      j["status"] = "failed";
      j["iteration"] = iteration_;
      if (const auto* se = dynamic_cast<const Error*>(&e)) {
        j["code"] = static_cast<int>(se->code());
        j["error"] = code_name(se->code());
      } else {
        j["code"] = 99;
        j["error"] = "internal";
      }
      j["message"] = e.what();
      j["checkpoint"] = output_path("checkpoint.txt");
      j["preset"] = config_.preset;
      j["optimizer"] = optimizer_name(config_.optimizer);
      write_checkpoint();
      write_text_file(output_path("failure.json"), j.dump(2) + "\n");
      throw;
    }
    const auto& r = records_.back();
    log_file << convergence_row(r, config_.wall_time) << '\n';
    log_file.flush();
    if (log_ && config_.log_every > 0 && (r.iteration % config_.log_every == 0 || iteration_ == config_.max_iters)) {
      std::ostringstream s;
      s << "iter " << r.iteration << "  R_hat " << r.R_hat;
      for (double c : r.C_hat) s << "  C_hat " << c;
      s << "  vol " << r.vol_frac << "  |h| " << r.grad_norm;
      if (config_.optimizer == OptimizerKind::Gcmma) s << "  inner " << r.inner_iters;
      log_(s.str());
    }
    if (config_.snapshot_every > 0 && iteration_ % config_.snapshot_every == 0) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "density_%06lld", static_cast<long long>(iteration_));
      export_fields(*problem_, theta_, iteration_, output_path("snapshots"), stem);
    }
    if (config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0) write_checkpoint();
  }
  write_checkpoint();
  write_text_file(output_path("design.txt"), design().serialize());
  export_design(config_.output_dir);
}

// ---------------------------------------------------------------------------
// Validation and export

std::string ValidationReport::to_json() const {
  nlohmann::json j;
  j["samples"] = samples;
  j["mean_f"] = mean_f;
  j["var_f"] = var_f;
  j["std_error"] = std_error;
  j["R_hat"] = R_hat;
  j["mean_g"] = mean_g;
  j["var_g"] = var_g;
  j["C_hat"] = C_hat;
  j["satisfaction_rate"] = satisfaction_rate;
  j["volume_fraction"] = volume_fraction;
  return j.dump(2);
}

namespace {

/// Mean and unbiased variance with deviations about the first value (exact zero for constant data).
std::pair<double, double> mean_var(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double shift = 0.0;
  for (double x : v) shift += x - v[0];
  shift /= n;
  double var = 0.0;
  for (double x : v) {
    const double d = (x - v[0]) - shift;
    var += d * d;
  }
  return {v[0] + shift, v.size() > 1 ? var / (n - 1.0) : 0.0};
}

}  // namespace

ValidationReport validate_design(const Problem& problem, const RunConfig& config, std::span<const double> theta,
                                 std::int64_t iteration, std::size_t samples, int threads) {
  require(samples >= 2, "validation needs at least two samples");
  require(theta.size() == problem.num_variables(),
          "design has " + std::to_string(theta.size()) + " variables but the problem mesh expects " +
              std::to_string(problem.num_variables()));
  const Box box = problem.bounds();
  require(box.contains(theta), "design lies outside the variable bounds");
  const auto prepared = problem.prepare(theta, iteration);
  const auto& spec = problem.random_spec();
  std::vector<std::vector<double>> xis;
  xis.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i)
    xis.push_back(config.deterministic || spec.empty() ? spec.midpoint()
                                                       : draw_sample(spec, {config.seed, kValidationStream}, 0, i));
  SampleEvaluator ev(problem, threads);
  const auto recs = ev.evaluate(*prepared, xis, false);

  ValidationReport rep;
  rep.samples = samples;
  std::vector<double> f(samples);
  for (std::size_t i = 0; i < samples; ++i) f[i] = recs[i].f;
  std::tie(rep.mean_f, rep.var_f) = mean_var(f);
  rep.std_error = std::sqrt(rep.var_f / static_cast<double>(samples));
  rep.R_hat = rep.mean_f + config.lambda * rep.var_f;
  const double lc = config.lambda_constraint < 0.0 ? config.lambda : config.lambda_constraint;
  std::size_t ok = 0;
  for (const auto& r : recs) {
    bool good = true;
    for (double g : r.g) good = good && g <= 0.0;
    ok += good ? 1 : 0;
  }
  rep.satisfaction_rate = static_cast<double>(ok) / static_cast<double>(samples);
  for (std::size_t j = 0; j < problem.num_constraints(); ++j) {
    std::vector<double> g(samples), G(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      g[i] = recs[i].g[j];
      G[i] = constraint_violation(g[i]);
    }
    const auto [mg, vg] = mean_var(g);
    const auto [mG, vG] = mean_var(G);
    rep.mean_g.push_back(mg);
    rep.var_g.push_back(vg);
    rep.C_hat.push_back(mG + lc * vG);
  }
  rep.volume_fraction = problem.volume_fraction(*prepared);
  return rep;
}

std::vector<std::string> export_fields(const Problem& problem, std::span<const double> theta, std::int64_t iteration,
                                       const std::string& dir, const std::string& stem) {
  require(theta.size() == problem.num_variables(), "design length does not match the problem");
  const auto prepared = problem.prepare(theta, iteration);
  const DensityField field = problem.density(*prepared);
  const std::filesystem::path base(dir);
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& content) {
    const std::string p = (base / name).string();
    write_text_file(p, content);
    written.push_back(p);
  };
  if (field.dim == 2) put(stem + ".csv", density_csv(field));
  else put(stem + ".vtk", density_vtk(field));
  put(stem + "_histogram.csv", histogram_csv(field.values));
  const auto bars = problem.bars(theta);
  if (!bars.empty()) put(stem == "density" ? "bars.csv" : stem + "_bars.csv", bars_csv(bars));
  return written;
}

}  // namespace stotop
