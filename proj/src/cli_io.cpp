#include "huntbranch/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "huntbranch/errors.hpp"
#include "huntbranch/harness.hpp"
#include "huntbranch/parallel.hpp"
#include "huntbranch/spine_sim.hpp"

namespace huntbranch {

namespace fs = std::filesystem;

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ec == std::errc() ? end : buf);
}

bool is_stochastic(const std::string& command) {
  return command == "simulate" || command == "spine" || command == "verify";
}

namespace {

const std::vector<std::string> kCommands{"spectrum", "simulate", "spine", "verify", "fixtures"};
const std::vector<std::string> kModes{"slln", "martingale", "dichotomy", "spine"};

// Parameters of every command, each optional; defaults are applied at dispatch.
struct Params {
  std::string mode;
  std::optional<State> x0;
  std::optional<std::vector<double>> checkpoints;
  std::optional<std::vector<double>> iu_grid;
  std::optional<std::vector<double>> f;
  std::optional<std::vector<State>> subset;
  std::optional<std::uint64_t> cap;
  std::optional<std::uint64_t> kmax;
  std::optional<double> tolerance;
  std::optional<double> t;
  std::optional<std::string> method;
  bool record_events = false;
  std::optional<Json> control;
};

std::vector<const char*> allowed_params(const std::string& command, const std::string& mode) {
  if (command == "spectrum") return {"iu_grid", "method"};
  if (command == "simulate") return {"x0", "checkpoints", "cap", "record_events"};
  if (command == "spine") return {"x0", "checkpoints", "cap"};
  if (command == "verify") {
    if (mode == "martingale") return {"mode", "x0", "checkpoints", "cap"};
    if (mode == "slln") return {"mode", "x0", "checkpoints", "cap", "tolerance", "f", "subset", "iu_grid"};
    if (mode == "dichotomy") return {"mode", "x0", "checkpoints", "cap", "kmax", "control"};
    return {"mode", "x0", "t", "cap"};
  }
  return {};
}

std::vector<double> time_grid(const Json& value, const std::string& path, bool allow_zero) {
  std::vector<double> grid = schema::numbers(value, path);
  if (grid.empty()) throw SpecError(path, "must not be empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0 || (!allow_zero && grid[i] == 0.0)) throw SpecError(schema::join(path, i), "time out of range");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw SpecError(schema::join(path, i), "times must increase strictly");
  }
  return grid;
}

Params parse_params(const std::string& command, const Json& params) {
  using namespace schema;
  const std::string path = "params";
  expect_object(params, path);
  Params p;
  if (command == "verify") {
    const Json& mode = require(params, path, "mode");
    if (!mode.is_string() || std::find(kModes.begin(), kModes.end(), mode.get<std::string>()) == kModes.end())
      throw SpecError("params.mode", "expected one of slln, martingale, dichotomy, spine");
    p.mode = mode.get<std::string>();
  }
  const auto allowed = allowed_params(command, p.mode);
  for (const auto& [key, value] : params.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw SpecError(join(path, key), "unknown field");

  auto state = [](const Json& v, const std::string& at) {
    const std::uint64_t s = count(v, at);
    if (s > std::numeric_limits<State>::max()) throw SpecError(at, "state index too large");
    return static_cast<State>(s);
  };
  if (params.contains("x0")) p.x0 = state(params["x0"], "params.x0");
  if (params.contains("checkpoints")) p.checkpoints = time_grid(params["checkpoints"], "params.checkpoints", true);
  if (params.contains("iu_grid")) p.iu_grid = time_grid(params["iu_grid"], "params.iu_grid", false);
  if (params.contains("f")) p.f = numbers(params["f"], "params.f");
  if (params.contains("subset")) {
    const Json& s = params["subset"];
    if (!s.is_array() || s.empty()) throw SpecError("params.subset", "expected a nonempty array of states");
    p.subset.emplace();
    for (std::size_t i = 0; i < s.size(); ++i) p.subset->push_back(state(s[i], join("params.subset", i)));
  }
  if (params.contains("cap")) {
    p.cap = count(params["cap"], "params.cap");
    if (*p.cap == 0) throw SpecError("params.cap", "must be positive");
  }
  if (params.contains("kmax")) {
    p.kmax = count(params["kmax"], "params.kmax");
    if (*p.kmax < 2) throw SpecError("params.kmax", "must be at least 2");
  }
  if (params.contains("tolerance")) {
    p.tolerance = number(params["tolerance"], "params.tolerance");
    if (!(*p.tolerance > 0.0)) throw SpecError("params.tolerance", "must be positive");
  }
  if (params.contains("t")) {
    p.t = number(params["t"], "params.t");
    if (!(*p.t > 0.0)) throw SpecError("params.t", "must be positive");
  }
  if (params.contains("method")) {
    const Json& m = params["method"];
    if (m != "auto" && m != "dense" && m != "power") throw SpecError("params.method", "expected auto, dense or power");
    p.method = m.get<std::string>();
  }
  if (params.contains("record_events")) {
    if (!params["record_events"].is_boolean()) throw SpecError("params.record_events", "expected a boolean");
    p.record_events = params["record_events"].get<bool>();
  }
  if (params.contains("control")) p.control = params["control"];
  return p;
}

// ---- output helpers ----

class OutputSet {
 public:
  OutputSet(fs::path dir, std::string id) : dir_(std::move(dir)), id_(std::move(id)) {}

  void write_json(const std::string& name, Json body) {
    body["run_id"] = id_;
    write(name, body.dump(2) + "\n");
  }

  /// Rows are written after a "# run_id=..." line and the header.
  void write_csv(const std::string& name, const std::string& header, const std::vector<std::string>& rows) {
    std::string text = "# run_id=" + id_ + "\n" + header + "\n";
    for (const std::string& row : rows) text += row + "\n";
    write(name, text);
  }

  const std::vector<std::string>& files() const noexcept { return files_; }
  const fs::path& dir() const noexcept { return dir_; }

 private:
  void write(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << text;
    files_.push_back(name);
  }

  fs::path dir_;
  std::string id_;
  std::vector<std::string> files_;
};

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string row;
  for (const std::string& c : cells) {
    if (!row.empty()) row += ',';
    row += c;
  }
  return row;
}

const char* kSummaryHeader = "t,mean,median,se,q25,q75,n_accepted,n_overflow";

std::vector<std::string> summary_rows(const std::vector<CheckpointSummary>& summaries) {
  std::vector<std::string> rows;
  for (const CheckpointSummary& s : summaries)
    rows.push_back(csv_row({format_number(s.time), format_number(s.w.mean), format_number(s.w.median),
                            format_number(s.w.se), format_number(s.w.q25), format_number(s.w.q75),
                            std::to_string(s.n_accepted), std::to_string(s.n_overflow)}));
  return rows;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- command context ----

struct Context {
  const RunSpec& spec;
  const Params& params;
  const DispatchOptions& options;
  std::optional<Fixture> model;
  OutputSet& out;
  std::map<std::string, std::string> acceptance;

  std::uint64_t seed() const { return spec.seed.value_or(0); }
  std::uint64_t replicates(std::uint64_t fallback) const { return spec.replicates.value_or(fallback); }
  std::uint64_t cap() const { return params.cap.value_or(1'000'000); }
  State x0() const {
    const State x = params.x0.value_or(0);
    if (x >= model->motion.size()) throw SpecError("params.x0", "state out of range");
    return x;
  }
  std::vector<double> checkpoints(std::vector<double> fallback) const {
    return params.checkpoints.value_or(std::move(fallback));
  }
};

EigenOptions eigen_options(const Params& p) {
  EigenOptions o;
  if (p.method == "dense") o.method = EigenMethod::kDense;
  if (p.method == "power") o.method = EigenMethod::kPower;
  return o;
}

std::vector<double> default_iu_grid(const SpectralTriple& triple) {
  const double scale = std::isfinite(triple.gap) ? 1.0 / triple.gap : 1.0;
  std::vector<double> grid;
  for (int k = 0; k < 8; ++k) grid.push_back(scale * (1.0 + 5.0 * k / 7.0));
  return grid;
}

int run_spectrum(Context& ctx) {
  const FeynmanKacOperator op = build_operator(ctx.model->motion, ctx.model->law);
  const SpectralTriple triple = principal_triple(op, eigen_options(ctx.params));
  Json doc{{"fixture", ctx.model->id}, {"triple", to_json(triple)}};
  Json assumptions{{"irreducible", ctx.model->motion.irreducible()},
                   {"conservative", ctx.model->motion.conservative()},
                   {"supercritical", triple.supercritical}};
  if (ctx.model->motion.size() > 1) {
    const std::vector<double> grid = ctx.params.iu_grid.value_or(default_iu_grid(triple));
    try {
      const IUFit fit = iu_fit(op, triple, grid);
      doc["iu_fit"] = to_json(fit);
      assumptions["intrinsic_ultracontractivity"] = true;
    } catch (const SpectralError& e) {
      doc["iu_fit"] = nullptr;
      doc["iu_fit_error"] = e.what();
      assumptions["intrinsic_ultracontractivity"] = false;
    }
  }
  doc["assumptions"] = assumptions;
  ctx.out.write_json("spectrum.json", doc);
  if (!ctx.options.quiet) std::cout << "lambda1 = " << format_number(triple.lambda1) << "\n";
  return kExitOk;
}

int run_simulate(Context& ctx) {
  const MotionModel& motion = ctx.model->motion;
  const State x0 = ctx.x0();
  const std::size_t n = ctx.replicates(1);
  SimConfig base;
  base.checkpoints = ctx.checkpoints({0.0, 1.0, 2.0, 3.0});
  base.horizon = base.checkpoints.back();
  base.population_cap = ctx.cap();
  base.master_seed = ctx.seed();
  base.record_events = ctx.params.record_events;
  base.record_particles = false;

  std::vector<SimResult> results(n);
  parallel_for(n, ctx.options.threads, [&](std::size_t i) {
    SimConfig cfg = base;
    cfg.replicate = i;
    Rng rng = Rng::for_replicate(base.master_seed, i);
    const State start[] = {x0};
    results[i] = simulate(motion, ctx.model->law, start, cfg, rng);
  });

  std::vector<std::string> rows;
  Json statuses = Json::array();
  std::size_t overflow = 0;
  for (std::size_t i = 0; i < n; ++i) {
    statuses.push_back(to_string(results[i].status));
    if (results[i].status == SimStatus::kOverflow) ++overflow;
    for (const PointMeasure& snap : results[i].snapshots)
      for (State s = 0; s < snap.counts.size(); ++s)
        rows.push_back(csv_row({std::to_string(i), format_number(snap.time), std::to_string(s),
                                std::to_string(snap.counts[s])}));
  }
  ctx.out.write_csv("snapshots.csv", "replicate,t,state,count", rows);
  ctx.out.write_json("snapshots.meta.json", Json{{"fixture", ctx.model->id},
                                                 {"seed", ctx.seed()},
                                                 {"generator", Rng::kGeneratorName},
                                                 {"replicates", n},
                                                 {"x0", x0},
                                                 {"checkpoints", base.checkpoints},
                                                 {"population_cap", base.population_cap},
                                                 {"status", statuses},
                                                 {"n_overflow", overflow}});
  if (base.record_events) {
    std::vector<std::string> events;
    static const char* kinds[] = {"jump", "fission", "killing"};
    for (std::size_t i = 0; i < n; ++i)
      for (const Event& e : results[i].log.events)
        events.push_back(csv_row({std::to_string(i), format_number(e.time), kinds[static_cast<int>(e.kind)],
                                  std::to_string(e.particle.birth_order), std::to_string(e.from),
                                  std::to_string(e.to), std::to_string(e.offspring),
                                  std::to_string(e.first_child)}));
    ctx.out.write_csv("events.csv", "replicate,t,kind,particle,from,to,offspring,first_child", events);
  }
  if (static_cast<double>(overflow) > kMaxExcludedFraction * static_cast<double>(n)) return kExitRefused;
  return kExitOk;
}

struct SpineRun {
  SpectralTriple triple;
  std::vector<SpineRecord> records;
};

SpineRun run_spines(Context& ctx, std::vector<double> checkpoints, std::size_t replicates) {
  const FeynmanKacOperator op = build_operator(ctx.model->motion, ctx.model->law);
  SpineRun run{principal_triple(op), {}};
  const SpineSampler sampler(ctx.model->motion, ctx.model->law, run.triple);
  SpineConfig cfg;
  cfg.checkpoints = std::move(checkpoints);
  cfg.horizon = cfg.checkpoints.back();
  cfg.population_cap = ctx.cap();
  cfg.master_seed = ctx.seed();
  run.records = sample_spines(sampler, ctx.x0(), cfg, replicates, ctx.options.threads);
  return run;
}

// Per-checkpoint spine report: unit-mass identity and the decomposition.
struct SpineCheckpoint {
  Json json;
  std::string csv;
  bool identity_ok = true;
  bool decomposition_ok = true;
};

SpineCheckpoint spine_checkpoint(const SpineRun& run, double t) {
  std::vector<double> estimates;
  std::size_t failures = 0, overflow = 0;
  double worst = 0.0;
  for (const SpineRecord& r : run.records) {
    if (r.status == SimStatus::kOverflow) {
      ++overflow;
      continue;
    }
    const SpineObservables obs = spine_observables(r, run.triple, t);
    const double deviation = std::abs(obs.unit_mass - 1.0);
    worst = std::max(worst, deviation);
    if (!(deviation <= 1e-12)) ++failures;
    estimates.push_back(obs.martingale * run.triple.phi(r.x0));
  }
  SpineCheckpoint out;
  out.identity_ok = failures == 0;
  Json entry{{"t", t}, {"unit_mass_max_deviation", worst}, {"unit_mass_failures", failures}};
  if (estimates.size() >= 2) {
    const EstimateComparison cmp = spine_decomposition_check(run.records, run.triple, t);
    entry["decomposition"] = to_json(cmp);
    out.decomposition_ok = cmp.pass;
  }
  out.json = entry;
  const stats::Summary s = estimates.empty() ? stats::Summary{} : stats::summarize(estimates);
  out.csv = csv_row({format_number(t), format_number(s.mean), format_number(s.median), format_number(s.se),
                     format_number(s.q25), format_number(s.q75), std::to_string(estimates.size()),
                     std::to_string(overflow)});
  return out;
}

int run_spine(Context& ctx) {
  const SpineRun run = run_spines(ctx, ctx.checkpoints({1.0}), ctx.replicates(1));
  Json records = Json::array();
  for (const SpineRecord& r : run.records) records.push_back(to_json(r));
  ctx.out.write_json("spine_records.json", Json{{"fixture", ctx.model->id}, {"records", records}});
  Json checks = Json::array();
  std::vector<std::string> rows;
  bool ok = true;
  for (double t : run.records.front().checkpoints) {
    SpineCheckpoint c = spine_checkpoint(run, t);
    ok = ok && c.identity_ok;
    checks.push_back(c.json);
    rows.push_back(c.csv);
  }
  ctx.out.write_json("spine_report.json", Json{{"checks", checks}});
  ctx.out.write_csv("spine_summary.csv", kSummaryHeader, rows);
  ctx.acceptance["unit_mass_identity"] = ok ? "pass" : "fail";
  return ok ? kExitOk : kExitVerdictFailed;
}

EnsembleResult ensemble_for(Context& ctx, const SpectralTriple& triple, std::span<const double> f,
                            std::vector<double> checkpoints) {
  EnsembleConfig cfg;
  cfg.checkpoints = std::move(checkpoints);
  cfg.replicates = ctx.replicates(1000);
  cfg.master_seed = ctx.seed();
  cfg.population_cap = ctx.cap();
  cfg.threads = ctx.options.threads;
  return run_ensemble(ctx.model->motion, ctx.model->law, triple, ctx.x0(), f, cfg);
}

int verify_martingale_mode(Context& ctx) {
  const SpectralTriple triple = principal_triple(build_operator(ctx.model->motion, ctx.model->law));
  const std::vector<double> ones(ctx.model->motion.size(), 1.0);
  const EnsembleResult ensemble = ensemble_for(ctx, triple, ones, ctx.checkpoints({1.0, 2.0, 3.0}));
  const MartingaleReport report = verify_martingale(ensemble);
  ctx.out.write_csv("summary.csv", kSummaryHeader, summary_rows(ensemble.summaries));
  ctx.out.write_json("verdict.json", Json{{"mode", "martingale"}, {"report", to_json(report)},
                                          {"n_extinct", ensemble.n_extinct}});
  ctx.acceptance["martingale"] = report.refused ? "refused" : report.pass ? "pass" : "fail";
  return report.refused ? kExitRefused : report.pass ? kExitOk : kExitVerdictFailed;
}

int verify_slln_mode(Context& ctx) {
  const std::size_t n = ctx.model->motion.size();
  const FeynmanKacOperator op = build_operator(ctx.model->motion, ctx.model->law);
  const SpectralTriple triple = principal_triple(op);
  std::vector<double> f(n, 0.0);
  f[0] = 1.0;
  if (ctx.params.f) {
    if (ctx.params.f->size() != n) throw SpecError("params.f", "expected one value per state");
    f = *ctx.params.f;
  }
  std::optional<IUFit> fit;
  if (ctx.params.iu_grid) fit = iu_fit(op, triple, *ctx.params.iu_grid);
  const EnsembleResult ensemble = ensemble_for(ctx, triple, f, ctx.checkpoints({4.0, 6.0, 8.0}));
  ctx.out.write_csv("summary.csv", kSummaryHeader, summary_rows(ensemble.summaries));
  if (static_cast<double>(ensemble.n_overflow) > kMaxExcludedFraction * static_cast<double>(ensemble.replicates.size())) {
    ctx.out.write_json("verdict.json", Json{{"mode", "slln"}, {"verdict", "refused"},
                                            {"reason", "more than 20% of replicates overflowed"}});
    ctx.acceptance["slln"] = "refused";
    return kExitRefused;
  }
  const SllnVerdict verdict = verify_slln(ensemble, triple, f, ctx.params.tolerance.value_or(0.05), fit);
  Json doc{{"mode", "slln"}, {"verdict", verdict.pass ? "pass" : "fail"}, {"report", to_json(verdict)},
           {"n_extinct", ensemble.n_extinct}};
  if (fit) doc["iu_fit"] = to_json(*fit);
  if (ctx.params.subset) {
    for (State s : *ctx.params.subset)
      if (s >= n) throw SpecError("params.subset", "state out of range");
    doc["ratio_limit"] = to_json(verify_ratio_limit(ensemble, op, *ctx.params.subset));
  }
  ctx.out.write_json("verdict.json", doc);
  ctx.acceptance["slln"] = verdict.pass ? "pass" : "fail";
  return verdict.pass ? kExitOk : kExitVerdictFailed;
}

int verify_dichotomy_mode(Context& ctx) {
  const BranchingLaw& law = ctx.model->law;
  const std::size_t n = law.size();
  std::vector<std::shared_ptr<const OffspringLaw>> heavy;
  bool any_heavy = false;
  for (State x = 0; x < n; ++x) {
    auto d = law.offspring(x).heavy_descriptor();
    if (d && ctx.params.kmax) {
      d->kmax = *ctx.params.kmax;
      heavy.push_back(std::make_shared<const OffspringLaw>(OffspringLaw::heavy(*d)));
    } else {
      heavy.push_back(law.offspring_ptr(x));
    }
    any_heavy = any_heavy || d.has_value();
  }
  if (!any_heavy) throw SpecError("params.mode", "dichotomy needs a model with a heavy offspring law");
  const BranchingLaw heavy_law = BranchingLaw::build({law.betas().begin(), law.betas().end()}, heavy);
  const Json control_doc = ctx.params.control.value_or(Json{{"type", "finite"}, {"p", {{"2", 1.0}}}});
  const BranchingLaw control_law = BranchingLaw::uniform(
      {law.betas().begin(), law.betas().end()},
      std::make_shared<const OffspringLaw>(offspring_from_json(control_doc, "params.control")));

  DichotomyConfig cfg;
  cfg.checkpoints = ctx.checkpoints(cfg.checkpoints);
  cfg.replicates = ctx.replicates(1000);
  cfg.master_seed = ctx.seed();
  cfg.population_cap = ctx.cap();
  cfg.threads = ctx.options.threads;
  cfg.x0 = ctx.x0();
  const DichotomyReport report = dichotomy_experiment(ctx.model->motion, heavy_law, control_law, cfg);
  if (!report.heavy.summaries.empty()) {
    ctx.out.write_csv("summary_heavy.csv", kSummaryHeader, summary_rows(report.heavy.summaries));
    ctx.out.write_csv("summary_control.csv", kSummaryHeader, summary_rows(report.control.summaries));
  }
  ctx.out.write_json("verdict.json", Json{{"mode", "dichotomy"}, {"report", to_json(report)}});
  ctx.acceptance["dichotomy"] = to_string(report.verdict);
  switch (report.verdict) {
    case Verdict::kPass: return kExitOk;
    case Verdict::kFail: return kExitVerdictFailed;
    case Verdict::kRefused: return kExitRefused;
  }
  return kExitRefused;
}

int verify_spine_mode(Context& ctx) {
  const double t = ctx.params.t.value_or(1.0);
  const SpineRun run = run_spines(ctx, {t}, ctx.replicates(1000));
  const SpineCheckpoint c = spine_checkpoint(run, t);
  std::size_t overflow = 0;
  for (const SpineRecord& r : run.records) overflow += r.status == SimStatus::kOverflow;
  const bool refused = static_cast<double>(overflow) > kMaxExcludedFraction * static_cast<double>(run.records.size());
  const bool pass = !refused && c.identity_ok && c.decomposition_ok;
  ctx.out.write_csv("summary.csv", kSummaryHeader, {c.csv});
  ctx.out.write_json("verdict.json", Json{{"mode", "spine"},
                                          {"verdict", refused ? "refused" : pass ? "pass" : "fail"},
                                          {"report", c.json}});
  ctx.acceptance["spine"] = refused ? "refused" : pass ? "pass" : "fail";
  return refused ? kExitRefused : pass ? kExitOk : kExitVerdictFailed;
}

int run_verify(Context& ctx) {
  const std::string& mode = ctx.params.mode;
  if (mode == "martingale") return verify_martingale_mode(ctx);
  if (mode == "slln") return verify_slln_mode(ctx);
  if (mode == "dichotomy") return verify_dichotomy_mode(ctx);
  return verify_spine_mode(ctx);
}

int run_fixtures(Context& ctx) {
  Json list = Json::array();
  for (const std::string& id : fixture_ids()) {
    const Fixture f = load_fixture(id);
    list.push_back(Json{{"id", id}, {"description", f.description}, {"hash", f.hash}, {"document", f.document}});
    if (!ctx.options.quiet) std::cout << id << "  " << f.hash << "  " << f.description << "\n";
  }
  ctx.out.write_json("fixtures.json", Json{{"fixtures", list}});
  return kExitOk;
}

}  // namespace

RunSpec load_spec(const Json& document) {
  using namespace schema;
  reject_unknown(document, "", {"fixture", "model", "command", "params", "seed", "replicates", "out"});
  RunSpec spec;
  const Json& command = require(document, "", "command");
  if (!command.is_string() ||
      std::find(kCommands.begin(), kCommands.end(), command.get<std::string>()) == kCommands.end())
    throw SpecError("command", "expected one of spectrum, simulate, spine, verify, fixtures");
  spec.command = command.get<std::string>();

  if (document.contains("fixture") && document.contains("model"))
    throw SpecError("model", "give either a fixture id or an inline model, not both");
  if (document.contains("fixture")) {
    const Json& id = document["fixture"];
    if (!id.is_string()) throw SpecError("fixture", "expected a string");
    const auto ids = fixture_ids();
    if (std::find(ids.begin(), ids.end(), id.get<std::string>()) == ids.end())
      throw SpecError("fixture", "unknown fixture id \"" + id.get<std::string>() + "\"");
    spec.fixture = id.get<std::string>();
  }
  if (document.contains("model")) {
    inline_model(document["model"]);
    spec.model = document["model"];
  }
  if (spec.command != "fixtures" && !spec.fixture && !spec.model)
    throw SpecError("fixture", "missing required field (or give \"model\")");

  if (document.contains("params")) spec.params = document["params"];
  parse_params(spec.command, spec.params);

  if (document.contains("seed")) spec.seed = count(document["seed"], "seed");
  if (is_stochastic(spec.command) && !spec.seed) throw SpecError("seed", "missing required field for " + spec.command);
  if (document.contains("replicates")) {
    spec.replicates = count(document["replicates"], "replicates");
    if (*spec.replicates == 0) throw SpecError("replicates", "must be positive");
  }
  if (document.contains("out")) {
    if (!document["out"].is_string()) throw SpecError("out", "expected a string");
    spec.out = document["out"].get<std::string>();
  }
  return spec;
}

RunSpec load_spec_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw SpecError("", "cannot open spec file " + file.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SpecError("", std::string("malformed JSON: ") + e.what());
  }
  return load_spec(doc);
}

Json to_json(const RunSpec& spec) {
  Json doc{{"command", spec.command}};
  if (spec.fixture) doc["fixture"] = *spec.fixture;
  if (spec.model) doc["model"] = *spec.model;
  if (!spec.params.empty()) doc["params"] = spec.params;
  if (spec.seed) doc["seed"] = *spec.seed;
  if (spec.replicates) doc["replicates"] = *spec.replicates;
  if (spec.out) doc["out"] = *spec.out;
  return doc;
}

std::string run_id(const RunSpec& spec) {
  Json canonical = to_json(spec);
  canonical.erase("out");
  return fnv1a_hex(canonical.dump());
}

int dispatch(const RunSpec& spec, const DispatchOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_utc = utc_now();
  const std::string id = run_id(spec);
  const fs::path dir = spec.out ? fs::path(*spec.out) : options.default_out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "hunt-branch: cannot create output directory " << dir << ": " << ec.message() << "\n";
    return kExitConfigError;
  }
  OutputSet out(dir, id);
  Json manifest{{"run_id", id},
                {"version", kVersion},
                {"generator", Rng::kGeneratorName},
                {"command", spec.command},
                {"spec", to_json(spec)}};
  int status = kExitOk;
  std::map<std::string, std::string> acceptance;
  try {
    const Params params = parse_params(spec.command, spec.params);
    Context ctx{spec, params, options, std::nullopt, out, {}};
    if (spec.fixture)
      ctx.model = load_fixture(*spec.fixture);
    else if (spec.model)
      ctx.model = inline_model(*spec.model);
    if (ctx.model) {
      manifest["fixture"] = ctx.model->id;
      manifest["fixture_hash"] = ctx.model->hash;
    }
    if (spec.command == "spectrum") status = run_spectrum(ctx);
    else if (spec.command == "simulate") status = run_simulate(ctx);
    else if (spec.command == "spine") status = run_spine(ctx);
    else if (spec.command == "verify") status = run_verify(ctx);
    else status = run_fixtures(ctx);
    acceptance = std::move(ctx.acceptance);
  } catch (const ExperimentError& e) {
    manifest["error"] = e.what();
    status = kExitRefused;
  } catch (const SpecError& e) {
    manifest["error"] = e.what();
    status = kExitConfigError;
  } catch (const ModelError& e) {
    manifest["error"] = e.what();
    status = kExitConfigError;
  } catch (const SpectralError& e) {
    manifest["error"] = e.what();
    status = kExitConfigError;
  } catch (const std::invalid_argument& e) {
    manifest["error"] = e.what();
    status = kExitConfigError;
  } catch (const std::out_of_range& e) {
    manifest["error"] = e.what();
    status = kExitConfigError;
  }
  if (manifest.contains("error") && !options.quiet)
    std::cerr << "hunt-branch: " << manifest["error"].get<std::string>() << "\n";

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  manifest["timing"] = Json{{"started_utc", started_utc}, {"wall_seconds", seconds}};
  manifest["acceptance"] = acceptance;
  manifest["exit_status"] = status;
  Json files = Json::array();
  for (const std::string& f : out.files()) files.push_back(Json{{"file", f}, {"run_id", id}});
  manifest["outputs"] = files;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  return status;
}

}  // namespace huntbranch
