#include "huntbranch/model_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "huntbranch/errors.hpp"

namespace huntbranch {

namespace schema {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string join(const std::string& path, std::size_t index) { return path + "[" + std::to_string(index) + "]"; }

void expect_object(const Json& doc, const std::string& path) {
  if (!doc.is_object()) throw SpecError(path, "expected an object");
}

void reject_unknown(const Json& doc, const std::string& path, std::initializer_list<const char*> allowed) {
  expect_object(doc, path);
  for (const auto& [key, value] : doc.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw SpecError(join(path, key), "unknown field");
  }
}

const Json& require(const Json& doc, const std::string& path, const char* key) {
  expect_object(doc, path);
  const auto it = doc.find(key);
  if (it == doc.end()) throw SpecError(join(path, key), "missing required field");
  return *it;
}

double number(const Json& value, const std::string& path) {
  if (!value.is_number()) throw SpecError(path, "expected a number");
  const double x = value.get<double>();
  if (!std::isfinite(x)) throw SpecError(path, "expected a finite number");
  return x;
}

std::uint64_t count(const Json& value, const std::string& path) {
  if (value.is_number_unsigned()) return value.get<std::uint64_t>();
  if (value.is_number_integer() && value.get<std::int64_t>() >= 0) return value.get<std::uint64_t>();
  throw SpecError(path, "expected a nonnegative integer");
}

std::vector<double> numbers(const Json& value, const std::string& path) {
  if (!value.is_array()) throw SpecError(path, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) out.push_back(number(value[i], join(path, i)));
  return out;
}

}  // namespace schema

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

template <class F>
auto rethrow_as_spec(const std::string& path, F&& build) {
  try {
    return build();
  } catch (const ModelError& e) {
    throw SpecError(path, e.what());
  }
}

}  // namespace

MotionModel motion_from_json(const Json& doc, const std::string& path) {
  using namespace schema;
  reject_unknown(doc, path, {"states", "m", "rates", "kill"});
  const std::uint64_t n = count(require(doc, path, "states"), join(path, "states"));
  if (n == 0) throw SpecError(join(path, "states"), "state space is empty");
  const std::vector<double> m = numbers(require(doc, path, "m"), join(path, "m"));
  if (m.size() != n) throw SpecError(join(path, "m"), "expected " + std::to_string(n) + " weights");

  const Json& rates = require(doc, path, "rates");
  const std::string rates_path = join(path, "rates");
  if (!rates.is_array() || rates.size() != n) throw SpecError(rates_path, "expected an N x N array");
  const auto size = static_cast<Eigen::Index>(n);
  Matrix q = Matrix::Zero(size, size);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> row = numbers(rates[i], join(rates_path, i));
    if (row.size() != n) throw SpecError(join(rates_path, i), "expected " + std::to_string(n) + " entries");
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  std::vector<double> kill(n, 0.0);
  if (doc.contains("kill")) {
    kill = numbers(doc["kill"], join(path, "kill"));
    if (kill.size() != n) throw SpecError(join(path, "kill"), "expected " + std::to_string(n) + " rates");
  }
  return rethrow_as_spec(path, [&] { return build_motion(m, q, kill); });
}

Json motion_to_json(const MotionModel& motion) {
  const std::size_t n = motion.size();
  Json rates = Json::array();
  std::vector<double> kill;
  for (State x = 0; x < n; ++x) {
    Json row = Json::array();
    for (State y = 0; y < n; ++y) row.push_back(x == y ? 0.0 : motion.rate(x, y));
    rates.push_back(row);
    kill.push_back(motion.kill_rate(x));
  }
  return Json{{"states", n},
              {"m", std::vector<double>(motion.weights().begin(), motion.weights().end())},
              {"rates", rates},
              {"kill", kill}};
}

OffspringLaw offspring_from_json(const Json& doc, const std::string& path) {
  using namespace schema;
  expect_object(doc, path);
  const Json& type = require(doc, path, "type");
  if (type == "finite") {
    reject_unknown(doc, path, {"type", "p"});
    const Json& p = require(doc, path, "p");
    const std::string p_path = join(path, "p");
    expect_object(p, p_path);
    std::vector<double> pmf;
    for (const auto& [key, value] : p.items()) {
      std::uint64_t k = 0;
      const auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), k);
      if (ec != std::errc() || end != key.data() + key.size() || k > 100'000'000)
        throw SpecError(join(p_path, key), "offspring count must be an integer key");
      if (pmf.size() <= k) pmf.resize(k + 1, 0.0);
      pmf[k] = number(value, join(p_path, key));
    }
    return rethrow_as_spec(p_path, [&] { return OffspringLaw::finite(std::move(pmf)); });
  }
  if (type == "heavy") {
    reject_unknown(doc, path, {"type", "exponent_family", "kmax", "alpha"});
    HeavyTailDescriptor d;
    const Json& family = require(doc, path, "exponent_family");
    if (family == "k2log2") {
      d.family = HeavyFamily::kK2Log2;
      if (doc.contains("alpha")) throw SpecError(join(path, "alpha"), "only valid for the power family");
    } else if (family == "power") {
      d.family = HeavyFamily::kPower;
      d.alpha = number(require(doc, path, "alpha"), join(path, "alpha"));
    } else {
      throw SpecError(join(path, "exponent_family"), "expected \"k2log2\" or \"power\"");
    }
    if (doc.contains("kmax")) d.kmax = count(doc["kmax"], join(path, "kmax"));
    return rethrow_as_spec(path, [&] { return OffspringLaw::heavy(d); });
  }
  throw SpecError(join(path, "type"), "expected \"finite\" or \"heavy\"");
}

BranchingLaw law_from_json(const Json& doc, std::size_t states, const std::string& path) {
  using namespace schema;
  reject_unknown(doc, path, {"beta", "offspring"});
  const std::vector<double> beta = numbers(require(doc, path, "beta"), join(path, "beta"));
  if (beta.size() != states) throw SpecError(join(path, "beta"), "expected " + std::to_string(states) + " rates");
  const Json& offspring = require(doc, path, "offspring");
  const std::string off_path = join(path, "offspring");
  std::vector<std::shared_ptr<const OffspringLaw>> laws;
  if (offspring.is_object()) {
    laws.assign(states, std::make_shared<const OffspringLaw>(offspring_from_json(offspring, off_path)));
  } else if (offspring.is_array()) {
    if (offspring.size() != states) throw SpecError(off_path, "expected one law per state");
    for (std::size_t x = 0; x < states; ++x)
      laws.push_back(std::make_shared<const OffspringLaw>(offspring_from_json(offspring[x], join(off_path, x))));
  } else {
    throw SpecError(off_path, "expected an object or an array");
  }
  return rethrow_as_spec(path, [&] { return BranchingLaw::build(beta, std::move(laws)); });
}

Json offspring_from_law(const OffspringLaw& law) {
  if (const auto& d = law.heavy_descriptor()) {
    Json out{{"type", "heavy"}, {"exponent_family", d->family == HeavyFamily::kK2Log2 ? "k2log2" : "power"}};
    if (d->family == HeavyFamily::kPower) out["alpha"] = d->alpha;
    if (d->kmax != 0) out["kmax"] = d->kmax;
    return out;
  }
  Json p = Json::object();
  const auto pmf = law.pmf();
  for (std::size_t k = 0; k < pmf.size(); ++k)
    if (pmf[k] > 0.0) p[std::to_string(k)] = pmf[k];
  return Json{{"type", "finite"}, {"p", p}};
}

Json law_to_json(const BranchingLaw& law) {
  Json offspring = Json::array();
  for (State x = 0; x < law.size(); ++x) offspring.push_back(offspring_from_law(law.offspring(x)));
  return Json{{"beta", std::vector<double>(law.betas().begin(), law.betas().end())}, {"offspring", offspring}};
}

Json to_json(const SpectralTriple& t) {
  return Json{{"lambda1", t.lambda1},
              {"phi", to_std(t.phi)},
              {"phi_tilde", to_std(t.phi_tilde)},
              {"gap", std::isinf(t.gap) ? Json("inf") : Json(t.gap)},
              {"supercritical", t.supercritical},
              {"phi2_phi_tilde_integral", t.phi2_phi_tilde_integral},
              {"right_residual", t.right_residual},
              {"left_residual", t.left_residual}};
}

Json to_json(const IUFit& fit) {
  return Json{{"c", fit.c},
              {"nu", fit.nu},
              {"gap", std::isinf(fit.gap) ? Json("inf") : Json(fit.gap)},
              {"times", fit.times},
              {"deviations", fit.deviations}};
}

Json to_json(const stats::Summary& s) {
  return Json{{"n", s.n}, {"mean", s.mean}, {"se", s.se}, {"median", s.median}, {"q25", s.q25}, {"q75", s.q75}};
}

Json to_json(const EstimateComparison& c) {
  Json out{{"n", c.n},           {"excluded", c.excluded}, {"mean_a", c.mean_a},
           {"se_a", c.se_a},     {"mean_b", c.mean_b},     {"se_b", c.se_b},
           {"z_difference", c.z_difference}, {"pass", c.pass}};
  if (c.oracle) {
    out["oracle"] = *c.oracle;
    out["z_a_oracle"] = c.z_a_oracle;
    out["z_b_oracle"] = c.z_b_oracle;
  }
  return out;
}

Json to_json(const stats::ChiSquaredResult& r) {
  return Json{{"statistic", r.statistic}, {"degrees_of_freedom", r.degrees_of_freedom}, {"p_value", r.p_value},
              {"bins", r.bins}};
}

Json to_json(const OccupancyCheck& c) {
  return Json{{"observed", c.observed}, {"se", c.se}, {"expected", c.expected}, {"z", c.z}, {"pass", c.pass}};
}

Json to_json(const MartingaleReport& r) {
  return Json{{"target", r.target}, {"times", r.times}, {"means", r.means}, {"se", r.ses},
              {"z", r.z},           {"pass", r.pass},   {"refused", r.refused}};
}

Json to_json(const SllnVerdict& v) {
  Json out{{"target", v.target},   {"tolerance", v.tolerance},
           {"times", v.times},     {"medians", v.medians},
           {"q25", v.q25},         {"q75", v.q75},
           {"n_used", v.n_used},   {"median_within_tolerance", v.median_within_tolerance},
           {"iqr_shrinking", v.iqr_shrinking}, {"pass", v.pass}};
  if (v.horizon_adequate) out["horizon_adequate"] = *v.horizon_adequate;
  return out;
}

Json to_json(const RatioLimitReport& r) {
  return Json{{"subset", r.subset},
              {"times", r.times},
              {"expected_counts", r.expected_counts},
              {"mean_abs_deviation", r.mean_abs_deviation},
              {"max_abs_deviation", r.max_abs_deviation},
              {"decreasing_tail", r.decreasing_tail}};
}

namespace {

Json track_json(const LawTrack& t) {
  Json summaries = Json::array();
  for (const CheckpointSummary& s : t.summaries) {
    Json entry = to_json(s.w);
    entry["t"] = s.time;
    summaries.push_back(entry);
  }
  return Json{{"lambda1", t.lambda1}, {"phi_x0", t.phi_x0}, {"summaries", summaries}, {"z_mean", t.z_mean},
              {"n_overflow", t.n_overflow}};
}

}  // namespace

Json to_json(const DichotomyReport& r) {
  Json out{{"verdict", to_string(r.verdict)},
           {"reason", r.reason},
           {"heavy_block_ratio", r.heavy_block_ratio},
           {"expected_truncated_fissions", r.expected_truncated_fissions}};
  if (r.verdict != Verdict::kRefused || !r.heavy.summaries.empty()) {
    out["heavy"] = track_json(r.heavy);
    out["control"] = track_json(r.control);
    out["control_stable"] = r.control_stable;
    out["control_in_range"] = r.control_in_range;
    out["heavy_decreasing"] = r.heavy_decreasing;
    out["means_consistent"] = r.means_consistent;
  }
  return out;
}

Json to_json(const SpineRecord& record) {
  Json jumps = Json::array();
  for (const auto& [time, state] : record.spine_path.jumps) jumps.push_back(Json{{"t", time}, {"state", state}});
  Json fissions = Json::array();
  for (const SpineFission& f : record.fissions) {
    Json subtrees = Json::array();
    for (const Subtree& s : f.subtrees) {
      Json totals = Json::array();
      for (const PointMeasure& snap : s.snapshots) totals.push_back(Json{{"t", snap.time}, {"count", snap.total()}});
      subtrees.push_back(Json{{"child", s.child_index},
                              {"founder_mass", s.founder_mass},
                              {"status", to_string(s.status)},
                              {"totals", totals}});
    }
    fissions.push_back(Json{{"t", f.time},
                            {"state", f.state},
                            {"offspring", f.offspring},
                            {"spine_child", f.spine_child},
                            {"subtrees", subtrees}});
  }
  return Json{{"replicate", record.replicate},
              {"x0", record.x0},
              {"horizon", record.horizon},
              {"checkpoints", record.checkpoints},
              {"status", to_string(record.status)},
              {"spine", Json{{"initial_state", record.spine_path.initial_state}, {"jumps", jumps}}},
              {"fissions", fissions}};
}

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kRefused: return "refused";
  }
  return "unknown";
}

std::string to_string(SimStatus status) { return status == SimStatus::kOverflow ? "overflow" : "completed"; }

}  // namespace huntbranch
