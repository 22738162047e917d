#pragma once

#include <string>

#include <json.hpp>

#include "huntbranch/branching_law.hpp"
#include "huntbranch/harness.hpp"
#include "huntbranch/motion.hpp"
#include "huntbranch/spectral.hpp"
#include "huntbranch/spine_sim.hpp"

namespace huntbranch {

using Json = nlohmann::json;

/// Strict-schema helpers. Every failure throws SpecError carrying the
/// JSON path of the offending field.
namespace schema {
void expect_object(const Json& doc, const std::string& path);
void reject_unknown(const Json& doc, const std::string& path, std::initializer_list<const char*> allowed);
const Json& require(const Json& doc, const std::string& path, const char* key);
double number(const Json& value, const std::string& path);
std::uint64_t count(const Json& value, const std::string& path);
std::vector<double> numbers(const Json& value, const std::string& path);
std::string join(const std::string& path, const std::string& key);
std::string join(const std::string& path, std::size_t index);
}  // namespace schema

/// {"states": N, "m": [...], "rates": [[...]], "kill": [...]}; rate matrix
/// dense and row-major with its diagonal ignored. "kill" is optional.
MotionModel motion_from_json(const Json& doc, const std::string& path = "motion");
Json motion_to_json(const MotionModel& motion);

/// {"beta": [...], "offspring": [...]} with one entry per state, each either
/// {"type":"finite","p":{"2":0.5,...}} or
/// {"type":"heavy","exponent_family":"k2log2"|"power","kmax":K,"alpha":a}.
/// A single offspring object (not a list) applies to every state.
BranchingLaw law_from_json(const Json& doc, std::size_t states, const std::string& path = "law");
Json offspring_from_law(const OffspringLaw& law);
OffspringLaw offspring_from_json(const Json& doc, const std::string& path);
Json law_to_json(const BranchingLaw& law);

Json to_json(const SpectralTriple& triple);
Json to_json(const IUFit& fit);
Json to_json(const stats::Summary& summary);
Json to_json(const EstimateComparison& comparison);
Json to_json(const stats::ChiSquaredResult& result);
Json to_json(const OccupancyCheck& check);
Json to_json(const MartingaleReport& report);
Json to_json(const SllnVerdict& verdict);
Json to_json(const RatioLimitReport& report);
Json to_json(const DichotomyReport& report);
/// Spine path, fissions and per-subtree totals at each checkpoint.
Json to_json(const SpineRecord& record);

std::string to_string(Verdict verdict);
std::string to_string(SimStatus status);

}  // namespace huntbranch
