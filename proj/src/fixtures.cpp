#include "huntbranch/fixtures.hpp"

#include <cstdio>

#include "huntbranch/errors.hpp"

namespace huntbranch {

namespace {

Json binary_split() { return Json{{"type", "finite"}, {"p", {{"2", 1.0}}}}; }

Json yule2_motion() {
  return Json{{"states", 2}, {"m", {1.0, 1.0}}, {"rates", {{0.0, 1.0}, {1.0, 0.0}}}, {"kill", {0.0, 0.0}}};
}

Json document_for(const std::string& id) {
  if (id == "yule2")
    return Json{{"motion", yule2_motion()}, {"law", {{"beta", {1.0, 1.0}}, {"offspring", binary_split()}}}};
  if (id == "asym3") {
    Json motion{{"states", 3},
                {"m", {1.0, 1.0, 1.0}},
                {"rates", {{0.0, 1.0, 0.0}, {2.0, 0.0, 1.0}, {0.0, 1.0, 0.0}}},
                {"kill", {0.0, 0.0, 0.0}}};
    return Json{{"motion", motion}, {"law", {{"beta", {1.0, 0.5, 0.25}}, {"offspring", binary_split()}}}};
  }
  if (id == "heavy") {
    Json heavy{{"type", "heavy"}, {"exponent_family", "k2log2"}, {"kmax", 1'000'000}};
    return Json{{"motion", yule2_motion()}, {"law", {{"beta", {1.0, 1.0}}, {"offspring", heavy}}}};
  }
  if (id == "griddiff") {
    const MotionModel grid = grid_diffusion(20, 0.05);
    std::vector<double> beta;
    for (int i = 0; i < 20; ++i) beta.push_back(0.5 + static_cast<double>(i) / 19.0);
    return Json{{"motion", motion_to_json(grid)}, {"law", {{"beta", beta}, {"offspring", binary_split()}}}};
  }
  throw SpecError("fixture", "unknown fixture id \"" + id + "\"");
}

const char* description_for(const std::string& id) {
  if (id == "yule2") return "symmetric two-state chain, binary splitting at rate 1";
  if (id == "asym3") return "asymmetric three-state chain with state-dependent branching";
  if (id == "heavy") return "two-state chain with k^-2 log^-2 k offspring truncated at 10^6";
  return "20-point grid chain with linearly increasing branching rate";
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> fixture_ids() { return {"yule2", "asym3", "heavy", "griddiff"}; }

Fixture inline_model(const Json& document, const std::string& path) {
  schema::reject_unknown(document, path, {"motion", "law"});
  MotionModel motion = motion_from_json(schema::require(document, path, "motion"), schema::join(path, "motion"));
  BranchingLaw law = law_from_json(schema::require(document, path, "law"), motion.size(), schema::join(path, "law"));
  const std::string hash = fnv1a_hex(document.dump());
  return Fixture{"inline", "inline model", document, std::move(motion), std::move(law), hash};
}

Fixture load_fixture(const std::string& id) {
  Fixture f = inline_model(document_for(id));
  f.id = id;
  f.description = description_for(id);
  return f;
}

}  // namespace huntbranch
