#pragma once

#include <optional>
#include <string>
#include <vector>

#include "huntbranch/branching_law.hpp"
#include "huntbranch/model_io.hpp"
#include "huntbranch/motion.hpp"

namespace huntbranch {

/// Built-in model with its canonical JSON document and a content hash.
struct Fixture {
  std::string id;
  std::string description;
  Json document;  ///< {"motion": ..., "law": ...}
  MotionModel motion;
  BranchingLaw law;
  std::string hash;  ///< FNV-1a of document.dump(), 16 hex digits
};

/// yule2: two states, q = 1 both ways, beta = 1, binary splitting.
/// asym3: three-state chain 0 <-> 1 <-> 2 with q01 = 1, q10 = 2, q12 = q21 = 1,
///        beta = (1, 0.5, 0.25), binary splitting.
/// heavy: yule2 motion with p_k ∝ 1/(k^2 log^2 k) truncated at 10^6.
/// griddiff: 20-point grid chain, diffusivity 0.05, beta rising linearly
///           from 0.5 to 1.5, binary splitting.
std::vector<std::string> fixture_ids();
/// Throws SpecError for an unknown id.
Fixture load_fixture(const std::string& id);
/// Fixture from an inline {"motion", "law"} document.
Fixture inline_model(const Json& document, const std::string& path = "model");

std::string fnv1a_hex(std::string_view bytes);

}  // namespace huntbranch
