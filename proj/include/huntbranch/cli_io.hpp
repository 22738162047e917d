#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "huntbranch/fixtures.hpp"
#include "huntbranch/model_io.hpp"

namespace huntbranch {

inline constexpr const char* kVersion = "0.1.0";

/// Exit statuses of dispatch.
enum ExitStatus : int {
  kExitOk = 0,
  kExitVerdictFailed = 1,
  kExitConfigError = 2,
  kExitRefused = 3,  ///< overflow-dominated or truncation-refused experiment
};

/// One run request.
///
///   {"fixture": "yule2" | "model": {"motion": ..., "law": ...},
///    "command": "spectrum" | "simulate" | "spine" | "verify" | "fixtures",
///    "params": {...}, "seed": N, "replicates": N, "out": "dir"}
///
/// Unknown fields are rejected at every level, including inside "params".
struct RunSpec {
  std::optional<std::string> fixture;
  std::optional<Json> model;
  std::string command;
  Json params = Json::object();
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicates;
  std::optional<std::string> out;

  bool operator==(const RunSpec&) const = default;
};

/// Throws SpecError naming the offending field.
RunSpec load_spec(const Json& document);
RunSpec load_spec_file(const std::filesystem::path& file);
Json to_json(const RunSpec& spec);

bool is_stochastic(const std::string& command);

/// Deterministic id of a spec: FNV-1a of its canonical JSON.
std::string run_id(const RunSpec& spec);

struct DispatchOptions {
  /// Output directory used when the spec has none.
  std::filesystem::path default_out = "hunt-branch-out";
  unsigned threads = 0;  ///< 0 = hardware concurrency; never changes results
  bool quiet = false;
};

/// Runs the command, writing manifest.json and the command's outputs into
/// the output directory. Returns an ExitStatus.
int dispatch(const RunSpec& spec, const DispatchOptions& options = {});

/// Shortest round-trip decimal form of x.
std::string format_number(double x);

}  // namespace huntbranch
