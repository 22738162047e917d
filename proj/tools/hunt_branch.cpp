// hunt-branch: command-line front end.
//
//   hunt-branch <command> --spec <file> [--seed N] [--out DIR] [--threads N]
//
// HUNT_BRANCH_OUT sets the output directory when neither --out nor the spec
// names one.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "huntbranch/cli_io.hpp"
#include "huntbranch/errors.hpp"

int main(int argc, char** argv) {
  using namespace huntbranch;
  CLI::App app{"Branching Markov process simulation and verification lab"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string spec_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  unsigned threads = 0;
  for (const char* name : {"spectrum", "simulate", "spine", "verify", "fixtures"}) {
    CLI::App* sub = app.add_subcommand(name);
    auto* spec_opt = sub->add_option("--spec", spec_file, "Run spec (JSON)")->check(CLI::ExistingFile);
    if (std::string(name) != "fixtures") spec_opt->required();
    sub->add_option("--seed", seed, "Master seed (overrides the spec)");
    sub->add_option("--out", out, "Output directory (overrides the spec)");
    sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunSpec spec;
  try {
    Json doc = Json{{"command", command}};
    if (!spec_file.empty()) {
      std::ifstream in(spec_file);
      doc = Json::parse(in);
      if (!doc.is_object()) throw SpecError("", "spec must be a JSON object");
      if (doc.contains("command") && doc["command"] != command)
        throw SpecError("command", "spec says " + doc["command"].dump() + " but \"" + command + "\" was requested");
      doc["command"] = command;
    }
    if (seed) doc["seed"] = *seed;
    if (out) doc["out"] = *out;
    spec = load_spec(doc);
  } catch (const SpecError& e) {
    std::cerr << "hunt-branch: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const Json::exception& e) {
    std::cerr << "hunt-branch: malformed spec: " << e.what() << "\n";
    return kExitConfigError;
  }

  DispatchOptions options;
  options.threads = threads;
  if (const char* env = std::getenv("HUNT_BRANCH_OUT"); env && *env) options.default_out = env;
  return dispatch(spec, options);
}
