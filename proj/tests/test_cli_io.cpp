#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "huntbranch/cli_io.hpp"
#include "huntbranch/errors.hpp"

using namespace huntbranch;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("huntbranch-cli-" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Json read_json(const fs::path& file) { return Json::parse(slurp(file)); }

std::string spec_error_path(const Json& doc) {
  try {
    load_spec(doc);
  } catch (const SpecError& e) {
    return e.path();
  }
  return "<accepted>";
}

int run(const Json& doc, const fs::path& out, unsigned threads = 1) {
  DispatchOptions opt;
  opt.default_out = out;
  opt.threads = threads;
  opt.quiet = true;
  return dispatch(load_spec(doc), opt);
}

}  // namespace

TEST(LoadSpec, MinimalSpectrum) {
  const RunSpec s = load_spec(Json{{"fixture", "yule2"}, {"command", "spectrum"}});
  EXPECT_EQ(s.fixture, "yule2");
  EXPECT_EQ(s.command, "spectrum");
  EXPECT_FALSE(s.seed.has_value());
}

TEST(LoadSpec, StochasticCommandNeedsSeed) {
  EXPECT_EQ(spec_error_path(Json{{"fixture", "yule2"}, {"command", "simulate"}}), "seed");
  EXPECT_EQ(spec_error_path(Json{{"fixture", "yule2"}, {"command", "simulate"}, {"seed", 1}}), "<accepted>");
}

TEST(LoadSpec, UnknownFieldsRejected) {
  EXPECT_EQ(spec_error_path(Json{{"fixture", "yule2"}, {"command", "spectrum"}, {"colour", 1}}), "colour");
  EXPECT_EQ(spec_error_path(Json{{"fixture", "yule2"}, {"command", "spectrum"}, {"params", {{"x0", 0}}}}),
            "params.x0");
  EXPECT_EQ(spec_error_path(Json{{"fixture", "yule2"},
                                 {"command", "verify"},
                                 {"seed", 1},
                                 {"params", {{"mode", "martingale"}, {"tolerance", 0.1}}}}),
            "params.tolerance");
  Json model{{"motion", {{"states", 2}, {"m", {1, 1}}, {"rates", {{0, 1}, {1, 0}}}, {"extra", 0}}},
             {"law", {{"beta", {1, 1}}, {"offspring", {{"type", "finite"}, {"p", {{"2", 1}}}}}}}};
  EXPECT_EQ(spec_error_path(Json{{"model", model}, {"command", "spectrum"}}), "model.motion.extra");
}

TEST(LoadSpec, ExactlyOneModelSource) {
  EXPECT_NE(spec_error_path(Json{{"command", "spectrum"}}), "<accepted>");
  Json both{{"fixture", "yule2"}, {"model", Json::object()}, {"command", "spectrum"}};
  EXPECT_NE(spec_error_path(both), "<accepted>");
  EXPECT_EQ(spec_error_path(Json{{"command", "fixtures"}}), "<accepted>");
}

TEST(LoadSpec, UnknownFixture) {
  EXPECT_EQ(spec_error_path(Json{{"fixture", "nope"}, {"command", "spectrum"}}), "fixture");
}

TEST(LoadSpec, NegativeRateInInlineModel) {
  Json model{{"motion", {{"states", 2}, {"m", {1, 1}}, {"rates", {{0, -1}, {1, 0}}}}},
             {"law", {{"beta", {1, 1}}, {"offspring", {{"type", "finite"}, {"p", {{"2", 1}}}}}}}};
  const std::string path = spec_error_path(Json{{"model", model}, {"command", "spectrum"}});
  EXPECT_EQ(path.rfind("model", 0), 0u) << path;
}

TEST(LoadSpec, RoundTrip) {
  const Json doc{{"fixture", "asym3"},
                 {"command", "verify"},
                 {"seed", 7},
                 {"replicates", 200},
                 {"params", {{"mode", "slln"}, {"x0", 1}, {"checkpoints", {2, 4, 6}}, {"tolerance", 0.1}}}};
  const RunSpec s = load_spec(doc);
  EXPECT_EQ(load_spec(to_json(s)), s);
  EXPECT_EQ(run_id(load_spec(to_json(s))), run_id(s));
}

TEST(RunId, IgnoresOutputDirectory) {
  Json a{{"fixture", "yule2"}, {"command", "spectrum"}};
  Json b = a;
  b["out"] = "/tmp/elsewhere";
  EXPECT_EQ(run_id(load_spec(a)), run_id(load_spec(b)));
  a["params"] = {{"method", "dense"}};
  EXPECT_NE(run_id(load_spec(a)), run_id(load_spec(b)));
}

TEST(FormatNumber, Shortest) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(1e-300), "1e-300");
  EXPECT_EQ(format_number(INFINITY), "inf");
}

TEST(Dispatch, SpectrumWritesTriple) {
  const fs::path out = scratch("spectrum");
  ASSERT_EQ(run(Json{{"fixture", "yule2"}, {"command", "spectrum"}}, out), kExitOk);
  const Json doc = read_json(out / "spectrum.json");
  EXPECT_NEAR(doc["triple"]["lambda1"].get<double>(), 1.0, 1e-10);
  EXPECT_TRUE(doc.contains("iu_fit"));
  const Json manifest = read_json(out / "manifest.json");
  EXPECT_EQ(manifest["exit_status"], 0);
  EXPECT_EQ(manifest["run_id"], doc["run_id"]);
  for (const Json& o : manifest["outputs"]) {
    EXPECT_TRUE(fs::exists(out / o["file"].get<std::string>()));
    EXPECT_EQ(o["run_id"], manifest["run_id"]);
  }
}

TEST(Dispatch, SimulateIsByteReproducibleAcrossThreads) {
  const Json doc{{"fixture", "asym3"},
                 {"command", "simulate"},
                 {"seed", 11},
                 {"replicates", 50},
                 {"params", {{"x0", 0}, {"checkpoints", {0.5, 1.5}}, {"record_events", true}}}};
  const fs::path a = scratch("sim-a");
  const fs::path b = scratch("sim-b");
  ASSERT_EQ(run(doc, a, 1), kExitOk);
  ASSERT_EQ(run(doc, b, 3), kExitOk);
  for (const char* file : {"snapshots.csv", "events.csv"}) {
    const std::string text = slurp(a / file);
    EXPECT_FALSE(text.empty());
    EXPECT_EQ(text.rfind("# run_id=", 0), 0u);
    EXPECT_EQ(text, slurp(b / file)) << file;
  }
}

TEST(Dispatch, ConfigErrorsExitTwo) {
  const fs::path out = scratch("bad-x0");
  EXPECT_EQ(run(Json{{"fixture", "yule2"}, {"command", "simulate"}, {"seed", 1}, {"params", {{"x0", 5}}}}, out),
            kExitConfigError);
  EXPECT_TRUE(read_json(out / "manifest.json").contains("error"));
}

TEST(Dispatch, OverflowRefuses) {
  const fs::path out = scratch("overflow");
  EXPECT_EQ(run(Json{{"fixture", "yule2"},
                     {"command", "simulate"},
                     {"seed", 1},
                     {"replicates", 20},
                     {"params", {{"checkpoints", {8}}, {"cap", 5}}}},
                out),
            kExitRefused);
}

TEST(Dispatch, VerifyMartingale) {
  const fs::path out = scratch("martingale");
  ASSERT_EQ(run(Json{{"fixture", "yule2"},
                     {"command", "verify"},
                     {"seed", 3},
                     {"replicates", 2000},
                     {"params", {{"mode", "martingale"}}}},
                out),
            kExitOk);
  const std::string csv = slurp(out / "summary.csv");
  EXPECT_NE(csv.find("t,mean,median,se,q25,q75,n_accepted,n_overflow"), std::string::npos);
}

TEST(Dispatch, DichotomyTruncationRefused) {
  const fs::path out = scratch("dichotomy");
  EXPECT_EQ(run(Json{{"fixture", "heavy"},
                     {"command", "verify"},
                     {"seed", 5},
                     {"replicates", 10},
                     {"params", {{"mode", "dichotomy"}, {"kmax", 10}}}},
                out),
            kExitRefused);
}

TEST(Dispatch, FixturesListed) {
  const fs::path out = scratch("fixtures");
  ASSERT_EQ(run(Json{{"command", "fixtures"}}, out), kExitOk);
  const Json doc = read_json(out / "fixtures.json");
  EXPECT_EQ(doc["fixtures"].size(), fixture_ids().size());
}

TEST(Dispatch, VerifySllnPasses) {
  const fs::path out = scratch("slln");
  ASSERT_EQ(run(Json{{"fixture", "yule2"},
                     {"command", "verify"},
                     {"seed", 8},
                     {"replicates", 1000},
                     {"params", {{"mode", "slln"}, {"tolerance", 0.05}}}},
                out),
            kExitOk);
  const Json verdict = read_json(out / "verdict.json");
  EXPECT_EQ(verdict["run_id"], read_json(out / "manifest.json")["run_id"]);
}
