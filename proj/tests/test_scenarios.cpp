#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "transim/scenario.hpp"

using namespace transim;
using namespace transim::scenario;

namespace {

const fs::path kSource = TRANSIM_SOURCE_DIR;
const fs::path kConfig = kSource / "config" / "default.json";

fs::path scratch(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("transim_test_" + std::to_string(::getpid()) + "_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(TRANSIM_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path write_config(const fs::path& dir, const Json& sections) {
  Json c = {{"device", (kSource / "data" / "device_tableS1.json").string()}, {"seed", 7}, {"scenarios", sections}};
  const fs::path p = dir / "default.json";
  std::ofstream(p) << c.dump(2);
  return p;
}

}  // namespace

TEST(Registry, FifteenUniqueScenariosWithAnchors) {
  std::set<std::string> names;
  for (const auto& d : registry()) {
    EXPECT_FALSE(d.description.empty()) << d.name;
    EXPECT_FALSE(d.anchor.empty()) << d.name;
    names.insert(d.name);
  }
  EXPECT_GE(names.size(), 15u);
  EXPECT_EQ(names.size(), registry().size());
  for (const char* n : {"fig1-spectra", "fig2a-crossing", "fig2d-cw-efficiency", "fig2ef-step", "fig3c-clicks", "fig3d-nadd",
                        "fig4a-reprate", "si-s1-tuning", "si-s2-loading", "si-s3-correction", "si-s4-othermode",
                        "tableS1-derived", "calib-eqS1", "calib-eqS2", "calib-lineloss"})
    EXPECT_TRUE(names.count(n)) << n;
}

TEST(Registry, AliasResolves) {
  ASSERT_NE(find("si-fig2-loading"), nullptr);
  EXPECT_EQ(find("si-fig2-loading")->name, "si-s2-loading");
  EXPECT_EQ(find("no-such-scenario"), nullptr);
  bool listed = false;
  for (const auto& d : registry_json())
    for (const auto& a : d["aliases"]) listed = listed || a == "si-fig2-loading";
  EXPECT_TRUE(listed);
}

TEST(Config, ErrorsAreConfigErrors) {
  const auto dir = scratch("cfg");
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "nodev.json") << "{\"seed\": 1}";
  EXPECT_THROW(load_config(dir / "nodev.json"), ConfigError);
  std::ofstream(dir / "baddev.json") << "{\"device\": \"nowhere.json\"}";
  EXPECT_THROW(load_config(dir / "baddev.json"), ConfigError);
  EXPECT_EQ(run("calib-lineloss", dir / "missing.json", dir).exit_code, kConfigError);
  EXPECT_EQ(run("nonsense", dir / "missing.json", dir).exit_code, kUnknownScenario);
  fs::remove_all(dir);
}

// Every scenario once, concurrently, against the bundled config.
class AllScenarios : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    out_ = new fs::path(scratch("all"));
    const Config cfg = load_config(kConfig);
    std::vector<std::future<RunReport>> jobs;
    for (const auto& d : registry())
      jobs.push_back(std::async(std::launch::async, [&cfg, n = d.name] { return run_with_config(n, cfg, *out_); }));
    reports_ = new std::vector<RunReport>;
    for (auto& j : jobs) reports_->push_back(j.get());
  }
  static void TearDownTestSuite() {
    fs::remove_all(*out_);
    delete out_;
    delete reports_;
  }
  static fs::path* out_;
  static std::vector<RunReport>* reports_;
};
fs::path* AllScenarios::out_ = nullptr;
std::vector<RunReport>* AllScenarios::reports_ = nullptr;

TEST_F(AllScenarios, PassWithWellFormedReports) {
  for (const auto& r : *reports_) {
    const auto& j = r.report;
    SCOPED_TRACE(j.value("scenario", std::string("?")));
    EXPECT_EQ(r.exit_code, kOk) << r.message;
    ASSERT_TRUE(fs::exists(r.report_path));
    EXPECT_EQ(Json::parse(slurp(r.report_path))["scenario"], j["scenario"]);
    for (const char* key : {"started_utc", "finished_utc", "runtime_s", "seed", "device_hash", "assertions", "outputs"})
      EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_FALSE(j["assertions"].empty());
    for (const auto& a : j["assertions"]) {
      const std::string src = a["source"];
      EXPECT_TRUE(src == "published" || src == "derived" || src == "consistency") << a["quantity"];
      EXPECT_TRUE(a["passed"].get<bool>()) << a["quantity"];
    }
    for (const auto& f : j["outputs"]) EXPECT_TRUE(fs::exists(r.report_path.parent_path() / f.get<std::string>())) << f;
  }
}

TEST_F(AllScenarios, CsvBodiesCarryNoTimestamps) {
  for (const auto& r : *reports_)
    for (const auto& f : r.report["outputs"]) {
      const std::string body = slurp(r.report_path.parent_path() / f.get<std::string>());
      EXPECT_EQ(body.find("UTC"), std::string::npos) << f;
      EXPECT_EQ(body.find(r.report["started_utc"].get<std::string>().substr(0, 10)), std::string::npos) << f;
    }
}

TEST(Determinism, CsvBytesRepeatAcrossRuns) {
  const Config cfg = load_config(kConfig);
  const auto a = scratch("det_a"), b = scratch("det_b");
  for (const char* name : {"fig4a-reprate", "fig2ef-step", "si-s1-tuning", "calib-lineloss"}) {
    const auto ra = run_with_config(name, cfg, a), rb = run_with_config(name, cfg, b);
    ASSERT_EQ(ra.exit_code, kOk);
    for (const auto& f : ra.report["outputs"]) {
      const std::string file = f;
      EXPECT_EQ(slurp(a / name / file), slurp(b / name / file)) << name << "/" << file;
    }
  }
  // A different seed changes the noisy data.
  const auto c = scratch("det_c");
  run_with_config("fig4a-reprate", cfg, c, 99);
  EXPECT_NE(slurp(a / "fig4a-reprate" / "reprate.csv"), slurp(c / "fig4a-reprate" / "reprate.csv"));
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const std::string out = " --out " + dir.string();
  EXPECT_EQ(cli("list"), kOk);
  EXPECT_EQ(cli("list --json"), kOk);
  EXPECT_EQ(cli("run calib-lineloss --config " + kConfig.string() + out), kOk);
  EXPECT_EQ(cli("run si-fig2-loading --config " + kConfig.string() + out), kOk);
  EXPECT_EQ(cli("run no-such-scenario --config " + kConfig.string() + out), kUnknownScenario);
  EXPECT_EQ(cli("run calib-lineloss --config " + (dir / "missing.json").string() + out), kConfigError);
  const auto bad = write_config(dir, {{"fig4a-reprate", {{"tau_us", 3.0}}}});
  EXPECT_EQ(cli("run fig4a-reprate --config " + bad.string() + out), kAssertionFailed);
  EXPECT_EQ(cli("fit no-such-op --data " + (dir / "x.csv").string()), kUnknownScenario);
  EXPECT_EQ(cli("fit tuning --data " + (dir / "missing.csv").string()), kConfigError);
  EXPECT_EQ(cli("fit tuning --data " + (dir / "calib-lineloss" / "line_loss.csv").string() + " --json"), kRuntimeError);
  fs::remove_all(dir);
}

TEST(Cli, FitReadsScenarioOutput) {
  const auto dir = scratch("fit");
  ASSERT_EQ(cli("run si-s1-tuning --config " + kConfig.string() + " --out " + dir.string()), kOk);
  EXPECT_EQ(cli("fit tuning --data " + (dir / "si-s1-tuning" / "tuning.csv").string()), kOk);
  fs::remove_all(dir);
}

TEST(Cli, ConfigDirectoryFromEnvironment) {
  const auto dir = scratch("env");
  const auto cfgdir = dir / "cfg";
  fs::create_directories(cfgdir);
  write_config(cfgdir, {{"fig4a-reprate", {{"tau_us", 3.0}}}});
  const std::string out = " --out " + (dir / "out").string();
  // The environment default is used when --config is absent.
  EXPECT_EQ(cli("run fig4a-reprate" + out), kOk);
  ::setenv("TRANSIM_CONFIG_DIR", cfgdir.c_str(), 1);
  EXPECT_EQ(default_config_path(), cfgdir / "default.json");
  EXPECT_EQ(cli("run fig4a-reprate" + out), kAssertionFailed);
  ::setenv("TRANSIM_CONFIG_DIR", (dir / "empty").c_str(), 1);
  EXPECT_EQ(cli("run fig4a-reprate" + out), kConfigError);
  ::unsetenv("TRANSIM_CONFIG_DIR");
  fs::remove_all(dir);
}
