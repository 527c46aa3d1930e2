#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "support.hpp"

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

Run run_cli(const std::string& args) {
  static int counter = 0;
  std::string err_path = ::testing::TempDir() + "dmd_cli_err_" + std::to_string(counter++);
  std::string cmd = std::string(DMD_CLI_PATH) + " " + args + " 2>" + err_path;
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.err = dmd::testing::read_file(err_path);
  std::remove(err_path.c_str());
  return r;
}

std::string corpus_path(const std::string& name) { return std::string(DMD_CORPUS_DIR) + "/" + name + ".dsl"; }
std::string data_path(const std::string& name) { return std::string(DMD_TEST_DATA_DIR) + "/" + name; }

TEST(Cli, WalkthroughText) {
  auto r = run_cli("-i " + corpus_path("walkthrough"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("rd = 2 * M"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("n_total = 2 * M * N"), std::string::npos) << r.out;
}

TEST(Cli, StdinInput) {
  auto r = run_cli("--json < " + corpus_path("walkthrough"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["mode"], "symbolic");
}

TEST(Cli, InvalidProgramExitsOne) {
  auto r = run_cli("-i " + data_path("nonaffine.dsl"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("nonaffine.dsl:6:12"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("product of two variables"), std::string::npos) << r.err;
}

TEST(Cli, MissingFileExitsTwo) {
  auto r = run_cli("-i " + data_path("does_not_exist.dsl"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("cannot read"), std::string::npos);
}

TEST(Cli, BadFlagsExitTwo) {
  EXPECT_EQ(run_cli("--block-size 0 -i " + corpus_path("walkthrough")).status, 2);
  EXPECT_EQ(run_cli("--param N -i " + corpus_path("walkthrough")).status, 2);
  EXPECT_EQ(run_cli("--param N=3 -i " + corpus_path("walkthrough")).status, 2);  // M unbound
  EXPECT_EQ(run_cli("--no-such-flag").status, 2);
}

TEST(Cli, TimeoutExitsTwo) {
  auto r = run_cli("--timeout-seconds 1 -i " + data_path("oversized.dsl"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("timed out"), std::string::npos) << r.err;
}

TEST(Cli, ConcreteMode) {
  auto r = run_cli("--json --param N=9 --param M=7 -i " + corpus_path("walkthrough"));
  ASSERT_EQ(r.status, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["mode"], "concrete");
  EXPECT_EQ(j["distribution"]["n_total"], 126);
  EXPECT_EQ(j["distribution"]["n_cold"], 70);
  ASSERT_EQ(j["distribution"]["groups"].size(), 1u);
  EXPECT_EQ(j["distribution"]["groups"][0]["rd"], 14);
  EXPECT_EQ(j["distribution"]["groups"][0]["count"], 56);
  EXPECT_NEAR(j["dmd"]["value"].get<double>(), 70 + 56 * std::sqrt(14.0), 1e-9);
}

TEST(Cli, DumpPrintsMaps) {
  auto r = run_cli("--dump -i " + corpus_path("walkthrough"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("[1] : (i, j, 1) -> (1, 0, j)"), std::string::npos) << r.out;
}

TEST(Cli, CompatibilityFlagsWarn) {
  auto r = run_cli("--max-operations 100 --approximation-method bernstein -i " + corpus_path("walkthrough"));
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.err.find("--max-operations is ignored"), std::string::npos);
  EXPECT_NE(r.err.find("--approximation-method is ignored"), std::string::npos);
}

TEST(Cli, ValidateAtAddsHeldOutBinding) {
  auto r = run_cli("--json --validate-at 20,21 -i " + corpus_path("walkthrough"));
  ASSERT_EQ(r.status, 0) << r.err;
  auto v = nlohmann::json::parse(r.out)["config"]["validation_bindings"];
  EXPECT_NE(std::find(v.begin(), v.end(), nlohmann::json::array({20, 21})), v.end()) << v.dump();
}

class CliCorpus : public ::testing::TestWithParam<dmd::testing::CorpusEntry> {};

void expect_formula(const nlohmann::json& f) {
  ASSERT_TRUE(f.is_object()) << f.dump();
  EXPECT_TRUE(f["plain"].is_string());
  EXPECT_TRUE(f["latex"].is_string());
}

TEST_P(CliCorpus, JsonSchemaAndDeterminism) {
  std::string args = "--json -i " + corpus_path(GetParam().name);
  auto a = run_cli(args);
  ASSERT_EQ(a.status, 0) << a.err;
  auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["mode"], "symbolic");
  for (auto key : {"program", "config", "dmd", "counts", "groups", "diagnostics"})
    EXPECT_TRUE(j.contains(key)) << key;
  expect_formula(j["dmd"]);
  EXPECT_TRUE(j["program"]["params"].is_array());
  EXPECT_TRUE(j["program"]["statements"].is_array());
  for (const auto& g : j["groups"]) {
    for (auto key : {"source", "pred", "carrier", "region"}) EXPECT_TRUE(g["class"].contains(key)) << key;
    EXPECT_TRUE(g["closed_form"].is_boolean());
    EXPECT_TRUE(g["scaling"].is_boolean());
    if (g["closed_form"]) {
      expect_formula(g["rd"]);
      expect_formula(g["multiplicity"]);
    }
  }
  for (const auto& d : j["diagnostics"]) EXPECT_TRUE(d["message"].is_string());

  auto b = run_cli(args);
  EXPECT_EQ(a.out, b.out);  // byte-identical
}

INSTANTIATE_TEST_SUITE_P(Programs, CliCorpus, ::testing::ValuesIn(dmd::testing::corpus()),
                         [](const auto& info) { return info.param.name; });

}  // namespace
