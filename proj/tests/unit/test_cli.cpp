// Drives the sage executable end to end.

#include "sage/archive.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int status = -1;
  std::string out;
};

Result sage_cli(const std::string& args) {
  const std::string cmd = std::string(SAGE_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::string tmpl = (fs::temp_directory_path() / "sage-cli-XXXXXX").string();
    dir_ = ::mkdtemp(tmpl.data());
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const std::string& name, bool guided) {
    const auto path = dir_ / name;
    std::ofstream(path) << json{{"es", {{"mu", 4}, {"lambda", 4}, {"budget", 24}}},
                                {"guidance", {{"enabled", guided}, {"n_trees", 20}}}}
                               .dump();
    return path.string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, FeaturesPrintsCanonicalOrder) {
  const auto r = sage_cli(std::string("features --file ") + SAGE_TEST_DATA_DIR + "/random_search.py");
  ASSERT_EQ(r.status, 0);
  const auto j = nlohmann::ordered_json::parse(r.out);
  const auto expected = json::parse(slurp(std::string(SAGE_TEST_DATA_DIR) + "/random_search.features.json"));
  ASSERT_EQ(j.size(), 22u);
  EXPECT_EQ(j.begin().key(), "node_count");
  for (auto it = expected.begin(); it != expected.end(); ++it) {
    ASSERT_TRUE(j.contains(it.key())) << it.key();
    EXPECT_NEAR(j[it.key()].get<double>(), it.value().get<double>(), 1e-9) << it.key();
  }
}

TEST_F(CliTest, FeaturesOnBrokenPythonFails) {
  std::ofstream(dir_ / "broken.py") << "def f(:\n";
  EXPECT_EQ(sage_cli("features --file " + (dir_ / "broken.py").string()).status, 3);
}

TEST_F(CliTest, RunAnalyzeCegCompare) {
  const auto guided = write_config("guided.json", true);
  const auto plain = write_config("plain.json", false);
  for (int seed : {1, 2}) {
    ASSERT_EQ(sage_cli("run --config " + guided + " --seed " + std::to_string(seed) + " --out " +
                       (dir_ / "g" / std::to_string(seed)).string())
                  .status,
              0);
    ASSERT_EQ(sage_cli("run --config " + plain + " --seed " + std::to_string(seed) + " --out " +
                       (dir_ / "u" / std::to_string(seed)).string())
                  .status,
              0);
  }
  const auto archive = sage::evo::load_archive(dir_ / "g" / "1" / "archive.jsonl");
  EXPECT_EQ(archive.size(), 24u);
  const auto manifest = json::parse(slurp(dir_ / "g" / "1" / "manifest.json"));
  EXPECT_EQ(manifest["archive_hash"], sage::evo::canonical_hash(archive));

  const auto report = (dir_ / "report.json").string();
  ASSERT_EQ(sage_cli("analyze --runs " + (dir_ / "g").string() + " --out " + report).status, 0);
  const auto rj = json::parse(slurp(report));
  EXPECT_EQ(rj["runs"].size(), 2u);
  EXPECT_EQ(rj["convergence"]["mean"].size(), 24u);
  EXPECT_TRUE(rj["consistency"]["by_prompt_kind"].is_object());
  const auto conv = slurp(dir_ / "convergence.csv");
  EXPECT_EQ(conv.rfind("evaluation,mean,lower,upper\n", 0), 0u);
  EXPECT_EQ(std::count(conv.begin(), conv.end(), '\n'), 25);

  const auto dot = (dir_ / "ceg.dot").string();
  ASSERT_EQ(sage_cli("ceg --archive " + (dir_ / "g" / "1" / "archive.jsonl").string() +
                     " --feature total_parameter_count --format dot --out " + dot)
                .status,
            0);
  EXPECT_EQ(slurp(dot).rfind("digraph", 0), 0u);
  const auto cj = (dir_ / "ceg.json").string();
  ASSERT_EQ(sage_cli("ceg --archive " + (dir_ / "g" / "1" / "archive.jsonl").string() +
                     " --feature total_parameter_count --format json --out " + cj)
                .status,
            0);
  const auto ceg = json::parse(slurp(cj));
  EXPECT_EQ(ceg["nodes"].size(), 24u);
  EXPECT_EQ(ceg["edges"].size(), 20u);

  const auto csv = (dir_ / "curves.csv").string();
  const auto r = sage_cli("compare --a " + (dir_ / "g").string() + " --b " + (dir_ / "u").string() +
                          " --out " + csv);
  ASSERT_EQ(r.status, 0);
  const auto summary = json::parse(r.out);
  EXPECT_EQ(summary["auc_a"].size(), 2u);
  std::istringstream lines(slurp(csv));
  std::string header, line;
  std::getline(lines, header);
  EXPECT_EQ(header, "evaluation,mean_a,lower_a,upper_a,mean_b,lower_b,upper_b,speedup");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 24);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(sage_cli("").status, 2);
  EXPECT_EQ(sage_cli("frobnicate").status, 2);
  EXPECT_EQ(sage_cli("run --seed 1 --out x").status, 2);
  std::ofstream(dir_ / "bad.json") << R"({"es": {"bogus": 1}})";
  EXPECT_EQ(sage_cli("run --config " + (dir_ / "bad.json").string() + " --seed 1 --out " +
                     (dir_ / "o").string())
                .status,
            2);
  EXPECT_EQ(sage_cli("ceg --archive " + std::string(SAGE_TEST_DATA_DIR) +
                     "/random_search.py --feature node_count --out " + (dir_ / "x.dot").string())
                .status,
            3);
  EXPECT_EQ(sage_cli("analyze --runs " + (dir_ / "nothing").string() + " --out " + (dir_ / "r.json").string())
                .status,
            3);
  EXPECT_EQ(sage_cli("--help").status, 0);
}
