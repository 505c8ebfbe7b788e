#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "taskgrasp/cli.hpp"

using namespace taskgrasp;
namespace fs = std::filesystem;

namespace
{
struct Run
{
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args)
{
  args.insert(args.begin(), "taskgrasp");
  std::vector<const char*> argv;
  for (const auto& a : args)
    argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

// Built-in scenes exported once, shared by every test.
class CliTest : public ::testing::Test
{
protected:
  static void SetUpTestSuite()
  {
    corpus_ = fixtures::temp_dir("cli_corpus");
    ASSERT_EQ(cli({"export-corpus", "--out", corpus_.string()}).code, 0);
    nlohmann::json two = {{"scenes", {"mug.json", "screwdriver.json"}}};
    std::ofstream(corpus_ / "two.json") << two.dump();
  }

  static fs::path scene(const std::string& name) { return corpus_ / (name + ".json"); }
  static fs::path corpus_;
};
fs::path CliTest::corpus_;
}  // namespace

TEST_F(CliTest, HelpListsExitCodes)
{
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Exit codes"), std::string::npos);
  EXPECT_NE(r.out.find("21 VlmPointOffObject"), std::string::npos);
  EXPECT_NE(r.out.find("evaluate"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo)
{
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"select", "--no-such-flag"}).code, 2);
  const auto dir = fixtures::temp_dir("cli_badk");
  EXPECT_EQ(cli({"select", "--scene", scene("mug").string(), "--oracle", "omniscient", "--k", "three", "--out",
                 (dir / "o").string()})
                .code,
            2);
}

TEST_F(CliTest, MissingSceneExitsTwoAndWritesNothing)
{
  const auto dir = fixtures::temp_dir("cli_missing");
  const auto r = cli({"select", "--scene", (dir / "nope.json").string(), "--oracle", "omniscient", "--out",
                      (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.json"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST_F(CliTest, ExactlyOneBackend)
{
  const auto dir = fixtures::temp_dir("cli_backends");
  EXPECT_EQ(cli({"select", "--scene", scene("mug").string(), "--out", (dir / "a").string()}).code, 2);
  EXPECT_EQ(cli({"select", "--scene", scene("mug").string(), "--oracle", "omniscient", "--script",
                 (dir / "s.json").string(), "--out", (dir / "b").string()})
                .code,
            2);
  EXPECT_FALSE(fs::exists(dir / "a"));
  EXPECT_FALSE(fs::exists(dir / "b"));
}

TEST_F(CliTest, MissingApiKeyFailsBeforeWriting)
{
  const auto dir = fixtures::temp_dir("cli_auth");
  ::unsetenv("TASKGRASP_CLI_TEST_KEY");
  const auto r = cli({"select", "--scene", scene("mug").string(), "--endpoint", "http://127.0.0.1:9/v1/chat",
                      "--api-key-env", "TASKGRASP_CLI_TEST_KEY", "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, static_cast<int>(ErrorKind::AuthError));
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST_F(CliTest, SelectWithTheOracle)
{
  const auto dir = fixtures::temp_dir("cli_select") / "o";
  const auto r = cli({"select", "--scene", scene("mug").string(), "--oracle", "omniscient", "--strategy", "GMI",
                      "--seed", "4", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("chosen grasp ", 0), 0u);
  const auto chosen = nlohmann::json::parse(slurp(dir / "chosen_grasp.json"));
  EXPECT_EQ(chosen["scene"], "mug");
  EXPECT_EQ(chosen["strategy"], "GMI");
  EXPECT_TRUE(chosen["task_compliant"].get<bool>());
  EXPECT_EQ(count_lines(slurp(dir / "audit.jsonl")), 1);
  EXPECT_TRUE(fs::exists(dir / "clusters.json"));
  EXPECT_TRUE(fs::exists(dir / "query" / "prompt.txt"));
}

TEST_F(CliTest, CustomTaskOverridesTheScene)
{
  const auto dir = fixtures::temp_dir("cli_task") / "o";
  const auto r = cli({"select", "--scene", scene("mug").string(), "--oracle", "omniscient", "--task",
                      "Pick up the mug by its handle", "--region", "handle", "--category", "tool-use", "--out",
                      dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto chosen = nlohmann::json::parse(slurp(dir / "chosen_grasp.json"));
  EXPECT_EQ(chosen["task"]["target_region"], "handle");
  EXPECT_EQ(cli({"select", "--scene", scene("mug").string(), "--oracle", "omniscient", "--task", "x", "--region",
                 "spout", "--out", dir.string()})
                .code,
            static_cast<int>(ErrorKind::UnknownRegion));
}

TEST_F(CliTest, CpgPointOffTheObjectExitsWithItsCode)
{
  const auto dir = fixtures::temp_dir("cli_cpg");
  std::ofstream(dir / "script.json") << R"({"rules": [], "default": "{\"point\": [2, 2]}"})";
  const auto r = cli({"select", "--scene", scene("mug").string(), "--script", (dir / "script.json").string(),
                      "--strategy", "CPG", "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 21);
  const auto audit = nlohmann::json::parse(slurp(dir / "o" / "audit.jsonl"));
  EXPECT_EQ(audit["error"], "VlmPointOffObject");
  EXPECT_FALSE(fs::exists(dir / "o" / "chosen_grasp.json"));
}

TEST_F(CliTest, EvaluateWritesOneRowPerStrategyAndBaseline)
{
  const auto dir = fixtures::temp_dir("cli_eval") / "o";
  const auto r = cli({"evaluate", "--corpus", (corpus_ / "two.json").string(), "--oracle", "omniscient", "--out",
                      dir.string(), "--dump-queries"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "report.csv");
  EXPECT_EQ(count_lines(csv), 7);  // header, five strategies, baseline
  EXPECT_EQ(r.out, csv);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  std::size_t tasks = 0;
  for (const auto* name : {"mug", "screwdriver"})
    tasks += load_scene_file(scene(name).string()).tasks.size();
  EXPECT_EQ(report["trials"].size(), tasks * 6);
  EXPECT_EQ(count_lines(slurp(dir / "audit.jsonl")), static_cast<int>(tasks * 5));
  EXPECT_TRUE(fs::exists(dir / "trials" / "0" / "audit.json"));
}

TEST_F(CliTest, EvaluateIsReproducible)
{
  const auto dir = fixtures::temp_dir("cli_repro");
  for (const auto* sub : {"a", "b"})
    ASSERT_EQ(cli({"evaluate", "--corpus", (corpus_ / "two.json").string(), "--oracle", "adversarial", "--seed", "9",
                   "--jobs", sub[0] == 'a' ? "1" : "2", "--out", (dir / sub).string()})
                  .code,
              0);
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
  EXPECT_EQ(slurp(dir / "a" / "report.csv"), slurp(dir / "b" / "report.csv"));
}

TEST_F(CliTest, CorpusAndBuiltinAreExclusive)
{
  const auto dir = fixtures::temp_dir("cli_excl");
  EXPECT_EQ(cli({"evaluate", "--corpus", (corpus_ / "two.json").string(), "--builtin-corpus", "--oracle",
                 "omniscient", "--out", (dir / "o").string()})
                .code,
            2);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST_F(CliTest, SweepKWritesOneRowPerK)
{
  const auto dir = fixtures::temp_dir("cli_sweep") / "o";
  const auto r = cli({"sweep-k", "--corpus", (corpus_ / "two.json").string(), "--oracle", "omniscient", "--k-values",
                      "1,2,3", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "sweep_k.csv");
  EXPECT_EQ(count_lines(csv), 4);
  EXPECT_EQ(csv.rfind("k,trials,", 0), 0u);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "sweep_k.json"))["rows"].size(), 3u);
  EXPECT_EQ(cli({"sweep-k", "--corpus", (corpus_ / "two.json").string(), "--oracle", "omniscient", "--k-values",
                 "3,2", "--out", dir.string()})
                .code,
            2);
}

TEST_F(CliTest, ViewsPicksTheAnnotatedBest)
{
  const auto dir = fixtures::temp_dir("cli_views") / "o";
  const auto r = cli({"views", "--scene", scene("mug_ring").string(), "--oracle", "omniscient", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto best = ring_view_scene().expected_best_view.value();
  EXPECT_NE(r.out.find("selected view " + std::to_string(best)), std::string::npos);
  const auto chosen = nlohmann::json::parse(slurp(dir / "chosen_grasp.json"));
  EXPECT_EQ(chosen["view"], best);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "views.json"))["selected_view"], best);
}

TEST_F(CliTest, ViewsNeedsASceneWithViews)
{
  const auto dir = fixtures::temp_dir("cli_noviews");
  EXPECT_EQ(cli({"views", "--scene", scene("mug").string(), "--oracle", "omniscient", "--out", (dir / "o").string()})
                .code,
            2);
}

TEST_F(CliTest, RenderDebugDumpsEveryStage)
{
  const auto dir = fixtures::temp_dir("cli_debug") / "o";
  const auto r = cli({"render-debug", "--scene", scene("knife").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto* f : {"rgb.png", "depth.png", "depth.json", "cloud.ply", "candidates.json", "feasible.json",
                        "clusters.json", "representatives.json", "query_GSI/prompt.txt", "query_CPG/prompt.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST_F(CliTest, ConfigFileWithFlagOverride)
{
  const auto dir = fixtures::temp_dir("cli_config");
  nlohmann::json cfg = {{"scene", fs::relative(scene("mug"), dir).string()},
                        {"strategy", "CPSI"},
                        {"seed", 5},
                        {"backend", {{"oracle", "adversarial"}}},
                        {"clustering", {{"k", 3}}}};
  std::ofstream(dir / "run.json") << cfg.dump();
  const auto r = cli({"select", "--config", (dir / "run.json").string(), "--strategy", "GSI", "--out",
                      (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto chosen = nlohmann::json::parse(slurp(dir / "o" / "chosen_grasp.json"));
  EXPECT_EQ(chosen["strategy"], "GSI");
  EXPECT_EQ(chosen["seed"], 5);
  EXPECT_FALSE(chosen["task_compliant"].get<bool>());
}
