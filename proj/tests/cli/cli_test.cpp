#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / "dialnav_cli_test"; }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    // Small enough that the whole pipeline runs in a few seconds.
    const json cfg = {
        {"world", {{"num_nodes", 12}, {"num_regions", 2}, {"object_vocab_size", 16}, {"regions_per_view_max", 1},
                   {"feature_dim", 8}}},
        {"seen_worlds", 2},
        {"unseen_worlds", 1},
        {"data", {{"train_dialogs_per_world", 3}, {"val_dialogs_per_world", 2}, {"captions", 40},
                  {"gen", {{"min_start_hops", 3}}}}},
        {"encoder", {{"hidden", 16}, {"layers", 1}, {"heads", 2}, {"ff", 32}, {"max_len", 96}, {"feature_dim", 8}}},
        {"pretrain", {{"train", {{"stage1_steps", 3}, {"stage2_steps", 3}, {"batch_size", 2}}}}},
        {"finetune", {{"navigator", {{"decoder_dim", 16}, {"action_dim", 8}}}, {"imitation", {{"steps", 4}}}}},
        {"ask", {{"hidden", 8}, {"steps", 4}}},
        {"gameplay", {{"episodes", 3}}},
    };
    std::ofstream(root() / "small.json") << cfg.dump(2);
  }
  static void TearDownTestSuite() { fs::remove_all(root()); }

  static Result run(const std::string& args) {
    const fs::path out = root() / "stdout.txt", err = root() / "stderr.txt";
    const std::string cmd = std::string(DIALNAV_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }
  static std::string common(const std::string& dir) {
    return "--config " + (root() / "small.json").string() + " --run-dir " + (root() / dir).string();
  }
};

TEST_F(Cli, PipelineEndToEndWithIdenticalReportsAndReplay) {
  const std::string c = common("run");
  for (const char* step : {"gen-world", "gen-data", "pretrain --curriculum-row 6", "finetune", "train-ask", "evaluate",
                           "gameplay --mode heuristic4", "gameplay --mode general"}) {
    const Result r = run(std::string(step) + " " + c);
    ASSERT_EQ(r.code, 0) << step << "\n" << r.err;
  }
  const fs::path report = root() / "run" / "reports" / "eval-viewpoint.json";
  const std::string first = slurp(report);
  ASSERT_EQ(run("evaluate " + c).code, 0);
  EXPECT_EQ(slurp(report), first);
  const json eval = json::parse(first);
  EXPECT_TRUE(eval.at("splits").at("unseen").contains("ask"));
  EXPECT_EQ(eval.at("splits").at("seen").at("aggregate").at("episodes").get<int>(),
            static_cast<int>(eval.at("splits").at("seen").at("episodes").size()));

  const json ask = json::parse(slurp(root() / "run" / "reports" / "ask-viewpoint.json"));
  EXPECT_EQ(ask.at("navigator_checksum_before"), ask.at("navigator_checksum_after"));

  for (const char* mode : {"heuristic4", "general"}) {
    const fs::path log = root() / "run" / "episodes" / (std::string(mode) + "-viewpoint") / "episode-000.jsonl";
    const Result r = run("replay --log " + log.string() + " --run-dir " + (root() / "run").string());
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(json::parse(r.out).at("matches").get<bool>());
  }
}

TEST_F(Cli, TamperedEpisodeLogExitsWithDataError) {
  const std::string c = common("tamper");
  for (const char* step : {"gen-world", "gen-data", "pretrain --curriculum-row 1", "finetune", "gameplay"})
    ASSERT_EQ(run(std::string(step) + " " + c).code, 0) << step;
  const fs::path log = root() / "tamper" / "episodes" / "heuristic4-viewpoint" / "episode-000.jsonl";
  std::stringstream lines(slurp(log));
  std::string line, edited;
  while (std::getline(lines, line)) {
    json j = json::parse(line);
    if (j.at("type") == "end") j["metrics"]["gp"] = j["metrics"]["gp"].get<double>() + 0.5;
    edited += j.dump() + "\n";
  }
  std::ofstream(log) << edited;
  const Result r = run("replay --log " + log.string() + " --run-dir " + (root() / "tamper").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(json::parse(r.out).at("matches").get<bool>());
}

TEST_F(Cli, UnknownConfigKeyIsAConfigError) {
  const Result r = run("gen-world " + common("bad") + " --set world.nodez=3");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("world.nodez"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(root() / "bad" / "worlds"));
}

TEST_F(Cli, IllTypedValueIsAConfigError) {
  EXPECT_EQ(run("gen-world " + common("bad") + " --set seen_worlds=\\\"many\\\"").code, 2);
  EXPECT_EQ(run("gen-world " + common("bad") + " --set world.num_nodes=0").code, 2);
}

TEST_F(Cli, MissingArtifactNamesTheProducingCommand) {
  const Result r = run("finetune " + common("empty"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("missing artifact"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("dialnav pretrain"), std::string::npos) << r.err;
}

TEST_F(Cli, BadArgumentsExitWithUsageError) {
  EXPECT_EQ(run("pretrain --curriculum-row 9").code, 2);
  EXPECT_EQ(run("evaluate --action-space sideways").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

}  // namespace
