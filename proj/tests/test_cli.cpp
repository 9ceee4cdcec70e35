#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetprompt/hetprompt.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("hetprompt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  CliResult run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(HETPROMPT_CLI) + " --workdir " + dir.string() + " " +
                            args + " > " + (dir / "stdout.txt").string() + " 2> " +
                            (dir / "stderr.txt").string();
    int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir / "stdout.txt"),
            slurp(dir / "stderr.txt")};
  }

  // Tiny dataset and a config small enough for a full pipeline in seconds.
  void prepare() {
    std::ofstream(dir / "c.json") << json{{"hidden_dim", 8},       {"projection_dim", 8},
                                          {"pretrain_epochs", 5},  {"prompt_epochs", 5},
                                          {"samples_per_node", 1}, {"seeds", {0, 1}},
                                          {"kmeans_restarts", 2}}
                                         .dump();
    auto r = run("generate --synth targets_per_class=8 --synth feature_dim=6 "
                 "--synth 'aux_types=[{\"name\":\"A\",\"count\":9},{\"name\":\"S\",\"count\":3}]'");
    ASSERT_EQ(r.code, 0) << r.err;
  }
};

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(CliTest, GradcheckPasses) {
  auto r = run("gradcheck");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_NE(r.out.find("few_shot_label"), std::string::npos);
}

TEST_F(CliTest, EvalWithoutPromptCheckpointIsMissingArtifact) {
  prepare();
  auto r = run("--config c.json eval");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err, "error missing_artifact: missing artifact: prompt checkpoint\n");
}

TEST_F(CliTest, PromptWithoutEncoderIsMissingArtifact) {
  prepare();
  auto r = run("--config c.json prompt");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing artifact: encoder checkpoint"), std::string::npos);
}

TEST_F(CliTest, ErrorsAreSingleLines) {
  std::ofstream(dir / "bad.json") << R"({"alpha": 0.5, "no_such_key": 1})";
  auto r = run("--config bad.json pretrain");
  EXPECT_EQ(r.code, 5);
  EXPECT_EQ(count_lines(r.err), 1);
  EXPECT_EQ(r.err.rfind("error config: ", 0), 0u) << r.err;

  r = run("--set alpha=2 pretrain");
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.err.find("alpha"), std::string::npos);

  r = run("frobnicate");
  EXPECT_EQ(r.code, 5);
  EXPECT_EQ(count_lines(r.err), 1);
}

TEST_F(CliTest, PipelineIsReproducibleAndRecordsProvenance) {
  prepare();
  ASSERT_EQ(run("--config c.json --seed 7 pretrain").code, 0);
  const auto ckpt = dir / "artifacts" / "encoder-s7.ckpt.json";
  const std::string first = hetprompt::hash_file(ckpt);
  ASSERT_EQ(run("--config c.json --seed 7 pretrain").code, 0);
  EXPECT_EQ(hetprompt::hash_file(ckpt), first);

  auto meta = json::parse(slurp(ckpt))["meta"];
  const std::string dataset_hash = hetprompt::hash_directory(dir / "data");
  EXPECT_EQ(meta["seed"], 7);
  EXPECT_EQ(meta["dataset_hash"], dataset_hash);
  EXPECT_EQ(meta["config"]["hidden_dim"], 8);
  EXPECT_EQ(meta["config_hash"].get<std::string>().size(), 16u);

  auto r = run("--config c.json --seed 7 prompt");
  ASSERT_EQ(r.code, 0) << r.err;
  r = run("--config c.json --seed 7 eval");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report_path = dir / "reports" / "eval-s7.json";
  const std::string report_text = slurp(report_path);
  auto report = json::parse(report_text);
  EXPECT_EQ(report["dataset_hash"], dataset_hash);
  EXPECT_EQ(report["zero_shot"]["config_hash"], meta["config_hash"]);
  EXPECT_EQ(report["few_shot"].size(), 2u);
  EXPECT_EQ(report["few_shot"][1]["seed"], 1);
  EXPECT_TRUE(report["few_shot_summary"].contains("micro_f1"));

  // Fanning the seeds out over threads leaves the report unchanged.
  r = run("--config c.json --seed 7 eval", "HETPROMPT_THREADS=2");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(report_path), report_text);
}

TEST_F(CliTest, ExportWritesOneRowPerNode) {
  prepare();
  ASSERT_EQ(run("--config c.json pretrain").code, 0);
  auto r = run("--config c.json export-embeddings --view semantic --out emb.tsv");
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "emb.tsv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# view=semantic config_hash=", 0), 0u);
  EXPECT_NE(line.find("seed=0"), std::string::npos);
  EXPECT_NE(line.find("dataset_hash="), std::string::npos);
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    ASSERT_EQ(fields.size(), 10u);  // id, label, 8 floats
    EXPECT_EQ(std::stoi(fields[0]), rows);
    EXPECT_EQ(std::stoi(fields[1]), rows % 3);
    ++rows;
  }
  EXPECT_EQ(rows, 24);

  r = run("--config c.json export-embeddings --view cluster");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("prompt checkpoint"), std::string::npos);
  r = run("--config c.json export-embeddings --view sideways");
  EXPECT_EQ(r.code, 5);
}
