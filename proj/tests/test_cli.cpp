// Copyright 2026 The motret Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "support.hpp"

namespace {

struct Outcome {
  int exit_code = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(MOTRET_CLI) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return o;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) o.out += buf;
  const int status = ::pclose(pipe);
  o.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new motret::testing::TempDir("cli");
    std::ofstream(*dir_ / "train.json") << R"({
      "motion_encoder": "mot", "text_encoder": "affine", "d_common": 8,
      "batch": 4, "max_steps": 3, "max_len": 16,
      "motion": {"model_dim": 8, "heads": 2, "depth": 1, "ffn_hidden": 8, "output_dim": 8},
      "text": {"output_dim": 8}, "text_source": {"sentence_dim": 16}
    })";
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string path(const std::string& name) { return (*dir_ / name).string(); }

  static motret::testing::TempDir* dir_;
};

motret::testing::TempDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("frobnicate").exit_code, 2);
  EXPECT_EQ(run("search --text walk").exit_code, 2);
  EXPECT_EQ(run("search --index " + path("missing.midx") + " --text walk").exit_code, 2);
  EXPECT_EQ(run("synth --pairs 0 --out " + path("x")).exit_code, 2);
  EXPECT_EQ(run("--help").exit_code, 0);
}

TEST_F(CliTest, SingletonDatasetEndToEnd) {
  const std::string data = path("one"), model = path("one_model");
  ASSERT_EQ(run("synth --pairs 1 --seed 4 --out " + data).exit_code, 0);
  ASSERT_EQ(run("train --quiet --config " + path("train.json") + " --manifest " + data +
                "/manifest.json --out " + model)
                .exit_code,
            0);
  EXPECT_TRUE(std::filesystem::exists(model + "/motion.menc"));
  EXPECT_TRUE(std::filesystem::exists(model + "/text.tenc"));

  const Outcome eval = run("evaluate --model " + model + " --manifest " + data +
                           "/manifest.json --split train --out " + path("report.json"));
  ASSERT_EQ(eval.exit_code, 0);
  std::ifstream in(path("report.json"));
  const auto report = nlohmann::json::parse(in);
  EXPECT_EQ(report.at("recall").at("1").get<double>(), 100.0);
  EXPECT_EQ(report.at("items"), 1);
  EXPECT_NE(eval.out.find("100.0"), std::string::npos);
}

TEST_F(CliTest, SearchPrintsRankIdScoreLines) {
  const std::string data = path("few"), model = path("few_model");
  ASSERT_EQ(run("synth --pairs 6 --seed 2 --out " + data).exit_code, 0);
  ASSERT_EQ(run("train --quiet --config " + path("train.json") + " --manifest " + data +
                "/manifest.json --out " + model)
                .exit_code,
            0);
  ASSERT_EQ(run("encode-motions --model " + model + " --manifest " + data +
                "/manifest.json --split train --out " + model + "/motions.embs")
                .exit_code,
            0);
  ASSERT_EQ(run("index --embeddings " + model + "/motions.embs --out " + model + "/index.midx")
                .exit_code,
            0);
  const Outcome res =
      run("search --index " + model + "/index.midx --k 4 --text \"a person walks\"");
  ASSERT_EQ(res.exit_code, 0);
  std::istringstream lines(res.out);
  const std::regex format(R"((\d+) (\S+) (-?\d\.\d{6}))");
  int n = 0;
  double prev = 2.0;
  for (std::string line; std::getline(lines, line);) {
    std::smatch m;
    ASSERT_TRUE(std::regex_match(line, m, format)) << line;
    EXPECT_EQ(std::stoi(m[1]), ++n);
    const double score = std::stod(m[3]);
    EXPECT_LE(score, prev);
    prev = score;
  }
  EXPECT_EQ(n, 4);
}

}  // namespace
