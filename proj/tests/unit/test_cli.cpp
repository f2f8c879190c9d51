#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "convad/image_io.hpp"
#include "convad/model_io.hpp"

using namespace convad;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(CONVAD_CLI_PATH) + " " + args + " 2>/dev/null";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

// Synthetic models and images shared by every test in this file.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "convad_cli";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run_cli("synth model --name square --out " + path("square")).status, 0);
    ASSERT_EQ(run_cli("synth model --name constant --out " + path("constant")).status, 0);
    ASSERT_EQ(run_cli("synth model --name mixed --seed 3 --out " + path("mixed")).status, 0);
    ASSERT_EQ(run_cli("synth dataset --count 4 --seed 5 --out " + path("data")).status, 0);
  }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static std::string image() { return path("data/img_001.ppm"); }

  static fs::path dir_;
};

fs::path Cli::dir_;

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_F(Cli, InferPrintsRankedScores) {
  const CliResult plain = run_cli("infer --model " + path("square") + " --image " + image());
  ASSERT_EQ(plain.status, 0);
  const auto rows = lines(plain.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].substr(0, rows[0].find('\t')), "2");
  EXPECT_NE(rows[0].find("top_right"), std::string::npos);

  write_mask_pgm(path("ones.pgm"), BinaryMask::ones(16, 16));
  const CliResult ad = run_cli("infer --ad --model " + path("square") + " --image " + image() + " --mask " + path("ones.pgm"));
  EXPECT_EQ(ad.status, 0);
  EXPECT_EQ(ad.out, plain.out);
  const CliResult zero = run_cli("infer --occlude zero --model " + path("square") + " --image " + image() +
                           " --mask " + path("ones.pgm"));
  EXPECT_EQ(zero.out, plain.out);
  const CliResult top1 = run_cli("infer --top-k 1 --model " + path("square") + " --image " + image());
  EXPECT_EQ(lines(top1.out).size(), 1u);
}

TEST_F(Cli, InferUsageErrors) {
  EXPECT_EQ(run_cli("infer --ad --model " + path("square") + " --image " + image()).status, 2);
  EXPECT_EQ(run_cli("infer --model " + path("nope") + " --image " + image()).status, 2);
  EXPECT_EQ(run_cli("infer --model " + path("square") + " --image " + image() +
                    " --mask '{\"height\":2,\"width\":2,\"start\":1,\"runs\":[4]}' --ad").status,
            2);
  EXPECT_EQ(run_cli("bogus").status, 2);
  EXPECT_EQ(run_cli("--help").status, 0);
}

TEST_F(Cli, ExplainIsDeterministic) {
  const std::string args = "explain --model " + path("square") + " --image " + image() +
                           " --gamma 0.5,0.9 --seed 4 --out ";
  ASSERT_EQ(run_cli(args + path("ex1")).status, 0);
  ASSERT_EQ(run_cli(args + path("ex2")).status, 0);
  for (const char* name : {"img_001_ad_0.5.pgm", "img_001_ad_0.9.pgm", "img_001_ad_0.9.json"}) {
    EXPECT_EQ(read_text_file(fs::path(path("ex1")) / name), read_text_file(fs::path(path("ex2")) / name)) << name;
  }
  const auto side = nlohmann::json::parse(read_text_file(fs::path(path("ex1")) / "img_001_ad_0.9.json"));
  EXPECT_EQ(side["seed"], 4);
  EXPECT_EQ(side["engine"], "ad");
  EXPECT_GE(side["confidence"].get<double>(), 0.9 * side["original_confidence"].get<double>());
}

TEST_F(Cli, ExplainConstantModelKeepsWholeImage) {
  ASSERT_EQ(run_cli("explain --model " + path("constant") + " --image " + image() +
                    " --gamma 1 --seed 1 --out " + path("exc")).status,
            0);
  EXPECT_TRUE(read_mask_pgm(fs::path(path("exc")) / "img_001_ad_1.pgm").all());
  EXPECT_EQ(run_cli("explain --model " + path("constant") + " --image " + image() +
                    " --gamma 1.5 --seed 1 --out " + path("exc")).status,
            2);
}

TEST_F(Cli, EvaluateWritesIdenticalReports) {
  const std::string args = "evaluate --model " + path("square") + " --dataset " + path("data") +
                           " --engines ad,zero --gammas 0,0.9 --backgrounds 2 --seed 3 --no-explanations --out ";
  const CliResult a = run_cli(args + path("ev1"));
  const CliResult b = run_cli(args + path("ev2"));
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out, b.out);
  const auto rows = lines(a.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "engine,gamma,rho_solid,rho_iid,mean_size,mean_confidence,n");
  EXPECT_EQ(read_text_file(fs::path(path("ev1")) / "report.csv"), a.out);
  EXPECT_EQ(run_cli(args + path("ev3") + " --engines warp").status, 2);
}

TEST_F(Cli, VerifyEquivalence) {
  const CliResult ok = run_cli("verify-equivalence --model " + path("mixed") + " --trials 20");
  EXPECT_EQ(ok.status, 0);
  const auto rows = lines(ok.out);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) EXPECT_NE(row.find("\tPASS\t"), std::string::npos) << row;

  const CliResult bad = run_cli("verify-equivalence --model " + path("mixed") + " --trials 5 --corrupt-checkpoint 2");
  EXPECT_EQ(bad.status, 1);
  EXPECT_NE(bad.out.find("first_divergence=position 2"), std::string::npos) << bad.out;

  EXPECT_EQ(run_cli("verify-equivalence --model " + path("mixed") + " --corrupt-checkpoint 1").status, 2);
  EXPECT_EQ(run_cli("verify-equivalence --model " + path("mixed") + " --tau 1.0").status, 2);
}
