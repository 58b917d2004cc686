#include "vrae/cli.hpp"
#include "vrae/data.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using vrae::Tensor4;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result vrae_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = vrae::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("vrae_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root / "img");
    for (int k = 0; k < 12; ++k) {
      Tensor4 img({1, 3, 40, 40});
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 40; ++i)
          for (std::size_t j = 0; j < 40; ++j)
            img.at(0, c, i, j) = float(0.5 + 0.3 * std::sin(0.1 * i * (1 + 0.2 * k) + c + k) * std::cos(0.13 * j));
      char name[32];
      std::snprintf(name, sizeof name, "p%02d.png", k);
      vrae::data::save_png(root / "img" / name, img);
    }
    std::ofstream(root / "img" / "corrupt.png") << "not an image";
    ASSERT_EQ(vrae_cli({"prepare", "--input", (root / "img").string(), "--out", (root / "ds").string(), "--seed",
                        "5", "--augment-to", "12"})
                  .code,
              0);
  }

  static void TearDownTestSuite() { fs::remove_all(root); }

  static std::string p(const std::string& rel) { return (root / rel).string(); }

  static std::vector<std::string> train_args(const std::string& arch, const std::string& out, int epochs) {
    return {"train", "--arch", arch, "--depth", "2", "--epochs", std::to_string(epochs), "--batch", "4", "--seed",
            "7", "--data", p("ds"), "--out", p(out), "--image-size", "32", "--width-div", "16"};
  }
};

fs::path Cli::root;

}  // namespace

TEST_F(Cli, PrepareWritesManifestAndRunJson) {
  const auto manifest = slurp(root / "ds" / "manifest.csv");
  EXPECT_EQ(manifest.substr(0, manifest.find('\n')), "path,split,angle_deg");
  EXPECT_EQ(manifest.find("corrupt"), std::string::npos);
  const auto run = nlohmann::json::parse(slurp(root / "ds" / "run.json"));
  EXPECT_EQ(run["command"], "prepare");
  EXPECT_EQ(run["settings"]["seed"], 5);
  EXPECT_EQ(run["settings"]["source_images"], 12);

  ASSERT_EQ(vrae_cli({"prepare", "--input", p("img"), "--out", p("ds2"), "--seed", "5", "--augment-to", "12"}).code, 0);
  EXPECT_EQ(slurp(root / "ds2" / "manifest.csv"), manifest);
}

TEST_F(Cli, DegradeWritesPngsDeterministically) {
  for (const char* dir : {"deg_a", "deg_b"})
    ASSERT_EQ(vrae_cli({"degrade", "--in", p("img"), "--out", p(dir), "--noise", "zero-mean", "--pool-iters", "3",
                        "--seed", "2"})
                  .code,
              0);
  EXPECT_EQ(slurp(root / "deg_a" / "p03.png"), slurp(root / "deg_b" / "p03.png"));
  EXPECT_TRUE(fs::exists(root / "deg_a" / "run.json"));
}

TEST_F(Cli, TrainTwiceGivesIdenticalLossLogsAndCheckpoints) {
  ASSERT_EQ(vrae_cli(train_args("vrae", "t1/m.ckpt", 2)).code, 0);
  ASSERT_EQ(vrae_cli(train_args("vrae", "t2/m.ckpt", 2)).code, 0);
  const auto log = slurp(root / "t1" / "m.ckpt.loss.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,train_mse,val_mse");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  EXPECT_EQ(log, slurp(root / "t2" / "m.ckpt.loss.csv"));
  EXPECT_EQ(slurp(root / "t1" / "m.ckpt"), slurp(root / "t2" / "m.ckpt"));
  EXPECT_TRUE(fs::exists(root / "t1" / "m.ckpt.best"));
  const auto run = nlohmann::json::parse(slurp(root / "t1" / "m.ckpt.run.json"));
  EXPECT_EQ(run["settings"]["depth"], 2);
  EXPECT_EQ(run["settings"]["degradation"]["pool_iterations"], 10);
}

TEST_F(Cli, EvalOnUntrainedCheckpointGivesCompleteRow) {
  ASSERT_EQ(vrae_cli(train_args("ae", "u/ae.ckpt", 0)).code, 0);
  const auto r = vrae_cli({"eval", "--ckpt", p("u/ae.ckpt"), "--data", p("ds"), "--report", p("u/report.csv"),
                           "--fps-iters", "3", "--fps-warmup", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(root / "u" / "report.csv");
  std::istringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "model,psnr_db,nmse,ssim,fps,params,threads,hardware");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 7);
  EXPECT_EQ(row.substr(0, 4), "AE2,");
  for (std::size_t i = 0, start = 0; i < 8; ++i) {
    const auto end = row.find(',', start);
    EXPECT_FALSE(row.substr(start, end - start).empty()) << "field " << i;
    start = end + 1;
  }
  EXPECT_TRUE(fs::exists(root / "u" / "report.csv.run.json"));

  ASSERT_EQ(vrae_cli({"eval", "--ckpt", p("u/ae.ckpt"), "--data", p("ds"), "--report", p("u/report.csv"),
                      "--fps-iters", "0", "--append", "--label", "again"})
                .code,
            0);
  const auto appended = slurp(root / "u" / "report.csv");
  EXPECT_EQ(std::count(appended.begin(), appended.end(), '\n'), 3);
  EXPECT_NE(appended.find("\nagain,"), std::string::npos);
}

TEST_F(Cli, BenchReportsPositiveFps) {
  ASSERT_EQ(vrae_cli(train_args("vrae", "b/v.ckpt", 0)).code, 0);
  const auto r = vrae_cli({"bench", "--ckpt", p("b/v.ckpt"), "--iters", "5", "--threads", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(root / "b" / "v.ckpt.bench.json"));
  EXPECT_GT(j["settings"]["fps"].get<double>(), 0.0);
  EXPECT_EQ(j["settings"]["threads"], 1);
}

TEST_F(Cli, EntropyCsvAndSvgReproducible) {
  ASSERT_EQ(vrae_cli(train_args("ae", "e/ae.ckpt", 0)).code, 0);
  ASSERT_EQ(vrae_cli(train_args("vrae", "e/vrae.ckpt", 0)).code, 0);
  for (const char* tag : {"1", "2"}) {
    const auto r = vrae_cli({"entropy", "--ckpt-a", p("e/ae.ckpt"), "--ckpt-b", p("e/vrae.ckpt"), "--data", p("ds"),
                             "--out", p(std::string("e/ent") + tag + ".csv"), "--svg",
                             p(std::string("e/ent") + tag + ".svg"), "--no-timestamp"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto csv = slurp(root / "e" / "ent1.csv");
  EXPECT_EQ(csv, slurp(root / "e" / "ent2.csv"));
  EXPECT_EQ(slurp(root / "e" / "ent1.svg"), slurp(root / "e" / "ent2.svg"));
  EXPECT_NE(csv.find("AE2,1,"), std::string::npos);
  EXPECT_NE(csv.find("VRAE2,2,"), std::string::npos);
  const auto run = nlohmann::json::parse(slurp(root / "e" / "ent1.csv.run.json"));
  EXPECT_EQ(run["settings"]["entropy"]["bins"], 256);
  EXPECT_EQ(run["settings"]["entropy"]["log_base"], "e");
}

TEST_F(Cli, ParetoOverPublishedRowsMarksExpectedFront) {
  const std::string table = std::string(VRAE_TEST_DATA_DIR) + "/comparison.csv";
  const auto r = vrae_cli({"pareto", "--metrics", table, "--x", "fps", "--y", "psnr", "--out", p("pareto.csv"),
                           "--svg", p("pareto.svg"), "--no-timestamp"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(root / "pareto.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "model,quality_metric,quality,fps,params,on_front");
  std::vector<std::string> on;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.ends_with(",true")) on.push_back(line.substr(0, line.find(',')));
  }
  EXPECT_EQ(rows, 10);
  EXPECT_EQ(on, (std::vector<std::string>{"AE2", "VRAE2", "VRAE3"}));
  const auto first = slurp(root / "pareto.svg");
  ASSERT_EQ(vrae_cli({"pareto", "--metrics", table, "--y", "psnr", "--out", p("pareto2.csv"), "--svg",
                      p("pareto2.svg"), "--no-timestamp"})
                .code,
            0);
  EXPECT_EQ(slurp(root / "pareto2.csv"), slurp(root / "pareto.csv"));
  EXPECT_EQ(slurp(root / "pareto2.svg"), first);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(vrae_cli({"train", "--depth", "6", "--data", p("ds"), "--out", p("x.ckpt")}).code, 2);
  EXPECT_EQ(vrae_cli({"pareto", "--metrics", "m.csv", "--out", "o.csv", "--bogus"}).code, 2);
  EXPECT_EQ(vrae_cli({"pareto", "--metrics", "m.csv", "--out", "o.csv", "--y", "fps"}).code, 2);
  EXPECT_EQ(vrae_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(vrae_cli({}).code, 2);
  EXPECT_EQ(vrae_cli({"--help"}).code, 0);
}

TEST_F(Cli, MissingFilesExitOneNamingThePath) {
  const auto r = vrae_cli({"eval", "--ckpt", p("nope.ckpt"), "--data", p("ds"), "--report", p("r.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nope.ckpt"), std::string::npos);
  const auto d = vrae_cli({"train", "--data", p("no_such_dir"), "--out", p("x.ckpt")});
  EXPECT_EQ(d.code, 1);
  EXPECT_NE(d.err.find("no_such_dir"), std::string::npos);
  const auto m = vrae_cli({"pareto", "--metrics", p("absent.csv"), "--out", p("o.csv")});
  EXPECT_EQ(m.code, 1);
  EXPECT_NE(m.err.find("absent.csv"), std::string::npos);
}
