#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "unisoma/cli.hpp"

using namespace unisoma;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "unisoma");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("unisoma_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"generate", "--no-such-flag", "1"}).code == kExitUsage);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("verify passes") {
  const Run r = cli({"verify", "--cases", "20"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("gradcheck passes") { CHECK(cli({"gradcheck", "--seed", "3"}).code == kExitOk); }

TEST_CASE("bad configuration values are named and exit with 2") {
  const fs::path dir = scratch("badcfg");
  const Run r = cli({"generate", "--trajectories", "0", "--out", (dir / "d").string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("trajectories") != std::string::npos);

  std::ofstream(dir / "cfg.json") << R"({"lattice_dim": [2, 2, 2]})";
  const Run f = cli({"generate", "--config", (dir / "cfg.json").string(), "--out", (dir / "e").string()});
  CHECK(f.code == kExitValidation);
  CHECK(f.err.find("lattice_dim") != std::string::npos);
}

TEST_CASE("eval without a checkpoint fails cleanly") {
  const fs::path dir = scratch("nockpt");
  const Run r = cli({"eval", "--checkpoint", (dir / "none.ckpt").string(), "--data", dir.string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("none.ckpt") != std::string::npos);
}

TEST_CASE("generate, train, eval and rollout end to end") {
  const fs::path dir = scratch("e2e");
  const std::string data = (dir / "data").string();
  const std::string ckpt = (dir / "model.ckpt").string();

  Run g = cli({"generate", "--scenario", "cavity_grip", "--trajectories", "4", "--steps", "3", "--split",
               "[0.5,0.25,0.25]", "--seed", "2", "--out", data});
  REQUIRE(g.code == kExitOk);
  CHECK(g.out.find("train,2") != std::string::npos);

  // A second generation with the same seed reproduces every byte.
  const std::string again = (dir / "again").string();
  REQUIRE(cli({"generate", "--scenario", "cavity_grip", "--trajectories", "4", "--steps", "3", "--split",
               "[0.5,0.25,0.25]", "--seed", "2", "--out", again})
              .code == kExitOk);
  for (const auto& e : fs::recursive_directory_iterator(data)) {
    if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(fs::path(again) / fs::relative(e.path(), data)));
  }

  Run t = cli({"train", "--data", data, "--epochs", "2", "--channels", "8", "--slices", "4", "--out", ckpt});
  REQUIRE(t.code == kExitOk);
  CHECK(fs::exists(ckpt));
  CHECK(slurp(dir / "model.history.csv").rfind("epoch,train_loss,val_loss\n", 0) == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "model.summary.json"));
  CHECK(summary.contains("best_epoch"));

  Run e = cli({"eval", "--data", data, "--checkpoint", ckpt, "--json", (dir / "m.json").string()});
  REQUIRE(e.code == kExitOk);
  CHECK(e.out.find("solid,quantity,relative_l2,rmse,count") != std::string::npos);
  CHECK(e.out.find("rmse_all,") != std::string::npos);
  CHECK(nlohmann::json::parse(slurp(dir / "m.json")).contains("rows"));

  Run z = cli({"eval", "--data", data, "--predictor", "freeze"});
  CHECK(z.code == kExitOk);

  Run r = cli({"rollout", "--data", data, "--checkpoint", ckpt, "--steps", "3", "--out", (dir / "roll").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(dir / "roll" / "rollout.csv"));
  CHECK(fs::exists(dir / "roll" / "metrics.json"));

  // Unknown training key is named.
  Run bad = cli({"train", "--data", data, "--epoch", "2", "--out", ckpt});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("--epoch") != std::string::npos);
}

TEST_CASE("the installed binary maps exit codes") {
  const std::string bin = UNISOMA_CLI_PATH;
  CHECK(WEXITSTATUS(std::system((bin + " frobnicate >/dev/null 2>&1").c_str())) == kExitUsage);
  CHECK(WEXITSTATUS(std::system((bin + " eval --checkpoint /nonexistent/x.ckpt --data /nonexistent >/dev/null 2>&1").c_str())) ==
        kExitValidation);
  CHECK(WEXITSTATUS(std::system((bin + " verify --cases 10 >/dev/null 2>&1").c_str())) == kExitOk);
}

}  // TEST_SUITE
