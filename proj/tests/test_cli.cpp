#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "dfc/checkpoint.hpp"
#include "dfc/cloud.hpp"
#include "dfc/geometry.hpp"
#include "dfc/training.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(DFC_SOURCE_DIR) / "data" / "fixtures";

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dfc_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Runs the CLI with stdout/stderr captured to files; returns the exit code.
int run(const std::string& args, const fs::path& log_dir) {
  const std::string cmd = std::string("\"") + DFC_CLI_PATH + "\" " + args + " >\"" +
                          (log_dir / "stdout.txt").string() + "\" 2>\"" + (log_dir / "stderr.txt").string() +
                          "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A small untrained checkpoint so the tests do not depend on the shipped one.
fs::path tiny_checkpoint(const fs::path& dir) {
  dfc::Rng rng(5);
  const dfc::DfcModel model(dfc::GfmConfig::desk(), {16, 8}, rng);
  const fs::path p = dir / "tiny.json";
  dfc::save_checkpoint(model, p);
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  const auto d = scratch("usage");
  CHECK(run("register --dst " + (kFixtures / "dst.ply").string() + " --out " + (d / "o").string(), d) == 1);
  CHECK(slurp(d / "stderr.txt").find("--src") != std::string::npos);
  CHECK(run("", d) == 1);
  CHECK(run("benchmark --methods dfc,teaser --pairs 1 --out " + (d / "o").string(), d) == 1);
  const auto err = slurp(d / "stderr.txt");
  CHECK(err.find("teaser") != std::string::npos);
  CHECK(err.find("ransac") != std::string::npos);
  CHECK(run("selfcheck --set registration.bogus=1", d) == 1);
}

TEST_CASE("register the shipped noise-free fixture") {
  const auto d = scratch("register");
  const auto ckpt = tiny_checkpoint(d);
  const std::string base = "register --src " + (kFixtures / "src.ply").string() + " --dst " +
                           (kFixtures / "dst.ply").string() + " --src-features " +
                           (kFixtures / "src_features.csv").string() + " --dst-features " +
                           (kFixtures / "dst_features.csv").string() + " --checkpoint " + ckpt.string();
  REQUIRE(run(base + " --out " + (d / "a").string(), d) == 0);
  const auto est = dfc::load_transform(d / "a" / "transform.txt");
  const auto gt = dfc::load_transform(kFixtures / "gt.txt");
  CHECK((est.matrix() - gt.matrix()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(dfc::orthonormality_error(est.rotation) < 1e-9);
  const auto plain = nlohmann::json::parse(slurp(d / "a" / "transform.json"));
  CHECK_FALSE(plain.contains("re_deg"));

  REQUIRE(run(base + " --gt " + (kFixtures / "gt.txt").string() + " --out " + (d / "b.txt").string(), d) == 0);
  const auto j = nlohmann::json::parse(slurp(d / "b.json"));
  CHECK(j.contains("schema_version"));
  REQUIRE(j.contains("re_deg"));
  REQUIRE(j.contains("te"));
  CHECK(j["re_deg"].get<double>() < 1e-6);
  CHECK(j["success"].get<bool>());
}

TEST_CASE("benchmark output is deterministic and lists one row per method") {
  const auto d = scratch("bench");
  const auto ckpt = tiny_checkpoint(d);
  const std::string base = "benchmark --suite synthetic --pairs 5 --seed 7 --set suite.data.n_points=300 "
                           "--methods dfc,ransac-1k --checkpoint " + ckpt.string();
  REQUIRE(run(base + " --out " + (d / "r1").string(), d) == 0);
  REQUIRE(run(base + " --threads 3 --out " + (d / "r2").string(), d) == 0);
  const auto a = slurp(d / "r1" / "report.json");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(d / "r2" / "report.json"));
  const auto j = nlohmann::json::parse(a);
  CHECK(j["methods"].size() == 2);
  const auto csv = slurp(d / "r1" / "summary.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  const auto table = slurp(d / "stdout.txt");
  CHECK(table.find("dfc") != std::string::npos);
  CHECK(table.find("ransac-1k") != std::string::npos);
}

TEST_CASE("train with zero epochs writes the initial state") {
  const auto d = scratch("train");
  REQUIRE(run("train --seed 11 --set train.epochs=0 --set train.train_pairs=2 --set train.val_pairs=2 "
              "--set train.data.n_points=200 --out " + (d / "t").string(), d) == 0);
  const auto saved = dfc::load_checkpoint(d / "t" / "checkpoint.json");
  dfc::TrainConfig cfg;
  dfc::Rng rng(11);
  const dfc::DfcModel init(cfg.gfm, cfg.mlp_hidden, rng);
  CHECK(dfc::same_state(saved, init));
  CHECK(fs::exists(d / "t" / "trace.csv"));
  CHECK(slurp(d / "t" / "trace.csv").rfind("epoch,l_c,l_t,total", 0) == 0);
}

TEST_CASE("selfcheck passes on this build") {
  const auto d = scratch("selfcheck");
  CHECK(run("selfcheck", d) == 0);
  const auto out = slurp(d / "stdout.txt");
  CHECK(out.find("PASS") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);
}
