#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cli.hpp"
#include "helpers.hpp"
#include "tvcov/engine.hpp"
#include "tvcov/kernel.hpp"
#include "tvcov/panel_io.hpp"

using testing::TempDir;
using testing::read_file;
using testing::write_file;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = tvcov::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kSimConfig = R"({
  "N": 30, "T": 60, "replications": 2, "seed": 1,
  "h_grid": [0.1, 0.2], "C_grid": [0.5], "anchors": [20, 30, 40]
})";

std::string generate_dataset(const TempDir& dir) {
  const std::string out = (dir / "data").string();
  const Outcome g = run_cli({"generate", "--N", "20", "--T", "80", "--seed", "3", "--out", out, "--threads", "1"});
  REQUIRE(g.code == 0);
  return out;
}

}  // namespace

TEST_CASE("simulate smoke run, determinism and replay") {
  TempDir dir("cli");
  write_file(dir / "sim.json", kSimConfig);
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  const Outcome ra = run_cli({"simulate", "--config", (dir / "sim.json").string(), "--out", a, "--threads", "1"});
  REQUIRE(ra.code == 0);
  for (const char* f : {"mc_results.csv", "mc_summary.csv", "mc_status.json", "manifest.json"})
    CHECK(std::filesystem::exists(std::filesystem::path(a) / f));
  const Outcome rb = run_cli({"simulate", "--config", (dir / "sim.json").string(), "--out", b, "--threads", "3"});
  REQUIRE(rb.code == 0);
  CHECK(read_file(std::filesystem::path(a) / "mc_results.csv") == read_file(std::filesystem::path(b) / "mc_results.csv"));
  CHECK(read_file(std::filesystem::path(a) / "mc_summary.csv") == read_file(std::filesystem::path(b) / "mc_summary.csv"));

  const auto manifest = nlohmann::json::parse(read_file(std::filesystem::path(a) / "manifest.json"));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["config"]["N"] == 30);
  CHECK(manifest["outputs"].size() == 3);
  CHECK(manifest["outputs"]["mc_results.csv"] == tvcov::cli::fnv1a_file(std::filesystem::path(a) / "mc_results.csv"));

  const Outcome rep = run_cli({"replay", "--manifest", (std::filesystem::path(a) / "manifest.json").string(), "--out",
                               (dir / "c").string(), "--threads", "2"});
  CHECK(rep.code == 0);
  CHECK(rep.out.find("3/3 outputs reproduced") != std::string::npos);
}

TEST_CASE("config errors name the field") {
  TempDir dir("cli");
  write_file(dir / "bad.json", R"({"N": 30, "T": 60, "regime": "wiggly"})");
  Outcome r = run_cli({"simulate", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("regime") != std::string::npos);

  write_file(dir / "typo.json", R"({"N": 30, "T": 60, "replicatoins": 2})");
  r = run_cli({"simulate", "--config", (dir / "typo.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("replicatoins") != std::string::npos);

  write_file(dir / "type.json", R"({"N": "thirty"})");
  r = run_cli({"simulate", "--config", (dir / "type.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("N") != std::string::npos);

  r = run_cli({"simulate", "--regime", "wiggly", "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("--regime") != std::string::npos);

  r = run_cli({"simulate", "--N", "5", "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("N") != std::string::npos);
}

TEST_CASE("usage errors and help") {
  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"simulate"}).code == 2);
  const Outcome h = run_cli({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("backtest") != std::string::npos);
}

TEST_CASE("generate writes a loadable dataset") {
  TempDir dir("cli");
  const std::filesystem::path data = generate_dataset(dir);
  const tvcov::PanelData p = tvcov::load_panel(data / "panel.csv");
  CHECK(p.N() == 20);
  CHECK(p.T() == 80);
  const auto c = tvcov::load_characteristics({data / "size.csv", data / "momentum.csv"}, p);
  CHECK(c.names == std::vector<std::string>{"size", "momentum"});
  CHECK(std::filesystem::exists(data / "factors.csv"));
}

TEST_CASE("estimate outputs and flags") {
  TempDir dir("cli");
  const std::filesystem::path data = generate_dataset(dir);
  const std::string panel = (data / "panel.csv").string();
  const std::string out = (dir / "est").string();

  Outcome r = run_cli({"estimate", "--panel", panel, "--method", "local-pca", "--anchors", "1,40,80", "--h", "0.1",
                       "--out", out, "--threads", "1"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(read_file(std::filesystem::path(out) / "anchor_0001.json"));
  CHECK(j["boundary_flag"] == "left-boundary");
  const auto mid = nlohmann::json::parse(read_file(std::filesystem::path(out) / "anchor_0040.json"));
  CHECK(mid["boundary_flag"] == "interior");
  CHECK(nlohmann::json::parse(read_file(std::filesystem::path(out) / "anchor_0080.json"))["boundary_flag"] ==
        "right-boundary");
  CHECK(std::filesystem::exists(std::filesystem::path(out) / "anchor_0040_sigma_y_inv.csv"));
  CHECK(std::filesystem::exists(std::filesystem::path(out) / "rates.json"));

  // The construction identity holds in the written JSON.
  const auto mat = [&](const char* key) { return tvcov::matrix_from_json(mid[key]); };
  const Eigen::MatrixXd L = mat("loadings");
  const Eigen::MatrixXd S = L * mat("factor_cov") * L.transpose() + mat("sigma_u");
  CHECK((S - mat("sigma_y")).norm() <= 1e-10 * S.norm());

  r = run_cli({"estimate", "--panel", panel, "--method", "local-ppca", "--out", out});
  CHECK(r.code == 2);

  const std::string out2 = (dir / "est2").string();
  r = run_cli({"estimate", "--panel", panel, "--chars", (data / "size.csv").string(), (data / "momentum.csv").string(),
               "--method", "local-ppca", "--anchors", "interior", "--h", "0.1", "--out", out2, "--threads", "1"});
  REQUIRE(r.code == 0);
  const std::string summary = read_file(std::filesystem::path(out2) / "estimates.csv");
  const auto [lo, hi] = tvcov::interior_region(80, 0.1);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + (hi - lo + 1));

  r = run_cli({"estimate", "--panel", (dir / "missing.csv").string(), "--out", out});
  CHECK(r.code == 3);
  r = run_cli({"estimate", "--panel", panel, "--anchors", "0", "--out", out});
  CHECK(r.code == 2);
}

TEST_CASE("backtest summary rows, constants and replay") {
  TempDir dir("cli");
  const std::filesystem::path data = generate_dataset(dir);
  const std::string panel = (data / "panel.csv").string();
  const std::string out = (dir / "bt").string();
  Outcome r = run_cli({"backtest", "--panel", panel, "--estimator", "sample", "--estimator", "local-pca", "--training",
                       "50", "--holding", "10", "--h", "0.2", "--out", out, "--threads", "1"});
  REQUIRE(r.code == 0);
  const std::string summary = read_file(std::filesystem::path(out) / "backtest_summary.csv");
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
  CHECK(summary.find("\nsample,") != std::string::npos);
  CHECK(summary.find("\nlocal-pca,") != std::string::npos);

  const std::string again = (dir / "bt2").string();
  r = run_cli({"backtest", "--panel", panel, "--estimator", "sample", "--estimator", "local-pca", "--training", "50",
               "--holding", "10", "--h", "0.2", "--out", again, "--threads", "2"});
  REQUIRE(r.code == 0);
  CHECK(read_file(std::filesystem::path(again) / "backtest_summary.csv") == summary);

  r = run_cli({"replay", "--manifest", (std::filesystem::path(out) / "manifest.json").string(), "--out",
               (dir / "bt3").string()});
  CHECK(r.code == 0);

  // Constant held returns.
  tvcov::PanelData p = tvcov::load_panel(panel);
  p.values.rightCols(30).setConstant(0.002);
  tvcov::save_panel(dir / "flat.csv", p);
  const std::string flat = (dir / "flat_out").string();
  r = run_cli({"backtest", "--panel", (dir / "flat.csv").string(), "--estimator", "sample", "--estimator",
               "static-pca", "--training", "50", "--holding", "10", "--out", flat});
  REQUIRE(r.code == 0);
  std::istringstream rows(read_file(std::filesystem::path(flat) / "backtest_summary.csv"));
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    const auto c = line.find(',', b + 1);
    CHECK(std::abs(std::stod(line.substr(b + 1, c - b - 1))) < 1e-10);
  }

  r = run_cli({"backtest", "--panel", panel, "--estimator", "shrinkage", "--out", out});
  CHECK(r.code == 2);
}

TEST_CASE("replay detects tampered inputs") {
  TempDir dir("cli");
  const std::filesystem::path data = generate_dataset(dir);
  const std::filesystem::path copy = dir / "panel.csv";
  std::filesystem::copy_file(data / "panel.csv", copy);
  const std::string out = (dir / "bt").string();
  REQUIRE(run_cli({"backtest", "--panel", copy.string(), "--training", "60", "--holding", "10", "--out", out}).code ==
          0);
  std::string text = read_file(copy);
  text += "\n";
  write_file(copy, text);
  const Outcome r = run_cli({"replay", "--manifest", (std::filesystem::path(out) / "manifest.json").string(), "--out",
                             (dir / "again").string()});
  CHECK(r.code == 3);
}

TEST_CASE("fnv1a of known strings") {
  TempDir dir("cli");
  write_file(dir / "empty", "");
  CHECK(tvcov::cli::fnv1a_file(dir / "empty") == "cbf29ce484222325");
  write_file(dir / "a", "a");
  CHECK(tvcov::cli::fnv1a_file(dir / "a") == "af63dc4c8601ec8c");
}
