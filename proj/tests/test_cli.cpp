#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "stdiff/data.hpp"
#include "stdiff/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
  const char* p = std::getenv("STDIFF_CLI");
  REQUIRE_MESSAGE(p != nullptr, "STDIFF_CLI must point at the CLI binary");
  return p;
}

int run_cli(const std::string& args, const fs::path& log) {
  std::string cmd = "\"" + cli_path() + "\" " + args + " > \"" + log.string() +
                    "\" 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), ("missing file " + p.string()).c_str());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() /
           ("stdiff_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  fs::path operator/(const std::string& s) const { return root / s; }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

void write_sine_csv(const fs::path& p, int T, int K) {
  std::ostringstream ss;
  for (int k = 0; k < K; ++k) ss << (k ? "," : "") << "f" << k;
  ss << "\n";
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k)
      ss << (k ? "," : "")
         << 5.0 + 2.0 * std::sin(2 * M_PI * (k + 1) * t / 12.0 + 0.3 * k);
    ss << "\n";
  }
  write_file(p, ss.str());
}

json base_config(const fs::path& data, const fs::path& out) {
  return json{
      {"dataset", {{"path", data.string()}, {"window", 12}, {"stride", 1}}},
      {"model", {{"width", 6}}},
      {"diffusion", {{"steps", 15}}},
      {"lma", {{"hidden", 8}}},
      {"train", {{"epochs", 2}, {"batch", 16}, {"lr", 0.002}}},
      {"metrics",
       {{"iterations", 40}, {"batch", 32}, {"encoder_iterations", 40}}},
      {"seed", 11},
      {"out", out.string()}};
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  Workspace ws;
  CHECK(run_cli("", ws / "log0.txt") == 2);
  CHECK(run_cli("train", ws / "log1.txt") == 2);  // --config required
  CHECK(run_cli("frobnicate", ws / "log2.txt") == 2);

  // config with an unknown key
  write_file(ws / "bad.json", R"({"modell": {"width": 4}})");
  CHECK(run_cli("train --config " + (ws / "bad.json").string(),
                ws / "log3.txt") == 2);

  // config without a dataset path
  write_file(ws / "nodata.json", R"({"model": {"width": 4}})");
  CHECK(run_cli("train --config " + (ws / "nodata.json").string(),
                ws / "log4.txt") == 2);

  // dataset file that does not exist
  write_file(ws / "ghost.json",
             json{{"dataset", {{"path", (ws / "ghost.csv").string()}}}}.dump());
  CHECK(run_cli("train --config " + (ws / "ghost.json").string(),
                ws / "log5.txt") == 2);
}

TEST_CASE("train / sample / evaluate / decompose / plot workflow") {
  Workspace ws;
  write_sine_csv(ws / "data.csv", 140, 2);
  json cfg = base_config(ws / "data.csv", ws / "run1");
  write_file(ws / "config.json", cfg.dump(2));

  // train twice with the same seed: loss curves must be bit-identical
  REQUIRE(run_cli("train --config " + (ws / "config.json").string(),
                  ws / "train1.log") == 0);
  REQUIRE(run_cli("train --config " + (ws / "config.json").string() +
                      " --out " + (ws / "run2").string(),
                  ws / "train2.log") == 0);
  CHECK(fs::exists(ws / "run1/checkpoint/manifest.json"));
  CHECK(fs::exists(ws / "run1/checkpoint/params.bin"));
  CHECK(fs::exists(ws / "run1/config.json"));
  CHECK(slurp(ws / "run1/loss.csv") == slurp(ws / "run2/loss.csv"));

  const std::string ckpt = (ws / "run1/checkpoint").string();

  // sampling: shape contract, empty artifact, seeded reproducibility
  REQUIRE(run_cli("sample " + ckpt + " --n 40 --seed 3 --out " +
                      (ws / "samples").string(),
                  ws / "sample1.log") == 0);
  json manifest = json::parse(slurp(ws / "samples/manifest.json"));
  CHECK(manifest["shape"] == json({40, 12, 2}));
  CHECK(slurp(ws / "samples/samples.bin").size() == 40u * 12u * 2u * 4u);

  REQUIRE(run_cli("sample " + ckpt + " --n 40 --seed 3 --out " +
                      (ws / "samples_b").string(),
                  ws / "sample2.log") == 0);
  CHECK(slurp(ws / "samples/samples.bin") ==
        slurp(ws / "samples_b/samples.bin"));

  REQUIRE(run_cli("sample " + ckpt + " --n 0 --out " + (ws / "empty").string(),
                  ws / "sample3.log") == 0);
  json empty_manifest = json::parse(slurp(ws / "empty/manifest.json"));
  CHECK(empty_manifest["shape"] == json({0, 12, 2}));

  // evaluation: report with all four metrics
  REQUIRE(run_cli("evaluate " + (ws / "data.csv").string() + " " +
                      (ws / "samples").string() + " --trials 2 --config " +
                      (ws / "config.json").string() + " --out " +
                      (ws / "eval").string(),
                  ws / "eval.log") == 0);
  json report = json::parse(slurp(ws / "eval/report.json"));
  for (const char* name :
       {"discriminative", "predictive", "context_fid", "correlational"}) {
    CHECK(report.contains(name));
    CHECK(report[name]["mean"].get<double>() >= 0.0);
  }
  CHECK(report["discriminative"]["trials"] == 2);
  CHECK(fs::exists(ws / "eval/report.txt"));

  // evaluation with an incompatible feature count is a usage error
  write_sine_csv(ws / "data3.csv", 60, 3);
  CHECK(run_cli("evaluate " + (ws / "data3.csv").string() + " " +
                    (ws / "samples").string() + " --out " +
                    (ws / "eval_bad").string(),
                ws / "evalbad.log") == 2);

  // decomposition dump
  REQUIRE(run_cli("decompose " + (ws / "data.csv").string() + " --config " +
                      (ws / "config.json").string() + " --out " +
                      (ws / "decomp").string(),
                  ws / "decomp.log") == 0);
  CHECK(fs::exists(ws / "decomp/trend.tsv"));
  CHECK(fs::exists(ws / "decomp/seasonal.tsv"));
  CHECK(fs::exists(ws / "decomp/wavelet.tsv"));
  {
    std::ifstream w(ws / "decomp/weights.tsv");
    std::string header;
    REQUIRE(std::getline(w, header));
    CHECK(header.find("kernel_") != std::string::npos);
    std::string line;
    int checked = 0;
    while (std::getline(w, line) && checked < 50) {
      std::istringstream ls(line);
      double v, sum = 0.0;
      while (ls >> v) sum += v;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-4));
      ++checked;
    }
    CHECK(checked > 0);
  }

  // figure data
  REQUIRE(run_cli("plot " + (ws / "data.csv").string() + " " +
                      (ws / "samples").string() + " --seed 4 --out " +
                      (ws / "figs").string(),
                  ws / "plot.log") == 0);
  for (const char* f : {"pca_real.tsv", "pca_synth.tsv", "pca.svg", "tsne.tsv",
                        "tsne.svg", "density.tsv", "density.svg"})
    CHECK(fs::exists(ws / "figs" / f));
  {
    std::ifstream p(ws / "figs/pca_real.tsv");
    std::string header, first;
    REQUIRE(std::getline(p, header));
    REQUIRE(std::getline(p, first));
    std::istringstream ls(first);
    double a, b, extra;
    CHECK((ls >> a >> b));
    CHECK_FALSE((ls >> extra));  // exactly 2 columns per point
  }
}

TEST_CASE("plot: identical corpora give overlapping density curves") {
  Workspace ws;
  write_sine_csv(ws / "data.csv", 140, 2);
  // re-export the real windows as a samples artifact
  stdiff::RawSeries raw = stdiff::load_csv((ws / "data.csv").string());
  stdiff::SeriesBatch batch = stdiff::make_windows(raw, 12, 1);
  stdiff::ScalingMeta meta{batch.scale_min, batch.scale_max,
                           batch.feature_names};
  stdiff::save_samples((ws / "reexport").string(), stdiff::unscale(batch), 12,
                       2, meta, 0);

  REQUIRE(run_cli("plot " + (ws / "data.csv").string() + " " +
                      (ws / "reexport").string() + " --seed 1 --out " +
                      (ws / "figs").string(),
                  ws / "plot.log") == 0);
  std::ifstream d(ws / "figs/density.tsv");
  std::string header, line;
  REQUIRE(std::getline(d, header));
  double max_gap = 0.0;
  while (std::getline(d, line)) {
    std::istringstream ls(line);
    double x, real, synth;
    REQUIRE((ls >> x >> real >> synth));
    max_gap = std::max(max_gap, std::abs(real - synth));
  }
  CHECK(max_gap < 0.05);
}
