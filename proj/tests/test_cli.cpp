#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "test_helpers.hpp"
#include "voxl/dqn.hpp"
#include "voxl/error.hpp"
#include "voxl/volume.hpp"

using namespace voxl;
namespace fs = std::filesystem;

namespace {

int voxl_run(std::vector<std::string> args) {
  args.insert(args.begin(), "voxl");
  return cli::run(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small enough to train in a couple of seconds.
constexpr const char* kTinyConfig = R"({
  "phantom": {"dims": [24, 24, 24], "landmark": [15, 14, 10], "radii": [2, 2, 2], "noise_sigma": 0.02},
  "cohort": {"train_patients": 1, "test_patients": 2},
  "env": {"obs_dims": [7, 7, 7], "obs_dims_full": [9, 9, 9], "max_steps": 20},
  "train": {"batch_size": 8, "target_sync_every": 10},
  "curriculum": {"rounds": [{"modality": "A", "epochs": 1, "episodes_per_epoch": 3},
                            {"modality": "B", "epochs": 1, "episodes_per_epoch": 3}],
                 "warmup_transitions": 8},
  "bench": {"episodes_per_epoch": 2, "max_steps": 10}
})";

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::create_directories(dir);
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(voxl_run({}) == cli::kExitUsage);
  CHECK(voxl_run({"frobnicate"}) == cli::kExitUsage);
  CHECK(voxl_run({"compress", "--out", "x.vol"}) == cli::kExitUsage);  // --input missing
  CHECK(voxl_run({"phantom", "--out", "x.vol", "--threads", "0"}) == cli::kExitUsage);
  CHECK(voxl_run({"phantom", "--out", "x.vol", "--modality", "C"}) == cli::kExitUsage);
  CHECK(voxl_run({"train"}) == cli::kExitUsage);  // needs --config
  CHECK(voxl_run({"--help"}) == cli::kExitOk);
}

TEST_CASE("config errors exit 2, runtime errors exit 1") {
  const auto dir = voxl::test::temp_dir("cli_cfg");
  const auto bad = write_config(dir, R"({"curriculum": {"replay_mix": 1.5}})");
  CHECK(voxl_run({"train", "--config", bad.string(), "--out", (dir / "o").string()}) == cli::kExitUsage);
  CHECK(voxl_run({"train", "--config", (dir / "missing.json").string()}) == cli::kExitRuntime);
  CHECK(voxl_run({"compress", "--input", (dir / "missing.vol").string(), "--out", (dir / "c.vol").string()}) ==
        cli::kExitRuntime);
}

TEST_CASE("phantom then compress") {
  const auto dir = voxl::test::temp_dir("cli_compress");
  const auto cfg = write_config(dir, R"({"phantom": {"dims": [90, 90, 27], "landmark": [40, 50, 13]}})");
  const fs::path ph = dir / "ph.vol";
  REQUIRE(voxl_run({"phantom", "--config", cfg.string(), "--out", ph.string(), "--seed", "3"}) == cli::kExitOk);
  CHECK(load_volume(ph).dims() == Dims{90, 90, 27});
  CHECK(fs::exists(dir / "ph.vol.json"));

  for (const char* method : {"average", "center_sample", "max_entropy"}) {
    const fs::path out = dir / (std::string(method) + ".vol");
    REQUIRE(voxl_run({"compress", "--input", ph.string(), "--method", method, "--out", out.string()}) ==
            cli::kExitOk);
    CHECK(load_volume(out).dims() == Dims{30, 30, 9});
    const auto side = nlohmann::json::parse(slurp(out.string() + ".json"));
    CHECK(side["method"] == method);
    CHECK(side["output_dims"] == nlohmann::json::array({30, 30, 9}));
    CHECK(side["wall_clock_seconds"].get<double>() >= 0.0);
  }
  const fs::path same = dir / "n1.vol";
  REQUIRE(voxl_run({"compress", "--input", ph.string(), "--method", "center_sample", "--n", "1", "--out",
                    same.string()}) == cli::kExitOk);
  CHECK(load_volume(same) == load_volume(ph));

  CHECK(voxl_run({"compress", "--input", ph.string(), "--method", "max_entrpy", "--out", same.string()}) ==
        cli::kExitUsage);
}

TEST_CASE("train, eval and bench on a tiny config") {
  const auto dir = voxl::test::temp_dir("cli_train");
  const auto cfg = write_config(dir, kTinyConfig);
  const fs::path a = dir / "a";
  const fs::path b = dir / "b";
  REQUIRE(voxl_run({"train", "--config", cfg.string(), "--out", a.string()}) == cli::kExitOk);
  REQUIRE(voxl_run({"train", "--config", cfg.string(), "--out", b.string()}) == cli::kExitOk);
  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
  CHECK(slurp(a / "report.csv").rfind("round,environment,task,case_id,error\n", 0) == 0);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["seed"] == 0);
  CHECK(manifest["threads"] == 1);
  CHECK(manifest["config"]["curriculum"]["replay_mix"] == 0.5);

  const fs::path ckpt = a / "checkpoints" / "landmark.voxlnet";
  REQUIRE(fs::exists(ckpt));
  CHECK(load_checkpoint(ckpt).meta.at("method") == "max_entropy");

  SUBCASE("eval with the checkpoint and the oracle") {
    const fs::path e = dir / "eval";
    REQUIRE(voxl_run({"eval", "--config", cfg.string(), "--checkpoint", ckpt.string(), "--oracle", "--out",
                      e.string()}) == cli::kExitOk);
    const std::string summary = slurp(e / "summary.csv");
    CHECK(summary.find("max_entropy,") != std::string::npos);
    CHECK(summary.find("oracle,") != std::string::npos);
    // The oracle walks straight to the target, so its error is at most the
    // success radius times the scale factor.
    std::istringstream rows(slurp(e / "cases.csv"));
    std::string line;
    int oracle_rows = 0;
    while (std::getline(rows, line)) {
      if (line.rfind("oracle,", 0) != 0) continue;
      ++oracle_rows;
      CHECK(std::stod(line.substr(line.rfind(',') + 1)) <= 1.5 * 3 + 1e-9);
    }
    CHECK(oracle_rows == 4);
  }
  SUBCASE("checkpoint shape mismatch is reported and differs from corruption") {
    const auto other = write_config(dir / "o", std::string(kTinyConfig).replace(
                                                   std::string(kTinyConfig).find("[7, 7, 7]"), 9, "[9, 9, 7]"));
    CHECK(voxl_run({"eval", "--config", other.string(), "--checkpoint", ckpt.string(), "--out",
                    (dir / "e2").string()}) == cli::kExitRuntime);
    try {
      const Checkpoint ck = load_checkpoint(ckpt);
      CHECK(ck.network.obs_dims() == Dims{7, 7, 7});
    } catch (...) {
      FAIL("checkpoint should load");
    }
    std::string bytes = slurp(ckpt);
    bytes.resize(bytes.size() - 8);
    std::ofstream(dir / "cut.voxlnet", std::ios::binary) << bytes;
    try {
      load_checkpoint(dir / "cut.voxlnet");
      FAIL("expected an error");
    } catch (const Error& err) {
      CHECK(err.code() == ErrorCode::kCorruptCheckpoint);
    }
    CHECK(voxl_run({"eval", "--config", cfg.string(), "--checkpoint", (dir / "cut.voxlnet").string(), "--out",
                    (dir / "e3").string()}) == cli::kExitRuntime);
  }
  SUBCASE("bench") {
    const fs::path out = dir / "bench";
    REQUIRE(voxl_run({"bench", "--config", cfg.string(), "--out", out.string()}) == cli::kExitOk);
    std::istringstream rows(slurp(out / "timing.csv"));
    std::string line;
    int seconds = 0, speedups = 0;
    while (std::getline(rows, line)) {
      seconds += line.rfind("seconds,", 0) == 0;
      speedups += line.rfind("speedup,", 0) == 0;
    }
    CHECK(seconds == 4);
    CHECK(speedups == 2);
    CHECK(fs::exists(out / "timing.json"));
  }
}
