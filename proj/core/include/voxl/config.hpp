#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "voxl/eval.hpp"
#include "voxl/lifelong.hpp"

namespace voxl {

// Everything a CLI run needs, read from one JSON file. Every key is optional
// and falls back to the library default; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int threads = 1;

  PhantomConfig phantom;       // the `phantom` command; dims and noise feed the cohort
  CoresetConfig coreset;       // `compress`, and the experiment when coreset_enabled
  bool coreset_enabled = true;
  ExperimentConfig experiment;  // seed, coreset and volume fields are synced by finalize()

  EvalStart eval_start = EvalStart::kCenter;
  int eval_random_starts = 5;
  std::string eval_baseline = "conventional";
  std::vector<Modality> eval_environments{Modality::kA, Modality::kB};

  int bench_episodes = 8;
  int bench_max_steps = 40;

  // Copies the shared fields (seed, dims, noise, coreset, threads) into
  // `experiment` and validates the result.
  void finalize();

  // Experiment variants used by eval/bench.
  ExperimentConfig coreset_experiment() const;
  ExperimentConfig full_experiment() const;
};

// Throws Error(kConfig) with a dotted key path, e.g. "curriculum.replay_mix: ...".
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical JSON with every key spelled out; parses back to the same config.
std::string run_config_json(const RunConfig& cfg);

}  // namespace voxl
