#pragma once

#include <string>

#include "voxl/lifelong.hpp"

namespace voxl {

// Per-epoch wall-clock for the coreset and full-resolution pipelines, each
// with and without ERB mixing.
struct TimingReport {
  double coreset_without_erb = 0.0;  // seconds
  double coreset_with_erb = 0.0;
  double full_without_erb = 0.0;
  double full_with_erb = 0.0;
  int episodes_per_epoch = 0;
  int max_steps = 0;
  std::uint64_t seed = 0;

  double speedup_without_erb() const { return full_without_erb / coreset_without_erb; }
  double speedup_with_erb() const { return full_with_erb / coreset_with_erb; }
  double erb_ratio_coreset() const { return coreset_with_erb / coreset_without_erb; }
  double erb_ratio_full() const { return full_with_erb / full_without_erb; }
};

// Times one epoch of each pipeline. Per pipeline: a warm-up epoch fills the
// replay memory and supplies the ERB, then two epochs run from identical
// copies of the warmed agent, one without and one with the ERB mixed in.
// Only the first task and round are used. The two configs must agree on
// seed, round shape and task list; only coreset/obs_dims may differ.
TimingReport benchmark_epoch(const ExperimentConfig& coreset_cfg, const ExperimentConfig& full_cfg);

std::string timing_json(const TimingReport& report);
// Rows: kind,pipeline,erb,value (4 duration rows, then 2 speedup rows).
std::string timing_csv(const TimingReport& report);

}  // namespace voxl
