#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxl/coreset.hpp"
#include "voxl/dqn.hpp"
#include "voxl/eval.hpp"
#include "voxl/rlenv.hpp"

namespace voxl {

enum class ErbPolicy { kUniform, kRewardStratified };

std::string_view to_string(ErbPolicy policy);
ErbPolicy parse_erb_policy(std::string_view name);

// Experience replay buffer built from one finished round. Contents are fixed
// at construction.
class Erb {
 public:
  Erb(int source_round, std::vector<Transition> transitions, double fraction, ErbPolicy policy,
      std::uint64_t seed)
      : source_round_(source_round),
        transitions_(std::move(transitions)),
        fraction_(fraction),
        policy_(policy),
        seed_(seed) {}

  int source_round() const { return source_round_; }
  std::span<const Transition> transitions() const { return transitions_; }
  std::size_t size() const { return transitions_.size(); }
  double fraction() const { return fraction_; }
  ErbPolicy policy() const { return policy_; }
  std::uint64_t seed() const { return seed_; }

 private:
  int source_round_;
  std::vector<Transition> transitions_;
  double fraction_;
  ErbPolicy policy_;
  std::uint64_t seed_;
};

// Indices picked by build_erb, ascending. Exposed for provenance tests.
std::vector<std::size_t> select_erb_indices(std::span<const Transition> transitions, double fraction,
                                            ErbPolicy policy, std::uint64_t seed);

// Sample round(fraction * n) distinct transitions.
Erb build_erb(std::span<const Transition> transitions, double fraction, ErbPolicy policy, std::uint64_t seed,
              int source_round = 0);

struct RoundSpec {
  Modality modality = Modality::kA;
  int epochs = 4;
  int episodes_per_epoch = 50;
};

struct CurriculumConfig {
  std::vector<RoundSpec> rounds{{Modality::kA, 4, 50}, {Modality::kB, 4, 50}};
  double replay_mix = 0.5;    // share of each batch drawn from prior ERBs
  double erb_fraction = 0.1;
  ErbPolicy erb_policy = ErbPolicy::kUniform;
  TrainHyper hyper;
  int train_every = 4;            // environment steps per training tick
  int erb_updates_per_tick = 2;   // gradient steps per tick while ERBs are mixed in
  std::size_t warmup_transitions = 200;
  std::size_t replay_capacity = 20000;

  void validate() const;
};

struct DqnAgent {
  QNetwork online;
  QNetwork target;
  AdamState adam;
  ReplayMemory memory{1};
  std::mt19937_64 rng;
  long env_steps = 0;
  long grad_steps = 0;
};

DqnAgent make_agent(const Dims& obs_dims, const CurriculumConfig& cfg, std::uint64_t seed);

struct RoundStats {
  std::vector<double> epoch_seconds;
  long env_steps = 0;
  long grad_steps = 0;
  long batches = 0;
  long mixed_batches = 0;        // batches containing ERB samples
  long min_erb_per_batch = 0;    // over mixed batches
  long max_erb_per_batch = 0;
  double mean_loss = 0.0;
};

struct RoundOutput {
  std::vector<Transition> recorded;  // fresh transitions, in generation order
  RoundStats stats;
};

// Runs spec.epochs x spec.episodes_per_epoch epsilon-greedy episodes across
// `envs` (round-robin), training the agent after every `train_every` steps.
RoundOutput train_round(DqnAgent& agent, std::span<const EnvSpec> envs, std::span<const Erb* const> prior_erbs,
                        const CurriculumConfig& cfg, const RoundSpec& spec, std::uint64_t seed);

struct TaskSpec {
  std::string name;
  Coord3 landmark;
  Coord3 radii{3, 3, 3};
};

// Synthetic stand-in for the clinical cohort: per task, training patients
// per modality and held-out test patients imaged in both modalities.
struct ExperimentConfig {
  Dims volume_dims{48, 48, 48};
  double noise_sigma = 0.02;
  int landmark_jitter = 0;  // per-patient landmark offset, voxels per axis
  bool shared_anatomy = true;  // one background field for every patient
  int train_patients = 2;  // per modality
  int test_patients = 2;
  Dims obs_dims{15, 15, 9};        // coreset pipeline
  Dims obs_dims_full{45, 45, 15};  // full-resolution pipeline
  int step_size = 1;
  int max_steps = 200;
  double success_radius = 1.5;
  std::uint64_t seed = 0;
  CurriculumConfig curriculum;
  std::optional<CoresetConfig> coreset;  // empty: conventional pipeline
  std::vector<TaskSpec> tasks;

  std::string method_name() const;  // "conventional" or the coreset method
  Dims pipeline_obs_dims() const { return coreset ? obs_dims : obs_dims_full; }
  int scale() const { return coreset ? coreset->n_ratio : 1; }
  void validate() const;
};

// Deterministic seed derivation (splitmix64 over the parts).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

// Patient volume for a task/modality, compressed when the config has a coreset.
EvalCase make_case(const ExperimentConfig& cfg, const TaskSpec& task, Modality modality, std::uint64_t patient_seed,
                   int case_id);
std::vector<EnvSpec> training_envs(const ExperimentConfig& cfg, const TaskSpec& task, Modality modality, int round);
std::vector<EvalCase> test_cases(const ExperimentConfig& cfg, const TaskSpec& task, Modality modality);

struct CaseRecord {
  int round = 0;
  std::string environment;  // "A" or "B"
  std::string task;
  int case_id = 0;
  Coord3 prediction;
  double error = 0.0;
};

struct EnvSummary {
  int round = 0;
  std::string environment;
  std::string task;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> errors;
};

struct EpochTiming {
  int round = 0;
  std::string task;
  int epoch = 0;
  double seconds = 0.0;
};

struct LifelongReport {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<CaseRecord> cases;
  std::vector<EnvSummary> summaries;
  std::vector<EpochTiming> epochs;
  std::string config_json;  // echo supplied by the caller

  // Mean error over every case of (round, environment), all tasks.
  double mean_error(int round, const std::string& environment) const;
};

struct CurriculumOutcome {
  LifelongReport report;
  std::vector<QNetwork> networks;  // one per task, after the last round
};

// Rounds run in order; after each round every task's agent is evaluated on
// the held-out patients of both modalities.
CurriculumOutcome run_curriculum(const ExperimentConfig& cfg);

std::string_view modality_tag(Modality m);

}  // namespace voxl
