#include "voxl/bench.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "voxl/error.hpp"

namespace voxl {

namespace {

struct PipelineTiming {
  double without_erb = 0.0;
  double with_erb = 0.0;
};

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

PipelineTiming time_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  const TaskSpec& task = cfg.tasks.front();
  const RoundSpec spec{cfg.curriculum.rounds.front().modality, 1, cfg.curriculum.rounds.front().episodes_per_epoch};
  const auto envs = training_envs(cfg, task, spec.modality, 1);
  const auto seed = derive_seed(cfg.seed, {0xBE7C});

  DqnAgent warm = make_agent(cfg.pipeline_obs_dims(), cfg.curriculum, seed);
  RoundOutput first = train_round(warm, envs, {}, cfg.curriculum, spec, derive_seed(seed, {1}));
  const Erb erb = build_erb(first.recorded, cfg.curriculum.erb_fraction, cfg.curriculum.erb_policy,
                            derive_seed(seed, {2}), 1);

  PipelineTiming t;
  {
    DqnAgent agent = warm;
    t.without_erb = sum(train_round(agent, envs, {}, cfg.curriculum, spec, derive_seed(seed, {3})).stats.epoch_seconds);
  }
  {
    DqnAgent agent = warm;
    const Erb* prior[] = {&erb};
    t.with_erb = sum(train_round(agent, envs, prior, cfg.curriculum, spec, derive_seed(seed, {3})).stats.epoch_seconds);
  }
  return t;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

TimingReport benchmark_epoch(const ExperimentConfig& coreset_cfg, const ExperimentConfig& full_cfg) {
  if (!coreset_cfg.coreset) throw Error(ErrorCode::kInvalidArgument, "benchmark: first config needs a coreset");
  if (full_cfg.coreset) throw Error(ErrorCode::kInvalidArgument, "benchmark: second config must be full resolution");
  if (coreset_cfg.curriculum.rounds.empty() || full_cfg.curriculum.rounds.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "benchmark: configs need at least one round");
  }
  const RoundSpec& a = coreset_cfg.curriculum.rounds.front();
  const RoundSpec& b = full_cfg.curriculum.rounds.front();
  if (a.episodes_per_epoch != b.episodes_per_epoch) {
    throw Error(ErrorCode::kInvalidArgument,
                "benchmark: unequal episode counts (" + std::to_string(a.episodes_per_epoch) + " vs " +
                    std::to_string(b.episodes_per_epoch) + ")");
  }
  if (coreset_cfg.seed != full_cfg.seed || a.modality != b.modality ||
      coreset_cfg.max_steps != full_cfg.max_steps || coreset_cfg.train_patients != full_cfg.train_patients ||
      coreset_cfg.tasks.empty() || full_cfg.tasks.empty() ||
      coreset_cfg.tasks.front().landmark != full_cfg.tasks.front().landmark) {
    throw Error(ErrorCode::kInvalidArgument, "benchmark: configs differ in seed, modality, max_steps, cohort or task");
  }

  const PipelineTiming c = time_pipeline(coreset_cfg);
  const PipelineTiming f = time_pipeline(full_cfg);
  TimingReport r;
  r.coreset_without_erb = c.without_erb;
  r.coreset_with_erb = c.with_erb;
  r.full_without_erb = f.without_erb;
  r.full_with_erb = f.with_erb;
  r.episodes_per_epoch = a.episodes_per_epoch;
  r.max_steps = coreset_cfg.max_steps;
  r.seed = coreset_cfg.seed;
  return r;
}

std::string timing_json(const TimingReport& r) {
  nlohmann::ordered_json j;
  j["episodes_per_epoch"] = r.episodes_per_epoch;
  j["max_steps"] = r.max_steps;
  j["seed"] = r.seed;
  j["seconds"] = {{"coreset_without_erb", r.coreset_without_erb},
                  {"coreset_with_erb", r.coreset_with_erb},
                  {"full_without_erb", r.full_without_erb},
                  {"full_with_erb", r.full_with_erb}};
  j["speedup"] = {{"without_erb", r.speedup_without_erb()}, {"with_erb", r.speedup_with_erb()}};
  j["erb_ratio"] = {{"coreset", r.erb_ratio_coreset()}, {"full", r.erb_ratio_full()}};
  return j.dump(2) + "\n";
}

std::string timing_csv(const TimingReport& r) {
  std::ostringstream os;
  os << "kind,pipeline,erb,value\n";
  os << "seconds,coreset,without," << fmt(r.coreset_without_erb) << '\n';
  os << "seconds,coreset,with," << fmt(r.coreset_with_erb) << '\n';
  os << "seconds,full,without," << fmt(r.full_without_erb) << '\n';
  os << "seconds,full,with," << fmt(r.full_with_erb) << '\n';
  os << "speedup,full/coreset,without," << fmt(r.speedup_without_erb()) << '\n';
  os << "speedup,full/coreset,with," << fmt(r.speedup_with_erb()) << '\n';
  return os.str();
}

}  // namespace voxl
