#include "voxl/lifelong.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "voxl/error.hpp"

namespace voxl {

std::string_view to_string(ErbPolicy policy) {
  switch (policy) {
    case ErbPolicy::kUniform: return "uniform";
    case ErbPolicy::kRewardStratified: return "reward_stratified";
  }
  return "unknown";
}

ErbPolicy parse_erb_policy(std::string_view name) {
  if (name == "uniform") return ErbPolicy::kUniform;
  if (name == "reward_stratified") return ErbPolicy::kRewardStratified;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown ERB policy '" + std::string(name) + "'; valid: uniform, reward_stratified");
}

std::string_view modality_tag(Modality m) { return m == Modality::kA ? "A" : "B"; }

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  auto mix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t p : parts) h = mix(h ^ mix(p));
  return h;
}

namespace {

std::size_t erb_size(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

// Draws k distinct members of `pool` (partial Fisher-Yates).
void draw_without_replacement(std::vector<std::size_t> pool, std::size_t k, std::mt19937_64& rng,
                              std::vector<std::size_t>& out) {
  for (std::size_t i = 0; i < k && i < pool.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out.push_back(pool[i]);
  }
}

// Proportional allocation of k over strata sizes, at least one per nonempty
// stratum while k allows, remainder by largest fractional quota.
std::vector<std::size_t> allocate(const std::vector<std::size_t>& sizes, std::size_t k) {
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> alloc(sizes.size(), 0);
  std::vector<double> remainder(sizes.size(), 0.0);
  std::size_t used = 0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    if (sizes[s] == 0) continue;
    const double quota = static_cast<double>(k) * static_cast<double>(sizes[s]) / static_cast<double>(n);
    alloc[s] = std::min(sizes[s], static_cast<std::size_t>(std::floor(quota)));
    remainder[s] = quota - std::floor(quota);
    used += alloc[s];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Minimum of one for nonempty strata, largest strata first.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  const auto nonempty = static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](std::size_t v) { return v > 0; }));
  for (std::size_t s : order) {
    if (sizes[s] > 0 && alloc[s] == 0 && (nonempty <= k || used < k)) {
      alloc[s] = 1;
      ++used;
    }
  }
  while (used > k) {
    // Take back from the stratum with the largest allocation above one.
    std::size_t best = sizes.size();
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      if (alloc[s] > 1 && (best == sizes.size() || alloc[s] > alloc[best])) best = s;
    }
    if (best == sizes.size()) break;
    --alloc[best];
    --used;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  while (used < k) {
    bool progressed = false;
    for (std::size_t s : order) {
      if (used == k) break;
      if (alloc[s] < sizes[s]) {
        ++alloc[s];
        ++used;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return alloc;
}

}  // namespace

std::vector<std::size_t> select_erb_indices(std::span<const Transition> transitions, double fraction,
                                            ErbPolicy policy, std::uint64_t seed) {
  if (transitions.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot build an ERB from no transitions");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "ERB fraction must lie in (0, 1]");
  }
  const std::size_t k = erb_size(transitions.size(), fraction);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(k);
  if (policy == ErbPolicy::kUniform) {
    std::vector<std::size_t> all(transitions.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    draw_without_replacement(std::move(all), k, rng, picked);
  } else {
    std::vector<std::vector<std::size_t>> strata(3);  // positive, zero, negative
    for (std::size_t i = 0; i < transitions.size(); ++i) {
      const double r = transitions[i].r;
      strata[r > 0.0 ? 0 : (r == 0.0 ? 1 : 2)].push_back(i);
    }
    const auto alloc = allocate({strata[0].size(), strata[1].size(), strata[2].size()}, k);
    for (std::size_t s = 0; s < strata.size(); ++s) draw_without_replacement(strata[s], alloc[s], rng, picked);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

Erb build_erb(std::span<const Transition> transitions, double fraction, ErbPolicy policy, std::uint64_t seed,
              int source_round) {
  const auto idx = select_erb_indices(transitions, fraction, policy, seed);
  std::vector<Transition> chosen;
  chosen.reserve(idx.size());
  for (std::size_t i : idx) chosen.push_back(transitions[i]);
  return Erb(source_round, std::move(chosen), fraction, policy, seed);
}

void CurriculumConfig::validate() const {
  if (rounds.empty()) throw Error(ErrorCode::kInvalidArgument, "curriculum needs at least one round");
  for (const auto& r : rounds) {
    if (r.epochs < 1 || r.episodes_per_epoch < 1) {
      throw Error(ErrorCode::kInvalidArgument, "rounds need epochs >= 1 and episodes_per_epoch >= 1");
    }
  }
  if (!(replay_mix >= 0.0 && replay_mix <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "replay_mix must lie in [0, 1]");
  if (!(erb_fraction > 0.0 && erb_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "erb_fraction must lie in (0, 1]");
  }
  if (train_every < 1 || erb_updates_per_tick < 1) {
    throw Error(ErrorCode::kInvalidArgument, "train_every and erb_updates_per_tick must be >= 1");
  }
  if (replay_capacity < 1) throw Error(ErrorCode::kInvalidArgument, "replay_capacity must be >= 1");
  hyper.validate();
}

DqnAgent make_agent(const Dims& obs_dims, const CurriculumConfig& cfg, std::uint64_t seed) {
  DqnAgent agent;
  agent.online = init_network(obs_dims, seed);
  agent.target = agent.online;
  agent.adam = AdamState(agent.online.parameter_count());
  agent.memory = ReplayMemory(cfg.replay_capacity);
  agent.rng.seed(derive_seed(seed, {0xA6E27}));
  return agent;
}

RoundOutput train_round(DqnAgent& agent, std::span<const EnvSpec> envs, std::span<const Erb* const> prior_erbs,
                        const CurriculumConfig& cfg, const RoundSpec& spec, std::uint64_t seed) {
  cfg.validate();
  if (envs.empty()) throw Error(ErrorCode::kInvalidArgument, "train_round needs at least one environment");
  for (const auto& env : envs) {
    if (env.obs_dims != agent.online.obs_dims()) {
      throw Error(ErrorCode::kShapeMismatch, "agent expects observations " + agent.online.obs_dims().str() +
                                                 " but environment produces " + env.obs_dims.str());
    }
  }

  std::vector<const Transition*> erb_pool;
  for (const Erb* erb : prior_erbs) {
    for (const auto& t : erb->transitions()) erb_pool.push_back(&t);
  }
  const int batch_size = cfg.hyper.batch_size;
  const bool mixing = !erb_pool.empty();
  const auto erb_per_batch =
      mixing ? static_cast<int>(std::ceil(cfg.replay_mix * batch_size - 1e-9)) : 0;
  const int updates_per_tick = (mixing && erb_per_batch > 0) ? cfg.erb_updates_per_tick : 1;
  const std::size_t warmup = std::max<std::size_t>(cfg.warmup_transitions, static_cast<std::size_t>(batch_size));

  // Fresh memory holds the current round only; past rounds reach the
  // batches solely through the ERBs.
  agent.memory = ReplayMemory(cfg.replay_capacity);

  RoundOutput out;
  RoundStats& stats = out.stats;
  double loss_sum = 0.0;
  long round_steps = 0;  // epsilon restarts every round
  std::vector<Transition> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));

  auto train_tick = [&] {
    for (int u = 0; u < updates_per_tick; ++u) {
      batch.clear();
      const int fresh = std::min(batch_size, batch_size - erb_per_batch);
      for (int i = 0; i < erb_per_batch; ++i) {
        std::uniform_int_distribution<std::size_t> pick(0, erb_pool.size() - 1);
        batch.push_back(*erb_pool[pick(agent.rng)]);
      }
      for (int i = 0; i < fresh; ++i) batch.push_back(agent.memory.sample(agent.rng));
      loss_sum += td_train_step(agent.online, agent.target, batch, cfg.hyper, agent.adam);
      ++stats.batches;
      if (erb_per_batch > 0) {
        stats.min_erb_per_batch = stats.mixed_batches == 0 ? erb_per_batch
                                                           : std::min<long>(stats.min_erb_per_batch, erb_per_batch);
        stats.max_erb_per_batch = std::max<long>(stats.max_erb_per_batch, erb_per_batch);
        ++stats.mixed_batches;
      }
      ++agent.grad_steps;
      ++stats.grad_steps;
      if (agent.grad_steps % cfg.hyper.target_sync_every == 0) agent.target = agent.online;
    }
  };

  std::size_t episode_index = 0;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int ep = 0; ep < spec.episodes_per_epoch; ++ep, ++episode_index) {
      const EnvSpec& env = envs[episode_index % envs.size()];
      const std::uint64_t ep_seed = derive_seed(seed, {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(ep)});
      AgentState state = reset(env, ep_seed);
      Observation obs = std::make_shared<const Volume3D>(observe(env, state));
      for (;;) {
        const double eps = epsilon_at(cfg.hyper, round_steps);
        const Action a = select_action(q_forward(agent.online, *obs), eps, agent.rng);
        StepResult res = step(env, state, a);
        res.transition.s = obs;  // share the patch we already hold
        state = res.state;
        obs = res.transition.s_next;
        const bool done = res.transition.done;
        agent.memory.push(res.transition);
        out.recorded.push_back(std::move(res.transition));
        ++agent.env_steps;
        ++stats.env_steps;
        ++round_steps;
        if (round_steps % cfg.train_every == 0 && agent.memory.size() >= warmup) train_tick();
        if (done) break;
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    stats.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  stats.mean_loss = stats.batches > 0 ? loss_sum / static_cast<double>(stats.batches) : 0.0;
  return out;
}

std::string ExperimentConfig::method_name() const {
  return coreset ? std::string(to_string(coreset->method)) : std::string("conventional");
}

void ExperimentConfig::validate() const {
  if (!volume_dims.positive()) throw Error(ErrorCode::kInvalidArgument, "volume_dims must be positive");
  if (train_patients < 1 || test_patients < 1) {
    throw Error(ErrorCode::kInvalidArgument, "train_patients and test_patients must be >= 1");
  }
  if (landmark_jitter < 0) throw Error(ErrorCode::kInvalidArgument, "landmark_jitter must be >= 0");
  if (tasks.empty()) throw Error(ErrorCode::kInvalidArgument, "experiment needs at least one task");
  if (coreset) coreset->validate();
  default_architecture(pipeline_obs_dims());
  curriculum.validate();
}

namespace {

Coord3 jittered_landmark(const ExperimentConfig& cfg, const TaskSpec& task, std::uint64_t patient_seed) {
  if (cfg.landmark_jitter == 0) return task.landmark;
  std::mt19937_64 rng(derive_seed(patient_seed, {0x717}));
  std::uniform_int_distribution<int> j(-cfg.landmark_jitter, cfg.landmark_jitter);
  const Dims& d = cfg.volume_dims;
  const Coord3& r = task.radii;
  return {std::clamp(task.landmark.x + j(rng), r.x, d.x - 1 - r.x),
          std::clamp(task.landmark.y + j(rng), r.y, d.y - 1 - r.y),
          std::clamp(task.landmark.z + j(rng), r.z, d.z - 1 - r.z)};
}

EnvSpec env_from(const ExperimentConfig& cfg, Volume3D volume, Coord3 target) {
  EnvSpec env;
  env.volume = std::make_shared<const Volume3D>(std::move(volume));
  env.target = target;
  env.obs_dims = cfg.pipeline_obs_dims();
  env.step_size = cfg.step_size;
  env.max_steps = cfg.max_steps;
  env.success_radius = cfg.success_radius;
  env.validate();
  return env;
}

}  // namespace

EvalCase make_case(const ExperimentConfig& cfg, const TaskSpec& task, Modality modality, std::uint64_t patient_seed,
                   int case_id) {
  PhantomConfig pc;
  pc.dims = cfg.volume_dims;
  pc.modality = modality;
  pc.landmark_center = jittered_landmark(cfg, task, patient_seed);
  pc.landmark_radii = task.radii;
  pc.noise_sigma = cfg.noise_sigma;
  pc.seed = patient_seed;
  if (cfg.shared_anatomy) pc.background_seed = derive_seed(cfg.seed, {0xA7});
  Phantom ph = make_phantom(pc);
  EvalCase ec;
  ec.truth = ph.landmark;
  ec.case_id = case_id;
  ec.environment = std::string(modality_tag(modality));
  if (cfg.coreset) {
    CoresetResult cr = compress(ph.volume, *cfg.coreset, ph.landmark);
    ec.scale = cfg.coreset->n_ratio;
    ec.env = env_from(cfg, std::move(cr.volume), *cr.landmark_scaled);
  } else {
    ec.scale = 1;
    ec.env = env_from(cfg, std::move(ph.volume), ph.landmark);
  }
  return ec;
}

std::vector<EnvSpec> training_envs(const ExperimentConfig& cfg, const TaskSpec& task, Modality modality, int round) {
  std::vector<EnvSpec> envs;
  for (int p = 0; p < cfg.train_patients; ++p) {
    // Each round draws a disjoint cohort of training patients.
    const auto seed = derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(p)});
    envs.push_back(make_case(cfg, task, modality, seed, p).env);
  }
  return envs;
}

std::vector<EvalCase> test_cases(const ExperimentConfig& cfg, const TaskSpec& task, Modality modality) {
  std::vector<EvalCase> cases;
  for (int p = 0; p < cfg.test_patients; ++p) {
    // Same patient seed for both modalities: one anatomy, two contrasts.
    const auto seed = derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(p)});
    cases.push_back(make_case(cfg, task, modality, seed, p));
  }
  return cases;
}

double LifelongReport::mean_error(int round, const std::string& environment) const {
  std::vector<double> errs;
  for (const auto& c : cases) {
    if (c.round == round && c.environment == environment) errs.push_back(c.error);
  }
  if (errs.empty()) throw Error(ErrorCode::kInvalidArgument, "report has no cases for that round/environment");
  return mean(errs);
}

CurriculumOutcome run_curriculum(const ExperimentConfig& cfg) {
  cfg.validate();
  CurriculumOutcome outcome;
  LifelongReport& report = outcome.report;
  report.method = cfg.method_name();
  report.seed = cfg.seed;

  for (std::size_t ti = 0; ti < cfg.tasks.size(); ++ti) {
    const TaskSpec& task = cfg.tasks[ti];
    const auto task_seed = derive_seed(cfg.seed, {3, ti});
    DqnAgent agent = make_agent(cfg.pipeline_obs_dims(), cfg.curriculum, task_seed);
    std::vector<Erb> erbs;
    erbs.reserve(cfg.curriculum.rounds.size());

    std::vector<std::pair<Modality, std::vector<EvalCase>>> tests;
    for (Modality m : {Modality::kA, Modality::kB}) tests.emplace_back(m, test_cases(cfg, task, m));

    for (std::size_t ri = 0; ri < cfg.curriculum.rounds.size(); ++ri) {
      const RoundSpec& rs = cfg.curriculum.rounds[ri];
      const int round = static_cast<int>(ri) + 1;
      const auto envs = training_envs(cfg, task, rs.modality, round);
      std::vector<const Erb*> prior;
      for (const auto& e : erbs) prior.push_back(&e);
      const auto round_seed = derive_seed(task_seed, {4, ri});
      RoundOutput ro = train_round(agent, envs, prior, cfg.curriculum, rs, round_seed);
      for (std::size_t e = 0; e < ro.stats.epoch_seconds.size(); ++e) {
        report.epochs.push_back({round, task.name, static_cast<int>(e) + 1, ro.stats.epoch_seconds[e]});
      }
      erbs.push_back(build_erb(ro.recorded, cfg.curriculum.erb_fraction, cfg.curriculum.erb_policy,
                               derive_seed(task_seed, {5, ri}), round));

      const NetworkAgent evaluator(agent.online);
      for (const auto& [modality, cases] : tests) {
        EnvSummary summary;
        summary.round = round;
        summary.environment = std::string(modality_tag(modality));
        summary.task = task.name;
        for (const auto& ec : cases) {
          const Coord3 pred = localize(evaluator, ec.env);
          const double err = distance_error(pred, ec.truth, ec.scale);
          report.cases.push_back({round, summary.environment, task.name, ec.case_id, pred, err});
          summary.errors.push_back(err);
        }
        summary.mean = mean(summary.errors);
        summary.stddev = sample_stddev(summary.errors);
        report.summaries.push_back(std::move(summary));
      }
    }
    outcome.networks.push_back(agent.online);
  }
  return outcome;
}

}  // namespace voxl
