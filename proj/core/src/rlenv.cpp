#include "voxl/rlenv.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "voxl/error.hpp"

namespace voxl {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::kPosX: return "+x";
    case Action::kNegX: return "-x";
    case Action::kPosY: return "+y";
    case Action::kNegY: return "-y";
    case Action::kPosZ: return "+z";
    case Action::kNegZ: return "-z";
  }
  return "?";
}

Coord3 action_delta(Action a) {
  switch (a) {
    case Action::kPosX: return {1, 0, 0};
    case Action::kNegX: return {-1, 0, 0};
    case Action::kPosY: return {0, 1, 0};
    case Action::kNegY: return {0, -1, 0};
    case Action::kPosZ: return {0, 0, 1};
    case Action::kNegZ: return {0, 0, -1};
  }
  return {};
}

void EnvSpec::validate() const {
  if (!volume || volume->empty()) throw Error(ErrorCode::kInvalidArgument, "environment has no volume");
  if (!volume->contains(target)) {
    throw Error(ErrorCode::kOutOfBounds, "target lies outside volume " + volume->dims().str());
  }
  if (!obs_dims.positive()) throw Error(ErrorCode::kInvalidArgument, "obs_dims must be positive");
  if (step_size < 1) throw Error(ErrorCode::kInvalidArgument, "step_size must be >= 1");
  if (max_steps < 1) throw Error(ErrorCode::kInvalidArgument, "max_steps must be >= 1");
  if (!(success_radius >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "success_radius must be >= 0");
}

EnvSpec make_env(Volume3D volume, Coord3 target, Dims obs_dims) {
  EnvSpec spec;
  spec.volume = std::make_shared<const Volume3D>(std::move(volume));
  spec.target = target;
  spec.obs_dims = obs_dims;
  spec.validate();
  return spec;
}

AgentState reset(const EnvSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Dims& d = spec.volume->dims();
  const double min_dist = 0.25 * d.max_extent();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ux(0, d.x - 1), uy(0, d.y - 1), uz(0, d.z - 1);

  double farthest = 0.0;
  for (int cx : {0, d.x - 1}) {
    for (int cy : {0, d.y - 1}) {
      for (int cz : {0, d.z - 1}) farthest = std::max(farthest, euclidean({cx, cy, cz}, spec.target));
    }
  }
  if (farthest >= min_dist) {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const Coord3 p{ux(rng), uy(rng), uz(rng)};
      if (euclidean(p, spec.target) >= min_dist) return {p, 0};
    }
  }
  if (d.count() == 1) return {spec.target, 0};
  for (;;) {
    const Coord3 p{ux(rng), uy(rng), uz(rng)};
    if (!(p == spec.target)) return {p, 0};
  }
}

Volume3D observe(const EnvSpec& spec, const AgentState& state) {
  return crop_patch(*spec.volume, state.position, spec.obs_dims, 0.0F);
}

namespace {

Coord3 move(const EnvSpec& spec, const Coord3& p, Action a) {
  const Dims& d = spec.volume->dims();
  const Coord3 delta = action_delta(a);
  return {std::clamp(p.x + delta.x * spec.step_size, 0, d.x - 1),
          std::clamp(p.y + delta.y * spec.step_size, 0, d.y - 1),
          std::clamp(p.z + delta.z * spec.step_size, 0, d.z - 1)};
}

StepResult step_from(const EnvSpec& spec, const AgentState& state, Action action, Observation current) {
  AgentState next{move(spec, state.position, action), state.steps_taken + 1};
  const double before = euclidean(state.position, spec.target);
  const double after = euclidean(next.position, spec.target);
  Transition t;
  t.s = std::move(current);
  t.a = action;
  t.r = before - after;
  t.s_next = std::make_shared<const Volume3D>(observe(spec, next));
  t.done = after <= spec.success_radius || next.steps_taken >= spec.max_steps;
  return {next, std::move(t)};
}

}  // namespace

StepResult step(const EnvSpec& spec, const AgentState& state, Action action) {
  return step_from(spec, state, action, std::make_shared<const Volume3D>(observe(spec, state)));
}

Episode rollout_from(const EnvSpec& spec, const Policy& policy, AgentState state) {
  spec.validate();
  Episode ep;
  ep.start = state.position;
  Observation obs = std::make_shared<const Volume3D>(observe(spec, state));
  for (;;) {
    const Action a = policy(*obs, state);
    StepResult res = step_from(spec, state, a, obs);
    state = res.state;
    obs = res.transition.s_next;
    const bool done = res.transition.done;
    ep.transitions.push_back(std::move(res.transition));
    if (done) break;
  }
  ep.final_position = state.position;
  return ep;
}

Episode rollout(const EnvSpec& spec, const Policy& policy, std::uint64_t seed) {
  return rollout_from(spec, policy, reset(spec, seed));
}

Action greedy_oracle_action(const EnvSpec& spec, const Coord3& position) {
  Action best = Action::kPosX;
  double best_gain = -1e300;
  const double here = euclidean(position, spec.target);
  for (Action a : kAllActions) {
    const double gain = here - euclidean(move(spec, position, a), spec.target);
    if (gain > best_gain) {
      best_gain = gain;
      best = a;
    }
  }
  return best;
}

}  // namespace voxl
