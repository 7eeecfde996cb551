#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include "voxl/volume.hpp"

namespace voxl {

enum class Action : int { kPosX = 0, kNegX, kPosY, kNegY, kPosZ, kNegZ };

inline constexpr int kNumActions = 6;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::kPosX, Action::kNegX, Action::kPosY, Action::kNegY, Action::kPosZ, Action::kNegZ};

std::string_view to_string(Action a);
inline int action_index(Action a) { return static_cast<int>(a); }
Coord3 action_delta(Action a);

struct EnvSpec {
  std::shared_ptr<const Volume3D> volume;
  Coord3 target;
  Dims obs_dims{15, 15, 9};
  int step_size = 1;
  int max_steps = 200;
  double success_radius = 1.5;

  void validate() const;
};

EnvSpec make_env(Volume3D volume, Coord3 target, Dims obs_dims);

struct AgentState {
  Coord3 position;
  int steps_taken = 0;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

using Observation = std::shared_ptr<const Volume3D>;

// One (s, a, r, s') record. Observations are shared so consecutive
// transitions of an episode reference the same patch.
struct Transition {
  Observation s;
  Action a = Action::kPosX;
  double r = 0.0;
  Observation s_next;
  bool done = false;
};

// Random start at least a quarter of the largest extent away from the target.
AgentState reset(const EnvSpec& spec, std::uint64_t seed);
Volume3D observe(const EnvSpec& spec, const AgentState& state);

struct StepResult {
  AgentState state;
  Transition transition;
};

StepResult step(const EnvSpec& spec, const AgentState& state, Action action);

using Policy = std::function<Action(const Volume3D& observation, const AgentState& state)>;

struct Episode {
  Coord3 start;
  Coord3 final_position;
  std::vector<Transition> transitions;
};

Episode rollout(const EnvSpec& spec, const Policy& policy, std::uint64_t seed);
// Same loop from a given start state.
Episode rollout_from(const EnvSpec& spec, const Policy& policy, AgentState start);

// Reference policy: the action with the largest distance decrease.
Action greedy_oracle_action(const EnvSpec& spec, const Coord3& position);

}  // namespace voxl
