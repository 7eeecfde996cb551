#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "test_helpers.hpp"
#include "voxl/error.hpp"
#include "voxl/rlenv.hpp"

using namespace voxl;
using voxl::test::random_volume;

namespace {

EnvSpec env_on(Volume3D v, Coord3 target, Dims obs = {5, 5, 3}) { return make_env(std::move(v), target, obs); }

Policy constant(Action a) {
  return [a](const Volume3D&, const AgentState&) { return a; };
}

}  // namespace

TEST_CASE("EnvSpec validation") {
  CHECK_THROWS_AS(env_on(Volume3D::filled({4, 4, 4}, 0.0F), {4, 0, 0}), Error);
  CHECK_THROWS_AS(env_on(Volume3D::filled({4, 4, 4}, 0.0F), {1, 1, 1}, {0, 1, 1}), Error);
  EnvSpec e = env_on(Volume3D::filled({4, 4, 4}, 0.0F), {1, 1, 1});
  e.max_steps = 0;
  CHECK_THROWS_AS(e.validate(), Error);
}

TEST_CASE("actions") {
  CHECK(action_delta(Action::kPosX) == Coord3{1, 0, 0});
  CHECK(action_delta(Action::kNegX) == Coord3{-1, 0, 0});
  CHECK(action_delta(Action::kPosY) == Coord3{0, 1, 0});
  CHECK(action_delta(Action::kNegY) == Coord3{0, -1, 0});
  CHECK(action_delta(Action::kPosZ) == Coord3{0, 0, 1});
  CHECK(action_delta(Action::kNegZ) == Coord3{0, 0, -1});
  CHECK(kAllActions.size() == 6);
}

TEST_CASE("step rewards") {
  const EnvSpec e = env_on(Volume3D::filled({32, 32, 32}, 1.0F), {20, 10, 10});
  const AgentState s{{10, 10, 10}, 0};
  CHECK(step(e, s, Action::kPosX).transition.r == doctest::Approx(1.0));
  CHECK(step(e, s, Action::kNegX).transition.r == doctest::Approx(-1.0));
  const StepResult edge = step(e, {{0, 10, 10}, 3}, Action::kNegX);
  CHECK(edge.state.position == Coord3{0, 10, 10});
  CHECK(edge.transition.r == 0.0);
  CHECK(edge.state.steps_taken == 4);
  // Pure: repeated calls agree.
  const StepResult a = step(e, s, Action::kPosY), b = step(e, s, Action::kPosY);
  CHECK(a.state == b.state);
  CHECK(a.transition.r == b.transition.r);
  CHECK(*a.transition.s == *b.transition.s);
  CHECK(*a.transition.s_next == *b.transition.s_next);
}

TEST_CASE("step termination") {
  EnvSpec e = env_on(Volume3D::filled({16, 16, 16}, 1.0F), {8, 8, 8});
  CHECK(step(e, {{6, 8, 8}, 0}, Action::kPosX).transition.done);   // lands at distance 1
  CHECK_FALSE(step(e, {{5, 8, 8}, 0}, Action::kPosX).transition.done);
  e.max_steps = 3;
  CHECK(step(e, {{0, 0, 0}, 2}, Action::kPosX).transition.done);
  CHECK_FALSE(step(e, {{0, 0, 0}, 1}, Action::kPosX).transition.done);
}

TEST_CASE("step carries observations before and after") {
  const Volume3D v = random_volume({12, 12, 12}, 4);
  const EnvSpec e = env_on(v, {2, 2, 2});
  const StepResult r = step(e, {{6, 6, 6}, 0}, Action::kPosZ);
  CHECK(*r.transition.s == observe(e, {{6, 6, 6}, 0}));
  CHECK(*r.transition.s_next == observe(e, {{6, 6, 7}, 1}));
  CHECK(r.transition.s->dims() == e.obs_dims);
}

TEST_CASE("observe") {
  const EnvSpec e = env_on(Volume3D::filled({16, 16, 16}, 5.0F), {1, 1, 1});
  const auto held = observe(e, {{8, 8, 8}, 0});
  for (float x : held.data()) CHECK(x == 5.0F);
  const Volume3D corner = observe(e, {{0, 0, 0}, 0});
  CHECK(corner.dims() == e.obs_dims);
  CHECK(corner.at(0, 0, 0) == 0.0F);
  CHECK(corner.at(4, 4, 2) == 5.0F);
  CHECK(observe(e, {{3, 4, 5}, 0}) == observe(e, {{3, 4, 5}, 9}));
}

TEST_CASE("reset") {
  const EnvSpec e = env_on(Volume3D::filled({48, 48, 48}, 0.0F), {24, 24, 24});
  CHECK(reset(e, 7) == reset(e, 7));
  double min_d = 1e9;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const AgentState a = reset(e, s);
    CHECK(e.volume->contains(a.position));
    CHECK(a.steps_taken == 0);
    min_d = std::min(min_d, euclidean(a.position, e.target));
  }
  CHECK(min_d >= 12.0);

  SUBCASE("tiny volume falls back to any non-target voxel") {
    const EnvSpec t = env_on(Volume3D::filled({2, 1, 1}, 0.0F), {0, 0, 0}, {1, 1, 1});
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(reset(t, s).position == Coord3{1, 0, 0});
  }
}

TEST_CASE("rollout") {
  const Volume3D v = random_volume({24, 24, 24}, 2);
  const EnvSpec e = env_on(v, {12, 9, 14});
  SUBCASE("greedy oracle reaches the target") {
    const Policy oracle = [&](const Volume3D&, const AgentState& s) { return greedy_oracle_action(e, s.position); };
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Episode ep = rollout(e, oracle, seed);
      CHECK(euclidean(ep.final_position, e.target) <= e.success_radius);
      const Coord3 d{ep.start.x - e.target.x, ep.start.y - e.target.y, ep.start.z - e.target.z};
      const int l1 = std::abs(d.x) + std::abs(d.y) + std::abs(d.z);
      CHECK(static_cast<int>(ep.transitions.size()) <= l1);
      CHECK(ep.transitions.back().done);
    }
  }
  SUBCASE("constant +x at the boundary hits max_steps with zero rewards") {
    EnvSpec b = e;
    b.max_steps = 10;
    const Episode ep = rollout_from(b, constant(Action::kPosX), {{21, 0, 0}, 0});
    CHECK(ep.transitions.size() == 10);
    CHECK(ep.final_position == Coord3{23, 0, 0});
    for (std::size_t i = 2; i < ep.transitions.size(); ++i) CHECK(ep.transitions[i].r == 0.0);
  }
  SUBCASE("no transition after done") {
    const Policy oracle = [&](const Volume3D&, const AgentState& s) { return greedy_oracle_action(e, s.position); };
    const Episode ep = rollout(e, oracle, 3);
    for (std::size_t i = 0; i + 1 < ep.transitions.size(); ++i) CHECK_FALSE(ep.transitions[i].done);
  }
}

TEST_CASE("property: reward telescoping and per-step bound") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    const Volume3D v = random_volume({16, 12, 10}, rng());
    std::uniform_int_distribution<int> tx(0, 15), ty(0, 11), tz(0, 9);
    EnvSpec e = env_on(v, {tx(rng), ty(rng), tz(rng)});
    e.max_steps = 60;
    e.step_size = 1 + t % 3;
    std::mt19937_64 prng(rng());
    const Policy random_policy = [&](const Volume3D&, const AgentState&) {
      return kAllActions[std::uniform_int_distribution<int>(0, 5)(prng)];
    };
    const Episode ep = rollout(e, random_policy, rng());
    double sum = 0.0;
    for (const auto& tr : ep.transitions) {
      sum += tr.r;
      CHECK(std::abs(tr.r) <= e.step_size + 1e-12);
    }
    CHECK(std::abs(sum - (euclidean(ep.start, e.target) - euclidean(ep.final_position, e.target))) < 1e-9);
  }
}
