#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "voxl/error.hpp"
#include "voxl/eval.hpp"

using namespace voxl;
using voxl::test::random_volume;

namespace {

// Always prefers one action.
class FixedAgent final : public QAgent {
 public:
  explicit FixedAgent(Action a) : a_(a) {}
  QValues q_values(const Volume3D&, const AgentState&) const override {
    QValues q{};
    q[static_cast<std::size_t>(action_index(a_))] = 1.0;
    return q;
  }

 private:
  Action a_;
};

// Alternates +x / -x based on parity of x, so it oscillates in place.
class PingPongAgent final : public QAgent {
 public:
  QValues q_values(const Volume3D&, const AgentState& s) const override {
    QValues q{};
    q[s.position.x % 2 == 0 ? 0 : 1] = 1.0;
    return q;
  }
};

EnvSpec env(Coord3 target) { return make_env(random_volume({24, 24, 24}, 1), target, {7, 7, 7}); }

}  // namespace

TEST_CASE("distance_error") {
  CHECK(distance_error({5, 5, 5}, {15, 15, 15}, 3) == 0.0);
  CHECK(distance_error({0, 0, 0}, {3, 4, 0}, 1) == doctest::Approx(5.0));
  CHECK(distance_error({4, 4, 4}, {15, 15, 15}, 3) == doctest::Approx(std::sqrt(27.0)));
  CHECK_THROWS_AS(distance_error({0, 0, 0}, {0, 0, 0}, 0), Error);
}

TEST_CASE("property: distance_error symmetry, sign and zero set") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> c(0, 30), s(1, 4);
  for (int t = 0; t < 200; ++t) {
    const Coord3 p{c(rng), c(rng), c(rng)}, q{c(rng), c(rng), c(rng)};
    const int n = s(rng);
    const Coord3 ps{p.x * n, p.y * n, p.z * n};
    const double e = distance_error(p, q, n);
    CHECK(e >= 0.0);
    CHECK(e == doctest::Approx(distance_error(q, ps, 1)));
    CHECK((e == 0.0) == (ps == q));
  }
}

TEST_CASE("localize") {
  SUBCASE("oracle reaches the target from the centre") {
    for (Coord3 target : {Coord3{3, 20, 5}, Coord3{12, 12, 12}, Coord3{23, 0, 23}}) {
      const EnvSpec e = env(target);
      const Coord3 p = localize(OracleAgent(e), e);
      CHECK(euclidean(p, target) <= e.success_radius);
    }
  }
  SUBCASE("constant +x runs into the wall and stops on revisits") {
    const EnvSpec e = env({2, 2, 2});
    const Coord3 p = localize(FixedAgent(Action::kPosX), e);
    CHECK(p == Coord3{23, 12, 12});
  }
  SUBCASE("max_steps bound") {
    const EnvSpec e = env({2, 2, 2});
    StoppingRule rule;
    rule.max_steps = 3;
    CHECK(localize(FixedAgent(Action::kPosX), e, rule) == Coord3{15, 12, 12});
  }
  SUBCASE("oscillation stops on the 4th visit") {
    const EnvSpec e = env({2, 2, 2});
    // From x=12: +x to 13, -x to 12 (2nd), 13 (2nd), 12 (3rd), 13 (3rd), 12 (4th).
    CHECK(localize(PingPongAgent(), e) == Coord3{12, 12, 12});
  }
  SUBCASE("deterministic") {
    const EnvSpec e = env({20, 4, 9});
    const OracleAgent o(e);
    CHECK(localize(o, e) == localize(o, e));
  }
  SUBCASE("explicit start must be in bounds") {
    const EnvSpec e = env({20, 4, 9});
    CHECK_THROWS_AS(localize(OracleAgent(e), e, {}, Coord3{-1, 0, 0}), Error);
  }
}

TEST_CASE("evaluate_case") {
  const EnvSpec e = env({20, 4, 9});
  const EvalCase ec{e, {20, 4, 9}, 1, "A", 0};
  const OracleAgent o(e);
  CHECK(evaluate_case(o, ec, EvalStart::kCenter) <= e.success_radius);
  CHECK(evaluate_case(o, ec, EvalStart::kRandom, 5, 3) <= e.success_radius);
  CHECK(evaluate_case(o, ec, EvalStart::kRandom, 5, 3) == evaluate_case(o, ec, EvalStart::kRandom, 5, 3));
}

TEST_CASE("summarize and summary_csv") {
  const std::vector<MethodTaskErrors> results{
      {"conventional", "t0", {1.0, 2.0, 3.0}},
      {"conventional", "t1", {1.0, 3.0, 5.0}},
      {"max_entropy", "t0", {2.0, 3.0, 4.0}},
      {"max_entropy", "t1", {1.0, 3.0, 5.0}},
  };
  const SummaryTable t = summarize(results, "conventional");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.tasks == std::vector<std::string>{"t0", "t1"});
  const SummaryRow& base = t.rows[0];
  CHECK_FALSE(base.per_task[0].vs_baseline.has_value());
  const SummaryRow& me = t.rows[1];
  CHECK(me.per_task[0].mean_error == doctest::Approx(3.0));
  CHECK(me.per_task[0].vs_baseline->p_value == 0.0);  // constant +1 difference
  CHECK(me.per_task[1].vs_baseline->p_value == 1.0);  // identical errors
  CHECK(me.average_of_cases == doctest::Approx(3.0));
  CHECK(me.average_of_task_means == doctest::Approx(3.0));
  REQUIRE(me.pooled_vs_baseline.has_value());
  CHECK(me.pooled_vs_baseline->df == 5);

  const std::string csv = summary_csv(t);
  CHECK(csv.rfind("method,t0_mean,t0_p,t1_mean,t1_p,avg_case_mean,avg_task_mean,pooled_p\n", 0) == 0);
  CHECK(csv.find("conventional,2.000000,NA,3.000000,NA,2.500000,2.500000,NA\n") != std::string::npos);
  CHECK(csv.find("max_entropy,3.000000,0.000000,3.000000,1.000000,3.000000,3.000000,") != std::string::npos);

  CHECK_THROWS_AS(summarize({{"a", "t0", {1.0}}, {"b", "t1", {1.0}}}, "a"), Error);
  CHECK_THROWS_AS(summarize({{"a", "t0", {1.0, 2.0}}, {"b", "t0", {1.0}}}, "a"), Error);
}

TEST_CASE("unequal task means vs case means") {
  const SummaryTable t = summarize({{"m", "t0", {1.0, 1.0, 1.0, 1.0}}, {"m", "t1", {4.0, 4.0}}}, "none");
  CHECK(t.rows[0].average_of_cases == doctest::Approx(2.0));
  CHECK(t.rows[0].average_of_task_means == doctest::Approx(2.5));
}
