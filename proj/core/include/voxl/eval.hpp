#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voxl/dqn.hpp"
#include "voxl/rlenv.hpp"
#include "voxl/stats.hpp"

namespace voxl {

// Anything that scores the six actions at a given state. Learned agents only
// look at the observation; test fixtures may also use the position.
class QAgent {
 public:
  virtual ~QAgent() = default;
  virtual QValues q_values(const Volume3D& observation, const AgentState& state) const = 0;
};

class NetworkAgent final : public QAgent {
 public:
  explicit NetworkAgent(const QNetwork& net) : net_(&net) {}
  QValues q_values(const Volume3D& observation, const AgentState&) const override {
    return q_forward(*net_, observation);
  }

 private:
  const QNetwork* net_;
};

// Q(s, a) = distance decrease of action a. Greedy play walks to the target.
class OracleAgent final : public QAgent {
 public:
  explicit OracleAgent(EnvSpec spec) : spec_(std::move(spec)) {}
  QValues q_values(const Volume3D& observation, const AgentState& state) const override;

 private:
  EnvSpec spec_;
};

struct StoppingRule {
  bool stop_at_success = true;
  int max_visits = 4;          // stop when any position is entered this many times
  std::optional<int> max_steps;  // defaults to the environment's max_steps
};

Coord3 volume_center(const Dims& dims);

// Greedy (epsilon = 0) rollout. Returns the final position, or the position
// that hit the revisit limit.
Coord3 localize(const QAgent& agent, const EnvSpec& spec, const StoppingRule& rule = {},
                std::optional<Coord3> start = std::nullopt);

// || scale * pred - truth ||_2 in original voxel units.
double distance_error(const Coord3& pred, const Coord3& truth, int scale);

struct EvalCase {
  EnvSpec env;
  Coord3 truth;   // original-scale landmark
  int scale = 1;  // coreset ratio, 1 when uncompressed
  std::string environment;
  int case_id = 0;
};

enum class EvalStart { kCenter, kRandom };

// Error of one case; kRandom averages `random_starts` seeded reset() starts.
double evaluate_case(const QAgent& agent, const EvalCase& ec, EvalStart start = EvalStart::kCenter,
                     int random_starts = 5, std::uint64_t seed = 0);

// Errors of one method on one task, case-aligned with every other method.
struct MethodTaskErrors {
  std::string method;
  std::string task;
  std::vector<double> errors;
};

struct SummaryCell {
  double mean_error = 0.0;
  std::optional<TTestResult> vs_baseline;
};

struct SummaryRow {
  std::string method;
  std::vector<SummaryCell> per_task;  // in `tasks` order
  double average_of_cases = 0.0;
  double average_of_task_means = 0.0;
  std::optional<TTestResult> pooled_vs_baseline;
};

struct SummaryTable {
  std::vector<std::string> tasks;
  std::string baseline;
  std::vector<SummaryRow> rows;
};

SummaryTable summarize(const std::vector<MethodTaskErrors>& results, const std::string& baseline);
// method,<task>_mean,<task>_p,...,avg_case_mean,avg_task_mean,pooled_p
std::string summary_csv(const SummaryTable& table);

}  // namespace voxl
