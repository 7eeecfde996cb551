#include "voxl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "voxl/error.hpp"

namespace voxl {

QValues OracleAgent::q_values(const Volume3D&, const AgentState& state) const {
  QValues q{};
  const Dims& d = spec_.volume->dims();
  const double here = euclidean(state.position, spec_.target);
  for (Action a : kAllActions) {
    const Coord3 delta = action_delta(a);
    const Coord3 next{std::clamp(state.position.x + delta.x * spec_.step_size, 0, d.x - 1),
                      std::clamp(state.position.y + delta.y * spec_.step_size, 0, d.y - 1),
                      std::clamp(state.position.z + delta.z * spec_.step_size, 0, d.z - 1)};
    q[static_cast<std::size_t>(action_index(a))] = here - euclidean(next, spec_.target);
  }
  return q;
}

Coord3 volume_center(const Dims& dims) { return {dims.x / 2, dims.y / 2, dims.z / 2}; }

Coord3 localize(const QAgent& agent, const EnvSpec& spec, const StoppingRule& rule, std::optional<Coord3> start) {
  spec.validate();
  AgentState state{start.value_or(volume_center(spec.volume->dims())), 0};
  if (!spec.volume->contains(state.position)) {
    throw Error(ErrorCode::kOutOfBounds, "localization start lies outside the volume");
  }
  const int max_steps = rule.max_steps.value_or(spec.max_steps);
  std::map<Coord3, int> visits;
  visits[state.position] = 1;
  for (int i = 0; i < max_steps; ++i) {
    if (rule.stop_at_success && euclidean(state.position, spec.target) <= spec.success_radius) break;
    const Volume3D obs = observe(spec, state);
    const QValues q = agent.q_values(obs, state);
    const Action a = static_cast<Action>(argmax_action(q));
    state = step(spec, state, a).state;
    if (++visits[state.position] >= rule.max_visits) break;
  }
  return state.position;
}

double distance_error(const Coord3& pred, const Coord3& truth, int scale) {
  if (scale < 1) throw Error(ErrorCode::kInvalidArgument, "scale must be >= 1");
  return euclidean({pred.x * scale, pred.y * scale, pred.z * scale}, truth);
}

double evaluate_case(const QAgent& agent, const EvalCase& ec, EvalStart start, int random_starts,
                     std::uint64_t seed) {
  if (start == EvalStart::kCenter) return distance_error(localize(agent, ec.env), ec.truth, ec.scale);
  double total = 0.0;
  const int n = std::max(random_starts, 1);
  for (int i = 0; i < n; ++i) {
    const AgentState s = reset(ec.env, seed + static_cast<std::uint64_t>(i));
    total += distance_error(localize(agent, ec.env, {}, s.position), ec.truth, ec.scale);
  }
  return total / n;
}

SummaryTable summarize(const std::vector<MethodTaskErrors>& results, const std::string& baseline) {
  SummaryTable table;
  table.baseline = baseline;
  std::vector<std::string> methods;
  std::map<std::pair<std::string, std::string>, const std::vector<double>*> lookup;
  for (const auto& r : results) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(table.tasks.begin(), table.tasks.end(), r.task) == table.tasks.end()) {
      table.tasks.push_back(r.task);
    }
    lookup[{r.method, r.task}] = &r.errors;
  }
  const bool has_baseline = std::find(methods.begin(), methods.end(), baseline) != methods.end();

  for (const auto& m : methods) {
    SummaryRow row;
    row.method = m;
    std::vector<double> pooled;
    std::vector<double> pooled_base;
    double task_mean_sum = 0.0;
    for (const auto& task : table.tasks) {
      auto it = lookup.find({m, task});
      if (it == lookup.end()) {
        throw Error(ErrorCode::kInvalidArgument, "method '" + m + "' has no results for task '" + task + "'");
      }
      const auto& errs = *it->second;
      SummaryCell cell;
      cell.mean_error = mean(errs);
      task_mean_sum += cell.mean_error;
      pooled.insert(pooled.end(), errs.begin(), errs.end());
      if (has_baseline && m != baseline) {
        const auto& base = *lookup.at({baseline, task});
        if (base.size() != errs.size()) {
          throw Error(ErrorCode::kShapeMismatch, "method '" + m + "' and baseline disagree on case count for " + task);
        }
        pooled_base.insert(pooled_base.end(), base.begin(), base.end());
        if (errs.size() >= 2) cell.vs_baseline = paired_t_test(errs, base);
      }
      row.per_task.push_back(cell);
    }
    row.average_of_cases = mean(pooled);
    row.average_of_task_means = table.tasks.empty() ? 0.0 : task_mean_sum / static_cast<double>(table.tasks.size());
    if (!pooled_base.empty() && pooled.size() >= 2) row.pooled_vs_baseline = paired_t_test(pooled, pooled_base);
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_p(const std::optional<TTestResult>& t) { return t ? fmt(t->p_value) : std::string("NA"); }

}  // namespace

std::string summary_csv(const SummaryTable& table) {
  std::ostringstream os;
  os << "method";
  for (const auto& t : table.tasks) os << ',' << t << "_mean," << t << "_p";
  os << ",avg_case_mean,avg_task_mean,pooled_p\n";
  for (const auto& row : table.rows) {
    os << row.method;
    for (const auto& cell : row.per_task) os << ',' << fmt(cell.mean_error) << ',' << fmt_p(cell.vs_baseline);
    os << ',' << fmt(row.average_of_cases) << ',' << fmt(row.average_of_task_means) << ','
       << fmt_p(row.pooled_vs_baseline) << '\n';
  }
  return os.str();
}

}  // namespace voxl
