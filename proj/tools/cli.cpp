#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "voxl/bench.hpp"
#include "voxl/config.hpp"
#include "voxl/coreset.hpp"
#include "voxl/error.hpp"
#include "voxl/eval.hpp"
#include "voxl/lifelong.hpp"
#include "voxl/report_io.hpp"
#include "voxl/volume.hpp"

namespace voxl::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
};

void add_common(CLI::App* sub, Common& c, bool out_required) {
  sub->add_option("--config", c.config, "JSON run config");
  sub->add_option("--seed", c.seed, "Override the config seed");
  auto* out = sub->add_option("--out", c.out, "Output path (file or directory, per command)");
  if (out_required) out->required();
  sub->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.threads = c.threads;
  cfg.finalize();
  return cfg;
}

ordered_json dims_json(const Dims& d) { return ordered_json::array({d.x, d.y, d.z}); }
ordered_json coord_json(const Coord3& c) { return ordered_json::array({c.x, c.y, c.z}); }

ordered_json manifest(const std::vector<std::string>& args, const RunConfig& cfg, const std::vector<std::string>& outputs) {
  ordered_json m;
  m["tool"] = "voxl";
  m["version"] = "0.1.0";
  m["argv"] = args;
  m["seed"] = cfg.seed;
  m["threads"] = cfg.threads;
  m["config"] = ordered_json::parse(run_config_json(cfg));
  m["outputs"] = outputs;
  return m;
}

void progress(const std::string& msg) { std::cerr << "[voxl] " << msg << '\n'; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_compress(const std::vector<std::string>& args, const Common& c, const std::string& input,
                 const std::optional<std::string>& method, const std::optional<int>& n) {
  RunConfig cfg = resolve_config(c);
  CoresetConfig cc = cfg.coreset;
  if (method) {
    try {
      cc.method = parse_coreset_method(*method);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (n) {
    if (*n < 1) throw UsageError("--n must be >= 1");
    cc.n_ratio = *n;
  }
  const Volume3D vol = load_volume(input);
  const auto t0 = std::chrono::steady_clock::now();
  const CoresetResult r = compress(vol, cc);
  const double wall = seconds_since(t0);
  const fs::path out = c.out;
  save_volume(r.volume, out);
  fs::path sidecar = out;
  sidecar += ".json";
  ordered_json j;
  j["method"] = to_string(cc.method);
  j["n_ratio"] = cc.n_ratio;
  j["input"] = input;
  j["input_dims"] = dims_json(vol.dims());
  j["output_dims"] = dims_json(r.volume.dims());
  j["wall_clock_seconds"] = wall;
  j["manifest"] = manifest(args, cfg, {out.string()});
  write_text_file(sidecar, j.dump(2) + "\n");
  progress("compressed " + vol.dims().str() + " -> " + r.volume.dims().str() + " (" + std::string(to_string(cc.method)) +
           ", N=" + std::to_string(cc.n_ratio) + ")");
  return kExitOk;
}

int cmd_phantom(const std::vector<std::string>& args, const Common& c, const std::optional<std::string>& modality) {
  RunConfig cfg = resolve_config(c);
  PhantomConfig pc = cfg.phantom;
  pc.seed = cfg.seed;
  if (modality) {
    if (*modality == "A") {
      pc.modality = Modality::kA;
    } else if (*modality == "B") {
      pc.modality = Modality::kB;
    } else {
      throw UsageError("--modality must be A or B");
    }
  }
  const Phantom ph = make_phantom(pc);
  const fs::path out = c.out;
  save_volume(ph.volume, out);
  fs::path sidecar = out;
  sidecar += ".json";
  ordered_json j;
  j["dims"] = dims_json(ph.volume.dims());
  j["modality"] = modality_tag(pc.modality);
  j["landmark"] = coord_json(ph.landmark);
  j["radii"] = coord_json(pc.landmark_radii);
  j["noise_sigma"] = pc.noise_sigma;
  j["seed"] = pc.seed;
  j["manifest"] = manifest(args, cfg, {out.string()});
  write_text_file(sidecar, j.dump(2) + "\n");
  progress("phantom " + ph.volume.dims().str() + " written to " + out.string());
  return kExitOk;
}

int cmd_train(const std::vector<std::string>& args, const Common& c) {
  if (c.config.empty()) throw UsageError("train needs --config");
  RunConfig cfg = resolve_config(c);
  const fs::path dir = cfg.output_dir;
  progress("training " + cfg.experiment.method_name() + " with seed " + std::to_string(cfg.seed));
  const auto t0 = std::chrono::steady_clock::now();
  CurriculumOutcome outcome = run_curriculum(cfg.experiment);
  progress("training finished in " + std::to_string(seconds_since(t0)) + " s");
  outcome.report.config_json = run_config_json(cfg);

  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < outcome.networks.size(); ++i) {
    const TaskSpec& task = cfg.experiment.tasks[i];
    const fs::path ckpt = dir / "checkpoints" / (task.name + ".voxlnet");
    fs::create_directories(ckpt.parent_path());
    save_checkpoint(outcome.networks[i], ckpt,
                    {{"method", cfg.experiment.method_name()},
                     {"task", task.name},
                     {"seed", std::to_string(cfg.seed)},
                     {"obs_dims", outcome.networks[i].obs_dims().str()}});
    outputs.push_back(ckpt.string());
  }
  write_text_file(dir / "report.json", report_json(outcome.report));
  write_text_file(dir / "report.csv", report_csv(outcome.report));
  outputs.push_back((dir / "report.json").string());
  outputs.push_back((dir / "report.csv").string());
  write_text_file(dir / "manifest.json", manifest(args, cfg, outputs).dump(2) + "\n");
  for (const auto& s : outcome.report.summaries) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "round %d env %s task %s: mean error %.3f", s.round, s.environment.c_str(),
                  s.task.c_str(), s.mean);
    progress(buf);
  }
  return kExitOk;
}

// Pipeline a checkpoint was trained for: "conventional" runs at full
// resolution, anything else is a coreset method name.
ExperimentConfig pipeline_for(const RunConfig& cfg, const CheckpointMeta& meta) {
  auto it = meta.find("method");
  if (it == meta.end()) return cfg.experiment;
  if (it->second == "conventional") return cfg.full_experiment();
  ExperimentConfig e = cfg.coreset_experiment();
  e.coreset->method = parse_coreset_method(it->second);
  return e;
}

const TaskSpec& task_for(const ExperimentConfig& e, const CheckpointMeta& meta, const std::string& path) {
  auto it = meta.find("task");
  if (it == meta.end()) return e.tasks.front();
  for (const auto& t : e.tasks) {
    if (t.name == it->second) return t;
  }
  throw Error(ErrorCode::kShapeMismatch, path + ": task '" + it->second + "' is not in the config");
}

std::vector<double> evaluate_all(const QAgent& agent, const std::vector<EvalCase>& cases, const RunConfig& cfg) {
  std::vector<double> errs;
  for (const auto& ec : cases) {
    errs.push_back(evaluate_case(agent, ec, cfg.eval_start, cfg.eval_random_starts, derive_seed(cfg.seed, {9})));
  }
  return errs;
}

std::vector<EvalCase> cases_for(const ExperimentConfig& e, const TaskSpec& task, const RunConfig& cfg) {
  std::vector<EvalCase> all;
  for (Modality m : cfg.eval_environments) {
    auto cases = test_cases(e, task, m);
    all.insert(all.end(), cases.begin(), cases.end());
  }
  return all;
}

int cmd_eval(const std::vector<std::string>& args, const Common& c, const std::vector<std::string>& checkpoints,
             bool oracle) {
  if (checkpoints.empty() && !oracle) throw UsageError("eval needs at least one --checkpoint or --oracle");
  RunConfig cfg = resolve_config(c);
  const fs::path dir = cfg.output_dir;
  std::vector<MethodTaskErrors> results;
  std::map<std::pair<std::string, std::string>, std::string> seen;

  for (const auto& path : checkpoints) {
    Checkpoint ck = load_checkpoint(path);
    const ExperimentConfig e = pipeline_for(cfg, ck.meta);
    const Dims want = e.pipeline_obs_dims();
    if (ck.network.obs_dims() != want) {
      throw Error(ErrorCode::kShapeMismatch, path + ": shape mismatch, checkpoint obs_dims " +
                                                 ck.network.obs_dims().str() + " but config expects " + want.str());
    }
    const TaskSpec& task = task_for(e, ck.meta, path);
    const std::string method = e.method_name();
    if (auto [it, fresh] = seen.emplace(std::make_pair(method, task.name), path); !fresh) {
      throw UsageError("checkpoints " + it->second + " and " + path + " both cover " + method + "/" + task.name);
    }
    progress("evaluating " + path + " as " + method + "/" + task.name);
    const NetworkAgent agent(ck.network);
    results.push_back({method, task.name, evaluate_all(agent, cases_for(e, task, cfg), cfg)});
  }
  if (oracle) {
    for (const auto& task : cfg.experiment.tasks) {
      std::vector<double> errs;
      for (const auto& ec : cases_for(cfg.experiment, task, cfg)) {
        const OracleAgent agent(ec.env);
        errs.push_back(evaluate_case(agent, ec, cfg.eval_start, cfg.eval_random_starts, derive_seed(cfg.seed, {9})));
      }
      results.push_back({"oracle", task.name, std::move(errs)});
    }
  }
  const SummaryTable table = summarize(results, cfg.eval_baseline);
  write_text_file(dir / "summary.csv", summary_csv(table));

  std::string cases_csv = "method,task,case_index,error\n";
  for (const auto& r : results) {
    for (std::size_t i = 0; i < r.errors.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", r.errors[i]);
      cases_csv += r.method + "," + r.task + "," + std::to_string(i) + "," + buf + "\n";
    }
  }
  write_text_file(dir / "cases.csv", cases_csv);
  write_text_file(dir / "manifest.json",
                  manifest(args, cfg, {(dir / "summary.csv").string(), (dir / "cases.csv").string()}).dump(2) + "\n");
  for (const auto& row : table.rows) {
    progress(row.method + ": average error " + std::to_string(row.average_of_cases));
  }
  return kExitOk;
}

int cmd_bench(const std::vector<std::string>& args, const Common& c) {
  RunConfig cfg = resolve_config(c);
  const fs::path dir = cfg.output_dir;
  auto shape = [&](ExperimentConfig e) {
    const Modality m = e.curriculum.rounds.front().modality;
    e.curriculum.rounds = {{m, 1, cfg.bench_episodes}};
    e.max_steps = cfg.bench_max_steps;
    return e;
  };
  progress("benchmarking coreset vs full-resolution epochs");
  const TimingReport r = benchmark_epoch(shape(cfg.coreset_experiment()), shape(cfg.full_experiment()));
  write_text_file(dir / "timing.json", timing_json(r));
  write_text_file(dir / "timing.csv", timing_csv(r));
  write_text_file(dir / "manifest.json",
                  manifest(args, cfg, {(dir / "timing.json").string(), (dir / "timing.csv").string()}).dump(2) + "\n");
  char buf[200];
  std::snprintf(buf, sizeof(buf), "speedup %.2fx without ERB, %.2fx with ERB", r.speedup_without_erb(),
                r.speedup_with_erb());
  progress(buf);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Volumetric coreset compression and lifelong DQN landmark localization"};
  app.name(args.empty() ? "voxl" : args.front());
  app.require_subcommand(1);

  Common common;
  std::string input;
  std::optional<std::string> method;
  std::optional<int> n;
  std::optional<std::string> modality;
  std::vector<std::string> checkpoints;
  bool oracle = false;

  auto* compress_cmd = app.add_subcommand("compress", "Build a coreset of a VOL file");
  add_common(compress_cmd, common, true);
  compress_cmd->add_option("--input", input, "Source VOL file")->required();
  compress_cmd->add_option("--method", method, "average, center_sample or max_entropy");
  compress_cmd->add_option("--n", n, "Per-axis scaling ratio");

  auto* phantom_cmd = app.add_subcommand("phantom", "Write a synthetic phantom VOL file");
  add_common(phantom_cmd, common, true);
  phantom_cmd->add_option("--modality", modality, "A or B");

  auto* train_cmd = app.add_subcommand("train", "Run the lifelong curriculum");
  add_common(train_cmd, common, false);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints on held-out phantoms");
  add_common(eval_cmd, common, false);
  eval_cmd->add_option("--checkpoint", checkpoints, "VOXLNET1 checkpoint (repeatable)");
  eval_cmd->add_flag("--oracle", oracle, "Add the ground-truth oracle agent as a method");

  auto* bench_cmd = app.add_subcommand("bench", "Time coreset vs full-resolution epochs");
  add_common(bench_cmd, common, false);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*compress_cmd) return cmd_compress(args, common, input, method, n);
    if (*phantom_cmd) return cmd_phantom(args, common, modality);
    if (*train_cmd) return cmd_train(args, common);
    if (*eval_cmd) return cmd_eval(args, common, checkpoints, oracle);
    if (*bench_cmd) return cmd_bench(args, common);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::kConfig ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace voxl::cli
