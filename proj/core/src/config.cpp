#include "voxl/config.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "voxl/error.hpp"

namespace voxl {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::kConfig, (path.empty() ? std::string("config") : path) + ": " + msg);
}

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key_path(key), "expected a number");
      out = v->get<double>();
    }
  }
  template <typename Int>
    requires std::is_integral_v<Int>
  void read(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key_path(key), "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned()) {
          out = static_cast<Int>(v->get<std::uint64_t>());
        } else {
          const auto s = v->get<std::int64_t>();
          if (s < 0) fail(key_path(key), "must be non-negative");
          out = static_cast<Int>(s);
        }
      } else {
        out = static_cast<Int>(v->get<std::int64_t>());
      }
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key_path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key_path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void read_triple(const std::string& key, int& x, int& y, int& z) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 3) fail(key_path(key), "expected an array of 3 integers");
      for (const auto& e : *v) {
        if (!e.is_number_integer()) fail(key_path(key), "expected an array of 3 integers");
      }
      x = (*v)[0].get<int>();
      y = (*v)[1].get<int>();
      z = (*v)[2].get<int>();
    }
  }
  void read(const std::string& key, Dims& d) { read_triple(key, d.x, d.y, d.z); }
  void read(const std::string& key, Coord3& c) { read_triple(key, c.x, c.y, c.z); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(key_path(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) fail(path, msg);
}

Modality parse_modality(const std::string& s, const std::string& path) {
  if (s == "A") return Modality::kA;
  if (s == "B") return Modality::kB;
  fail(path, "expected \"A\" or \"B\", got \"" + s + "\"");
}

void require_dims(const Dims& d, const std::string& path) { require(d.positive(), path, "all extents must be >= 1"); }

void parse_phantom(Section& s, RunConfig& cfg) {
  PhantomConfig& p = cfg.phantom;
  s.read("dims", p.dims);
  require_dims(p.dims, s.key_path("dims"));
  std::string modality(modality_tag(p.modality));
  s.read("modality", modality);
  p.modality = parse_modality(modality, s.key_path("modality"));
  s.read("landmark", p.landmark_center);
  s.read("radii", p.landmark_radii);
  require(p.landmark_radii.x >= 0 && p.landmark_radii.y >= 0 && p.landmark_radii.z >= 0, s.key_path("radii"),
          "radii must be >= 0");
  const auto& c = p.landmark_center;
  const auto& r = p.landmark_radii;
  require(c.x - r.x >= 0 && c.y - r.y >= 0 && c.z - r.z >= 0 && c.x + r.x < p.dims.x && c.y + r.y < p.dims.y &&
              c.z + r.z < p.dims.z,
          s.key_path("landmark"), "landmark ellipsoid must fit inside dims " + p.dims.str());
  s.read("noise_sigma", p.noise_sigma);
  require(p.noise_sigma >= 0.0, s.key_path("noise_sigma"), "must be >= 0");
  s.finish();
}

void parse_coreset(Section& s, RunConfig& cfg) {
  CoresetConfig& c = cfg.coreset;
  s.read("enabled", cfg.coreset_enabled);
  std::string method(to_string(c.method));
  s.read("method", method);
  try {
    c.method = parse_coreset_method(method);
  } catch (const Error& e) {
    fail(s.key_path("method"), e.what());
  }
  s.read("n_ratio", c.n_ratio);
  require(c.n_ratio >= 1, s.key_path("n_ratio"), "must be >= 1");
  s.read("entropy_window", c.entropy_window);
  require(c.entropy_window >= 1, s.key_path("entropy_window"), "must be >= 1");
  s.read("gray_levels", c.gray_levels);
  require(c.gray_levels >= 2, s.key_path("gray_levels"), "must be >= 2");
  s.read("disjoint_blocks", c.disjoint_blocks);
  s.finish();
}

void parse_cohort(Section& s, ExperimentConfig& e) {
  s.read("train_patients", e.train_patients);
  require(e.train_patients >= 1, s.key_path("train_patients"), "must be >= 1");
  s.read("test_patients", e.test_patients);
  require(e.test_patients >= 1, s.key_path("test_patients"), "must be >= 1");
  s.read("landmark_jitter", e.landmark_jitter);
  require(e.landmark_jitter >= 0, s.key_path("landmark_jitter"), "must be >= 0");
  s.read("shared_anatomy", e.shared_anatomy);
  s.finish();
}

void parse_env(Section& s, ExperimentConfig& e) {
  s.read("obs_dims", e.obs_dims);
  s.read("obs_dims_full", e.obs_dims_full);
  for (const char* key : {"obs_dims", "obs_dims_full"}) {
    const Dims& d = std::string(key) == "obs_dims" ? e.obs_dims : e.obs_dims_full;
    require(d.x >= kMinObsExtent && d.y >= kMinObsExtent && d.z >= kMinObsExtent, s.key_path(key),
            "every extent must be >= " + std::to_string(kMinObsExtent) + " for two stride-2 convolutions");
  }
  s.read("step_size", e.step_size);
  require(e.step_size >= 1, s.key_path("step_size"), "must be >= 1");
  s.read("max_steps", e.max_steps);
  require(e.max_steps >= 1, s.key_path("max_steps"), "must be >= 1");
  s.read("success_radius", e.success_radius);
  require(e.success_radius >= 0.0, s.key_path("success_radius"), "must be >= 0");
  s.finish();
}

void parse_train(Section& s, TrainHyper& h) {
  s.read("gamma", h.gamma);
  require(h.gamma > 0.0 && h.gamma <= 1.0, s.key_path("gamma"), "must lie in (0, 1]");
  s.read("lr", h.lr);
  require(h.lr > 0.0, s.key_path("lr"), "must be > 0");
  s.read("batch_size", h.batch_size);
  require(h.batch_size >= 1, s.key_path("batch_size"), "must be >= 1");
  s.read("epsilon_start", h.epsilon_start);
  require(h.epsilon_start >= 0.0 && h.epsilon_start <= 1.0, s.key_path("epsilon_start"), "must lie in [0, 1]");
  s.read("epsilon_end", h.epsilon_end);
  require(h.epsilon_end >= 0.0 && h.epsilon_end <= 1.0, s.key_path("epsilon_end"), "must lie in [0, 1]");
  s.read("epsilon_decay_steps", h.epsilon_decay_steps);
  require(h.epsilon_decay_steps >= 1, s.key_path("epsilon_decay_steps"), "must be >= 1");
  s.read("target_sync_every", h.target_sync_every);
  require(h.target_sync_every >= 1, s.key_path("target_sync_every"), "must be >= 1");
  s.read("adam_beta1", h.adam_beta1);
  require(h.adam_beta1 >= 0.0 && h.adam_beta1 < 1.0, s.key_path("adam_beta1"), "must lie in [0, 1)");
  s.read("adam_beta2", h.adam_beta2);
  require(h.adam_beta2 >= 0.0 && h.adam_beta2 < 1.0, s.key_path("adam_beta2"), "must lie in [0, 1)");
  s.read("adam_eps", h.adam_eps);
  require(h.adam_eps > 0.0, s.key_path("adam_eps"), "must be > 0");
  s.finish();
}

void parse_curriculum(Section& s, CurriculumConfig& c) {
  if (const json* rounds = s.find("rounds")) {
    const std::string path = s.key_path("rounds");
    require(rounds->is_array() && !rounds->empty(), path, "expected a non-empty array");
    c.rounds.clear();
    for (std::size_t i = 0; i < rounds->size(); ++i) {
      Section r((*rounds)[i], path + "[" + std::to_string(i) + "]");
      RoundSpec spec;
      std::string modality = "A";
      r.read("modality", modality);
      spec.modality = parse_modality(modality, r.key_path("modality"));
      r.read("epochs", spec.epochs);
      require(spec.epochs >= 1, r.key_path("epochs"), "must be >= 1");
      r.read("episodes_per_epoch", spec.episodes_per_epoch);
      require(spec.episodes_per_epoch >= 1, r.key_path("episodes_per_epoch"), "must be >= 1");
      r.finish();
      c.rounds.push_back(spec);
    }
  }
  s.read("replay_mix", c.replay_mix);
  require(c.replay_mix >= 0.0 && c.replay_mix <= 1.0, s.key_path("replay_mix"),
          "must lie in [0, 1], got " + std::to_string(c.replay_mix));
  s.read("erb_fraction", c.erb_fraction);
  require(c.erb_fraction > 0.0 && c.erb_fraction <= 1.0, s.key_path("erb_fraction"), "must lie in (0, 1]");
  std::string policy(to_string(c.erb_policy));
  s.read("erb_policy", policy);
  try {
    c.erb_policy = parse_erb_policy(policy);
  } catch (const Error& e) {
    fail(s.key_path("erb_policy"), e.what());
  }
  s.read("train_every", c.train_every);
  require(c.train_every >= 1, s.key_path("train_every"), "must be >= 1");
  s.read("erb_updates_per_tick", c.erb_updates_per_tick);
  require(c.erb_updates_per_tick >= 1, s.key_path("erb_updates_per_tick"), "must be >= 1");
  s.read("warmup_transitions", c.warmup_transitions);
  s.read("replay_capacity", c.replay_capacity);
  require(c.replay_capacity >= 1, s.key_path("replay_capacity"), "must be >= 1");
  s.finish();
}

void parse_tasks(const json& j, const std::string& path, RunConfig& cfg) {
  require(j.is_array() && !j.empty(), path, "expected a non-empty array");
  std::set<std::string> names;
  cfg.experiment.tasks.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    Section t(j[i], path + "[" + std::to_string(i) + "]");
    TaskSpec task;
    task.name = "landmark" + std::to_string(i);
    t.read("name", task.name);
    require(!task.name.empty() && task.name.find_first_of(", \n\"") == std::string::npos, t.key_path("name"),
            "must be non-empty without commas, quotes or whitespace");
    require(names.insert(task.name).second, t.key_path("name"), "duplicate task name '" + task.name + "'");
    require(t.find("landmark") != nullptr, t.key_path("landmark"), "required");
    t.read("landmark", task.landmark);
    t.read("radii", task.radii);
    t.finish();
    cfg.experiment.tasks.push_back(task);
  }
}

void check_tasks(const RunConfig& cfg) {
  const Dims& d = cfg.experiment.volume_dims;
  for (std::size_t i = 0; i < cfg.experiment.tasks.size(); ++i) {
    const auto& t = cfg.experiment.tasks[i];
    const auto& c = t.landmark;
    const auto& r = t.radii;
    require(r.x >= 0 && r.y >= 0 && r.z >= 0 && c.x - r.x >= 0 && c.y - r.y >= 0 && c.z - r.z >= 0 &&
                c.x + r.x < d.x && c.y + r.y < d.y && c.z + r.z < d.z,
            "tasks[" + std::to_string(i) + "].landmark", "ellipsoid must fit inside phantom.dims " + d.str());
  }
}

}  // namespace

void RunConfig::finalize() {
  experiment.seed = seed;
  experiment.volume_dims = phantom.dims;
  experiment.noise_sigma = phantom.noise_sigma;
  coreset.threads = threads;
  if (coreset_enabled) {
    experiment.coreset = coreset;
  } else {
    experiment.coreset.reset();
  }
  if (experiment.tasks.empty()) {
    experiment.tasks = {{"landmark", phantom.landmark_center, phantom.landmark_radii}};
  }
  check_tasks(*this);
  try {
    experiment.validate();
  } catch (const Error& e) {
    fail("", e.what());
  }
}

ExperimentConfig RunConfig::coreset_experiment() const {
  ExperimentConfig e = experiment;
  e.coreset = coreset;
  return e;
}

ExperimentConfig RunConfig::full_experiment() const {
  ExperimentConfig e = experiment;
  e.coreset.reset();
  return e;
}

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "");
  top.read("seed", cfg.seed);
  top.read("output_dir", cfg.output_dir);
  top.read("threads", cfg.threads);
  require(cfg.threads >= 1, "threads", "must be >= 1");

  auto sub = [&](const std::string& key, auto&& parse) {
    if (const json* v = top.find(key)) {
      Section s(*v, key);
      parse(s);
    }
  };
  sub("phantom", [&](Section& s) { parse_phantom(s, cfg); });
  sub("coreset", [&](Section& s) { parse_coreset(s, cfg); });
  sub("cohort", [&](Section& s) { parse_cohort(s, cfg.experiment); });
  sub("env", [&](Section& s) { parse_env(s, cfg.experiment); });
  sub("train", [&](Section& s) { parse_train(s, cfg.experiment.curriculum.hyper); });
  sub("curriculum", [&](Section& s) { parse_curriculum(s, cfg.experiment.curriculum); });
  if (const json* t = top.find("tasks")) parse_tasks(*t, "tasks", cfg);
  sub("eval", [&](Section& s) {
    std::string start = cfg.eval_start == EvalStart::kCenter ? "center" : "random";
    s.read("start", start);
    require(start == "center" || start == "random", s.key_path("start"), "expected \"center\" or \"random\"");
    cfg.eval_start = start == "center" ? EvalStart::kCenter : EvalStart::kRandom;
    s.read("random_starts", cfg.eval_random_starts);
    require(cfg.eval_random_starts >= 1, s.key_path("random_starts"), "must be >= 1");
    s.read("baseline", cfg.eval_baseline);
    if (const json* envs = s.find("environments")) {
      const std::string path = s.key_path("environments");
      require(envs->is_array() && !envs->empty(), path, "expected a non-empty array of \"A\"/\"B\"");
      cfg.eval_environments.clear();
      for (std::size_t i = 0; i < envs->size(); ++i) {
        const std::string ep = path + "[" + std::to_string(i) + "]";
        require((*envs)[i].is_string(), ep, "expected \"A\" or \"B\"");
        cfg.eval_environments.push_back(parse_modality((*envs)[i].get<std::string>(), ep));
      }
    }
    s.finish();
  });
  sub("bench", [&](Section& s) {
    s.read("episodes_per_epoch", cfg.bench_episodes);
    require(cfg.bench_episodes >= 1, s.key_path("episodes_per_epoch"), "must be >= 1");
    s.read("max_steps", cfg.bench_max_steps);
    require(cfg.bench_max_steps >= 1, s.key_path("max_steps"), "must be >= 1");
    s.finish();
  });
  top.finish();
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_json(const RunConfig& cfg) {
  auto triple = [](int x, int y, int z) { return ordered_json::array({x, y, z}); };
  const ExperimentConfig& e = cfg.experiment;
  const TrainHyper& h = e.curriculum.hyper;
  const CurriculumConfig& c = e.curriculum;
  ordered_json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["threads"] = cfg.threads;
  j["phantom"] = {{"dims", triple(cfg.phantom.dims.x, cfg.phantom.dims.y, cfg.phantom.dims.z)},
                  {"modality", modality_tag(cfg.phantom.modality)},
                  {"landmark", triple(cfg.phantom.landmark_center.x, cfg.phantom.landmark_center.y,
                                      cfg.phantom.landmark_center.z)},
                  {"radii", triple(cfg.phantom.landmark_radii.x, cfg.phantom.landmark_radii.y,
                                   cfg.phantom.landmark_radii.z)},
                  {"noise_sigma", cfg.phantom.noise_sigma}};
  j["coreset"] = {{"enabled", cfg.coreset_enabled},
                  {"method", to_string(cfg.coreset.method)},
                  {"n_ratio", cfg.coreset.n_ratio},
                  {"entropy_window", cfg.coreset.entropy_window},
                  {"gray_levels", cfg.coreset.gray_levels},
                  {"disjoint_blocks", cfg.coreset.disjoint_blocks}};
  j["cohort"] = {{"train_patients", e.train_patients},
                 {"test_patients", e.test_patients},
                 {"landmark_jitter", e.landmark_jitter},
                 {"shared_anatomy", e.shared_anatomy}};
  j["env"] = {{"obs_dims", triple(e.obs_dims.x, e.obs_dims.y, e.obs_dims.z)},
              {"obs_dims_full", triple(e.obs_dims_full.x, e.obs_dims_full.y, e.obs_dims_full.z)},
              {"step_size", e.step_size},
              {"max_steps", e.max_steps},
              {"success_radius", e.success_radius}};
  j["train"] = {{"gamma", h.gamma},
                {"lr", h.lr},
                {"batch_size", h.batch_size},
                {"epsilon_start", h.epsilon_start},
                {"epsilon_end", h.epsilon_end},
                {"epsilon_decay_steps", h.epsilon_decay_steps},
                {"target_sync_every", h.target_sync_every},
                {"adam_beta1", h.adam_beta1},
                {"adam_beta2", h.adam_beta2},
                {"adam_eps", h.adam_eps}};
  ordered_json rounds = ordered_json::array();
  for (const auto& r : c.rounds) {
    rounds.push_back(
        {{"modality", modality_tag(r.modality)}, {"epochs", r.epochs}, {"episodes_per_epoch", r.episodes_per_epoch}});
  }
  j["curriculum"] = {{"rounds", rounds},
                     {"replay_mix", c.replay_mix},
                     {"erb_fraction", c.erb_fraction},
                     {"erb_policy", to_string(c.erb_policy)},
                     {"train_every", c.train_every},
                     {"erb_updates_per_tick", c.erb_updates_per_tick},
                     {"warmup_transitions", c.warmup_transitions},
                     {"replay_capacity", c.replay_capacity}};
  ordered_json tasks = ordered_json::array();
  for (const auto& t : e.tasks) {
    tasks.push_back({{"name", t.name},
                     {"landmark", triple(t.landmark.x, t.landmark.y, t.landmark.z)},
                     {"radii", triple(t.radii.x, t.radii.y, t.radii.z)}});
  }
  j["tasks"] = tasks;
  ordered_json envs = ordered_json::array();
  for (Modality m : cfg.eval_environments) envs.push_back(modality_tag(m));
  j["eval"] = {{"start", cfg.eval_start == EvalStart::kCenter ? "center" : "random"},
               {"random_starts", cfg.eval_random_starts},
               {"baseline", cfg.eval_baseline},
               {"environments", envs}};
  j["bench"] = {{"episodes_per_epoch", cfg.bench_episodes}, {"max_steps", cfg.bench_max_steps}};
  return j.dump(2) + "\n";
}

}  // namespace voxl
