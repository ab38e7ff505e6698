#include "dgtd/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>

#include "dgtd/cartpole.hpp"
#include "dgtd/learners.hpp"
#include "dgtd/mdp.hpp"
#include "dgtd/models.hpp"
#include "dgtd/objectives.hpp"
#include "dgtd/rng.hpp"
#include "dgtd/saddle.hpp"
#include "dgtd/serialize.hpp"
#include "dgtd/stream.hpp"

namespace dgtd {

namespace {

// Namespacing constants for derived generator keys, so the stream (seeded
// directly by the seed index), the parameter initialization, and the worker's
// own draws never share a key.
constexpr std::uint64_t kThetaInitOffset = 0x71000000ull;
constexpr std::uint64_t kWorkerRngOffset = 1ull << 32;
constexpr std::uint64_t kCalibrationStreamIndex = 1ull << 33;
constexpr std::uint64_t kSaddleMdpSeed = 90210ull;

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config field '") + key +
                                "': " + e.what());
  }
}

void check_known_keys(const nlohmann::json& j,
                      std::initializer_list<const char*> known,
                      const char* scope) {
  if (!j.is_object())
    throw std::invalid_argument(std::string(scope) +
                                ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool found = false;
    for (const char* k : known)
      if (item.key() == k) {
        found = true;
        break;
      }
    if (!found)
      throw std::invalid_argument(std::string("unknown config field '") +
                                  scope + item.key() + "'");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const GridSpec& g) {
  j = {{"v_min", g.v_min}, {"v_max", g.v_max}, {"m", g.m}};
}

void from_json(const nlohmann::json& j, GridSpec& g) {
  check_known_keys(j, {"v_min", "v_max", "m"}, "grid.");
  read_field(j, "v_min", g.v_min);
  read_field(j, "v_max", g.v_max);
  read_field(j, "m", g.m);
}

void to_json(nlohmann::json& j, const ScheduleSpec& s) {
  j = {{"family", s.family}, {"a0", s.a0}, {"p", s.p}};
}

void from_json(const nlohmann::json& j, ScheduleSpec& s) {
  check_known_keys(j, {"family", "a0", "p"}, "schedule.");
  read_field(j, "family", s.family);
  read_field(j, "a0", s.a0);
  read_field(j, "p", s.p);
}

void to_json(nlohmann::json& j, const EpsilonSpec& e) {
  j = {{"start", e.start}, {"floor", e.floor}, {"horizon", e.horizon}};
}

void from_json(const nlohmann::json& j, EpsilonSpec& e) {
  check_known_keys(j, {"start", "floor", "horizon"}, "epsilon.");
  read_field(j, "start", e.start);
  read_field(j, "floor", e.floor);
  read_field(j, "horizon", e.horizon);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"preset", c.preset},
       {"environment", c.environment},
       {"algorithm", c.algorithm},
       {"model", c.model},
       {"activation", c.activation},
       {"grid", c.grid},
       {"alpha", c.alpha},
       {"beta", c.beta},
       {"epsilon", c.epsilon},
       {"gamma", c.gamma},
       {"radius", c.radius},
       {"eta", c.eta},
       {"r_theta", c.r_theta},
       {"r_w", c.r_w},
       {"seeds", c.seeds},
       {"master_seed", c.master_seed},
       {"total_steps", c.total_steps},
       {"total_episodes", c.total_episodes},
       {"eval_every", c.eval_every},
       {"eval_episodes", c.eval_episodes},
       {"hidden", c.hidden},
       {"replay_capacity", c.replay_capacity},
       {"calibration_samples", c.calibration_samples},
       {"confidence", c.confidence},
       {"grid_width", c.grid_width},
       {"grid_height", c.grid_height},
       {"step_reward", c.step_reward},
       {"goal_reward", c.goal_reward},
       {"behavior_perturbation", c.behavior_perturbation},
       {"teleport", c.teleport},
       {"keep_checkpoints", c.keep_checkpoints}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  check_known_keys(
      j,
      {"preset",          "environment",      "algorithm",
       "model",           "activation",       "grid",
       "alpha",           "beta",             "epsilon",
       "gamma",           "radius",           "eta",
       "r_theta",         "r_w",              "seeds",
       "master_seed",     "total_steps",      "total_episodes",
       "eval_every",      "eval_episodes",    "hidden",
       "replay_capacity", "calibration_samples", "confidence",
       "grid_width",      "grid_height",      "step_reward",
       "goal_reward",     "behavior_perturbation", "teleport",
       "keep_checkpoints"},
      "");
  read_field(j, "preset", c.preset);
  read_field(j, "environment", c.environment);
  read_field(j, "algorithm", c.algorithm);
  read_field(j, "model", c.model);
  read_field(j, "activation", c.activation);
  read_field(j, "grid", c.grid);
  read_field(j, "alpha", c.alpha);
  read_field(j, "beta", c.beta);
  read_field(j, "epsilon", c.epsilon);
  read_field(j, "gamma", c.gamma);
  read_field(j, "radius", c.radius);
  read_field(j, "eta", c.eta);
  read_field(j, "r_theta", c.r_theta);
  read_field(j, "r_w", c.r_w);
  read_field(j, "seeds", c.seeds);
  read_field(j, "master_seed", c.master_seed);
  read_field(j, "total_steps", c.total_steps);
  read_field(j, "total_episodes", c.total_episodes);
  read_field(j, "eval_every", c.eval_every);
  read_field(j, "eval_episodes", c.eval_episodes);
  read_field(j, "hidden", c.hidden);
  read_field(j, "replay_capacity", c.replay_capacity);
  read_field(j, "calibration_samples", c.calibration_samples);
  read_field(j, "confidence", c.confidence);
  read_field(j, "grid_width", c.grid_width);
  read_field(j, "grid_height", c.grid_height);
  read_field(j, "step_reward", c.step_reward);
  read_field(j, "goal_reward", c.goal_reward);
  read_field(j, "behavior_perturbation", c.behavior_perturbation);
  read_field(j, "teleport", c.teleport);
  read_field(j, "keep_checkpoints", c.keep_checkpoints);
}

namespace {

void require(bool ok, const char* message) {
  if (!ok) throw std::invalid_argument(message);
}

bool one_of(const std::string& value,
            std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (value == o) return true;
  return false;
}

void validate_schedule(const ScheduleSpec& s, const char* field) {
  if (!one_of(s.family, {"power_law", "constant"}))
    throw std::invalid_argument(std::string(field) +
                                ".family: must be power_law or constant");
  if (!(s.a0 > 0))
    throw std::invalid_argument(std::string(field) + ".a0: must be > 0");
  if (!(std::isfinite(s.p) && s.p >= 0))
    throw std::invalid_argument(std::string(field) +
                                ".p: must be finite and >= 0");
}

StepSchedule to_schedule(const ScheduleSpec& s) {
  if (s.family == "constant") return StepSchedule::constant(s.a0);
  return StepSchedule::power(s.a0, s.p);
}

}  // namespace

void validate(const ExperimentConfig& c) {
  require(one_of(c.environment,
                 {"gridworld", "cartpole-pe", "cartpole-control", "saddle"}),
          "environment: must be one of gridworld, cartpole-pe, "
          "cartpole-control, saddle");
  require(one_of(c.algorithm, {"dgtd2", "dtdc", "gtd2", "tdc",
                               "nonlinear-gtd2", "nonlinear-tdc", "dgreedygq",
                               "sgda"}),
          "algorithm: unknown algorithm name");
  require(one_of(c.model, {"linear-onehot", "linear-value-onehot",
                           "softmax-mlp", "q-mlp"}),
          "model: unknown model name");
  require(one_of(c.activation, {"tanh", "relu"}),
          "activation: must be tanh or relu");
  require(c.grid.m >= 2, "grid.m: must be at least 2");
  require(std::isfinite(c.grid.v_min) && std::isfinite(c.grid.v_max) &&
              c.grid.v_max > c.grid.v_min,
          "grid: v_max must exceed v_min");
  require(!c.seeds.empty(), "seeds: must be nonempty");
  for (int s : c.seeds) require(s >= 0, "seeds: indices must be nonnegative");
  require(c.eval_every >= 1, "eval_every: must be at least 1");
  require(c.eval_episodes >= 1, "eval_episodes: must be at least 1");
  require(c.total_steps >= 0, "total_steps: must be nonnegative");
  require(c.total_episodes >= 0, "total_episodes: must be nonnegative");
  require(c.gamma > 0 && c.gamma < 1, "gamma: must lie in (0, 1)");
  require(c.radius > 0, "radius: must be positive");
  require(c.eta >= 0 && c.eta <= 1, "eta: must lie in [0, 1]");
  require(c.r_theta > 0, "r_theta: must be positive");
  require(c.r_w > 0, "r_w: must be positive");
  require(c.hidden >= 1, "hidden: must be at least 1");
  require(c.replay_capacity >= 1, "replay_capacity: must be at least 1");
  require(c.calibration_samples >= 2,
          "calibration_samples: must be at least 2");
  require(c.confidence > 0 && c.confidence < 1,
          "confidence: must lie in (0, 1)");
  require(c.grid_width >= 1 && c.grid_height >= 1 &&
              c.grid_width * c.grid_height >= 2,
          "grid_width/grid_height: the grid needs at least two cells");
  require(c.behavior_perturbation >= 0 && c.behavior_perturbation <= 1,
          "behavior_perturbation: must lie in [0, 1]");
  require(c.teleport >= 0 && c.teleport < 1, "teleport: must lie in [0, 1)");
  require(c.epsilon.start >= 0 && c.epsilon.start <= 1 &&
              c.epsilon.floor >= 0 && c.epsilon.floor <= c.epsilon.start,
          "epsilon: need 0 <= floor <= start <= 1");
  require(c.epsilon.horizon >= 0, "epsilon.horizon: must be nonnegative");
  validate_schedule(c.alpha, "alpha");
  validate_schedule(c.beta, "beta");

  const bool distributional_pe =
      c.algorithm == "dgtd2" || c.algorithm == "dtdc";
  const bool scalar_pe = c.algorithm == "gtd2" || c.algorithm == "tdc";
  const bool nonlinear_pe =
      c.algorithm == "nonlinear-gtd2" || c.algorithm == "nonlinear-tdc";
  if (c.environment == "gridworld") {
    require(distributional_pe || scalar_pe,
            "algorithm: gridworld supports dgtd2, dtdc, gtd2, tdc");
    if (distributional_pe)
      require(c.model == "linear-onehot",
              "model: gridworld distributional runs use linear-onehot");
    else
      require(c.model == "linear-value-onehot",
              "model: gridworld scalar baselines use linear-value-onehot");
  } else if (c.environment == "cartpole-pe") {
    require(distributional_pe || nonlinear_pe,
            "algorithm: cartpole-pe supports dgtd2, dtdc, nonlinear-gtd2, "
            "nonlinear-tdc");
    if (distributional_pe)
      require(c.model == "softmax-mlp",
              "model: distributional cartpole-pe uses softmax-mlp");
    else
      require(c.model == "q-mlp",
              "model: nonlinear cartpole-pe baselines use q-mlp");
  } else if (c.environment == "cartpole-control") {
    require(c.algorithm == "dgreedygq",
            "algorithm: cartpole-control uses dgreedygq");
    require(c.model == "softmax-mlp",
            "model: cartpole-control uses softmax-mlp");
  } else {  // saddle
    require(c.algorithm == "sgda", "algorithm: saddle uses sgda");
    require(c.model == "linear-onehot", "model: saddle uses linear-onehot");
  }
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "gridworld-offpolicy", "gridworld-offpolicy-baseline", "cartpole-pe",
      "cartpole-control", "saddle-linear"};
  return names;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "gridworld-offpolicy") {
    c.environment = "gridworld";
    c.algorithm = "dgtd2";
    c.model = "linear-onehot";
    c.grid = {0.0, 1.0, 50};
    c.alpha = {"power_law", 2.0, 0.7};
    c.beta = {"power_law", 2.0, 0.55};
    c.gamma = 0.9;
    c.radius = 100.0;
    c.teleport = 0.05;
    c.seeds = {0, 1, 2, 3, 4};
    c.total_steps = 200000;
    c.eval_every = 1000;
  } else if (name == "gridworld-offpolicy-baseline") {
    c.environment = "gridworld";
    c.algorithm = "gtd2";
    c.model = "linear-value-onehot";
    c.grid = {0.0, 1.0, 50};
    c.alpha = {"power_law", 12.0, 0.6};
    c.beta = {"power_law", 3.0, 0.55};
    c.gamma = 0.9;
    c.radius = 100.0;
    c.teleport = 0.05;
    c.seeds = {0, 1, 2, 3, 4};
    c.total_steps = 200000;
    c.eval_every = 1000;
  } else if (name == "cartpole-pe") {
    c.environment = "cartpole-pe";
    c.algorithm = "dgtd2";
    c.model = "softmax-mlp";
    c.grid = {0.0, 10.0, 30};
    c.alpha = {"power_law", 0.05, 0.8};
    c.beta = {"power_law", 0.1, 0.6};
    c.epsilon = {0.1, 0.02, 20000};
    c.gamma = 0.9;
    c.radius = 100.0;
    c.hidden = 50;
    c.seeds = {0, 1, 2, 3, 4};
    c.total_episodes = 200;
    c.eval_episodes = 20;
  } else if (name == "cartpole-control") {
    c.environment = "cartpole-control";
    c.algorithm = "dgreedygq";
    c.model = "softmax-mlp";
    c.grid = {0.0, 10.0, 30};
    c.alpha = {"constant", 0.1, 0.0};
    c.beta = {"constant", 0.05, 0.0};
    c.epsilon = {0.1, 0.02, 30000};
    c.gamma = 0.9;
    c.eta = 1.0;
    c.hidden = 50;
    c.replay_capacity = 10000;
    c.seeds = {0, 1, 2, 3, 4};
    c.total_episodes = 1000;
    c.eval_every = 1;
  } else if (name == "saddle-linear") {
    c.environment = "saddle";
    c.algorithm = "sgda";
    c.model = "linear-onehot";
    c.grid = {0.0, 10.0, 5};
    c.gamma = 0.9;
    c.r_theta = 1.0;
    c.r_w = 1.0;
    c.calibration_samples = 2000;
    c.confidence = 0.1;
    c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    c.total_steps = 40000;
    c.eval_every = 500;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return c;
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto pos = assignment.find('=');
  if (pos == std::string::npos)
    throw std::invalid_argument("override must look like key=value, got: " +
                                assignment);
  std::string key = assignment.substr(0, pos);
  const std::string value = assignment.substr(pos + 1);
  if (key.empty()) throw std::invalid_argument("override key is empty");

  std::string pointer = "/" + key;
  for (char& ch : pointer)
    if (ch == '.') ch = '/';

  nlohmann::json j = config;
  const nlohmann::json::json_pointer ptr(pointer);
  if (!j.contains(ptr))
    throw std::invalid_argument("unknown config field: " + key);
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  j[ptr] = parsed;
  config = j.get<ExperimentConfig>();
}

std::vector<int> parse_seed_list(const std::string& text) {
  const auto parse_int = [&](std::string_view piece) {
    int v = 0;
    const auto res =
        std::from_chars(piece.data(), piece.data() + piece.size(), v);
    if (res.ec != std::errc() || res.ptr != piece.data() + piece.size())
      throw std::invalid_argument("seeds: bad integer in '" + text + "'");
    return v;
  };
  if (text.empty()) throw std::invalid_argument("seeds: empty specification");
  const auto range_pos = text.find("..");
  if (range_pos != std::string::npos) {
    const int lo = parse_int(std::string_view(text).substr(0, range_pos));
    const int hi = parse_int(std::string_view(text).substr(range_pos + 2));
    if (hi < lo) throw std::invalid_argument("seeds: empty range " + text);
    std::vector<int> out;
    for (int s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string::npos ? text.size() : comma;
    out.push_back(parse_int(std::string_view(text).substr(start, end - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<SummaryRow> summarize(const RunLog& log) {
  std::map<std::pair<long, std::string>, std::vector<Real>> groups;
  for (const RunRow& row : log.rows)
    groups[{row.step, row.metric}].push_back(row.value);
  std::vector<SummaryRow> out;
  out.reserve(groups.size());
  for (const auto& [key, values] : groups) {
    const Real n = static_cast<Real>(values.size());
    Real mean = 0;
    for (Real v : values) mean += v;
    mean /= n;
    Real var = 0;
    for (Real v : values) var += (v - mean) * (v - mean);
    var /= n;
    out.push_back({key.first, key.second, mean, std::sqrt(var)});
  }
  return out;
}

void emit_csv(const RunLog& log, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "runlog.csv", std::ios::binary);
    if (!f) throw std::runtime_error("emit_csv: cannot open runlog.csv in " +
                                     out_dir);
    f << "step,metric,seed,value\n";
    for (const RunRow& row : log.rows)
      f << row.step << ',' << row.metric << ',' << row.seed << ','
        << format_real(row.value) << '\n';
    if (!f.good()) throw std::runtime_error("emit_csv: write failed");
  }
  {
    std::ofstream f(fs::path(out_dir) / "summary.csv", std::ios::binary);
    if (!f) throw std::runtime_error("emit_csv: cannot open summary.csv in " +
                                     out_dir);
    f << "step,metric,mean,std\n";
    for (const SummaryRow& row : summarize(log))
      f << row.step << ',' << row.metric << ',' << format_real(row.mean)
        << ',' << format_real(row.std_dev) << '\n';
    if (!f.good()) throw std::runtime_error("emit_csv: write failed");
  }
}

void onehot_pe_step(Vector& theta, Vector& w, const Transition& tr,
                    const SupportGrid& grid, Real gamma, Real alpha_t,
                    Real beta_t, bool td_grouping, Real radius) {
  const int m = grid.size();
  const long off_s = static_cast<long>(tr.s) * m;
  const long off_n = static_cast<long>(tr.s_next) * m;
  Vector dvec(m);
  Vector inc_next = Vector::Zero(m);
  const Vector c = w.segment(off_s, m);
  for (int j = 0; j < m; ++j) {
    const int k = grid.project_index((grid.atom(j) - tr.r) / gamma);
    dvec[j] = theta[off_n + k] - theta[off_s + j];
    inc_next[k] -= c[j];
  }
  const Vector q = dvec - c;
  if (tr.s == tr.s_next) {
    theta.segment(off_s, m) +=
        alpha_t * ((td_grouping ? dvec : c) + inc_next);
  } else {
    theta.segment(off_s, m) += alpha_t * (td_grouping ? dvec : c);
    theta.segment(off_n, m) += alpha_t * inc_next;
  }
  const Real norm = theta.norm();
  if (norm > radius) theta *= radius / norm;
  w.segment(off_s, m) += beta_t * q;
}

namespace {

struct SeedLog {
  std::vector<RunRow> rows;
  std::vector<ThetaCheckpoint> checkpoints;
};

struct GridworldSetup {
  TabularMDP mdp;
  Policy target;
  Policy behavior;
  Vector d_weights;
  SupportGrid grid;

  explicit GridworldSetup(const ExperimentConfig& c)
      : mdp(build_grid_world(c.grid_width, c.grid_height,
                             c.grid_width * c.grid_height - 1, c.step_reward,
                             c.goal_reward, c.gamma)),
        target(value_iteration(mdp).greedy),
        behavior(perturb_policy(target, c.behavior_perturbation)),
        d_weights(stationary_distribution(mdp, behavior, 1e-10, c.teleport)),
        grid(c.grid.v_min, c.grid.v_max, c.grid.m),
        teleport(c.teleport) {}

  Real teleport;

  StreamOptions stream_options() const {
    StreamOptions opts;
    opts.mode = StreamMode::iid;
    opts.target = target;
    opts.teleport = teleport;
    return opts;
  }
};

SeedLog run_gridworld_distributional(const GridworldSetup& setup,
                                     const LinearCdfModel& model,
                                     const LinearDmspbeEvaluator& evaluator,
                                     const ExperimentConfig& config, int seed,
                                     bool td_grouping) {
  Vector theta = model.init_theta(
      mix_key(config.master_seed, kThetaInitOffset + static_cast<std::uint64_t>(seed)));
  Vector w = Vector::Zero(theta.size());
  TransitionStream stream(setup.mdp, setup.behavior, setup.stream_options(),
                          config.master_seed,
                          static_cast<std::uint64_t>(seed));
  const StepSchedule alpha = to_schedule(config.alpha);
  const StepSchedule beta = to_schedule(config.beta);
  SeedLog out;
  for (long t = 0;; ++t) {
    if (t % config.eval_every == 0 || t == config.total_steps) {
      const Real value = evaluator.value(theta);
      out.rows.push_back({t, "dmspbe", seed, value});
      if (config.keep_checkpoints)
        out.checkpoints.push_back({seed, t, "dmspbe", value, theta});
    }
    if (t == config.total_steps) break;
    const Transition tr = stream.next();
    onehot_pe_step(theta, w, tr, setup.grid, config.gamma, alpha.at(t),
                   beta.at(t), td_grouping, config.radius);
  }
  return out;
}

SeedLog run_gridworld_baseline(const GridworldSetup& setup,
                               const LinearValueModel& model,
                               const ExperimentConfig& config, int seed,
                               bool td_grouping) {
  const long d = model.param_dim();
  SplitMix64 init_rng(mix_key(config.master_seed,
                              kThetaInitOffset + static_cast<std::uint64_t>(seed)));
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(d));
  Vector theta0(d);
  for (long i = 0; i < d; ++i)
    theta0[i] = uniform_real(init_rng, -bound, bound);
  LearnerState st(theta0, config.radius);
  TransitionStream stream(setup.mdp, setup.behavior, setup.stream_options(),
                          config.master_seed,
                          static_cast<std::uint64_t>(seed));
  const StepSchedule alpha = to_schedule(config.alpha);
  const StepSchedule beta = to_schedule(config.beta);
  SeedLog out;
  for (long t = 0;; ++t) {
    if (t % config.eval_every == 0 || t == config.total_steps) {
      const Real value =
          mspbe(model, st.theta, setup.mdp, setup.target, setup.d_weights);
      out.rows.push_back({t, "mspbe", seed, value});
      if (config.keep_checkpoints)
        out.checkpoints.push_back({seed, t, "mspbe", value, st.theta});
    }
    if (t == config.total_steps) break;
    const Transition tr = stream.next();
    if (td_grouping)
      tdc_step(st, model, tr.s, tr.r, tr.s_next, config.gamma, alpha, beta);
    else
      gtd2_step(st, model, tr.s, tr.r, tr.s_next, config.gamma, alpha, beta);
  }
  return out;
}

int pick_action_value(const QMlpModel& model, const Vector& theta,
                      const CartPoleEncoder& enc, const CartPoleState& s,
                      Real epsilon, SplitMix64& rng) {
  if (epsilon > 0 && uniform_real(rng) < epsilon)
    return uniform_int(rng, enc.n_actions);
  int best = 0;
  Real best_value = -std::numeric_limits<Real>::infinity();
  for (int a = 0; a < enc.n_actions; ++a) {
    const Real v = model.value(theta, enc.sa_vec(s, a));
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

SeedLog run_cartpole_pe(const ExperimentConfig& config, int seed) {
  const CartPoleParams params;
  const CartPoleEncoder enc = CartPoleEncoder::standard();
  const SupportGrid grid(config.grid.v_min, config.grid.v_max, config.grid.m);
  const Activation act = config.activation == "relu" ? Activation::relu_act
                                                     : Activation::tanh_act;
  const bool distributional = config.model == "softmax-mlp";
  const bool td_grouping =
      config.algorithm == "dtdc" || config.algorithm == "nonlinear-tdc";
  std::optional<SoftmaxMlpCdfModel> cdf_model;
  std::optional<QMlpModel> q_model;
  const std::uint64_t init_key = mix_key(
      config.master_seed, kThetaInitOffset + static_cast<std::uint64_t>(seed));
  Vector theta0;
  if (distributional) {
    cdf_model.emplace(enc.sa_dim(), config.hidden, grid.size(), act);
    theta0 = cdf_model->init_theta(init_key);
  } else {
    q_model.emplace(enc.sa_dim(), config.hidden, act);
    theta0 = q_model->init_theta(init_key);
  }
  LearnerState st(theta0, config.radius);
  const StepSchedule alpha = to_schedule(config.alpha);
  const StepSchedule beta = to_schedule(config.beta);
  const EpsilonSchedule eps{config.epsilon.start, config.epsilon.floor,
                            config.epsilon.horizon};
  SplitMix64 rng = rng_for_seed(config.master_seed,
                                kWorkerRngOffset + static_cast<std::uint64_t>(seed));

  const auto pick = [&](const CartPoleState& s, Real epsilon) {
    if (distributional) {
      std::vector<Vector> inputs;
      inputs.reserve(enc.n_actions);
      for (int a = 0; a < enc.n_actions; ++a) inputs.push_back(enc.sa_vec(s, a));
      return epsilon_greedy(*cdf_model, st.theta, inputs, grid, epsilon, rng);
    }
    return pick_action_value(*q_model, st.theta, enc, s, epsilon, rng);
  };

  long env_t = 0;
  long episodes_done = 0;
  SeedLog out;
  while (episodes_done < config.total_episodes) {
    const long phase = std::min<long>(config.eval_episodes,
                                      config.total_episodes - episodes_done);
    Real return_sum = 0;
    for (long e = 0; e < phase; ++e) {
      CartPoleState s = cartpole_reset(rng);
      int a = pick(s, eps.at(env_t));
      Real episode_return = 0;
      while (true) {
        const CartPoleStepResult res = cartpole_step(params, s, a);
        episode_return += res.reward;
        ++env_t;
        // The step cap is a time limit, not a failure; bootstrapping
        // continues across it while pole/track failures truncate the target.
        const bool failure = res.done && res.state.steps < params.max_steps;
        int a_next = 0;
        if (!failure) a_next = pick(res.state, eps.at(env_t));
        const Vector x = enc.sa_vec(s, a);
        const Vector x_next = enc.sa_vec(res.state, a_next);
        if (distributional) {
          if (td_grouping)
            dtdc_step(st, *cdf_model, x, res.reward, x_next, grid,
                      config.gamma, alpha, beta, failure);
          else
            dgtd2_step(st, *cdf_model, x, res.reward, x_next, grid,
                       config.gamma, alpha, beta, failure);
        } else {
          if (td_grouping)
            nonlinear_tdc_step(st, *q_model, x, res.reward, x_next,
                               config.gamma, alpha, beta, failure);
          else
            nonlinear_gtd2_step(st, *q_model, x, res.reward, x_next,
                                config.gamma, alpha, beta, failure);
        }
        if (res.done) break;
        s = res.state;
        a = a_next;
      }
      return_sum += episode_return;
    }
    episodes_done += phase;
    out.rows.push_back({episodes_done, "return_mean", seed,
                        return_sum / static_cast<Real>(phase)});
  }
  return out;
}

SeedLog run_cartpole_control(const ExperimentConfig& config, int seed) {
  const CartPoleParams params;
  const CartPoleEncoder enc = CartPoleEncoder::standard();
  const SupportGrid grid(config.grid.v_min, config.grid.v_max, config.grid.m);
  const Activation act = config.activation == "relu" ? Activation::relu_act
                                                     : Activation::tanh_act;
  SoftmaxMlpCdfModel model(enc.sa_dim(), config.hidden, grid.size(), act);
  LearnerState st(model.init_theta(mix_key(config.master_seed,
                                           kThetaInitOffset +
                                               static_cast<std::uint64_t>(seed))),
                  config.radius);
  const StepSchedule alpha = to_schedule(config.alpha);
  const StepSchedule beta = to_schedule(config.beta);
  const EpsilonSchedule eps{config.epsilon.start, config.epsilon.floor,
                            config.epsilon.horizon};
  SplitMix64 rng = rng_for_seed(config.master_seed,
                                kWorkerRngOffset + static_cast<std::uint64_t>(seed));

  struct ReplayEntry {
    Vector x_sa;
    Real r;
    CartPoleState s_next;
    bool failure;
  };
  std::vector<ReplayEntry> buffer;
  std::size_t write_slot = 0;

  long env_t = 0;
  SeedLog out;
  for (long episode = 1; episode <= config.total_episodes; ++episode) {
    CartPoleState s = cartpole_reset(rng);
    Real length = 0;
    while (true) {
      std::vector<Vector> inputs;
      inputs.reserve(enc.n_actions);
      for (int a = 0; a < enc.n_actions; ++a) inputs.push_back(enc.sa_vec(s, a));
      const int a =
          epsilon_greedy(model, st.theta, inputs, grid, eps.at(env_t), rng);
      const CartPoleStepResult res = cartpole_step(params, s, a);
      ++env_t;
      length += res.reward;
      const bool failure = res.done && res.state.steps < params.max_steps;
      ReplayEntry entry{enc.sa_vec(s, a), res.reward, res.state, failure};
      if (static_cast<long>(buffer.size()) <
          static_cast<long>(config.replay_capacity)) {
        buffer.push_back(std::move(entry));
      } else {
        buffer[write_slot] = std::move(entry);
        write_slot = (write_slot + 1) % buffer.size();
      }
      const ReplayEntry& sample =
          buffer[uniform_int(rng, static_cast<int>(buffer.size()))];
      std::vector<Vector> next_inputs;
      next_inputs.reserve(enc.n_actions);
      for (int na = 0; na < enc.n_actions; ++na)
        next_inputs.push_back(enc.sa_vec(sample.s_next, na));
      dgreedygq_step(st, model, sample.x_sa, sample.r, next_inputs, grid,
                     config.gamma, alpha, beta, config.eta, false,
                     sample.failure);
      if (res.done) break;
      s = res.state;
    }
    if (episode % config.eval_every == 0)
      out.rows.push_back({episode, "episode_length", seed, length});
  }
  return out;
}

struct SaddleSetup {
  TabularMDP mdp;
  Policy policy;
  SupportGrid grid;
  LinearCdfModel model;
  SaddleMatrices matrices;
  SaddleCalibration calibration;
  Real alpha;

  explicit SaddleSetup(const ExperimentConfig& c)
      : mdp(build_random_mdp(3, 2, kSaddleMdpSeed, c.gamma)),
        policy(Matrix::Constant(3, 2, 0.5)),
        grid(c.grid.v_min, c.grid.v_max, c.grid.m),
        model(LinearCdfModel::one_hot_features(3, c.grid.m)),
        matrices(build_saddle_matrices(model, mdp, policy, grid)),
        calibration([&] {
          TransitionStream cal_stream(mdp, policy, StreamOptions{},
                                      c.master_seed, kCalibrationStreamIndex);
          return calibrate_saddle(model, grid, matrices, cal_stream,
                                  c.calibration_samples, c.gamma, c.r_theta,
                                  c.r_w,
                                  mix_key(c.master_seed, 0x5eedull));
        }()),
        alpha(saddle_step_size(calibration, std::max<long>(c.total_steps, 1))) {
  }
};

SeedLog run_saddle(const SaddleSetup& setup, const ExperimentConfig& config,
                   int seed) {
  SplitMix64 rng = rng_for_seed(config.master_seed,
                                kWorkerRngOffset + static_cast<std::uint64_t>(seed));
  const long d = setup.model.param_dim();
  Vector theta0(d);
  Vector w0(d);
  for (long i = 0; i < d; ++i) theta0[i] = normal_real(rng);
  for (long i = 0; i < d; ++i) w0[i] = normal_real(rng);
  theta0 *= (config.r_theta / 2) / std::max(theta0.norm(), Real(1e-300));
  w0 *= (config.r_w / 2) / std::max(w0.norm(), Real(1e-300));
  SaddleState st(theta0, w0, config.r_theta, config.r_w);
  TransitionStream stream(setup.mdp, setup.policy, StreamOptions{},
                          config.master_seed, static_cast<std::uint64_t>(seed));
  const Real big_radius = std::max(config.r_theta, config.r_w);
  SeedLog out;
  for (long t = 0;; ++t) {
    if (t % config.eval_every == 0 || t == config.total_steps) {
      Real err;
      if (t == 0) {
        err = err_certificate(st.theta, st.w, setup.matrices, config.r_theta,
                              config.r_w);
      } else {
        const auto averaged = average_iterates(st);
        err = err_certificate(averaged.first, averaged.second, setup.matrices,
                              config.r_theta, config.r_w);
      }
      out.rows.push_back({t, "err", seed, err});
      if (t > 0)
        out.rows.push_back(
            {t, "bound_rhs", seed,
             bound_rhs(t, config.confidence, big_radius,
                       setup.calibration.sigma1, setup.calibration.sigma2,
                       setup.calibration.a_norm,
                       setup.calibration.c_sigma_max)});
    }
    if (t == config.total_steps) break;
    sgda_step(st, setup.model, setup.grid, stream.next(), config.gamma,
              setup.alpha);
  }
  return out;
}

}  // namespace

RunLog run(const ExperimentConfig& config) {
  validate(config);
  std::vector<int> seeds = config.seeds;
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  std::function<SeedLog(int)> worker;
  std::optional<GridworldSetup> gw;
  std::optional<LinearCdfModel> gw_model;
  std::optional<LinearDmspbeEvaluator> gw_evaluator;
  std::optional<LinearValueModel> gw_value_model;
  std::optional<SaddleSetup> saddle_setup;

  if (config.environment == "gridworld") {
    gw.emplace(config);
    if (config.algorithm == "dgtd2" || config.algorithm == "dtdc") {
      gw_model.emplace(LinearCdfModel::one_hot_features(gw->mdp.n_states,
                                                        gw->grid.size()));
      gw_evaluator.emplace(*gw_model, gw->mdp, gw->target, gw->grid,
                           gw->d_weights);
      const bool td = config.algorithm == "dtdc";
      worker = [&, td](int seed) {
        return run_gridworld_distributional(*gw, *gw_model, *gw_evaluator,
                                            config, seed, td);
      };
    } else {
      gw_value_model.emplace(LinearValueModel::one_hot_features(gw->mdp.n_states));
      const bool td = config.algorithm == "tdc";
      worker = [&, td](int seed) {
        return run_gridworld_baseline(*gw, *gw_value_model, config, seed, td);
      };
    }
  } else if (config.environment == "cartpole-pe") {
    worker = [&](int seed) { return run_cartpole_pe(config, seed); };
  } else if (config.environment == "cartpole-control") {
    worker = [&](int seed) { return run_cartpole_control(config, seed); };
  } else {
    saddle_setup.emplace(config);
    worker = [&](int seed) { return run_saddle(*saddle_setup, config, seed); };
  }

  std::vector<std::future<SeedLog>> futures;
  futures.reserve(seeds.size());
  for (int seed : seeds)
    futures.push_back(std::async(std::launch::async, worker, seed));
  RunLog log;
  for (auto& fut : futures) {
    SeedLog part = fut.get();
    log.rows.insert(log.rows.end(), std::make_move_iterator(part.rows.begin()),
                    std::make_move_iterator(part.rows.end()));
    log.checkpoints.insert(log.checkpoints.end(),
                           std::make_move_iterator(part.checkpoints.begin()),
                           std::make_move_iterator(part.checkpoints.end()));
  }
  return log;
}

}  // namespace dgtd
