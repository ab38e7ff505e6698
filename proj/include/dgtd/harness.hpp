#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dgtd/mdp.hpp"
#include "dgtd/support_grid.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

struct GridSpec {
  Real v_min = 0.0;
  Real v_max = 1.0;
  int m = 51;
};

struct ScheduleSpec {
  std::string family = "power_law";  // power_law | constant
  Real a0 = 1.0;
  Real p = 1.0;
};

struct EpsilonSpec {
  Real start = 0.1;
  Real floor = 0.02;
  long horizon = 50000;  // environment steps to reach the floor
};

// Full description of one experiment. A config covers one algorithm; runs
// over the listed seeds share everything but the per-seed generator keys.
struct ExperimentConfig {
  std::string preset;       // name this config was derived from, may be empty
  std::string environment;  // gridworld | cartpole-pe | cartpole-control |
                            // saddle
  std::string algorithm;    // dgtd2 | dtdc | gtd2 | tdc | nonlinear-gtd2 |
                            // nonlinear-tdc | dgreedygq | sgda
  std::string model;        // linear-onehot | linear-value-onehot |
                            // softmax-mlp | q-mlp
  std::string activation = "tanh";  // tanh | relu

  GridSpec grid;
  ScheduleSpec alpha;
  ScheduleSpec beta;
  EpsilonSpec epsilon;

  Real gamma = 0.9;
  Real radius = 100.0;  // theta projection ball for the evaluation learners
  Real eta = 1.0;       // Greedy-GQ gradient-correction weight
  Real r_theta = 1.0;   // saddle feasible radii
  Real r_w = 1.0;

  std::vector<int> seeds = {0};
  std::uint64_t master_seed = 20240915u;
  long total_steps = 0;     // step-driven environments
  long total_episodes = 0;  // episode-driven environments
  long eval_every = 1000;   // steps (or episodes) between metric rows
  int eval_episodes = 20;   // episodes per cartpole-pe evaluation phase

  int hidden = 50;
  int replay_capacity = 10000;
  int calibration_samples = 2000;
  Real confidence = 0.1;  // delta in the saddle error bound

  // Gridworld shape. The goal sits in the last cell; stepping into it pays
  // goal_reward, every other transition pays step_reward.
  int grid_width = 4;
  int grid_height = 4;
  Real step_reward = 0.0;
  Real goal_reward = 1.0;
  Real behavior_perturbation = 0.05;
  // Restart mixing of the behavior chain. The absorbing goal would otherwise
  // soak up nearly all stationary weight and leave the other states unseen.
  Real teleport = 0.01;

  // Retain (seed, step, theta) snapshots at every evaluation so tests can
  // recompute logged metrics independently. Gridworld runners only.
  bool keep_checkpoints = false;
};

void to_json(nlohmann::json& j, const ExperimentConfig& config);
void from_json(const nlohmann::json& j, ExperimentConfig& config);

// Throws std::invalid_argument naming the offending field.
void validate(const ExperimentConfig& config);

ExperimentConfig preset(const std::string& name);
const std::vector<std::string>& preset_names();

// "alpha.a0=0.5" style dotted-path assignment onto an existing config. The
// value text is parsed as JSON when possible and treated as a string
// otherwise.
void apply_override(ExperimentConfig& config, const std::string& assignment);

// "0..4" (inclusive range) or "0,2,5" (explicit list).
std::vector<int> parse_seed_list(const std::string& text);

struct RunRow {
  long step;
  std::string metric;
  int seed;
  Real value;
};

struct ThetaCheckpoint {
  int seed;
  long step;
  std::string metric;
  Real value;
  Vector theta;
};

struct RunLog {
  std::vector<RunRow> rows;  // sorted by (seed, step, emission order)
  std::vector<ThetaCheckpoint> checkpoints;
};

struct SummaryRow {
  long step;
  std::string metric;
  Real mean;
  Real std_dev;  // population standard deviation across seeds
};

std::vector<SummaryRow> summarize(const RunLog& log);

// Executes every seed (in parallel) and merges the per-seed logs
// deterministically.
RunLog run(const ExperimentConfig& config);

// In-place learner step equivalent to dgtd2_step / dtdc_step on one-hot
// features: only the (state, next-state) atom blocks of theta and w are
// touched, which keeps the gridworld preset far from the dense-matrix cost
// of the generic path. Gradient-correction weights live in w; theta is
// projected onto the radius ball after the update.
void onehot_pe_step(Vector& theta, Vector& w, const Transition& tr,
                    const SupportGrid& grid, Real gamma, Real alpha_t,
                    Real beta_t, bool td_grouping, Real radius);

// Writes runlog.csv and summary.csv into the directory; values are printed
// with shortest-round-trip precision.
void emit_csv(const RunLog& log, const std::string& out_dir);

}  // namespace dgtd
