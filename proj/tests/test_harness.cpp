#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "dgtd/harness.hpp"
#include "dgtd/learners.hpp"
#include "dgtd/mdp.hpp"
#include "dgtd/models.hpp"
#include "dgtd/objectives.hpp"
#include "dgtd/rng.hpp"
#include "dgtd/serialize.hpp"

using namespace dgtd;

namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream f(path);
  REQUIRE(bool(f));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string piece;
  while (std::getline(ss, piece, ',')) out.push_back(piece);
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("dgtd_tests_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

TEST_CASE("experiment config survives a json round trip") {
  ExperimentConfig c = preset("gridworld-offpolicy");
  c.seeds = {3, 1};
  c.keep_checkpoints = true;
  c.alpha.a0 = 0.125;
  const nlohmann::json j = c;
  const ExperimentConfig back = j.get<ExperimentConfig>();
  const nlohmann::json j2 = back;
  CHECK(j.dump() == j2.dump());
  CHECK(back.seeds == std::vector<int>{3, 1});
  CHECK(back.alpha.a0 == 0.125);
  CHECK(back.keep_checkpoints);

  nlohmann::json bad = j;
  bad["not_a_field"] = 1;
  ExperimentConfig sink;
  CHECK_THROWS_AS(from_json(bad, sink), std::invalid_argument);
}

TEST_CASE("validation names the offending field") {
  ExperimentConfig c = preset("gridworld-offpolicy");
  CHECK_NOTHROW(validate(c));

  c.gamma = 1.0;
  CHECK_THROWS_WITH_AS(validate(c), "gamma: must lie in (0, 1)",
                       std::invalid_argument);
  c.gamma = 0.9;

  c.teleport = 1.0;
  CHECK_THROWS_WITH_AS(validate(c), "teleport: must lie in [0, 1)",
                       std::invalid_argument);
  c.teleport = 0.05;

  c.algorithm = "dgreedygq";
  CHECK_THROWS_WITH_AS(validate(c),
                       "algorithm: gridworld supports dgtd2, dtdc, gtd2, tdc",
                       std::invalid_argument);
  c.algorithm = "gtd2";
  CHECK_THROWS_WITH_AS(validate(c),
                       "model: gridworld scalar baselines use "
                       "linear-value-onehot",
                       std::invalid_argument);
  c.model = "linear-value-onehot";
  CHECK_NOTHROW(validate(c));

  ExperimentConfig s = preset("saddle-linear");
  s.algorithm = "dgtd2";
  CHECK_THROWS_WITH_AS(validate(s), "algorithm: saddle uses sgda",
                       std::invalid_argument);

  ExperimentConfig p = preset("cartpole-pe");
  p.model = "q-mlp";
  CHECK_THROWS_WITH_AS(validate(p),
                       "model: distributional cartpole-pe uses softmax-mlp",
                       std::invalid_argument);
  p.algorithm = "nonlinear-tdc";
  CHECK_NOTHROW(validate(p));

  ExperimentConfig g = preset("gridworld-offpolicy");
  g.grid.m = 1;
  CHECK_THROWS_WITH_AS(validate(g), "grid.m: must be at least 2",
                       std::invalid_argument);
}

TEST_CASE("presets enumerate and validate") {
  CHECK(preset_names().size() == 5);
  for (const std::string& name : preset_names()) {
    const ExperimentConfig c = preset(name);
    CHECK(c.preset == name);
    CHECK_NOTHROW(validate(c));
  }
  CHECK_THROWS_AS(preset("no-such-preset"), std::invalid_argument);
}

TEST_CASE("dotted overrides reach nested fields") {
  ExperimentConfig c = preset("gridworld-offpolicy");
  apply_override(c, "gamma=0.5");
  CHECK(c.gamma == 0.5);
  apply_override(c, "algorithm=dtdc");
  CHECK(c.algorithm == "dtdc");
  apply_override(c, "alpha.a0=0.25");
  CHECK(c.alpha.a0 == 0.25);
  apply_override(c, "alpha.family=constant");
  CHECK(c.alpha.family == "constant");
  apply_override(c, "seeds=[7,8]");
  CHECK(c.seeds == std::vector<int>{7, 8});
  apply_override(c, "keep_checkpoints=true");
  CHECK(c.keep_checkpoints);
  CHECK_THROWS_AS(apply_override(c, "bogus_field=3"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(c, "gamma"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(c, "=3"), std::invalid_argument);
}

TEST_CASE("seed lists parse ranges and explicit entries") {
  CHECK(parse_seed_list("0..4") == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(parse_seed_list("3,1,2") == std::vector<int>{3, 1, 2});
  CHECK(parse_seed_list("7") == std::vector<int>{7});
  CHECK_THROWS_AS(parse_seed_list("5..3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_seed_list("a,b"), std::invalid_argument);
  CHECK_THROWS_AS(parse_seed_list(""), std::invalid_argument);
}

TEST_CASE("summaries report the population spread per step and metric") {
  RunLog log;
  log.rows = {{0, "m", 0, 1.0},
              {0, "m", 1, 3.0},
              {10, "m", 0, 5.0},
              {0, "other", 0, 7.0}};
  const std::vector<SummaryRow> rows = summarize(log);
  REQUIRE(rows.size() == 3);
  // Groups come back ordered by (step, metric).
  CHECK(rows[0].step == 0);
  CHECK(rows[0].metric == "m");
  CHECK(rows[0].mean == 2.0);
  CHECK(rows[0].std_dev == 1.0);  // population std of {1, 3}
  CHECK(rows[1].metric == "other");
  CHECK(rows[1].std_dev == 0.0);
  CHECK(rows[2].step == 10);
  CHECK(rows[2].mean == 5.0);
}

TEST_CASE("csv emission round-trips every value bit for bit") {
  RunLog log;
  log.rows = {{0, "metric_a", 0, 0.1 + 0.2},
              {0, "metric_a", 1, 1.0 / 3.0},
              {500, "metric_b", 0, -2.5e-17},
              {500, "metric_b", 1, 123456789.123456789}};
  const TempDir dir("csv");
  emit_csv(log, dir.path.string());

  const auto run_lines = read_lines(dir.path / "runlog.csv");
  REQUIRE(run_lines.size() == 5);
  CHECK(run_lines[0] == "step,metric,seed,value");
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    const auto fields = split_csv(run_lines[i + 1]);
    REQUIRE(fields.size() == 4);
    CHECK(std::stol(fields[0]) == log.rows[i].step);
    CHECK(fields[1] == log.rows[i].metric);
    CHECK(std::stoi(fields[2]) == log.rows[i].seed);
    CHECK(parse_real(fields[3]) == log.rows[i].value);
  }

  const auto summary_lines = read_lines(dir.path / "summary.csv");
  REQUIRE(summary_lines.size() == 3);
  CHECK(summary_lines[0] == "step,metric,mean,std");
  const auto first = split_csv(summary_lines[1]);
  REQUIRE(first.size() == 4);
  CHECK(parse_real(first[2]) == 0.5 * ((0.1 + 0.2) + 1.0 / 3.0));

  const RunLog empty;
  emit_csv(empty, (dir.path / "empty").string());
  CHECK(read_lines(dir.path / "empty" / "runlog.csv").size() == 1);
  CHECK(read_lines(dir.path / "empty" / "summary.csv").size() == 1);
}

TEST_CASE("one-hot fast path reproduces the generic learner step") {
  const int n = 3;
  const SupportGrid grid(0.0, 2.0, 4);
  const LinearCdfModel model = LinearCdfModel::one_hot_features(n, 4);
  SplitMix64 g(99);
  Vector theta0(n * 4), w0(n * 4);
  for (int i = 0; i < theta0.size(); ++i) {
    theta0[i] = uniform_real(g, 0.0, 1.0);
    w0[i] = uniform_real(g, -0.3, 0.3);
  }

  for (const Transition tr : {Transition{0, 0, 0.7, 1}, Transition{1, 0, 0.2, 1},
                              Transition{2, 0, 1.4, 0}}) {
    for (bool td : {false, true}) {
      for (Real radius : {1e9, 0.8}) {
        LearnerState st(theta0, radius);
        st.w = w0;
        if (td)
          dtdc_step(st, model, tr.s, tr.r, tr.s_next, grid, 0.9,
                    StepSchedule::constant(0.3), StepSchedule::constant(0.4));
        else
          dgtd2_step(st, model, tr.s, tr.r, tr.s_next, grid, 0.9,
                     StepSchedule::constant(0.3), StepSchedule::constant(0.4));

        Vector theta = project_ball(theta0, radius);
        Vector w = w0;
        onehot_pe_step(theta, w, tr, grid, 0.9, 0.3, 0.4, td, radius);
        CHECK((theta - st.theta).lpNorm<Eigen::Infinity>() <= 1e-13);
        CHECK((w - st.w).lpNorm<Eigen::Infinity>() <= 1e-13);
      }
    }
  }
}

TEST_CASE("runs are deterministic and zero-step runs log one row per seed") {
  ExperimentConfig c = preset("gridworld-offpolicy");
  c.grid_width = 2;
  c.grid_height = 2;
  c.grid.m = 5;
  c.total_steps = 400;
  c.eval_every = 200;
  c.seeds = {0, 1};
  const RunLog a = run(c);
  const RunLog b = run(c);
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.rows.size() == 6);  // steps {0, 200, 400} x 2 seeds
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].step == b.rows[i].step);
    CHECK(a.rows[i].metric == "dmspbe");
    CHECK(a.rows[i].seed == b.rows[i].seed);
    CHECK(a.rows[i].value == b.rows[i].value);
  }
  // Seeds are merged in sorted order, each seed's rows in time order.
  CHECK(a.rows[0].seed == 0);
  CHECK(a.rows[0].step == 0);
  CHECK(a.rows[3].seed == 1);

  c.total_steps = 0;
  const RunLog zero = run(c);
  REQUIRE(zero.rows.size() == 2);
  CHECK(zero.rows[0].step == 0);
  CHECK(zero.rows[1].step == 0);
  // Both seeds start from different parameters, so the initial objective
  // differs between them.
  CHECK(zero.rows[0].value != zero.rows[1].value);

  ExperimentConfig bad = c;
  bad.algorithm = "dgreedygq";
  CHECK_THROWS_AS(run(bad), std::invalid_argument);
}

TEST_CASE("logged distributional objective values can be recomputed") {
  ExperimentConfig c = preset("gridworld-offpolicy");
  c.grid.m = 20;
  c.total_steps = 2000;
  c.eval_every = 1000;
  c.seeds = {0, 1};
  c.keep_checkpoints = true;
  const RunLog log = run(c);
  REQUIRE(log.checkpoints.size() == 6);  // steps {0, 1000, 2000} x 2 seeds

  // Rebuild the evaluation pieces exactly as the runner defines them.
  const TabularMDP mdp = build_grid_world(4, 4, 15, 0.0, 1.0, 0.9);
  const Policy target = value_iteration(mdp).greedy;
  const Policy behavior = perturb_policy(target, c.behavior_perturbation);
  const Vector d_weights =
      stationary_distribution(mdp, behavior, 1e-10, c.teleport);
  const SupportGrid grid(0.0, 1.0, 20);
  const LinearCdfModel model = LinearCdfModel::one_hot_features(16, 20);
  const std::vector<int> inputs = state_id_inputs(16);

  for (const ThetaCheckpoint& cp : log.checkpoints) {
    CHECK(cp.metric == "dmspbe");
    const Real recomputed = j_dmspbe(
        assemble(model, cp.theta, mdp, target, grid, d_weights, inputs));
    CHECK(testutil::rel_err(recomputed, cp.value) <= 1e-8);
    // Every checkpoint shadows a logged row with the identical value.
    bool found = false;
    for (const RunRow& row : log.rows)
      found = found || (row.seed == cp.seed && row.step == cp.step &&
                        row.metric == cp.metric && row.value == cp.value);
    CHECK(found);
  }
}

TEST_CASE("logged baseline objective values can be recomputed") {
  ExperimentConfig c = preset("gridworld-offpolicy-baseline");
  c.total_steps = 1000;
  c.eval_every = 500;
  c.seeds = {0};
  c.keep_checkpoints = true;
  const RunLog log = run(c);
  REQUIRE(log.checkpoints.size() == 3);

  const TabularMDP mdp = build_grid_world(4, 4, 15, 0.0, 1.0, 0.9);
  const Policy target = value_iteration(mdp).greedy;
  const Policy behavior = perturb_policy(target, c.behavior_perturbation);
  const Vector d_weights =
      stationary_distribution(mdp, behavior, 1e-10, c.teleport);
  const LinearValueModel model = LinearValueModel::one_hot_features(16);

  for (const ThetaCheckpoint& cp : log.checkpoints) {
    CHECK(cp.metric == "mspbe");
    const Real recomputed = mspbe(model, cp.theta, mdp, target, d_weights);
    CHECK(testutil::rel_err(recomputed, cp.value) <= 1e-8);
  }
}

TEST_CASE("cartpole runners log their metrics on schedule") {
  ExperimentConfig pe = preset("cartpole-pe");
  pe.total_episodes = 4;
  pe.eval_episodes = 2;
  pe.seeds = {0};
  const RunLog pe_log = run(pe);
  REQUIRE(pe_log.rows.size() == 2);
  CHECK(pe_log.rows[0].step == 2);
  CHECK(pe_log.rows[0].metric == "return_mean");
  CHECK(pe_log.rows[0].value >= 1.0);  // every episode pays at least one step
  CHECK(pe_log.rows[1].step == 4);

  ExperimentConfig ctrl = preset("cartpole-control");
  ctrl.total_episodes = 3;
  ctrl.seeds = {1};
  const RunLog ctrl_log = run(ctrl);
  REQUIRE(ctrl_log.rows.size() == 3);
  for (long i = 0; i < 3; ++i) {
    CHECK(ctrl_log.rows[i].step == i + 1);
    CHECK(ctrl_log.rows[i].metric == "episode_length");
    CHECK(ctrl_log.rows[i].value >= 1.0);
  }
}

TEST_CASE("saddle runner logs certificates and the theoretical bound") {
  ExperimentConfig c = preset("saddle-linear");
  c.total_steps = 200;
  c.eval_every = 100;
  c.calibration_samples = 50;
  c.seeds = {0};
  const RunLog log = run(c);
  // t = 0 gets only err; t = 100 and t = 200 get err + bound_rhs.
  REQUIRE(log.rows.size() == 5);
  CHECK(log.rows[0].step == 0);
  CHECK(log.rows[0].metric == "err");
  CHECK(log.rows[0].value >= 0.0);
  int bound_count = 0;
  for (const RunRow& row : log.rows) {
    if (row.metric == "err") CHECK(row.value >= 0.0);
    if (row.metric == "bound_rhs") {
      CHECK(row.step > 0);
      CHECK(row.value > 0.0);
      ++bound_count;
    }
  }
  CHECK(bound_count == 2);
}

TEST_CASE("real formatting is shortest round trip") {
  for (Real x : {0.1, 1.0 / 3.0, 1e300, 5e-324, -2.5e-17, 0.0, -7.25,
                 123456789.123456789}) {
    CHECK(parse_real(format_real(x)) == x);
  }
  CHECK(format_real(0.5) == "0.5");
  CHECK(format_real(1.0) == "1");
  CHECK_THROWS_AS(parse_real("1.5x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_real(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_real("nope"), std::invalid_argument);
}

TEST_CASE("linear algebra payloads survive json round trips") {
  SplitMix64 g(314);
  Vector v(5);
  for (int i = 0; i < 5; ++i) v[i] = normal_real(g);
  const Vector v2 = vector_from_json(vector_to_json(v));
  CHECK((v - v2).norm() == 0.0);

  Matrix m(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = normal_real(g);
  const Matrix m2 = matrix_from_json(matrix_to_json(m));
  CHECK((m - m2).norm() == 0.0);

  const SupportGrid grid(-1.5, 2.5, 9);
  const SupportGrid grid2 = grid_from_json(grid_to_json(grid));
  CHECK(grid2.v_min() == grid.v_min());
  CHECK(grid2.v_max() == grid.v_max());
  CHECK(grid2.size() == grid.size());

  const TabularMDP mdp = build_random_mdp(3, 2, 5150, 0.9);
  const TabularMDP mdp2 = mdp_from_json(mdp_to_json(mdp));
  CHECK(mdp2.n_states == 3);
  CHECK(mdp2.gamma == mdp.gamma);
  CHECK((mdp2.P - mdp.P).norm() == 0.0);
  CHECK((mdp2.R - mdp.R).norm() == 0.0);

  const ValueDistributionTable table =
      ValueDistributionTable::point_mass(SupportGrid(0.0, 1.0, 5), 2, 3);
  const ValueDistributionTable table2 = table_from_json(table_to_json(table));
  CHECK((table2.probs - table.probs).norm() == 0.0);
  CHECK(table2.grid.size() == 5);
}

TEST_CASE("model checkpoints name their architecture") {
  const LinearCdfModel lin = LinearCdfModel::one_hot_features(3, 4);
  Vector theta = Vector::LinSpaced(lin.param_dim(), 0.0, 1.0);
  nlohmann::json j = checkpoint_to_json(lin, theta);
  CHECK(j.at("arch") == "linear-cdf");
  CHECK((checkpoint_theta(j) - theta).norm() == 0.0);

  const SoftmaxMlpCdfModel mlp(3, 4, 5, Activation::relu_act);
  theta = mlp.init_theta(2);
  j = checkpoint_to_json(mlp, theta);
  CHECK(j.at("arch") == "softmax-mlp");
  CHECK(j.at("activation") == "relu");
  CHECK((checkpoint_theta(j) - theta).norm() == 0.0);

  const QMlpModel q(4, 6, Activation::tanh_act);
  theta = q.init_theta(3);
  j = checkpoint_to_json(q, theta);
  CHECK(j.at("arch") == "q-mlp");
  CHECK((checkpoint_theta(j) - theta).norm() == 0.0);

  const LinearValueModel lv = LinearValueModel::one_hot_features(4);
  theta = Vector::LinSpaced(lv.param_dim(), -1.0, 2.0);
  j = checkpoint_to_json(lv, theta);
  CHECK(j.at("arch") == "linear-value");
  CHECK((checkpoint_theta(j) - theta).norm() == 0.0);

  nlohmann::json report_json = GradientReport{
      1.5, Vector::Ones(2), Vector::Zero(2), Vector::Ones(2)};
  CHECK(report_json.at("j_dmspbe") == 1.5);
  CHECK(report_json.contains("grad"));
  CHECK(report_json.contains("w_star"));
  CHECK(report_json.contains("h_term"));
}
