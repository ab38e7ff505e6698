#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"

#include "dgtd/learners.hpp"
#include "dgtd/mdp.hpp"
#include "dgtd/models.hpp"
#include "dgtd/objectives.hpp"
#include "dgtd/rng.hpp"

using namespace dgtd;

TEST_CASE("step schedules evaluate their closed forms") {
  const StepSchedule pw = StepSchedule::power(2.0, 0.7);
  CHECK(pw.at(0) == 2.0);
  CHECK(pw.at(9) == doctest::Approx(2.0 / std::pow(10.0, 0.7)).epsilon(1e-15));
  const StepSchedule cs = StepSchedule::constant(0.3);
  CHECK(cs.at(0) == 0.3);
  CHECK(cs.at(123456) == 0.3);
  CHECK_THROWS_AS(StepSchedule::power(0.0, 0.7), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule::constant(-1.0), std::invalid_argument);
}

TEST_CASE("two-timescale validation accepts and rejects the right pairs") {
  CHECK_NOTHROW(validate_two_timescale(StepSchedule::power(1.0, 0.7),
                                       StepSchedule::power(1.0, 0.55)));
  CHECK_NOTHROW(validate_two_timescale(StepSchedule::power(3.0, 1.0),
                                       StepSchedule::power(0.1, 0.51)));
  // alpha must decay strictly faster than beta
  CHECK_THROWS_AS(validate_two_timescale(StepSchedule::power(1.0, 0.55),
                                         StepSchedule::power(1.0, 0.7)),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_two_timescale(StepSchedule::power(1.0, 0.6),
                                         StepSchedule::power(1.0, 0.6)),
                  std::invalid_argument);
  // exponents outside (1/2, 1]
  CHECK_THROWS_AS(validate_two_timescale(StepSchedule::power(1.0, 0.7),
                                         StepSchedule::power(1.0, 0.5)),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_two_timescale(StepSchedule::power(1.0, 1.1),
                                         StepSchedule::power(1.0, 0.6)),
                  std::invalid_argument);
  // constants do not satisfy the square-summable condition
  CHECK_THROWS_AS(validate_two_timescale(StepSchedule::constant(0.1),
                                         StepSchedule::power(1.0, 0.6)),
                  std::invalid_argument);
}

TEST_CASE("ball projection rescales only outside points") {
  Vector inside(2);
  inside << 0.3, -0.4;  // norm 0.5
  const Vector kept = project_ball(inside, 1.0);
  CHECK((kept - inside).norm() == 0.0);

  Vector outside(2);
  outside << 3.0, 4.0;  // norm 5
  const Vector scaled = project_ball(outside, 2.0);
  CHECK(scaled.norm() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(scaled[0] / scaled[1] == doctest::Approx(0.75).epsilon(1e-15));

  CHECK_THROWS_AS(project_ball(inside, 0.0), std::invalid_argument);
}

TEST_CASE("learner state projects its initial point") {
  Vector big(2);
  big << 30.0, 40.0;
  const LearnerState st(big, 5.0);
  CHECK(st.theta.norm() == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(st.w.size() == 2);
  CHECK(st.w.norm() == 0.0);
  CHECK(st.t == 0);
  CHECK_THROWS_AS(LearnerState(big, -1.0), std::invalid_argument);
}

TEST_CASE("per-atom distribution difference matches a hand example") {
  // Two one-hot inputs on the grid {0, 1}; theta stores the stacked CDFs.
  const LinearCdfModel model = LinearCdfModel::one_hot_features(2, 2);
  const SupportGrid grid(0.0, 1.0, 2);
  Vector theta(4);
  theta << 0.2, 1.0, 0.5, 1.0;
  const Vector d = delta(model, theta, 0, 0.25, 1, grid, 0.5);
  // atom 0: (0 - 0.25) / 0.5 = -0.5 snaps to atom 0, F'(0) - F(0) = 0.3
  // atom 1: (1 - 0.25) / 0.5 = 1.5 snaps to atom 1, 1 - 1 = 0
  CHECK(d[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(d[1] == 0.0);
  CHECK_THROWS_AS(delta(model, theta, 0, 0.25, 1, grid, 0.0),
                  std::invalid_argument);
}

TEST_CASE("distribution differences stay inside the unit band") {
  const SoftmaxMlpCdfModel model(3, 4, 7, Activation::tanh_act);
  const SupportGrid grid(0.0, 5.0, 7);
  SplitMix64 g(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector theta = model.init_theta(trial);
    Vector x(3), xn(3);
    for (int i = 0; i < 3; ++i) {
      x[i] = uniform_real(g, -1.0, 1.0);
      xn[i] = uniform_real(g, -1.0, 1.0);
    }
    const Vector d =
        delta(model, theta, x, uniform_real(g, 0.0, 2.0), xn, grid, 0.9);
    CHECK(d.minCoeff() >= -1.0);
    CHECK(d.maxCoeff() <= 1.0);
  }
}

TEST_CASE("the two distributional steps differ by the correction update") {
  // With the same tuple and weights, the theta increments of the two
  // variants differ by exactly alpha times the w increment.
  const SoftmaxMlpCdfModel model(2, 3, 5, Activation::tanh_act);
  const SupportGrid grid(0.0, 4.0, 5);
  const Vector theta0 = model.init_theta(3);
  SplitMix64 g(7);
  Vector w0(theta0.size());
  for (int i = 0; i < w0.size(); ++i) w0[i] = uniform_real(g, -0.2, 0.2);
  Vector x(2), xn(2);
  x << 0.3, -0.8;
  xn << -0.1, 0.6;
  const StepSchedule alpha = StepSchedule::constant(0.25);
  const StepSchedule beta = StepSchedule::constant(0.5);

  LearnerState a(theta0, 1e9);
  a.w = w0;
  dgtd2_step(a, model, x, 0.7, xn, grid, 0.9, alpha, beta);
  LearnerState b(theta0, 1e9);
  b.w = w0;
  dtdc_step(b, model, x, 0.7, xn, grid, 0.9, alpha, beta);

  CHECK((a.w - b.w).norm() == 0.0);  // identical correction recursion
  const Vector w_inc = (a.w - w0) / beta.at(0);
  const Vector gap = (b.theta - a.theta) / alpha.at(0);
  CHECK((gap - w_inc).lpNorm<Eigen::Infinity>() <= 1e-14);
  CHECK(a.t == 1);
  CHECK(b.t == 1);
}

TEST_CASE("enumerated step averages recover the exact negative half-gradient") {
  // The per-sample increments are linear in the sampled tuple quantities, so
  // averaging them over the exact tuple distribution must reproduce the
  // assembled gradient with the correction weights frozen at their solution.
  const TabularMDP mdp = build_random_mdp(3, 2, 614, 0.9);
  SplitMix64 g(1614);
  const Policy policy = testutil::random_policy(g, 3, 2);
  const Vector d_weights = stationary_distribution(mdp, policy);
  const SupportGrid grid(0.0, 3.0, 5);
  const SoftmaxMlpCdfModel model(3, 4, 5, Activation::tanh_act);
  std::vector<Vector> inputs;
  for (int s = 0; s < 3; ++s) {
    Vector x(3);
    for (int i = 0; i < 3; ++i) x[i] = uniform_real(g, -1.0, 1.0);
    inputs.push_back(x);
  }
  const Vector theta0 = model.init_theta(99);
  const GradientReport report = grad_dmspbe(model, theta0, mdp, policy, grid,
                                            d_weights, inputs);

  const StepSchedule unit = StepSchedule::constant(1.0);
  Vector mean_gtd2 = Vector::Zero(theta0.size());
  Vector mean_tdc = Vector::Zero(theta0.size());
  Vector mean_w = Vector::Zero(theta0.size());
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int sn = 0; sn < 3; ++sn) {
        const Real weight =
            d_weights[s] * policy.probs(s, a) * mdp.P(mdp.sa_index(s, a), sn);
        if (weight == 0) continue;
        LearnerState st(theta0, 1e9);
        st.w = report.w_star;
        dgtd2_step(st, model, inputs[s], mdp.R(s, a), inputs[sn], grid,
                   mdp.gamma, unit, unit);
        mean_gtd2 += weight * (st.theta - theta0);
        mean_w += weight * (st.w - report.w_star);

        LearnerState st2(theta0, 1e9);
        st2.w = report.w_star;
        dtdc_step(st2, model, inputs[s], mdp.R(s, a), inputs[sn], grid,
                  mdp.gamma, unit, unit);
        mean_tdc += weight * (st2.theta - theta0);
      }

  const Vector want = -0.5 * report.grad;
  CHECK(testutil::rel_err(mean_gtd2, want) <= 1e-9);
  CHECK(testutil::rel_err(mean_tdc, want) <= 1e-9);
  // At the solved correction weights the mean w increment vanishes.
  CHECK(mean_w.norm() <= 1e-9 * std::max(1.0, report.w_star.norm()));
}

TEST_CASE("terminal transitions ignore the successor input entirely") {
  const SoftmaxMlpCdfModel model(2, 3, 4, Activation::tanh_act);
  const SupportGrid grid(0.0, 2.0, 4);
  const Vector theta0 = model.init_theta(5);
  Vector w0 = 0.1 * Vector::Ones(theta0.size());
  Vector x(2), junk1(2), junk2(2);
  x << 0.2, -0.5;
  junk1 << 9.0, -9.0;
  junk2 << -3.0, 3.0;
  const StepSchedule alpha = StepSchedule::constant(0.1);
  const StepSchedule beta = StepSchedule::constant(0.2);

  LearnerState a(theta0, 1e9);
  a.w = w0;
  dgtd2_step(a, model, x, 1.5, junk1, grid, 0.9, alpha, beta, true);
  LearnerState b(theta0, 1e9);
  b.w = w0;
  dgtd2_step(b, model, x, 1.5, junk2, grid, 0.9, alpha, beta, true);
  CHECK((a.theta - b.theta).norm() == 0.0);
  CHECK((a.w - b.w).norm() == 0.0);
}

TEST_CASE("terminal target is the unit step at the reward") {
  // One-hot CDF model: the TD-grouped increment writes alpha * dvec straight
  // into the segment of the visited input.
  const LinearCdfModel model = LinearCdfModel::one_hot_features(2, 3);
  const SupportGrid grid(0.0, 2.0, 3);  // atoms {0, 1, 2}
  Vector theta0(6);
  theta0 << 0.1, 0.4, 1.0, 0.3, 0.6, 1.0;
  LearnerState st(theta0, 1e9);
  dtdc_step(st, model, 0, 1.0, 1, grid, 0.9, StepSchedule::constant(1.0),
            StepSchedule::constant(0.5), true);
  // step target at r = 1: [0, 1, 1]; dvec = target - F(0) = [-0.1, 0.6, 0]
  Vector want(6);
  want << 0.0, 1.0, 1.0, 0.3, 0.6, 1.0;
  CHECK((st.theta - want).lpNorm<Eigen::Infinity>() <= 1e-15);
  Vector want_w(6);
  want_w << -0.05, 0.3, 0.0, 0.0, 0.0, 0.0;
  CHECK((st.w - want_w).lpNorm<Eigen::Infinity>() <= 1e-15);
}

TEST_CASE("scalar terminal step zeroes the bootstrap") {
  const LinearValueModel model = LinearValueModel::one_hot_features(3);
  Vector theta0(3);
  theta0 << 0.5, -0.2, 0.8;
  LearnerState st(theta0, 1e9);
  st.w = Vector::Zero(3);
  tdc_step(st, model, 0, 2.0, 2, 0.9, StepSchedule::constant(0.1),
           StepSchedule::constant(0.1), true);
  // td = r - v(0) = 1.5; with w = 0 the increment is td * phi(0)
  CHECK(st.theta[0] == doctest::Approx(0.5 + 0.1 * 1.5).epsilon(1e-15));
  CHECK(st.theta[1] == -0.2);
  CHECK(st.theta[2] == 0.8);
  CHECK(st.w[0] == doctest::Approx(0.1 * 1.5).epsilon(1e-15));
}

TEST_CASE("linear baselines have no curvature correction") {
  const LinearValueModel model = LinearValueModel::one_hot_features(3);
  SplitMix64 g(11);
  Vector theta0(3), w0(3);
  for (int i = 0; i < 3; ++i) {
    theta0[i] = uniform_real(g, -1.0, 1.0);
    w0[i] = uniform_real(g, -1.0, 1.0);
  }
  const StepSchedule alpha = StepSchedule::constant(0.2);
  const StepSchedule beta = StepSchedule::constant(0.3);

  LearnerState a(theta0, 1e9);
  a.w = w0;
  gtd2_step(a, model, 0, 0.7, 1, 0.9, alpha, beta);
  LearnerState b(theta0, 1e9);
  b.w = w0;
  nonlinear_gtd2_step(b, model, 0, 0.7, 1, 0.9, alpha, beta);
  CHECK((a.theta - b.theta).norm() == 0.0);
  CHECK((a.w - b.w).norm() == 0.0);

  LearnerState c(theta0, 1e9);
  c.w = w0;
  tdc_step(c, model, 0, 0.7, 1, 0.9, alpha, beta);
  LearnerState d(theta0, 1e9);
  d.w = w0;
  nonlinear_tdc_step(d, model, 0, 0.7, 1, 0.9, alpha, beta);
  CHECK((c.theta - d.theta).norm() == 0.0);

  // The scalar pair obeys the same increment identity as the
  // distributional one.
  const Vector w_inc = (a.w - w0) / beta.at(0);
  const Vector gap = (c.theta - a.theta) / alpha.at(0);
  CHECK((gap - w_inc).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("greedy control step picks the best successor action") {
  // Four one-hot state-action inputs; successor candidates 2 and 3.
  const LinearCdfModel model = LinearCdfModel::one_hot_features(4, 3);
  const SupportGrid grid(0.0, 2.0, 3);
  Vector theta0(12);
  // input 2 has mean 2 - (0.1 + 0.9) = 1.0, input 3 mean 2 - (0.0 + 0.5) = 1.5
  theta0 << 0.2, 0.7, 1.0, 0.5, 0.8, 1.0, 0.1, 0.9, 1.0, 0.0, 0.5, 1.0;
  LearnerState st(theta0, 1e9);
  st.w = 0.05 * Vector::Ones(12);
  const std::vector<int> next_actions = {2, 3};
  const int best =
      dgreedygq_step(st, model, 0, 0.4, next_actions, grid, 0.9,
                     StepSchedule::constant(0.1), StepSchedule::constant(0.1),
                     1.0);
  CHECK(best == 1);  // index within the candidate list

  // Equal distributions tie toward the first candidate.
  Vector tied(12);
  tied << 0.2, 0.7, 1.0, 0.5, 0.8, 1.0, 0.1, 0.9, 1.0, 0.1, 0.9, 1.0;
  LearnerState st2(tied, 1e9);
  const int tie =
      dgreedygq_step(st2, model, 0, 0.4, next_actions, grid, 0.9,
                     StepSchedule::constant(0.1), StepSchedule::constant(0.1),
                     1.0);
  CHECK(tie == 0);
}

TEST_CASE("control correction strength interpolates with eta") {
  const LinearCdfModel model = LinearCdfModel::one_hot_features(3, 3);
  const SupportGrid grid(0.0, 2.0, 3);
  Vector theta0(9);
  theta0 << 0.2, 0.7, 1.0, 0.4, 0.8, 1.0, 0.0, 0.6, 1.0;
  Vector w0(9);
  w0 << 0.1, -0.2, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0;
  const std::vector<int> next_actions = {1, 2};
  const StepSchedule alpha = StepSchedule::constant(1.0);
  const StepSchedule beta = StepSchedule::constant(1.0);

  LearnerState full(theta0, 1e9);
  full.w = w0;
  dgreedygq_step(full, model, 0, 0.5, next_actions, grid, 0.9, alpha, beta,
                 1.0);
  LearnerState plain(theta0, 1e9);
  plain.w = w0;
  dgreedygq_step(plain, model, 0, 0.5, next_actions, grid, 0.9, alpha, beta,
                 0.0);
  LearnerState half(theta0, 1e9);
  half.w = w0;
  dgreedygq_step(half, model, 0, 0.5, next_actions, grid, 0.9, alpha, beta,
                 0.5);

  // w recursion is eta independent.
  CHECK((full.w - plain.w).norm() == 0.0);
  // theta moves along the eta-scaled correction direction.
  const Vector corr = plain.theta - full.theta;
  CHECK(corr.norm() > 0.0);
  CHECK(((plain.theta - half.theta) - 0.5 * corr)
            .lpNorm<Eigen::Infinity>() <= 1e-15);

  CHECK_THROWS_AS(dgreedygq_step(full, model, 0, 0.5, next_actions, grid, 0.9,
                                 alpha, beta, 1.5),
                  std::invalid_argument);
}

TEST_CASE("control step handles terminal transitions and projection") {
  const LinearCdfModel model = LinearCdfModel::one_hot_features(2, 3);
  const SupportGrid grid(0.0, 2.0, 3);
  Vector theta0(6);
  theta0 << 0.2, 0.7, 1.0, 0.4, 0.8, 1.0;
  const StepSchedule alpha = StepSchedule::constant(1.0);
  const StepSchedule beta = StepSchedule::constant(50.0);
  const std::vector<int> none;

  LearnerState st(theta0, 0.5);
  const int best = dgreedygq_step(st, model, 0, 1.0, none, grid, 0.9, alpha,
                                  beta, 1.0, false, true);
  CHECK(best == 0);
  // theta is unprojected by default even with a small radius...
  CHECK(st.theta.norm() > 0.5);
  // ...and w is never projected.
  CHECK(st.w.norm() > 0.5);

  LearnerState proj(theta0, 0.5);
  dgreedygq_step(proj, model, 0, 1.0, none, grid, 0.9, alpha, beta, 1.0, true,
                 true);
  CHECK(proj.theta.norm() <= 0.5 + 1e-12);

  // Missing successors are only legal on terminal transitions.
  LearnerState st2(theta0, 1e9);
  CHECK_THROWS_AS(dgreedygq_step(st2, model, 0, 1.0, none, grid, 0.9, alpha,
                                 beta, 1.0),
                  std::invalid_argument);
}

TEST_CASE("epsilon-greedy selection is deterministic at epsilon zero") {
  const LinearCdfModel model = LinearCdfModel::one_hot_features(3, 3);
  const SupportGrid grid(0.0, 2.0, 3);
  Vector theta(9);
  theta << 0.2, 0.7, 1.0, 0.0, 0.5, 1.0, 0.2, 0.7, 1.0;
  const std::vector<int> actions = {0, 1, 2};

  SplitMix64 g1(77);
  SplitMix64 g2(77);
  const int pick = epsilon_greedy(model, theta, actions, grid, 0.0, g1);
  CHECK(pick == 1);  // largest mean
  // No randomness was consumed: the two generators stay in lockstep.
  CHECK(uniform_real(g1) == uniform_real(g2));

  // Ties resolve to the lowest action id.
  const std::vector<int> tied = {0, 2};
  SplitMix64 g3(78);
  CHECK(epsilon_greedy(model, theta, tied, grid, 0.0, g3) == 0);

  SplitMix64 g4(79);
  CHECK_THROWS_AS(epsilon_greedy(model, theta, actions, grid, 1.5, g4),
                  std::invalid_argument);
  const std::vector<int> empty;
  CHECK_THROWS_AS(epsilon_greedy(model, theta, empty, grid, 0.5, g4),
                  std::invalid_argument);
}

TEST_CASE("epsilon-greedy explores uniformly at epsilon one") {
  const LinearCdfModel model = LinearCdfModel::one_hot_features(3, 3);
  const SupportGrid grid(0.0, 2.0, 3);
  Vector theta(9);
  theta << 0.2, 0.7, 1.0, 0.0, 0.5, 1.0, 0.2, 0.7, 1.0;
  const std::vector<int> actions = {0, 1, 2};
  SplitMix64 g(303);
  std::vector<int> counts(3, 0);
  const int n = 6000;
  for (int i = 0; i < n; ++i)
    counts[epsilon_greedy(model, theta, actions, grid, 1.0, g)] += 1;
  Real chi2 = 0;
  for (int a = 0; a < 3; ++a) {
    const Real expect = n / 3.0;
    chi2 += (counts[a] - expect) * (counts[a] - expect) / expect;
  }
  CHECK(chi2 < testutil::chi2_critical(2, 3.7));
}

TEST_CASE("exploration schedule decays linearly to its floor") {
  const EpsilonSchedule eps{0.5, 0.1, 100};
  CHECK(eps.at(0) == 0.5);
  CHECK(eps.at(50) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(eps.at(100) == 0.1);
  CHECK(eps.at(100000) == 0.1);
  const EpsilonSchedule flat{0.5, 0.1, 0};
  CHECK(flat.at(0) == 0.1);
}
