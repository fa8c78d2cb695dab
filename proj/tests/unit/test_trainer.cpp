#include "doctest.h"

#include "planval/env/random_mdp.hpp"
#include "planval/model/stubs.hpp"
#include "planval/tabular/ppi.hpp"
#include "planval/trainer/schedule.hpp"
#include "planval/trainer/trainer.hpp"
#include "support/tabular_rl.hpp"

#include <cmath>
#include <deque>
#include <sstream>

using namespace planval;
using namespace planval::trainer;

TEST_CASE("config: defaults, dotted keys and the text round trip") {
  const auto c = parse_config("env = linchain\n# comment\nschedule.x = 1\nschedule.y = 4\nschedule.a = 20000\n"
                              "schedule.b = 50000 # trailing\nensemble.hidden = 32,32\nstop.return = -150.5\n");
  CHECK(c.env == "linchain");
  CHECK(c.schedule.y == 4.0);
  CHECK(c.model_hidden == std::vector<Index>{32, 32});
  REQUIRE(c.stop_return.has_value());
  CHECK(*c.stop_return == -150.5);
  CHECK(c.critic_updates == 20);
  const auto again = parse_config(to_text(c));
  CHECK(to_text(again) == to_text(c));
  CHECK(to_text(parse_config(to_text(TrainerConfig{}))) == to_text(TrainerConfig{}));
}

TEST_CASE("config: errors") {
  CHECK_THROWS_AS(parse_config("nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("k = three\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("variant = td3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("k = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("gamma = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just a line\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/planval.cfg"), ConfigError);
}

TEST_CASE("rollout_schedule: thresholded linear ramps") {
  CHECK(rollout_schedule(10000, 1, 4, 20000, 50000) == 1);
  CHECK(rollout_schedule(35000, 1, 4, 20000, 50000) == 2);
  CHECK(rollout_schedule(50000, 1, 4, 20000, 50000) == 4);
  CHECK(rollout_schedule(1e9, 1, 4, 20000, 50000) == 4);
  CHECK(rollout_schedule(0, 1, 5, 0, 1000) == 1);
  CHECK(rollout_schedule(500, 1, 5, 0, 1000) == 3);
  CHECK(rollout_schedule(85000, 1, 20, 20000, 150000) == 10);
  CHECK_THROWS_AS(rollout_schedule(0, 1, 4, 5, 5), PreconditionError);
}

namespace {

struct RefTransition {
  double id;
  long episode;
  bool terminal;
};

}  // namespace

TEST_CASE("SegmentBuffer: windows agree with a reference extractor under wrap-around") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Index cap = 5 + uniform_index(40, rng);
    SegmentBuffer buf(cap, 1, 1, actor::DataSource::Env);
    std::deque<RefTransition> ref;
    long episode = 0;
    const Index n_add = uniform_index(3 * cap, rng) + 1;
    for (Index t = 0; t < n_add; ++t) {
      const bool terminal = uniform01(rng) < 0.08;
      const bool end = terminal || uniform01(rng) < 0.1;
      const double id = static_cast<double>(t);
      buf.add(Vector::Constant(1, id), Vector::Constant(1, -id), id, Vector::Constant(1, id + 0.5), terminal, end);
      ref.push_back({id, episode, terminal});
      if (static_cast<Index>(ref.size()) > cap) ref.pop_front();
      if (end) ++episode;
    }
    REQUIRE(buf.size() == static_cast<Index>(ref.size()));
    for (Index k = 1; k <= 4; ++k) {
      for (Index i = 0; i < buf.size(); ++i) {
        // reference: the next k stored transitions share the episode, or a terminal cuts the window short
        bool valid = true;
        int dw = -1;
        for (Index j = 0; j < k; ++j) {
          const auto idx = static_cast<std::size_t>(i + j);
          if (idx >= ref.size() || ref[idx].episode != ref[static_cast<std::size_t>(i)].episode ||
              ref[idx].id != ref[static_cast<std::size_t>(i)].id + static_cast<double>(j)) {
            valid = false;
            break;
          }
          if (ref[idx].terminal) {
            dw = static_cast<int>(j);
            break;
          }
        }
        int got = -2;
        CHECK(buf.window(i, k, &got) == valid);
        if (!valid) continue;
        CHECK(got == dw);
        const auto b = buf.windows_at({i}, k);
        const Index last = dw >= 0 ? dw : k - 1;
        CHECK(b.s0(0, 0) == ref[static_cast<std::size_t>(i)].id);
        CHECK(b.s_k(0, 0) == ref[static_cast<std::size_t>(i + last)].id + 0.5);
        for (Index j = 0; j < k; ++j) {
          const double expect = j <= last ? ref[static_cast<std::size_t>(i + j)].id : 0.0;
          CHECK(b.rewards(0, j) == expect);
          CHECK(b.actions(0, j) == -expect);
        }
      }
    }
  }
}

TEST_CASE("SegmentBuffer: sampling and failures") {
  SegmentBuffer buf(10, 1, 1, actor::DataSource::Model);
  Rng rng(1);
  CHECK_THROWS_AS(buf.sample_windows(4, 1, rng), CapacityError);
  for (int t = 0; t < 6; ++t) buf.add(Vector::Constant(1, t), Vector::Zero(1), 0.0, Vector::Zero(1), false, true);
  CHECK_THROWS_AS(buf.sample_windows(4, 2, rng), CapacityError);
  CHECK(buf.sample_windows(4, 1, rng).size() == 4);
  CHECK(buf.sample_states(3, rng).source == actor::DataSource::Model);
  CHECK_THROWS_AS(buf.windows_at({0}, 2), PreconditionError);
  CHECK_THROWS_AS(buf.add(Vector::Zero(2), Vector::Zero(1), 0.0, Vector::Zero(1), false, false), ShapeError);
  CHECK_THROWS_AS(buf.add(Vector::Zero(1), Vector::Zero(1), NAN, Vector::Zero(1), false, false), NumericError);
}

namespace {

critic::SegmentBatch random_batch(Index n, Index obs, Index act, Rng& rng) {
  critic::SegmentBatch b;
  b.s0 = standard_normal(n, obs, rng);
  b.actions = standard_normal(n, act, rng).array().tanh();
  b.rewards = standard_normal(n, 1, rng);
  b.s_k = standard_normal(n, obs, rng);
  b.done_within.assign(static_cast<std::size_t>(n), -1);
  b.done_within[1] = 0;
  return b;
}

}  // namespace

TEST_CASE("mve_target: H = 0 is the one-step target bit for bit, gamma = 0 gives r") {
  Rng init(3);
  const actor::Actor pi(3, 1, {{16}}, init);
  const critic::PlanCritic q(3, 1, {1, {16}}, init);
  const auto b = random_batch(8, 3, 1, init);
  critic::TargetOptions o;
  o.alpha = 0.3;
  Rng r1(5), r2(5);
  const Vector a = mve_target(b, q, pi, nullptr, 0, o, r1);
  const Vector c = critic::td_target(b, q, pi, nullptr, o, r2);
  CHECK(a == c);

  model::EnsembleModel ens(3, 1, {2, 1, {8}}, init);
  const model::PendulumModel stub;
  o.gamma = 0.0;
  Rng r3(6);
  CHECK(mve_target(b, q, pi, &stub, 3, o, r3) == b.rewards.col(0));
  CHECK_THROWS_AS(mve_target(b, q, pi, &ens, 1, o, r3), StateError);
}

TEST_CASE("mve_target: true-dynamics stub with H = 2 on M2 equals the exact 3-step target") {
  const env::TabularEnv m2(env::toggle_mdp(), "m2");
  const model::TabularModel stub(m2);
  // saturated policy: toggle in state 0, stay in state 1
  const auto pi = testing::linear_actor(Vector{{3.0, -3.0}}, Vector{{-30.0, -30.0}});
  const auto table = tabular::evaluate_policy<double>(m2.mdp(), actor::induced_policy(pi, m2), 1, false, 0.0, 1e-13);
  const critic::TabularPlanValue q(table, 2);

  critic::SegmentBatch b;
  b.s0 = Matrix::Zero(2, 2);
  b.s0(0, 0) = b.s0(1, 1) = 1.0;
  b.actions = Matrix::Zero(2, 1);
  b.rewards = (Matrix(2, 1) << 0.0, 1.0).finished();
  b.s_k = (Matrix(2, 2) << 0.0, 1.0, 0.0, 1.0).finished();  // both land in state 1
  b.done_within = {-1, -1};
  critic::TargetOptions o;
  o.gamma = 0.9;
  o.soft = false;
  Rng rng(1);
  const Vector y = mve_target(b, q, pi, &stub, 2, o, rng);
  // from state 1 the policy stays: rewards 1, 1, then Q(1, stay)
  const double g = 0.9;
  const double q1 = table(1, std::vector<Index>{0});
  for (Index i = 0; i < 2; ++i) CHECK(y(i) == doctest::Approx(b.rewards(i, 0) + g * 1.0 + g * g * 1.0 + g * g * g * q1).epsilon(1e-12));
}

namespace {

TrainerConfig tiny(const std::string& variant) {
  TrainerConfig c;
  c.env = "pendulum";
  c.variant = variant;
  c.k = 2;
  c.epochs = 2;
  c.steps_per_epoch = 60;
  c.start_size = 300;
  c.rollouts = 16;
  c.rollout_every = 5;
  c.critic_updates = 3;
  c.batch_size = 16;
  c.hidden = {16};
  c.ensemble_members = 2;
  c.ensemble_elites = 1;
  c.model_hidden = {16};
  c.model_max_epochs = 2;
  c.eval_interval = 60;
  c.eval_episodes = 1;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("trainer: identical config and seed give an identical metrics CSV") {
  const auto a = run(tiny("mppve"));
  const auto b = run(tiny("mppve"));
  CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
  CHECK(metrics_csv(a.metrics).rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  auto other = tiny("mppve");
  other.seed = 8;
  CHECK(metrics_csv(run(other).metrics) != metrics_csv(a.metrics));
}

TEST_CASE("trainer: update-ratio accounting and the actor's data sources") {
  const auto c = tiny("mppve");
  const auto r = run(c);
  const long trained = c.epochs * c.steps_per_epoch;
  CHECK(r.env_steps == c.start_size + trained);
  CHECK(r.critic_updates == c.critic_updates * trained);
  CHECK(r.actor_updates == trained);
  CHECK(r.actor_counts.model_states == 0);
  CHECK(r.actor_counts.env_states == trained * c.batch_size);
  CHECK(r.actor_counts.critic_calls == trained);
  CHECK(r.model_fits == c.epochs);
  CHECK(r.metrics.size() == static_cast<std::size_t>((c.start_size + trained) / c.eval_interval));

  const auto mpi = run(tiny("sac-mve-mpi"));
  CHECK(mpi.actor_counts.model_states > 0);
  const auto sac = run(tiny("sac"));
  CHECK(sac.model_fits == 0);
  CHECK(sac.metrics.back().model_holdout_nll == 0.0);
  for (const auto* v : {"sac-mppve", "sac-mve"}) CHECK(run(tiny(v)).actor_counts.model_states == 0);
}

TEST_CASE("trainer: early stop on the evaluation return") {
  auto c = tiny("sac");
  c.stop_return = -1e9;
  const auto r = run(c);
  CHECK(r.stopped_early);
  CHECK(r.steps_to_stop == c.eval_interval);
  CHECK(r.metrics.size() == 1);
}

TEST_CASE("trainer: the checkpoint rebuilds the agent") {
  const auto c = tiny("mppve");
  const auto r = run(c);
  const auto agent = load_agent(r.checkpoint);
  CHECK(to_text(agent.config) == to_text(c));
  REQUIRE(agent.model);
  CHECK(agent.model->ready());
  Rng probe(1);
  const Matrix s = standard_normal(4, 3, probe);
  Rng u(0);
  std::stringstream file;
  ad::write_checkpoint(file, r.checkpoint);
  const auto fresh = load_agent(ad::read_checkpoint(file));
  CHECK(to_text(fresh.config) == to_text(c));
  CHECK(agent.learner->actor().act(s, u, true) == fresh.learner->actor().act(s, u, true));
  CHECK_THROWS_AS(run_ablation(c), ConfigError);
  CHECK_THROWS_AS(run_mppve(tiny("sac")), ConfigError);
}
