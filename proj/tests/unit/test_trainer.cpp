#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "isnpg/errors.hpp"
#include "isnpg/trainer.hpp"

using namespace isnpg;

namespace {

TrainConfig quick(std::size_t iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.gap_every = 2;
  c.db_every = 3;
  c.belief_horizon = 3;
  return c;
}

}  // namespace

TEST_CASE("step size rules") {
  TabularPomg m = testing::env(EnvId::coord);
  const double ob = 1.0 - m.discount;
  CHECK(default_step_size(m) == doctest::Approx(ob * ob / (2.0 * 2.0 * m.phi_max())));
  CHECK(theorem_step_size(m) == doctest::Approx(ob * ob / (2.0 * 2.0 * m.potential_scale())));
  TabularPomg neg = testing::bandit_model();
  for (double& v : neg.potential) v -= 5.0;
  neg.reward = {neg.potential};
  neg.finalize();
  CHECK_THROWS_AS(default_step_size(neg), ParameterError);
  CHECK(theorem_step_size(neg) > 0.0);
  CHECK(default_mc_horizon(0.95) == 135);
  CHECK(std::pow(0.95, default_mc_horizon(0.95)) <= 1e-3);
}

TEST_CASE("training logs every iteration plus the final policy") {
  TabularPomg m = testing::env(EnvId::mabc);
  auto s = InternalStateSpec::window(m, 1, 1000000);
  TrainResult r = train(m, s, quick(6));
  REQUIRE(r.records.size() == 7);
  for (std::size_t t = 0; t < r.records.size(); ++t) CHECK(r.records[t].iter == t);
  CHECK(r.records[0].ne_gap.has_value());
  CHECK_FALSE(r.records[1].ne_gap.has_value());
  CHECK(r.records[6].ne_gap.has_value());
  CHECK(r.records[3].d_b.has_value());
  CHECK(r.eta == doctest::Approx(theorem_step_size(m)));
  CHECK(r.M_hat >= 1.0);
  for (std::size_t t = 1; t < r.records.size(); ++t) {
    CHECK(r.records[t].potential >= r.records[t - 1].potential - 1e-12);
  }
}

TEST_CASE("training is reproducible and the csv round trips") {
  TabularPomg m = testing::env(EnvId::matiger);
  auto s = InternalStateSpec::window(m, 1, 1000000);
  TrainConfig c = quick(5);
  c.init = InitMode::random;
  c.seed = 3;
  TrainResult a = train(m, s, c);
  TrainResult b = train(m, s, c);
  const std::string csv = records_csv(a.records, m.n_agents());
  CHECK(csv == records_csv(b.records, m.n_agents()));
  CHECK(a.policy == b.policy);
  auto back = parse_records_csv(csv);
  REQUIRE(back.size() == a.records.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].potential == a.records[k].potential);
    CHECK(back[k].ne_gap == a.records[k].ne_gap);
    CHECK(back[k].d_b == a.records[k].d_b);
    CHECK(back[k].J == a.records[k].J);
  }
  CHECK(records_csv(back, m.n_agents()) == csv);
  CHECK_THROWS_AS(parse_records_csv("iter,potential\n"), LoadError);
}

TEST_CASE("monte carlo advantages drive the same update") {
  TabularPomg m = testing::env(EnvId::coord);
  auto s = InternalStateSpec::window(m, 0, 10);
  TrainConfig c = quick(4);
  c.source = AdvantageSource::monte_carlo;
  c.mc_samples = 4000;
  c.eta_theorem = false;
  c.eta = 0.05;
  TrainResult r = train(m, s, c);
  CHECK(r.records.size() == 5);
  CHECK(std::isfinite(r.records.back().potential));
  CHECK(r.records.back().potential > r.records.front().potential);
}

TEST_CASE("hooks see consecutive iterates") {
  TabularPomg m = testing::env(EnvId::coord);
  auto s = InternalStateSpec::window(m, 0, 10);
  std::size_t steps = 0;
  TrainHooks h;
  h.on_step = [&](const IterationView& v) {
    CHECK(v.t == steps++);
    CHECK(v.next_eval.chain.stamp == v.step.next.stamp());
    CHECK(v.eval.chain.stamp == v.policy.stamp());
  };
  train(m, s, quick(3), h);
  CHECK(steps == 3);
}

TEST_CASE("invalid training settings are rejected") {
  TabularPomg m = testing::env(EnvId::coord);
  auto s = InternalStateSpec::window(m, 0, 10);
  TrainConfig c = quick(0);
  CHECK_THROWS_AS(train(m, s, c), ParameterError);
  c = quick(2);
  c.eta_theorem = false;
  c.eta = -1.0;
  CHECK_THROWS_AS(train(m, s, c), ParameterError);
  CHECK_THROWS_AS(parse_advantage_source("td"), ParameterError);
  CHECK(parse_advantage_source("mc") == AdvantageSource::monte_carlo);
}
