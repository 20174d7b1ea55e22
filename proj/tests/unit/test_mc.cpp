#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <json.hpp>
#include <omp.h>

#include "../support.hpp"
#include "isnpg/errors.hpp"
#include "isnpg/mc.hpp"

using namespace isnpg;

TEST_CASE("trajectory streams are reproducible and distinct") {
  auto a = trajectory_stream(5, 3), b = trajectory_stream(5, 3), c = trajectory_stream(5, 4);
  CHECK(a() == b());
  CHECK_FALSE(trajectory_stream(5, 3)() == c());
}

TEST_CASE("rollouts follow the horizon and serialize as one json line") {
  TabularPomg m = testing::env(EnvId::mabc);
  auto s = InternalStateSpec::window(m, 1, 1000000);
  JointPolicy pi = testing::random_policy(s, m, 2);
  auto rng = trajectory_stream(1, 0);
  Trajectory t = rollout(m, s, pi, rng, 12);
  CHECK(t.steps.size() == 12);
  std::string text = trajectory_jsonl(t);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  auto doc = nlohmann::json::parse(text);
  CHECK(doc["steps"].size() == 12);
  double ret = 0.0, disc = 1.0;
  for (const auto& st : t.steps) {
    ret += disc * st.reward[0];
    disc *= m.discount;
  }
  CHECK(t.returns[0] == doctest::Approx(ret));
}

TEST_CASE("objective estimate agrees with the exact value") {
  TabularPomg m = testing::env(EnvId::coord);
  auto s = InternalStateSpec::window(m, 0, 10);
  JointPolicy pi = testing::random_policy(s, m, 4);
  Objective exact = exact_objective(testing::structure_of(m, s), pi);
  McObjective est = mc_objective(m, s, pi, 20000, 120, 9);
  const double tol = 4.0 * est.potential.stderr_ + est.potential.bias_bound;
  CHECK(std::abs(est.potential.mean - exact.potential) <= tol);
  CHECK(est.potential.samples == 20000);
}

TEST_CASE("estimates do not depend on the thread count") {
  TabularPomg m = testing::env(EnvId::mabc);
  auto s = InternalStateSpec::window(m, 1, 1000000);
  JointPolicy pi = testing::random_policy(s, m, 6);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  auto a = mc_advantages(m, s, pi, 3000, 30, 17);
  McObjective oa = mc_objective(m, s, pi, 3000, 30, 17);
  omp_set_num_threads(3);
  auto b = mc_advantages(m, s, pi, 3000, 30, 17);
  McObjective ob = mc_objective(m, s, pi, 3000, 30, 17);
  omp_set_num_threads(saved);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].A == b[i].A);
    CHECK(a[i].stderr_ == b[i].stderr_);
  }
  CHECK(oa.potential.mean == ob.potential.mean);
}

TEST_CASE("advantage estimates are centered and flag untaken actions") {
  TabularPomg m = testing::env(EnvId::matiger);
  auto s = InternalStateSpec::window(m, 1, 1000000);
  JointPolicy pi = testing::random_policy(s, m, 3);
  McAdvantage est = mc_advantage(m, s, pi, 0, 2000, 20, 4);
  CHECK(est.samples == 2000);
  for (std::size_t r = 0; r < est.rows; ++r) {
    if (!est.visited[r]) continue;
    auto p = pi.agents[0].probabilities(r);
    double mean = 0.0;
    for (int u = 0; u < est.actions; ++u) mean += p[u] * est.A[r * est.actions + u];
    CHECK(std::abs(mean) < 1e-9);
  }
}

TEST_CASE("invalid sample counts are rejected") {
  TabularPomg m = testing::env(EnvId::coord);
  auto s = InternalStateSpec::window(m, 0, 10);
  JointPolicy pi = testing::random_policy(s, m, 1);
  CHECK_THROWS_AS(mc_objective(m, s, pi, 1, 10, 0), ParameterError);
}
