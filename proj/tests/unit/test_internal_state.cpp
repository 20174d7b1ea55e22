#include <doctest.h>

#include "../support.hpp"
#include "isnpg/errors.hpp"

using namespace isnpg;

TEST_CASE("reactive window has a single internal state") {
  TabularPomg m = testing::env(EnvId::mabc);
  auto s = InternalStateSpec::window(m, 0, 10);
  CHECK(s.num_shared() == 1);
  for (int i = 0; i < m.n_agents(); ++i) {
    CHECK(s.num_local(i) == 1);
    CHECK(s.num_info_points(i) == static_cast<std::size_t>(m.num_observations(i)));
  }
}

TEST_CASE("window sizes and info index layout") {
  TabularPomg m = testing::env(EnvId::matiger);
  auto s = InternalStateSpec::window(m, 1, 1000000);
  std::size_t shared = 1;
  for (int i = 0; i < m.n_agents(); ++i) shared *= m.num_observations(i) + 1;
  CHECK(s.num_shared() == shared);
  const int i = 1;
  CHECK(s.num_local(i) == static_cast<std::size_t>(m.num_observations(i) * m.num_actions(i) + 1));
  for (std::size_t k = 0; k < s.num_info_points(i); ++k) {
    InfoPoint p = s.info_point(i, k);
    CHECK(s.info_index(i, p.w, p.l, p.y) == k);
    CHECK(k == (p.w * s.num_local(i) + p.l) * m.num_observations(i) + p.y);
  }
}

TEST_CASE("window update shifts in the newest message") {
  TabularPomg m = testing::env(EnvId::mabc);
  auto s = InternalStateSpec::window(m, 2, 1000000);
  std::size_t w = s.initial_shared();
  const std::vector<int> u{0, 1};
  w = s.update_shared(w, std::vector<int>{1, 0}, u);
  w = s.update_shared(w, std::vector<int>{0, 1}, u);
  CHECK(s.shared_window(w, 0) == std::vector<int>{1, 0});
  CHECK(s.shared_window(w, 1) == std::vector<int>{0, 1});
  w = s.update_shared(w, std::vector<int>{1, 1}, u);
  CHECK(s.shared_window(w, 0) == std::vector<int>{0, 1});
}

TEST_CASE("window cap is enforced with the required size") {
  TabularPomg m = testing::env(EnvId::mabc);
  try {
    InternalStateSpec::window(m, 3, 100);
    FAIL("expected SizeError");
  } catch (const SizeError& e) {
    CHECK(e.required() > 100);
  }
  CHECK_THROWS_AS(InternalStateSpec::window(m, -1, 100), ParameterError);
}

TEST_CASE("explicit tables reproduce the reactive window") {
  TabularPomg m = testing::env(EnvId::coord);
  CompressorTables t;
  t.num_shared = 1;
  t.initial_shared = 0;
  t.shared_update.assign(m.joint_observations().size() * m.num_joint_actions(), 0);
  for (int i = 0; i < m.n_agents(); ++i) {
    t.num_local.push_back(1);
    t.initial_local.push_back(0);
    t.local_update.emplace_back(m.num_observations(i) * m.num_actions(i) * m.num_observations(i), 0);
  }
  auto custom = InternalStateSpec::from_tables(m, t);
  auto reactive = InternalStateSpec::window(m, 0, 10);
  auto a = testing::structure_of(m, custom);
  auto b = testing::structure_of(m, reactive);
  CHECK(a->size() == b->size());
  JointPolicy pi = testing::random_policy(reactive, m, 5);
  CHECK(exact_objective(a, pi).potential == doctest::Approx(exact_objective(b, pi).potential).epsilon(1e-12));
  t.shared_update[0] = 7;
  CHECK_THROWS_AS(InternalStateSpec::from_tables(m, t), ParameterError);
}
