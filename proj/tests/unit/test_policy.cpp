#include <doctest.h>

#include <cmath>
#include <random>

#include "../support.hpp"
#include "isnpg/errors.hpp"

using namespace isnpg;

namespace {

JointPolicy random_rows(std::size_t rows, int actions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  PolicyTable t(0, rows, actions);
  for (double& v : t.theta()) v = u(rng);
  JointPolicy p;
  p.agents.push_back(std::move(t));
  return p;
}

}  // namespace

TEST_CASE("softmax rows are normalized and stable for large parameters") {
  PolicyTable t(0, 1, 3);
  t.theta() = {1000.0, 999.0, -1000.0};
  auto p = t.probabilities(0);
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
  CHECK(std::isfinite(p[0]));
  CHECK(p[0] / p[1] == doctest::Approx(std::exp(1.0)));
  CHECK(t.argmax(0) == 0);
}

TEST_CASE("npg step matches the multiplicative update row by row") {
  const double eta = 0.3, beta = 0.9;
  JointPolicy pi = random_rows(200, 4, 11);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 2.0);
  std::vector<double> A(200 * 4);
  for (double& v : A) v = g(rng);
  NpgStep step = npg_step(pi, {A}, eta, beta);
  CHECK(step.form_deviation <= 1e-10);
  for (std::size_t r = 0; r < 200; ++r) {
    auto p = pi.agents[0].probabilities(r);
    auto q = step.next.agents[0].probabilities(r);
    double z = 0.0;
    for (int u = 0; u < 4; ++u) z += p[u] * std::exp(eta * A[r * 4 + u] / (1.0 - beta));
    CHECK(std::log(z) == doctest::Approx(step.log_g[0][r]).epsilon(1e-12));
    for (int u = 0; u < 4; ++u) {
      CHECK(q[u] == doctest::Approx(p[u] * std::exp(eta * A[r * 4 + u] / (1.0 - beta)) / z).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero advantage is a fixed point and constant shifts cancel") {
  JointPolicy pi = random_rows(50, 3, 7);
  std::vector<double> zero(150, 0.0), A(150), shifted(150);
  for (std::size_t k = 0; k < 150; ++k) {
    A[k] = std::sin(static_cast<double>(k));
    shifted[k] = A[k] + 5.0 * static_cast<double>(k / 3);
  }
  NpgStep same = npg_step(pi, {zero}, 0.5, 0.9);
  for (std::size_t r = 0; r < 50; ++r) {
    auto p = pi.agents[0].probabilities(r);
    auto q = same.next.agents[0].probabilities(r);
    for (int u = 0; u < 3; ++u) CHECK(q[u] == doctest::Approx(p[u]).epsilon(1e-14));
  }
  NpgStep a = npg_step(pi, {A}, 0.5, 0.9);
  NpgStep b = npg_step(pi, {shifted}, 0.5, 0.9);
  for (std::size_t r = 0; r < 50; ++r) {
    auto p = a.next.agents[0].probabilities(r);
    auto q = b.next.agents[0].probabilities(r);
    for (int u = 0; u < 3; ++u) CHECK(q[u] == doctest::Approx(p[u]).epsilon(1e-12));
  }
}

TEST_CASE("npg_step rejects mismatched advantages and bad step sizes") {
  JointPolicy pi = random_rows(4, 2, 1);
  CHECK_THROWS(npg_step(pi, {std::vector<double>(3)}, 0.1, 0.9));
  CHECK_THROWS(npg_step(pi, {std::vector<double>(8)}, -0.1, 0.9));
}

TEST_CASE("single-agent step leaves the other tables untouched") {
  TabularPomg m = testing::env(EnvId::mabc);
  auto s = InternalStateSpec::window(m, 1, 1000000);
  JointPolicy pi = testing::random_policy(s, m, 2);
  std::vector<double> A(pi.agents[1].theta().size(), 1.0);
  A[0] = 3.0;
  NpgStep step = npg_step_agent(pi, 1, A, 0.1, 0.95);
  CHECK(step.next.agents[0] == pi.agents[0]);
  CHECK_FALSE(step.next.agents[1] == pi.agents[1]);
}

TEST_CASE("random init is reproducible and uniform init is flat") {
  TabularPomg m = testing::env(EnvId::matiger);
  auto s = InternalStateSpec::window(m, 1, 1000000);
  CHECK(testing::random_policy(s, m, 9) == testing::random_policy(s, m, 9));
  CHECK_FALSE(testing::random_policy(s, m, 9) == testing::random_policy(s, m, 10));
  JointPolicy u = init_policy(s, m, InitMode::uniform);
  for (double v : u.agents[0].probability_table()) CHECK(v == doctest::Approx(1.0 / m.num_actions(0)));
}

TEST_CASE("given tables initialize matching probabilities") {
  TabularPomg m = testing::env(EnvId::coord);
  auto s = InternalStateSpec::window(m, 0, 10);
  std::vector<std::vector<double>> given{{0.2, 0.8, 0.6, 0.4}, {0.5, 0.5, 0.9, 0.1}};
  JointPolicy p = init_policy(s, m, InitMode::given_table, given);
  CHECK(p.agents[0].probability_table()[1] == doctest::Approx(0.8));
  CHECK(p.agents[1].probability_table()[2] == doctest::Approx(0.9));
  given[1] = {0.5, 0.5, 1.0, 0.0};
  CHECK_THROWS_AS(init_policy(s, m, InitMode::given_table, given), ParameterError);
}

TEST_CASE("policy json round trip and spec mismatch") {
  TabularPomg m = testing::env(EnvId::mabc);
  auto s1 = InternalStateSpec::window(m, 1, 1000000);
  auto s0 = InternalStateSpec::window(m, 0, 1000000);
  JointPolicy p = testing::random_policy(s1, m, 4);
  JointPolicy back = policy_from_json(policy_to_json(p, s1, m), s1, m);
  CHECK(back.agents == p.agents);
  CHECK_THROWS_AS(policy_from_json(policy_to_json(p, s1, m), s0, m), LoadError);
  auto doc = policy_to_json(p, s1, m);
  doc["agents"][0]["theta"][0][0] = "x";
  CHECK_THROWS_AS(policy_from_json(doc, s1, m), LoadError);
}

TEST_CASE("kl divergence is zero on equal rows and positive otherwise") {
  PolicyTable a(0, 1, 2), b(0, 1, 2);
  CHECK(policy_kl(a, b, 0) == doctest::Approx(0.0));
  b.theta() = {1.0, 0.0};
  const double p = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(policy_kl(a, b, 0) == doctest::Approx(0.5 * std::log(0.5 / p) + 0.5 * std::log(0.5 / (1.0 - p))));
}
