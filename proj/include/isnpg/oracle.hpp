#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "isnpg/chain.hpp"
#include "isnpg/linalg.hpp"

namespace isnpg {

// Reward selector for the potential table; agents are selected by index.
inline constexpr int kPotential = -1;

struct ValueTables {
  std::uint64_t stamp = 0;
  int selector = kPotential;
  std::vector<double> reward;  // r_pi(s)
  std::vector<double> V;       // per augmented state
  std::vector<double> Q;       // [s * |U| + u]
  double residual = 0.0;
};

ValueTables solve_values(const AugmentedChain& chain, int selector, const SolveOptions& opts = {});

struct OccupancyMeasure {
  std::uint64_t stamp = 0;
  std::vector<double> d;                     // per augmented state
  std::vector<std::vector<double>> marginal;  // [i][info point]
  std::vector<double> min_positive;          // per agent
  double max_inverse = 1.0;                  // max_i 1 / min_positive[i]
  double mass = 0.0;
  double residual = 0.0;
};

// d = (1 - beta) sum_k beta^k mu0 P^k.
OccupancyMeasure compute_occupancy(const AugmentedChain& chain, const SolveOptions& opts = {});

struct AgentAdvantage {
  int agent = 0;
  int actions = 0;
  std::size_t rows = 0;
  std::vector<double> Q;      // [row * actions + u]
  std::vector<double> A;      // centered under pi_i
  std::vector<char> visited;  // occupancy > 0
  std::size_t unvisited = 0;

  double max_abs() const;
};

// Averages Q over the hidden part of the state under the occupancy
// conditional. Throws ContractError on a policy stamp mismatch.
AgentAdvantage marginal_advantage(const AugmentedChain& chain, const ValueTables& values,
                                  const OccupancyMeasure& occ, int agent);

// Expectation of V under the initial augmented distribution.
double initial_value(const AugmentedChain& chain, const ValueTables& values);

struct Objective {
  std::vector<double> J;  // per agent
  double potential = 0.0;
};

// Values, occupancy and advantages of one joint policy.
struct PolicyEvaluation {
  AugmentedChain chain;
  OccupancyMeasure occupancy;
  std::vector<ValueTables> agent_values;
  ValueTables potential_values;
  std::vector<AgentAdvantage> advantages;            // agent rewards
  std::vector<AgentAdvantage> potential_advantages;  // potential
  Objective objective;
};

PolicyEvaluation evaluate_policy(std::shared_ptr<const ChainStructure> structure,
                                 const JointPolicy& policy, const SolveOptions& opts = {});

// Objective only; skips occupancy and advantages.
Objective exact_objective(std::shared_ptr<const ChainStructure> structure,
                          const JointPolicy& policy, const SolveOptions& opts = {});

// |(J_i(b) - J_i(a)) - (Phi(b) - Phi(a))| for policies that differ only in
// the given agent's table.
double potential_residual(std::shared_ptr<const ChainStructure> structure,
                          const JointPolicy& policy_a, const JointPolicy& policy_b, int agent,
                          const SolveOptions& opts = {});

// CSV rows: agent, info point label, action, A, Q, occupancy.
std::string advantage_csv(const PolicyEvaluation& eval);

}  // namespace isnpg
