#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "isnpg/internal_state.hpp"
#include "isnpg/model.hpp"
#include "isnpg/policy.hpp"

namespace isnpg {

// Stream for trajectory `index` of a run seeded with `seed`. Streams do not
// depend on how trajectories are split across threads.
std::mt19937_64 trajectory_stream(std::uint64_t seed, std::uint64_t index);

struct TrajectoryStep {
  int x = 0;
  std::vector<int> y;
  std::size_t w = 0;
  std::vector<std::size_t> l;
  std::vector<int> u;
  std::vector<double> reward;
  double potential = 0.0;
};

struct Trajectory {
  std::uint64_t seed = 0;
  int horizon = 0;
  std::vector<TrajectoryStep> steps;
  std::vector<double> returns;  // discounted, per agent
  double potential_return = 0.0;
};

Trajectory rollout(const TabularPomg& model, const InternalStateSpec& spec,
                   const JointPolicy& policy, std::mt19937_64& rng, int horizon);

// One JSON object per line.
std::string trajectory_jsonl(const Trajectory& t);

struct McEstimate {
  double mean = 0.0;
  std::size_t samples = 0;
  double stderr_ = 0.0;
  double bias_bound = 0.0;  // truncation: beta^H max|r| / (1 - beta)
};

struct McObjective {
  std::vector<McEstimate> J;
  McEstimate potential;
};

McObjective mc_objective(const TabularPomg& model, const InternalStateSpec& spec,
                         const JointPolicy& policy, std::size_t n_samples, int horizon,
                         std::uint64_t seed);

enum class McVisit {
  // Every visit, weighted by beta^k; estimates the occupancy-conditional Q.
  discounted_every,
  // First visit per trajectory, unweighted.
  first,
};

struct McAdvantage {
  int agent = 0;
  int actions = 0;
  std::size_t rows = 0;
  std::vector<double> A;       // centered under pi_i over visited rows
  std::vector<double> Q;
  std::vector<double> stderr_;  // of A
  std::vector<double> weight;   // accumulated visit weight per (row, action)
  std::vector<std::size_t> visits;
  std::vector<char> visited;  // row seen at least once
  std::vector<char> partial;  // row seen but some action never taken
  std::size_t unvisited = 0;
  std::size_t samples = 0;
  double bias_bound = 0.0;
};

// Advantage tables of every agent from one shared batch of trajectories.
std::vector<McAdvantage> mc_advantages(const TabularPomg& model, const InternalStateSpec& spec,
                                       const JointPolicy& policy, std::size_t n_samples,
                                       int horizon, std::uint64_t seed,
                                       McVisit mode = McVisit::discounted_every);

McAdvantage mc_advantage(const TabularPomg& model, const InternalStateSpec& spec,
                         const JointPolicy& policy, int agent, std::size_t n_samples, int horizon,
                         std::uint64_t seed, McVisit mode = McVisit::discounted_every);

}  // namespace isnpg
