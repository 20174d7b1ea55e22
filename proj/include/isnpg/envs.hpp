#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "isnpg/model.hpp"

namespace isnpg {

enum class EnvId { matiger, mabc, lbf, coord, custom };

EnvId parse_env_id(const std::string& s);
std::string to_string(EnvId id);

struct EnvParams {
  EnvId id = EnvId::mabc;
  double discount = 0.95;

  // Multi-agent tiger.
  double listen_accuracy = 0.85;

  // Broadcast channel.
  std::vector<double> arrival_probs{0.9, 0.1};
  double collision_accuracy = 0.9;

  // Level-based foraging.
  int grid_width = 4;
  int grid_height = 4;
  int sight_range = 1;
  int food_count = 1;
  bool cooperative_lift = false;
  double lbf_reward = 1.0;
  std::size_t state_cap = 200000;

  // Rollout length for Monte-Carlo estimates; 0 picks the environment
  // default (10 tiger, 10 channel, 50 foraging, 50 coordination).
  int episode_horizon = 0;

  // Only for EnvId::custom.
  std::string model_path;
};

int default_episode_horizon(const EnvParams& params);

TabularPomg build_matiger(const EnvParams& params);
TabularPomg build_mabc(const EnvParams& params);
TabularPomg build_lbf(const EnvParams& params);
// Two-agent, two-state coordination game in which every agent observes the
// state exactly. Used as the fully observable reference problem.
TabularPomg build_coordination(const EnvParams& params);

// Dispatches on params.id; custom loads params.model_path.
TabularPomg build_env(const EnvParams& params);

}  // namespace isnpg
