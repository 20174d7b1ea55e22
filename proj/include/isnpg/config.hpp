#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "isnpg/envs.hpp"
#include "isnpg/evaluator.hpp"
#include "isnpg/trainer.hpp"

namespace isnpg {

struct EvalConfig {
  BrOptions br;
  // Policy file read by the eval command.
  std::string policy;
  // Randomized instances per lemma in the verify sweeps.
  std::size_t lemma_instances = 50;
  // Discount used by the lemma sweeps; 0 keeps the environment discount.
  double lemma_discount = 0.0;
  int lemma_horizon = 6;
  double lemma_init_scale = 2.0;
  // Training run behind the theorem bound check.
  std::size_t theorem_iterations = 200;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  EnvParams env;
  int t_w = 0;
  std::size_t internal_state_cap = 1000000;
  TrainConfig train;
  EvalConfig eval;
  std::string out_dir = "out";
};

// Sections: [env], [internal_state], [train], [eval], [output]; seed at the
// top level. Throws LoadError on syntax errors, unknown keys and bad values.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const std::string& path);

// Every key with its effective value; parse_config(config_to_toml(c)) == c.
std::string config_to_toml(const ExperimentConfig& config);

// Key reference with defaults, shown by --help.
std::string config_reference();

// Version of the TOML parser, for run manifests.
std::string toml_library_version();

}  // namespace isnpg
