#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "isnpg/belief.hpp"
#include "isnpg/chain.hpp"
#include "isnpg/evaluator.hpp"
#include "isnpg/mc.hpp"
#include "isnpg/oracle.hpp"
#include "isnpg/policy.hpp"

namespace isnpg {

// (1 - beta)^2 / (2 n phi_max). Throws ParameterError when phi_max <= 0.
double default_step_size(const TabularPomg& model);
// Same rule with phi_max replaced by the shifted potential scale, which is
// positive for any non-zero potential.
double theorem_step_size(const TabularPomg& model);

enum class AdvantageSource { exact, monte_carlo };

std::string to_string(AdvantageSource s);
AdvantageSource parse_advantage_source(const std::string& s);

struct TrainConfig {
  std::size_t iterations = 100;
  // Explicit step size; ignored when eta_theorem is set.
  double eta = 0.0;
  bool eta_theorem = true;

  AdvantageSource source = AdvantageSource::exact;
  std::size_t mc_samples = 20000;
  // Rollout length; 0 picks the smallest H with beta^H <= 1e-3.
  int mc_horizon = 0;
  McVisit mc_visit = McVisit::discounted_every;

  InitMode init = InitMode::uniform;
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  // Cadences in iterations; 0 disables. t = 0 and t = T always log when
  // the corresponding metric is enabled.
  std::size_t log_every = 1;
  std::size_t gap_every = 10;
  std::size_t db_every = 10;
  int belief_horizon = 6;
  std::size_t belief_cap = 2000000;
  std::size_t chain_cap = 2000000;
  BrOptions br;
  SolveOptions solve;

  bool record_wall_time = false;
};

struct TrainRecord {
  std::size_t iter = 0;
  double potential = 0.0;
  std::vector<double> J;
  std::optional<double> ne_gap;
  double a = 0.0;
  std::optional<double> d_b;
  double min_occupancy = 0.0;  // min over agents of the smallest positive marginal
  double max_abs_adv = 0.0;
  std::optional<double> wall_ms;
};

// Everything known about one iterate when the next one has been formed.
struct IterationView {
  std::size_t t = 0;
  const JointPolicy& policy;
  const PolicyEvaluation& eval;
  const NpgStep& step;
  const PolicyEvaluation& next_eval;
  double eta = 0.0;
};

struct TrainResult {
  JointPolicy policy;  // pi^T
  std::vector<TrainRecord> records;
  double eta = 0.0;
  double M_hat = 0.0;  // running max over pi^0..pi^T
  // Iterations where Phi(t+1) + 2 d_b phi / (1 - beta) < Phi(t) - 1e-10.
  std::vector<std::size_t> potential_drops;
  std::shared_ptr<const ChainStructure> structure;
};

struct TrainHooks {
  std::function<void(const IterationView&)> on_step;
  std::function<void(const TrainRecord&)> on_record;
};

// Simultaneous internal-state NPG. The model and spec must outlive the
// returned structure.
TrainResult train(const TabularPomg& model, const InternalStateSpec& spec, const TrainConfig& config,
                  const TrainHooks& hooks = {});

// Columns: iter, potential, j_agent_k..., ne_gap, a, d_b, min_occupancy,
// max_abs_adv, wall_ms. Unlogged optional metrics are empty cells.
std::string records_csv(const std::vector<TrainRecord>& records, int n_agents);
std::vector<TrainRecord> parse_records_csv(const std::string& text);

int default_mc_horizon(double beta);

}  // namespace isnpg
