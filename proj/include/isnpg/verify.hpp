#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "isnpg/evaluator.hpp"
#include "isnpg/trainer.hpp"

namespace isnpg {

inline constexpr double kResidualTolerance = 1e-8;

struct SweepOptions {
  std::size_t instances = 50;
  int belief_horizon = 6;
  double init_scale = 2.0;
  std::uint64_t seed = 0;
  std::size_t fisher_instances = 5;
  std::size_t fisher_cap = 200;
  std::size_t chain_cap = 2000000;
  std::size_t belief_cap = 2000000;
  BrOptions br;
  SolveOptions solve;
};

// Per-lemma minimum residuals over the sweep. Negative means violated.
struct LemmaSummary {
  std::size_t instances = 0;
  double min_residual = 0.0;
  // Second reading where one exists: literal coefficient (lemmas 1, 2),
  // summed KL (lemma 3), pointwise bound (lemma 4).
  double min_residual_alt = 0.0;
  int worst_instance = -1;
  double max_lhs = 0.0;
  double max_rhs = 0.0;
  // Whether the second reading is part of the pass criterion.
  bool alt_required = true;
  bool passed() const;
};

struct FisherSummary {
  std::size_t checked = 0;
  std::size_t skipped = 0;  // agents over the size cap
  double max_deviation = 0.0;
  double max_theta_gap = 0.0;
  double max_gradient_error = 0.0;
  bool passed() const { return max_deviation <= 1e-6; }
};

struct SweepReport {
  LemmaSummary lemma1, lemma2, lemma3, lemma4;
  FisherSummary fisher;
  double beta = 0.0;
  double eta_max = 0.0;
  double max_d_b = 0.0;
  double tail_weight = 0.0;
  int belief_horizon = 0;
  bool passed() const;
};

// Random policy pairs drawn from independent streams; per-instance work runs
// in parallel and is merged by instance index.
SweepReport lemma_sweep(const TabularPomg& model, const InternalStateSpec& spec,
                        const SweepOptions& opts);

struct TheoremRun {
  BoundReport report;
  std::vector<double> gaps;
  int d_b_horizon = 0;
  double tail_weight = 0.0;
  double final_potential = 0.0;
  bool passed() const { return report.residual >= -kResidualTolerance; }
};

// Trains with exact advantages and the NE-gap at every iteration, then
// assembles the explicit bound from min a, M_hat and the largest logged d_b.
TheoremRun theorem_run(const TabularPomg& model, const InternalStateSpec& spec, TrainConfig config);

nlohmann::json to_json(const LemmaSummary& s);
nlohmann::json to_json(const FisherSummary& s);
nlohmann::json to_json(const BoundReport& r);
nlohmann::json to_json(const SweepReport& r);
nlohmann::json to_json(const TheoremRun& r);

}  // namespace isnpg
