#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "isnpg/belief.hpp"
#include "isnpg/chain.hpp"
#include "isnpg/oracle.hpp"
#include "isnpg/policy.hpp"

namespace isnpg {

enum class BrMethod {
  exhaustive,  // every deterministic table over reachable rows, plus npg_br
  npg_br,      // single-agent NPG with the others frozen
  automatic,   // exhaustive when within budget, else npg_br
};

std::string to_string(BrMethod m);
BrMethod parse_br_method(const std::string& s);

struct BrOptions {
  BrMethod method = BrMethod::automatic;
  // Exhaustive: maximum number of deterministic tables. NPG: iterations.
  std::size_t budget = 4096;
  std::size_t npg_iterations = 2000;
  // Step size of the best-response NPG; 0 picks 1.
  double npg_eta = 0.0;
  double npg_tolerance = 1e-4;
  SolveOptions solve;
};

struct BestResponse {
  PolicyTable policy;
  double value = 0.0;
  BrMethod method = BrMethod::exhaustive;
  std::size_t evaluated = 0;  // tables or iterations
};

// Best response of one agent within the finite-state-controller class.
// The npg_br result is the best iterate seen, starting from the agent's
// current table, so its value never falls below J_i(pi).
BestResponse best_response_fsc(std::shared_ptr<const ChainStructure> structure,
                               const JointPolicy& policy, int agent, const BrOptions& opts = {});

struct GapReport {
  std::vector<double> gap;  // per agent, clamped at 0
  std::vector<double> raw_gap;
  std::vector<double> value;  // J_i(pi)
  std::vector<BestResponse> responses;
  double ne_gap = 0.0;
  bool clamped = false;
};

GapReport ne_gap(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy,
                 const BrOptions& opts = {});

// Minimum over agents and positive-occupancy rows of the policy mass on the
// argmax set of Q_i (ties within 1e-9).
double compute_a(const JointPolicy& policy, const std::vector<AgentAdvantage>& q_tables);

// Running max of 1 / min positive marginal occupancy.
class MSurrogate {
 public:
  void add(const OccupancyMeasure& occ);
  double value() const { return value_; }
  std::size_t count() const { return count_; }

 private:
  double value_ = 0.0;
  std::size_t count_ = 0;
};

double compute_M(const std::vector<OccupancyMeasure>& history);

// Theory constants of a model: phi scale and the step-size rule.
double phi_scale(const TabularPomg& model);

// Expectation under (d^b x pi_b) of the joint advantage A_phi of policy a,
// conditioned on joint information points through a's occupancy.
double joint_advantage_expectation(const PolicyEvaluation& a, const PolicyEvaluation& b);

struct Lemma1Result {
  double lhs = 0.0;            // Phi(b) - Phi(a)
  double advantage = 0.0;      // E_{d^b}[A_phi^a] / (1 - beta)
  double tv = 0.0;             // truncated history TV expectation plus tail
  double tv_head = 0.0;        // depths 0..H only
  double tv_occupancy = 0.0;   // exact occupancy-conditional TV
  double rhs_literal = 0.0;    // advantage + 2 phi tv / (1 - beta)
  double rhs_corrected = 0.0;  // advantage + 2 phi tv / (1 - beta)^2
  double rhs_head = 0.0;       // corrected form with the tail left out
  double residual_literal = 0.0;
  double residual_corrected = 0.0;
};

// policy_b plays the role of the deviating policy (the one whose occupancy
// weights the expectation).
Lemma1Result lemma1_check(const PolicyEvaluation& a, const PolicyEvaluation& b,
                          const BeliefTree& tree);

struct Lemma2Result {
  double gap = 0.0;
  double max_advantage = 0.0;
  double d_b = 0.0;
  double rhs_literal = 0.0;
  double rhs_corrected = 0.0;
  double residual_literal = 0.0;
  double residual_corrected = 0.0;
  BrMethod method = BrMethod::exhaustive;
};

Lemma2Result lemma2_check(const PolicyEvaluation& eval, const GapReport& gap, double d_b);

struct Lemma3Result {
  double lhs = 0.0;
  double kappa = 0.0;
  double kl_agent = 0.0;  // sum_i sum_h d_i^{t+1}(h) KL_i(h)
  double kl_summed = 0.0;  // n times the above
  double log_g = 0.0;      // sum_i sum_h d_i^{t+1}(h) log g_i(h)
  double rhs_agent = 0.0;
  double rhs_summed = 0.0;
  double residual_agent = 0.0;
  double residual_summed = 0.0;
};

// next must be the iterate `step` produces from current_policy and the
// advantages in `current`; throws ContractError otherwise.
Lemma3Result lemma3_check(const JointPolicy& current_policy, const PolicyEvaluation& current,
                          const PolicyEvaluation& next, const NpgStep& step, double eta);

struct Lemma4Result {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  double pointwise_min = 0.0;  // min over rows of log g - (a/3)(eta maxA/(1-beta))^2
  double a = 0.0;
  double M = 0.0;
  double gap = 0.0;
  double d_b = 0.0;
};

// eta must not exceed (1 - beta)^2.
Lemma4Result lemma4_check(const PolicyEvaluation& current, const OccupancyMeasure& next_occupancy,
                          const NpgStep& step, double eta, double a, double M, double gap,
                          double d_b);

struct BoundInputs {
  std::size_t T = 0;
  int n = 1;
  double beta = 0.9;
  double phi = 1.0;
  double a = 1.0;
  double M = 1.0;
  double d_b = 0.0;
};

struct BoundReport {
  double lhs = 0.0;  // average NE-gap
  double rhs = 0.0;
  double rhs_literal = 0.0;  // Mn instead of 3Mn in the d_b cross term
  double eps_fsc = 0.0;
  double a = 0.0;
  double M_hat = 0.0;
  double d_b = 0.0;
  double eta = 0.0;
  std::size_t T = 0;
  double residual = 0.0;  // rhs - lhs
};

double theorem_rhs(const BoundInputs& in, bool literal = false);
double eps_fsc(const BoundInputs& in);

// gaps: NE-gap at every counted iteration; in.T is taken from gaps.size().
BoundReport theorem_bound_check(const std::vector<double>& gaps, BoundInputs in, double eta);

struct FisherResult {
  double deviation = 0.0;  // max row L1 distance of induced policies
  double theta_gap = 0.0;  // max parameter difference (null-space)
  double gradient_error = 0.0;  // finite difference vs analytic gradient
  std::size_t dimension = 0;
};

// Builds F_i = E_{d_i x pi_i}[grad log pi grad log pi^T] explicitly and
// compares theta + eta F^+ grad J_i with the closed-form step.
FisherResult fisher_consistency_check(std::shared_ptr<const ChainStructure> structure,
                                      const JointPolicy& policy, int agent, double eta,
                                      std::size_t cap = 200);

}  // namespace isnpg
