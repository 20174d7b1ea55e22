#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "isnpg/internal_state.hpp"
#include "isnpg/model.hpp"

namespace isnpg {

// Softmax policy of one agent: raw parameters theta[row * actions + u].
class PolicyTable {
 public:
  PolicyTable() = default;
  PolicyTable(int agent, std::size_t rows, int actions);

  int agent() const { return agent_; }
  std::size_t rows() const { return rows_; }
  int actions() const { return actions_; }
  std::span<const double> theta_row(std::size_t row) const {
    return {theta_.data() + row * actions_, static_cast<std::size_t>(actions_)};
  }
  std::span<double> theta_row(std::size_t row) {
    return {theta_.data() + row * actions_, static_cast<std::size_t>(actions_)};
  }
  const std::vector<double>& theta() const { return theta_; }
  std::vector<double>& theta() { return theta_; }

  // Max-subtracted softmax of one row.
  void probabilities(std::size_t row, std::span<double> out) const;
  std::vector<double> probabilities(std::size_t row) const;
  // All rows, flat [row * actions + u].
  std::vector<double> probability_table() const;
  // Lowest index among the largest entries.
  int argmax(std::size_t row) const;

  bool operator==(const PolicyTable&) const = default;

 private:
  int agent_ = 0;
  std::size_t rows_ = 0;
  int actions_ = 0;
  std::vector<double> theta_;
};

struct JointPolicy {
  std::vector<PolicyTable> agents;
  int iteration = 0;

  int n_agents() const { return static_cast<int>(agents.size()); }
  // Hash of the parameter bits; identifies the policy that produced a table.
  std::uint64_t stamp() const;
  bool operator==(const JointPolicy&) const = default;
};

enum class InitMode { uniform, given_table, random };

// given: per-agent probability tables, flat [row * actions + u].
// random: theta entries drawn uniformly in [-scale, scale] from seed.
JointPolicy init_policy(const InternalStateSpec& spec, const TabularPomg& model, InitMode mode,
                        const std::vector<std::vector<double>>& given = {},
                        std::uint64_t seed = 0, double scale = 1.0);

// Per-agent advantage tables, flat [row * actions + u].
using AdvantageSet = std::vector<std::vector<double>>;

struct NpgStep {
  JointPolicy next;
  // Normalizers g_i(h) and their logarithms, per agent and row.
  std::vector<std::vector<double>> g;
  std::vector<std::vector<double>> log_g;
  // Largest gap between the parameter-increment and multiplicative forms.
  double form_deviation = 0.0;
};

// theta += eta * A / (1 - beta) for all agents at once; the multiplicative
// form is evaluated alongside and must agree within 1e-10.
NpgStep npg_step(const JointPolicy& policy, const AdvantageSet& advantages, double eta,
                 double beta);

// Restricts the update to one agent; the other tables are copied unchanged.
NpgStep npg_step_agent(const JointPolicy& policy, int agent, std::span<const double> advantage,
                       double eta, double beta);

double policy_kl(const PolicyTable& p, const PolicyTable& q, std::size_t row);

nlohmann::json policy_to_json(const JointPolicy& policy, const InternalStateSpec& spec,
                              const TabularPomg& model);
// Throws LoadError if the file does not match the spec and model.
JointPolicy policy_from_json(const nlohmann::json& doc, const InternalStateSpec& spec,
                             const TabularPomg& model);
void save_policy(const JointPolicy& policy, const InternalStateSpec& spec,
                 const TabularPomg& model, const std::string& path);
JointPolicy load_policy(const std::string& path, const InternalStateSpec& spec,
                        const TabularPomg& model);

}  // namespace isnpg
