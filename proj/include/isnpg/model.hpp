#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace isnpg {

// Rows of sparse probability vectors stored back to back (CSR layout).
class DistTable {
 public:
  DistTable() = default;
  explicit DistTable(std::size_t width) : width_(width) {}

  void push_row(std::span<const int> index, std::span<const double> prob);
  // Zero entries are dropped.
  void push_dense_row(std::span<const double> prob);
  void push_point(int index) {
    const double one = 1.0;
    push_row(std::span<const int>(&index, 1), std::span<const double>(&one, 1));
  }

  std::size_t rows() const { return offsets_.size() - 1; }
  std::size_t width() const { return width_; }
  std::span<const int> indices(std::size_t row) const {
    return {index_.data() + offsets_[row], offsets_[row + 1] - offsets_[row]};
  }
  std::span<const double> probs(std::size_t row) const {
    return {prob_.data() + offsets_[row], offsets_[row + 1] - offsets_[row]};
  }
  std::vector<double> dense_row(std::size_t row) const;
  double row_sum(std::size_t row) const;
  double at(std::size_t row, int col) const;

  // Mutable access for tests that perturb a model.
  std::span<double> mutable_probs(std::size_t row) {
    return {prob_.data() + offsets_[row], offsets_[row + 1] - offsets_[row]};
  }

  bool operator==(const DistTable&) const = default;

 private:
  std::size_t width_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<int> index_;
  std::vector<double> prob_;
};

// Mixed-radix index over tuples; the first digit is the most significant.
class MixedRadix {
 public:
  MixedRadix() = default;
  explicit MixedRadix(std::vector<int> radices);

  std::size_t size() const { return size_; }
  std::size_t num_digits() const { return radices_.size(); }
  int radix(std::size_t pos) const { return radices_[pos]; }
  std::size_t encode(std::span<const int> digits) const;
  void decode(std::size_t index, std::span<int> digits) const;
  std::vector<int> decode(std::size_t index) const;
  int digit(std::size_t index, std::size_t pos) const {
    return static_cast<int>((index / strides_[pos]) % radices_[pos]);
  }
  std::size_t stride(std::size_t pos) const { return strides_[pos]; }

 private:
  std::vector<int> radices_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

// User-supplied finite compressor written as explicit lookup tables.
struct CompressorTables {
  int num_shared = 1;
  int initial_shared = 0;
  // Flat [w][z_joint][u_joint]; messages are the agents' observations.
  std::vector<int> shared_update;
  std::vector<int> num_local;
  std::vector<int> initial_local;
  // Per agent, flat [l][y][u][z].
  std::vector<std::vector<int>> local_update;

  bool operator==(const CompressorTables&) const = default;
};

// A finite partially observable Markov game. Tables are indexed by joint
// action u in lexicographic agent order (agent 0 most significant).
// Observation rows are indexed by (next state, joint action).
struct TabularPomg {
  std::string name;
  std::vector<std::string> state_names;
  std::vector<std::vector<std::string>> observation_names;
  std::vector<std::vector<std::string>> action_names;

  DistTable transition;                        // row x*|U|+u -> states
  std::vector<DistTable> observation_kernel;   // [i] row x'*|U|+u -> Y_i
  std::vector<DistTable> initial_observation;  // [i] row x -> Y_i
  std::vector<std::vector<double>> reward;     // [i][x*|U|+u]
  std::vector<double> potential;               // [x*|U|+u]
  double discount = 0.95;
  std::vector<double> initial_state_dist;
  std::optional<CompressorTables> compressor;

  // Recomputes the cached sizes and potential bounds. Builders and the
  // loader call this once the tables are filled in.
  void finalize();

  int n_agents() const { return static_cast<int>(action_names.size()); }
  int num_states() const { return static_cast<int>(state_names.size()); }
  int num_observations(int i) const {
    return static_cast<int>(observation_names[i].size());
  }
  int num_actions(int i) const { return static_cast<int>(action_names[i].size()); }
  const MixedRadix& joint_actions() const { return joint_actions_; }
  const MixedRadix& joint_observations() const { return joint_observations_; }
  std::size_t num_joint_actions() const { return joint_actions_.size(); }
  std::size_t row(int x, std::size_t u) const {
    return static_cast<std::size_t>(x) * joint_actions_.size() + u;
  }

  double phi_min() const { return phi_min_; }
  double phi_max() const { return phi_max_; }
  // Upper bound of the potential after shifting it to be nonnegative; the
  // value bounds |Q| <= scale/(1-beta) used by the theory constants assume
  // 0 <= phi <= scale.
  double potential_scale() const;
  bool common_reward() const { return common_reward_; }

 private:
  MixedRadix joint_actions_;
  MixedRadix joint_observations_;
  double phi_min_ = 0.0;
  double phi_max_ = 0.0;
  bool common_reward_ = false;
};

struct RowResidual {
  double max_residual = 0.0;  // max |row sum - 1|
  std::size_t worst_row = 0;
  double min_entry = 0.0;
};

struct ModelReport {
  RowResidual transition;
  std::vector<RowResidual> observation;          // per agent
  std::vector<RowResidual> initial_observation;  // per agent
  double initial_state_residual = 0.0;
  std::size_t reachable_states = 0;
  bool common_reward = false;
  double phi_min = 0.0;
  double phi_max = 0.0;
  bool discount_ok = true;
  std::vector<std::string> issues;

  double max_residual() const;
  bool ok(double tol = 1e-12) const;
};

ModelReport validate_model(const TabularPomg& model);

}  // namespace isnpg
