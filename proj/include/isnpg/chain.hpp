#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "isnpg/internal_state.hpp"
#include "isnpg/linalg.hpp"
#include "isnpg/model.hpp"
#include "isnpg/policy.hpp"

namespace isnpg {

// Reachable augmented states (x, w, l_1..l_n, y_1..y_n) and the
// policy-independent kernel K[s][u] -> s'. States are sorted
// lexicographically with x most significant.
class ChainStructure {
 public:
  // Throws SizeError when more than cap states are reachable.
  static ChainStructure build(const TabularPomg& model, const InternalStateSpec& spec,
                              std::size_t cap);

  const TabularPomg& model() const { return *model_; }
  const InternalStateSpec& spec() const { return *spec_; }
  std::size_t size() const { return x_.size(); }
  int n_agents() const { return n_; }
  std::size_t num_joint_actions() const { return nu_; }

  int x(std::size_t s) const { return x_[s]; }
  std::size_t w(std::size_t s) const { return w_[s]; }
  std::size_t l(std::size_t s, int i) const { return l_[s * n_ + i]; }
  int y(std::size_t s, int i) const { return y_[s * n_ + i]; }
  // Joint observation index, agent 0 most significant.
  std::size_t y_joint(std::size_t s) const { return yj_[s]; }
  // Row of agent i's policy table read at s.
  std::size_t info(std::size_t s, int i) const { return info_[s * n_ + i]; }
  // Packed joint information point (w, l_1..l_n, y_1..y_n), x left out.
  std::uint64_t joint_info(std::size_t s) const { return jinfo_[s]; }
  std::uint64_t pack_info(std::size_t w, std::span<const std::size_t> l, std::span<const int> y) const;

  std::span<const int> successors(std::size_t s, std::size_t u) const {
    std::size_t r = s * nu_ + u;
    return {succ_.data() + off_[r], off_[r + 1] - off_[r]};
  }
  std::span<const double> successor_probs(std::size_t s, std::size_t u) const {
    std::size_t r = s * nu_ + u;
    return {prob_.data() + off_[r], off_[r + 1] - off_[r]};
  }
  const std::vector<double>& initial() const { return mu0_; }
  std::size_t kernel_entries() const { return succ_.size(); }

  std::string label(std::size_t s) const;

 private:
  const TabularPomg* model_ = nullptr;
  const InternalStateSpec* spec_ = nullptr;
  int n_ = 0;
  std::size_t nu_ = 0;
  std::vector<int> x_;
  std::vector<std::size_t> w_;
  std::vector<std::size_t> l_;
  std::vector<int> y_;
  std::vector<std::size_t> yj_;
  std::vector<std::size_t> info_;
  std::vector<std::uint64_t> jinfo_;
  MixedRadix radix_;
  std::vector<std::size_t> off_{0};
  std::vector<int> succ_;
  std::vector<double> prob_;
  std::vector<double> mu0_;
};

// Chain transition operator under one joint policy.
struct AugmentedChain {
  std::shared_ptr<const ChainStructure> structure;
  std::uint64_t stamp = 0;
  // Per-agent probability tables of the bound policy, flat [row * actions + u].
  std::vector<std::vector<double>> agent_probs;
  // pi(u | s), flat [s * |U| + u].
  std::vector<double> joint_probs;
  CsrMatrix transition;

  const ChainStructure& chain() const { return *structure; }
  std::size_t size() const { return structure->size(); }
  // Largest |row sum - 1| of the transition operator.
  double max_row_residual() const;
};

AugmentedChain bind_policy(std::shared_ptr<const ChainStructure> structure,
                           const JointPolicy& policy);

AugmentedChain build_chain(const TabularPomg& model, const InternalStateSpec& spec,
                           const JointPolicy& policy, std::size_t cap);

}  // namespace isnpg
