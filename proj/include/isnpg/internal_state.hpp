#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "isnpg/model.hpp"

namespace isnpg {

// One row of agent i's policy table: shared state, local state, observation.
struct InfoPoint {
  int agent = 0;
  std::size_t w = 0;
  std::size_t l = 0;
  int y = 0;
  std::size_t index = 0;
};

// Finite shared/local internal states with deterministic update maps.
// Messages are the agents' current observations.
class InternalStateSpec {
 public:
  // Finite observation/action windows of length t_w. Throws SizeError when
  // |W| * prod_i |L_i| exceeds cap.
  static InternalStateSpec window(const TabularPomg& model, int t_w, std::size_t cap);
  // Explicit tables, e.g. the compressor section of a model file.
  static InternalStateSpec from_tables(const TabularPomg& model, const CompressorTables& tables);

  bool is_window() const { return window_length_ >= 0; }
  int window_length() const { return window_length_; }
  int n_agents() const { return static_cast<int>(num_obs_.size()); }
  std::size_t num_shared() const { return num_shared_; }
  std::size_t num_local(int i) const { return num_local_[i]; }
  int num_observations(int i) const { return num_obs_[i]; }
  int num_actions(int i) const { return num_act_[i]; }
  std::size_t initial_shared() const { return initial_shared_; }
  std::size_t initial_local(int i) const { return initial_local_[i]; }

  // z and u are per-agent digits.
  std::size_t update_shared(std::size_t w, std::span<const int> z, std::span<const int> u) const;
  std::size_t update_local(int i, std::size_t l, int y, int u, int z) const;

  std::size_t num_info_points(int i) const {
    return num_shared_ * num_local_[i] * static_cast<std::size_t>(num_obs_[i]);
  }
  std::size_t info_index(int i, std::size_t w, std::size_t l, int y) const {
    return (w * num_local_[i] + l) * static_cast<std::size_t>(num_obs_[i]) + y;
  }
  InfoPoint info_point(int i, std::size_t index) const;
  std::vector<InfoPoint> enumerate_info_points(int i) const;

  // Window contents, oldest slot first; -1 marks padding.
  std::vector<int> shared_window(std::size_t w, int agent) const;
  std::vector<std::pair<int, int>> local_window(int i, std::size_t l) const;

  std::string info_label(const TabularPomg& model, int i, std::size_t index) const;
  std::vector<std::string> info_labels(const TabularPomg& model, int i) const;

  // Config form: {"type": "window", "t_w": n} or {"type": "custom"}.
  std::string describe() const;

 private:
  int window_length_ = -1;
  std::vector<int> num_obs_;
  std::vector<int> num_act_;
  std::size_t num_shared_ = 1;
  std::vector<std::size_t> num_local_;
  std::size_t initial_shared_ = 0;
  std::vector<std::size_t> initial_local_;

  // Window layout.
  std::vector<std::size_t> shared_block_;  // (|Y_j|+1)^t_w per agent
  std::vector<std::size_t> shared_stride_;
  std::vector<std::size_t> local_top_;  // (|Y_i||U_i|+1)^(t_w-1)

  // Explicit tables.
  std::vector<int> shared_table_;
  std::vector<std::vector<int>> local_table_;
  std::size_t joint_obs_ = 1;
  std::size_t joint_act_ = 1;
  MixedRadix obs_radix_;
  MixedRadix act_radix_;
};

}  // namespace isnpg
