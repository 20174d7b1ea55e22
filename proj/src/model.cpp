#include "isnpg/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "isnpg/errors.hpp"

namespace isnpg {

void DistTable::push_row(std::span<const int> index, std::span<const double> prob) {
  if (index.size() != prob.size()) {
    throw ContractError("DistTable::push_row: index/prob length mismatch");
  }
  index_.insert(index_.end(), index.begin(), index.end());
  prob_.insert(prob_.end(), prob.begin(), prob.end());
  offsets_.push_back(index_.size());
}

void DistTable::push_dense_row(std::span<const double> prob) {
  for (std::size_t k = 0; k < prob.size(); ++k) {
    if (prob[k] != 0.0) {
      index_.push_back(static_cast<int>(k));
      prob_.push_back(prob[k]);
    }
  }
  offsets_.push_back(index_.size());
}

std::vector<double> DistTable::dense_row(std::size_t row) const {
  std::vector<double> out(width_, 0.0);
  auto idx = indices(row);
  auto p = probs(row);
  for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] += p[k];
  return out;
}

double DistTable::row_sum(std::size_t row) const {
  double s = 0.0;
  for (double p : probs(row)) s += p;
  return s;
}

double DistTable::at(std::size_t row, int col) const {
  auto idx = indices(row);
  auto p = probs(row);
  double s = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] == col) s += p[k];
  }
  return s;
}

MixedRadix::MixedRadix(std::vector<int> radices) : radices_(std::move(radices)) {
  strides_.assign(radices_.size(), 1);
  size_ = 1;
  for (std::size_t k = radices_.size(); k-- > 0;) {
    if (radices_[k] <= 0) throw ContractError("MixedRadix: radix must be positive");
    strides_[k] = size_;
    if (size_ > std::numeric_limits<std::size_t>::max() / radices_[k]) {
      throw SizeError("MixedRadix: index space overflows 64 bits",
                      std::numeric_limits<std::uint64_t>::max());
    }
    size_ *= static_cast<std::size_t>(radices_[k]);
  }
}

std::size_t MixedRadix::encode(std::span<const int> digits) const {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < radices_.size(); ++k) idx += strides_[k] * digits[k];
  return idx;
}

void MixedRadix::decode(std::size_t index, std::span<int> digits) const {
  for (std::size_t k = 0; k < radices_.size(); ++k) {
    digits[k] = static_cast<int>((index / strides_[k]) % radices_[k]);
  }
}

std::vector<int> MixedRadix::decode(std::size_t index) const {
  std::vector<int> d(radices_.size());
  decode(index, d);
  return d;
}

void TabularPomg::finalize() {
  std::vector<int> ua, yo;
  for (int i = 0; i < n_agents(); ++i) {
    ua.push_back(num_actions(i));
    yo.push_back(num_observations(i));
  }
  joint_actions_ = MixedRadix(ua);
  joint_observations_ = MixedRadix(yo);
  if (!potential.empty()) {
    auto [lo, hi] = std::minmax_element(potential.begin(), potential.end());
    phi_min_ = *lo;
    phi_max_ = *hi;
  }
  common_reward_ = !reward.empty();
  for (const auto& r : reward) {
    if (r != potential) {
      common_reward_ = false;
      break;
    }
  }
}

double TabularPomg::potential_scale() const {
  return phi_max_ - std::min(phi_min_, 0.0);
}

namespace {

RowResidual table_residual(const DistTable& t) {
  RowResidual r;
  for (std::size_t row = 0; row < t.rows(); ++row) {
    double res = std::abs(t.row_sum(row) - 1.0);
    if (res > r.max_residual) {
      r.max_residual = res;
      r.worst_row = row;
    }
    for (double p : t.probs(row)) r.min_entry = std::min(r.min_entry, p);
  }
  return r;
}

}  // namespace

double ModelReport::max_residual() const {
  double m = std::max(transition.max_residual, initial_state_residual);
  for (const auto& o : observation) m = std::max(m, o.max_residual);
  for (const auto& o : initial_observation) m = std::max(m, o.max_residual);
  return m;
}

bool ModelReport::ok(double tol) const {
  return discount_ok && max_residual() <= tol && transition.min_entry >= 0.0 &&
         std::all_of(observation.begin(), observation.end(),
                     [](const RowResidual& r) { return r.min_entry >= 0.0; }) &&
         issues.empty();
}

ModelReport validate_model(const TabularPomg& model) {
  ModelReport rep;
  const int n = model.n_agents();
  const std::size_t nx = model.state_names.size();
  const std::size_t nu = model.num_joint_actions();

  auto note = [&](const std::string& s) { rep.issues.push_back(s); };
  if (n < 1) note("n_agents must be >= 1");
  if (nx < 1) note("state set is empty");
  for (int i = 0; i < n; ++i) {
    if (model.num_actions(i) < 1) note("agent " + std::to_string(i) + " has no actions");
    if (i < static_cast<int>(model.observation_names.size()) && model.num_observations(i) < 1)
      note("agent " + std::to_string(i) + " has no observations");
  }
  rep.discount_ok = model.discount > 0.0 && model.discount < 1.0;
  if (!rep.discount_ok) note("discount must lie strictly inside (0,1)");

  if (model.transition.rows() != nx * nu) {
    note("transition has " + std::to_string(model.transition.rows()) + " rows, expected " +
         std::to_string(nx * nu));
  } else {
    rep.transition = table_residual(model.transition);
  }
  for (int i = 0; i < n && i < static_cast<int>(model.observation_kernel.size()); ++i) {
    const auto& t = model.observation_kernel[i];
    if (t.rows() != nx * nu) note("observation_kernel[" + std::to_string(i) + "] row count");
    rep.observation.push_back(table_residual(t));
  }
  if (static_cast<int>(model.observation_kernel.size()) != n) note("observation_kernel agent count");
  for (int i = 0; i < n && i < static_cast<int>(model.initial_observation.size()); ++i) {
    const auto& t = model.initial_observation[i];
    if (t.rows() != nx) note("initial_observation_kernel[" + std::to_string(i) + "] row count");
    rep.initial_observation.push_back(table_residual(t));
  }
  if (model.initial_state_dist.size() == nx) {
    double s = 0.0;
    for (double p : model.initial_state_dist) {
      s += p;
      if (p < 0.0) note("initial_state_dist has a negative entry");
    }
    rep.initial_state_residual = std::abs(s - 1.0);
  } else {
    note("initial_state_dist length");
  }
  if (static_cast<int>(model.reward.size()) != n) note("reward agent count");
  for (const auto& r : model.reward) {
    if (r.size() != nx * nu) note("reward table size");
  }
  if (model.potential.size() != nx * nu) note("potential table size");

  rep.common_reward = model.common_reward();
  rep.phi_min = model.phi_min();
  rep.phi_max = model.phi_max();

  // States reachable from the initial distribution under any joint action.
  if (model.transition.rows() == nx * nu && model.initial_state_dist.size() == nx) {
    std::vector<char> seen(nx, 0);
    std::vector<int> stack;
    for (std::size_t x = 0; x < nx; ++x) {
      if (model.initial_state_dist[x] > 0.0) {
        seen[x] = 1;
        stack.push_back(static_cast<int>(x));
      }
    }
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      for (std::size_t u = 0; u < nu; ++u) {
        auto idx = model.transition.indices(model.row(x, u));
        auto p = model.transition.probs(model.row(x, u));
        for (std::size_t k = 0; k < idx.size(); ++k) {
          if (p[k] > 0.0 && !seen[idx[k]]) {
            seen[idx[k]] = 1;
            stack.push_back(idx[k]);
          }
        }
      }
    }
    rep.reachable_states = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
  }
  return rep;
}

}  // namespace isnpg
