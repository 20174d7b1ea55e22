#include "isnpg/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <limits>
#include <unordered_map>

#include "isnpg/errors.hpp"

namespace isnpg {

namespace {

struct Packer {
  MixedRadix radix;
  int n = 0;

  std::uint64_t pack(int x, std::size_t w, std::span<const std::size_t> l, std::span<const int> y) const {
    std::uint64_t k = static_cast<std::uint64_t>(x) * radix.stride(0) + w * radix.stride(1);
    for (int i = 0; i < n; ++i) {
      k += l[i] * radix.stride(2 + i) + static_cast<std::uint64_t>(y[i]) * radix.stride(2 + n + i);
    }
    return k;
  }
};

// Cartesian product of per-agent sparse observation rows.
template <class F>
void for_each_joint(const std::vector<std::span<const int>>& idx,
                    const std::vector<std::span<const double>>& p, F&& f) {
  const int n = static_cast<int>(idx.size());
  std::vector<std::size_t> pos(n, 0);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    if (idx[i].empty()) return;
  }
  while (true) {
    double q = 1.0;
    for (int i = 0; i < n; ++i) {
      y[i] = idx[i][pos[i]];
      q *= p[i][pos[i]];
    }
    f(std::span<const int>(y), q);
    int k = n - 1;
    while (k >= 0 && ++pos[k] == idx[k].size()) {
      pos[k] = 0;
      --k;
    }
    if (k < 0) return;
  }
}

}  // namespace

ChainStructure ChainStructure::build(const TabularPomg& model, const InternalStateSpec& spec,
                                     std::size_t cap) {
  ChainStructure c;
  c.model_ = &model;
  c.spec_ = &spec;
  const int n = model.n_agents();
  c.n_ = n;
  c.nu_ = model.num_joint_actions();
  if (spec.n_agents() != n) throw ContractError("build_chain: spec and model disagree on agent count");

  std::vector<int> radices{model.num_states()};
  auto as_int = [](std::size_t v) {
    if (v > static_cast<std::size_t>(std::numeric_limits<int>::max())) {
      throw SizeError("augmented state component too large to pack", v);
    }
    return static_cast<int>(v);
  };
  radices.push_back(as_int(spec.num_shared()));
  for (int i = 0; i < n; ++i) radices.push_back(as_int(spec.num_local(i)));
  for (int i = 0; i < n; ++i) radices.push_back(model.num_observations(i));
  Packer pk{MixedRadix(radices), n};
  const auto& ja = model.joint_actions();

  std::unordered_map<std::uint64_t, int> index;
  std::vector<std::uint64_t> keys;
  // Discovery-order kernel; successors refer to discovery indices.
  std::vector<std::size_t> off{0};
  std::vector<int> succ;
  std::vector<double> prob;
  std::vector<std::pair<int, double>> init;

  auto intern = [&](std::uint64_t key) {
    auto [it, fresh] = index.emplace(key, static_cast<int>(keys.size()));
    if (fresh) {
      keys.push_back(key);
      if (keys.size() > cap) {
        throw SizeError("augmented chain has more than " + std::to_string(cap) +
                            " reachable states (upper bound " + std::to_string(pk.radix.size()) + ")",
                        static_cast<std::uint64_t>(cap) + 1);
      }
    }
    return it->second;
  };

  // Initial states.
  std::vector<std::size_t> l0(n);
  for (int i = 0; i < n; ++i) l0[i] = spec.initial_local(i);
  for (int x = 0; x < model.num_states(); ++x) {
    double px = model.initial_state_dist[x];
    if (px <= 0.0) continue;
    std::vector<std::span<const int>> idx;
    std::vector<std::span<const double>> p;
    for (int i = 0; i < n; ++i) {
      idx.push_back(model.initial_observation[i].indices(x));
      p.push_back(model.initial_observation[i].probs(x));
    }
    for_each_joint(idx, p, [&](std::span<const int> y, double q) {
      if (q <= 0.0) return;
      int s = intern(pk.pack(x, spec.initial_shared(), l0, y));
      init.emplace_back(s, px * q);
    });
  }

  std::vector<int> digits(2 + 2 * n);
  std::vector<int> yc(n), ud(n);
  std::vector<std::size_t> lc(n), ln(n);
  for (std::size_t s = 0; s < keys.size(); ++s) {
    pk.radix.decode(keys[s], digits);
    const int x = digits[0];
    const std::size_t w = static_cast<std::size_t>(digits[1]);
    for (int i = 0; i < n; ++i) {
      lc[i] = static_cast<std::size_t>(digits[2 + i]);
      yc[i] = digits[2 + n + i];
    }
    for (std::size_t u = 0; u < c.nu_; ++u) {
      ja.decode(u, ud);
      std::size_t wn = spec.update_shared(w, yc, ud);
      for (int i = 0; i < n; ++i) ln[i] = spec.update_local(i, lc[i], yc[i], ud[i], yc[i]);
      const std::size_t row = model.row(x, u);
      auto xs = model.transition.indices(row);
      auto ps = model.transition.probs(row);
      for (std::size_t k = 0; k < xs.size(); ++k) {
        if (ps[k] <= 0.0) continue;
        const int xn = xs[k];
        const std::size_t orow = model.row(xn, u);
        std::vector<std::span<const int>> idx;
        std::vector<std::span<const double>> p;
        for (int i = 0; i < n; ++i) {
          idx.push_back(model.observation_kernel[i].indices(orow));
          p.push_back(model.observation_kernel[i].probs(orow));
        }
        for_each_joint(idx, p, [&](std::span<const int> yn, double q) {
          if (q <= 0.0) return;
          succ.push_back(intern(pk.pack(xn, wn, ln, yn)));
          prob.push_back(ps[k] * q);
        });
      }
      off.push_back(succ.size());
    }
  }

  // Sort by key and renumber.
  const std::size_t ns = keys.size();
  std::vector<int> order(ns);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] < keys[b]; });
  std::vector<int> rank(ns);
  for (std::size_t k = 0; k < ns; ++k) rank[order[k]] = static_cast<int>(k);

  c.x_.resize(ns);
  c.w_.resize(ns);
  c.l_.resize(ns * n);
  c.y_.resize(ns * n);
  c.yj_.resize(ns);
  c.info_.resize(ns * n);
  c.jinfo_.resize(ns);
  c.radix_ = pk.radix;
  c.off_.assign(1, 0);
  c.succ_.reserve(succ.size());
  c.prob_.reserve(prob.size());
  const auto& jo = model.joint_observations();
  for (std::size_t k = 0; k < ns; ++k) {
    const int old = order[k];
    pk.radix.decode(keys[old], digits);
    c.x_[k] = digits[0];
    c.w_[k] = static_cast<std::size_t>(digits[1]);
    std::size_t yj = 0;
    for (int i = 0; i < n; ++i) {
      c.l_[k * n + i] = static_cast<std::size_t>(digits[2 + i]);
      c.y_[k * n + i] = digits[2 + n + i];
      yj += jo.stride(i) * static_cast<std::size_t>(digits[2 + n + i]);
      c.info_[k * n + i] = spec.info_index(i, c.w_[k], c.l_[k * n + i], c.y_[k * n + i]);
    }
    c.yj_[k] = yj;
    c.jinfo_[k] = keys[old] - static_cast<std::uint64_t>(digits[0]) * pk.radix.stride(0);
    for (std::size_t u = 0; u < c.nu_; ++u) {
      std::size_t r = static_cast<std::size_t>(old) * c.nu_ + u;
      std::vector<std::pair<int, double>> row;
      for (std::size_t e = off[r]; e < off[r + 1]; ++e) row.emplace_back(rank[succ[e]], prob[e]);
      std::sort(row.begin(), row.end());
      for (auto [t, p] : row) {
        c.succ_.push_back(t);
        c.prob_.push_back(p);
      }
      c.off_.push_back(c.succ_.size());
    }
  }
  c.mu0_.assign(ns, 0.0);
  for (auto [s, p] : init) c.mu0_[rank[s]] += p;
  return c;
}

std::uint64_t ChainStructure::pack_info(std::size_t w, std::span<const std::size_t> l,
                                        std::span<const int> y) const {
  Packer pk{radix_, n_};
  return pk.pack(0, w, l, y);
}

std::string ChainStructure::label(std::size_t s) const {
  std::ostringstream os;
  os << "x=" << model_->state_names[x_[s]] << " w=" << w_[s] << " l=(";
  for (int i = 0; i < n_; ++i) os << (i ? "," : "") << l(s, i);
  os << ") y=(";
  for (int i = 0; i < n_; ++i) os << (i ? "," : "") << model_->observation_names[i][y(s, i)];
  os << ")";
  return os.str();
}

double AugmentedChain::max_row_residual() const {
  double worst = 0.0;
  for (std::size_t r = 0; r < transition.n; ++r) {
    double s = 0.0;
    for (std::size_t k = transition.offsets[r]; k < transition.offsets[r + 1]; ++k) s += transition.vals[k];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

AugmentedChain bind_policy(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy) {
  const ChainStructure& c = *structure;
  const TabularPomg& m = c.model();
  const int n = c.n_agents();
  if (policy.n_agents() != n) throw ContractError("bind_policy: agent count mismatch");
  for (int i = 0; i < n; ++i) {
    if (policy.agents[i].rows() != c.spec().num_info_points(i) ||
        policy.agents[i].actions() != m.num_actions(i)) {
      throw ContractError("bind_policy: policy table shape does not match the internal-state spec");
    }
  }
  AugmentedChain out;
  out.structure = structure;
  out.stamp = policy.stamp();
  for (const auto& a : policy.agents) out.agent_probs.push_back(a.probability_table());

  const std::size_t ns = c.size(), nu = c.num_joint_actions();
  const auto& ja = m.joint_actions();
  out.joint_probs.assign(ns * nu, 0.0);
  std::vector<std::vector<std::pair<int, double>>> rows(ns);
#pragma omp parallel
  {
    std::vector<int> ud(n);
    std::vector<std::pair<int, double>> acc;
#pragma omp for schedule(dynamic, 64)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(ns); ++s) {
      acc.clear();
      for (std::size_t u = 0; u < nu; ++u) {
        ja.decode(u, ud);
        double pu = 1.0;
        for (int i = 0; i < n; ++i) {
          pu *= out.agent_probs[i][c.info(s, i) * m.num_actions(i) + ud[i]];
        }
        out.joint_probs[s * nu + u] = pu;
        auto succ = c.successors(s, u);
        auto pr = c.successor_probs(s, u);
        for (std::size_t k = 0; k < succ.size(); ++k) acc.emplace_back(succ[k], pu * pr[k]);
      }
      std::stable_sort(acc.begin(), acc.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      auto& row = rows[s];
      for (const auto& e : acc) {
        if (!row.empty() && row.back().first == e.first) {
          row.back().second += e.second;
        } else {
          row.push_back(e);
        }
      }
    }
  }
  CsrMatrix& p = out.transition;
  p.n = ns;
  p.offsets.assign(1, 0);
  for (const auto& row : rows) {
    for (auto [t, v] : row) {
      p.cols.push_back(t);
      p.vals.push_back(v);
    }
    p.offsets.push_back(p.cols.size());
  }
  return out;
}

AugmentedChain build_chain(const TabularPomg& model, const InternalStateSpec& spec,
                           const JointPolicy& policy, std::size_t cap) {
  auto structure = std::make_shared<const ChainStructure>(ChainStructure::build(model, spec, cap));
  return bind_policy(std::move(structure), policy);
}

}  // namespace isnpg
