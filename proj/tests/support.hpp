#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "isnpg/chain.hpp"
#include "isnpg/envs.hpp"
#include "isnpg/internal_state.hpp"
#include "isnpg/model.hpp"
#include "isnpg/oracle.hpp"
#include "isnpg/policy.hpp"

namespace testing {

using namespace isnpg;

// One agent, two equally likely points drawn afresh every step, two actions,
// point observed exactly.
inline TabularPomg bandit_model(double beta = 0.9) {
  TabularPomg m;
  m.name = "bandit";
  m.state_names = {"p0", "p1"};
  m.action_names = {{"a0", "a1"}};
  m.observation_names = {{"p0", "p1"}};
  m.discount = beta;
  m.initial_state_dist = {0.5, 0.5};
  m.finalize();
  const double pay[2][2] = {{1.0, 0.2}, {0.1, 0.7}};
  m.transition = DistTable(2);
  m.observation_kernel.assign(1, DistTable(2));
  m.initial_observation.assign(1, DistTable(2));
  std::vector<double> r;
  for (int x = 0; x < 2; ++x) {
    for (int u = 0; u < 2; ++u) {
      const double next[2] = {0.5, 0.5};
      m.transition.push_dense_row(next);
      r.push_back(pay[x][u]);
    }
  }
  for (int xn = 0; xn < 2; ++xn) {
    for (int u = 0; u < 2; ++u) m.observation_kernel[0].push_point(xn);
    m.initial_observation[0].push_point(xn);
  }
  m.reward = {r};
  m.potential = r;
  m.finalize();
  return m;
}

inline TabularPomg env(EnvId id, double beta = 0.0) {
  EnvParams p;
  p.id = id;
  if (beta > 0.0) p.discount = beta;
  return build_env(p);
}

inline std::shared_ptr<const ChainStructure> structure_of(const TabularPomg& m, const InternalStateSpec& s) {
  return std::make_shared<const ChainStructure>(ChainStructure::build(m, s, 2000000));
}

inline JointPolicy random_policy(const InternalStateSpec& s, const TabularPomg& m, std::uint64_t seed,
                                 double scale = 1.0) {
  return init_policy(s, m, InitMode::random, {}, seed, scale);
}

// Forward propagation of the distribution over (x, w, l, y) straight from the
// model tables and the update maps, merging equal tuples per depth. Returns
// sum_{k<H} beta^k E[r_i] per agent plus the potential at the end.
inline std::vector<double> enumerate_returns(const TabularPomg& m, const InternalStateSpec& s,
                                             const JointPolicy& pi, int horizon) {
  using Key = std::tuple<int, std::size_t, std::vector<std::size_t>, std::vector<int>>;
  const int n = m.n_agents();
  std::map<Key, double> layer;
  for (int x = 0; x < m.num_states(); ++x) {
    if (m.initial_state_dist[x] <= 0.0) continue;
    std::map<std::vector<int>, double> ys{{{}, m.initial_state_dist[x]}};
    for (int i = 0; i < n; ++i) {
      std::map<std::vector<int>, double> next;
      for (const auto& [y, p] : ys) {
        auto idx = m.initial_observation[i].indices(x);
        auto pr = m.initial_observation[i].probs(x);
        for (std::size_t k = 0; k < idx.size(); ++k) {
          auto y2 = y;
          y2.push_back(idx[k]);
          next[y2] += p * pr[k];
        }
      }
      ys = std::move(next);
    }
    std::vector<std::size_t> l(n);
    for (int i = 0; i < n; ++i) l[i] = s.initial_local(i);
    for (const auto& [y, p] : ys) layer[Key{x, s.initial_shared(), l, y}] += p;
  }

  std::vector<double> out(n + 1, 0.0);
  double disc = 1.0;
  const auto& ja = m.joint_actions();
  for (int k = 0; k < horizon; ++k) {
    std::map<Key, double> next;
    for (const auto& [key, p] : layer) {
      const auto& [x, w, l, y] = key;
      std::vector<std::vector<double>> probs(n);
      for (int i = 0; i < n; ++i) probs[i] = pi.agents[i].probabilities(s.info_index(i, w, l[i], y[i]));
      for (std::size_t u = 0; u < ja.size(); ++u) {
        auto a = ja.decode(u);
        double pu = p;
        for (int i = 0; i < n; ++i) pu *= probs[i][a[i]];
        if (pu <= 0.0) continue;
        const std::size_t row = m.row(x, u);
        for (int i = 0; i < n; ++i) out[i] += disc * pu * m.reward[i][row];
        out[n] += disc * pu * m.potential[row];
        if (k + 1 == horizon) continue;
        const std::size_t w2 = s.update_shared(w, y, a);
        std::vector<std::size_t> l2(n);
        for (int i = 0; i < n; ++i) l2[i] = s.update_local(i, l[i], y[i], a[i], y[i]);
        auto xi = m.transition.indices(row);
        auto xp = m.transition.probs(row);
        for (std::size_t t = 0; t < xi.size(); ++t) {
          const int xn = xi[t];
          const std::size_t orow = m.row(xn, u);
          std::map<std::vector<int>, double> ys{{{}, pu * xp[t]}};
          for (int i = 0; i < n; ++i) {
            std::map<std::vector<int>, double> nys;
            auto oi = m.observation_kernel[i].indices(orow);
            auto op = m.observation_kernel[i].probs(orow);
            for (const auto& [yy, q] : ys) {
              for (std::size_t j = 0; j < oi.size(); ++j) {
                auto y2 = yy;
                y2.push_back(oi[j]);
                nys[y2] += q * op[j];
              }
            }
            ys = std::move(nys);
          }
          for (const auto& [y2, q] : ys) next[Key{xn, w2, l2, y2}] += q;
        }
      }
    }
    layer = std::move(next);
    disc *= m.discount;
  }
  return out;
}

// Plain MDP quantities for a fully observable model with t_w = 0, where an
// agent's information point is the state. Built with dense Eigen algebra.
struct MdpSolution {
  Eigen::VectorXd V;  // potential values per state
  Eigen::MatrixXd Q;  // [x][joint u]
  Eigen::VectorXd d;  // normalized discounted occupancy
  Eigen::MatrixXd pi;  // joint action probabilities [x][u]
  double J = 0.0;
};

inline MdpSolution solve_mdp(const TabularPomg& m, const JointPolicy& policy) {
  const int S = m.num_states();
  const auto& ja = m.joint_actions();
  const int U = static_cast<int>(ja.size());
  const double beta = m.discount;
  MdpSolution out;
  out.pi = Eigen::MatrixXd::Zero(S, U);
  for (int x = 0; x < S; ++x) {
    for (int u = 0; u < U; ++u) {
      auto a = ja.decode(u);
      double p = 1.0;
      for (int i = 0; i < m.n_agents(); ++i) p *= policy.agents[i].probabilities(x)[a[i]];
      out.pi(x, u) = p;
    }
  }
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(S * U, S);
  Eigen::VectorXd r(S * U);
  for (int x = 0; x < S; ++x) {
    for (int u = 0; u < U; ++u) {
      const std::size_t row = m.row(x, u);
      r(row) = m.potential[row];
      for (int xn = 0; xn < S; ++xn) T(row, xn) = m.transition.at(row, xn);
    }
  }
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  Eigen::VectorXd rp = Eigen::VectorXd::Zero(S);
  for (int x = 0; x < S; ++x) {
    for (int u = 0; u < U; ++u) {
      P.row(x) += out.pi(x, u) * T.row(m.row(x, u));
      rp(x) += out.pi(x, u) * r(m.row(x, u));
    }
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(S, S);
  out.V = (I - beta * P).fullPivLu().solve(rp);
  out.Q.resize(S, U);
  for (int x = 0; x < S; ++x) {
    for (int u = 0; u < U; ++u) out.Q(x, u) = r(m.row(x, u)) + beta * T.row(m.row(x, u)).dot(out.V);
  }
  Eigen::VectorXd mu0 = Eigen::Map<const Eigen::VectorXd>(m.initial_state_dist.data(), S);
  out.d = (1.0 - beta) * (I - beta * P.transpose()).fullPivLu().solve(mu0);
  out.J = mu0.dot(out.V);
  return out;
}

}  // namespace testing
