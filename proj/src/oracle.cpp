#include "isnpg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "isnpg/errors.hpp"

namespace isnpg {

namespace {

const std::vector<double>& reward_table(const TabularPomg& m, int selector) {
  if (selector == kPotential) return m.potential;
  if (selector < 0 || selector >= m.n_agents()) throw ContractError("reward selector out of range");
  return m.reward[selector];
}

}  // namespace

double AgentAdvantage::max_abs() const {
  double m = 0.0;
  for (double a : A) m = std::max(m, std::abs(a));
  return m;
}

ValueTables solve_values(const AugmentedChain& chain, int selector, const SolveOptions& opts) {
  const ChainStructure& c = chain.chain();
  const TabularPomg& m = c.model();
  const auto& r = reward_table(m, selector);
  const std::size_t ns = c.size(), nu = c.num_joint_actions();
  ValueTables out;
  out.stamp = chain.stamp;
  out.selector = selector;
  out.reward.assign(ns, 0.0);
  for (std::size_t s = 0; s < ns; ++s) {
    double acc = 0.0;
    for (std::size_t u = 0; u < nu; ++u) acc += chain.joint_probs[s * nu + u] * r[m.row(c.x(s), u)];
    out.reward[s] = acc;
  }
  SolveResult sol = solve_discounted(chain.transition, m.discount, out.reward, false, opts);
  out.V = std::move(sol.x);
  out.residual = sol.residual;
  out.Q.assign(ns * nu, 0.0);
  const double beta = m.discount;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(ns); ++s) {
    for (std::size_t u = 0; u < nu; ++u) {
      auto succ = c.successors(s, u);
      auto pr = c.successor_probs(s, u);
      double ev = 0.0;
      for (std::size_t k = 0; k < succ.size(); ++k) ev += pr[k] * out.V[succ[k]];
      out.Q[s * nu + u] = r[m.row(c.x(s), u)] + beta * ev;
    }
  }
  return out;
}

OccupancyMeasure compute_occupancy(const AugmentedChain& chain, const SolveOptions& opts) {
  const ChainStructure& c = chain.chain();
  const TabularPomg& m = c.model();
  const double beta = m.discount;
  std::vector<double> rhs(c.initial());
  for (double& v : rhs) v *= (1.0 - beta);
  SolveResult sol = solve_discounted(chain.transition, beta, rhs, true, opts);
  OccupancyMeasure out;
  out.stamp = chain.stamp;
  out.d = std::move(sol.x);
  out.residual = sol.residual;
  // Clip solver noise below zero.
  for (double& v : out.d) {
    if (v < 0.0 && v > -1e-12) v = 0.0;
  }
  out.mass = 0.0;
  for (double v : out.d) out.mass += v;
  const int n = c.n_agents();
  out.marginal.resize(n);
  out.min_positive.assign(n, std::numeric_limits<double>::infinity());
  out.max_inverse = 1.0;
  for (int i = 0; i < n; ++i) {
    out.marginal[i].assign(c.spec().num_info_points(i), 0.0);
    for (std::size_t s = 0; s < c.size(); ++s) out.marginal[i][c.info(s, i)] += out.d[s];
    for (double v : out.marginal[i]) {
      if (v > 0.0) out.min_positive[i] = std::min(out.min_positive[i], v);
    }
    if (std::isfinite(out.min_positive[i])) out.max_inverse = std::max(out.max_inverse, 1.0 / out.min_positive[i]);
  }
  return out;
}

AgentAdvantage marginal_advantage(const AugmentedChain& chain, const ValueTables& values,
                                  const OccupancyMeasure& occ, int agent) {
  if (values.stamp != chain.stamp || occ.stamp != chain.stamp) {
    throw ContractError("marginal_advantage: values or occupancy belong to a different policy");
  }
  const ChainStructure& c = chain.chain();
  const TabularPomg& m = c.model();
  const int n = c.n_agents();
  if (agent < 0 || agent >= n) throw ContractError("marginal_advantage: agent out of range");
  const std::size_t nu = c.num_joint_actions();
  const int na = m.num_actions(agent);
  const auto& ja = m.joint_actions();
  AgentAdvantage out;
  out.agent = agent;
  out.actions = na;
  out.rows = c.spec().num_info_points(agent);
  out.Q.assign(out.rows * na, 0.0);
  out.A.assign(out.rows * na, 0.0);
  out.visited.assign(out.rows, 0);
  std::vector<double> mass(out.rows, 0.0);
  std::vector<int> ud(n);
  for (std::size_t s = 0; s < c.size(); ++s) {
    const double ds = occ.d[s];
    if (ds <= 0.0) continue;
    const std::size_t h = c.info(s, agent);
    mass[h] += ds;
    for (std::size_t u = 0; u < nu; ++u) {
      ja.decode(u, ud);
      double others = 1.0;
      for (int j = 0; j < n; ++j) {
        if (j != agent) others *= chain.agent_probs[j][c.info(s, j) * m.num_actions(j) + ud[j]];
      }
      out.Q[h * na + ud[agent]] += ds * others * values.Q[s * nu + u];
    }
  }
  const auto& pi = chain.agent_probs[agent];
  for (std::size_t h = 0; h < out.rows; ++h) {
    if (mass[h] <= 0.0) {
      ++out.unvisited;
      for (int a = 0; a < na; ++a) out.Q[h * na + a] = 0.0;
      continue;
    }
    out.visited[h] = 1;
    double base = 0.0;
    for (int a = 0; a < na; ++a) {
      out.Q[h * na + a] /= mass[h];
      base += pi[h * na + a] * out.Q[h * na + a];
    }
    for (int a = 0; a < na; ++a) out.A[h * na + a] = out.Q[h * na + a] - base;
  }
  return out;
}

double initial_value(const AugmentedChain& chain, const ValueTables& values) {
  if (values.stamp != chain.stamp) throw ContractError("initial_value: stale value tables");
  const auto& mu = chain.chain().initial();
  double v = 0.0;
  for (std::size_t s = 0; s < mu.size(); ++s) v += mu[s] * values.V[s];
  return v;
}

PolicyEvaluation evaluate_policy(std::shared_ptr<const ChainStructure> structure,
                                 const JointPolicy& policy, const SolveOptions& opts) {
  PolicyEvaluation ev;
  ev.chain = bind_policy(std::move(structure), policy);
  const TabularPomg& m = ev.chain.chain().model();
  const int n = m.n_agents();
  ev.occupancy = compute_occupancy(ev.chain, opts);
  ev.potential_values = solve_values(ev.chain, kPotential, opts);
  for (int i = 0; i < n; ++i) {
    ev.potential_advantages.push_back(marginal_advantage(ev.chain, ev.potential_values, ev.occupancy, i));
  }
  if (m.common_reward()) {
    ev.agent_values.assign(n, ev.potential_values);
    for (int i = 0; i < n; ++i) ev.agent_values[i].selector = i;
    ev.advantages = ev.potential_advantages;
  } else {
    for (int i = 0; i < n; ++i) {
      ev.agent_values.push_back(solve_values(ev.chain, i, opts));
      ev.advantages.push_back(marginal_advantage(ev.chain, ev.agent_values[i], ev.occupancy, i));
    }
  }
  ev.objective.potential = initial_value(ev.chain, ev.potential_values);
  for (int i = 0; i < n; ++i) ev.objective.J.push_back(initial_value(ev.chain, ev.agent_values[i]));
  return ev;
}

Objective exact_objective(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy,
                          const SolveOptions& opts) {
  AugmentedChain chain = bind_policy(std::move(structure), policy);
  const TabularPomg& m = chain.chain().model();
  Objective out;
  out.potential = initial_value(chain, solve_values(chain, kPotential, opts));
  for (int i = 0; i < m.n_agents(); ++i) {
    out.J.push_back(m.common_reward() ? out.potential : initial_value(chain, solve_values(chain, i, opts)));
  }
  return out;
}

double potential_residual(std::shared_ptr<const ChainStructure> structure, const JointPolicy& a,
                          const JointPolicy& b, int agent, const SolveOptions& opts) {
  if (a.n_agents() != b.n_agents() || agent < 0 || agent >= a.n_agents()) {
    throw ContractError("potential_residual: agent out of range");
  }
  for (int j = 0; j < a.n_agents(); ++j) {
    if (j != agent && !(a.agents[j] == b.agents[j])) {
      throw ContractError("potential_residual: policies differ in agent " + std::to_string(j) +
                          " besides the deviating agent " + std::to_string(agent));
    }
  }
  auto value = [&](const JointPolicy& p, int selector) {
    AugmentedChain chain = bind_policy(structure, p);
    return initial_value(chain, solve_values(chain, selector, opts));
  };
  double dj = value(b, agent) - value(a, agent);
  double dphi = value(b, kPotential) - value(a, kPotential);
  return std::abs(dj - dphi);
}

std::string advantage_csv(const PolicyEvaluation& ev) {
  const ChainStructure& c = ev.chain.chain();
  const TabularPomg& m = c.model();
  std::ostringstream os;
  os.precision(17);
  os << "agent,info_point,action,advantage,q,occupancy\n";
  for (const auto& adv : ev.advantages) {
    const int i = adv.agent;
    for (std::size_t h = 0; h < adv.rows; ++h) {
      if (!adv.visited[h]) continue;
      std::string label = c.spec().info_label(m, i, h);
      for (int a = 0; a < adv.actions; ++a) {
        os << i << ",\"" << label << "\"," << m.action_names[i][a] << "," << adv.A[h * adv.actions + a]
           << "," << adv.Q[h * adv.actions + a] << "," << ev.occupancy.marginal[i][h] << "\n";
      }
    }
  }
  return os.str();
}

}  // namespace isnpg
