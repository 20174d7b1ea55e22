#include "isnpg/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <Eigen/Dense>

#include "isnpg/errors.hpp"

namespace isnpg {

std::string to_string(BrMethod m) {
  switch (m) {
    case BrMethod::exhaustive:
      return "exhaustive";
    case BrMethod::npg_br:
      return "npg-br";
    case BrMethod::automatic:
      return "auto";
  }
  return "auto";
}

BrMethod parse_br_method(const std::string& s) {
  if (s == "exhaustive") return BrMethod::exhaustive;
  if (s == "npg-br") return BrMethod::npg_br;
  if (s == "auto") return BrMethod::automatic;
  throw ParameterError("unknown best-response method '" + s + "' (exhaustive, npg-br, auto)");
}

namespace {

// Chain states reach every row listed here under some joint policy.
std::vector<std::size_t> reachable_rows(const ChainStructure& c, int agent) {
  std::vector<char> seen(c.spec().num_info_points(agent), 0);
  for (std::size_t s = 0; s < c.size(); ++s) seen[c.info(s, agent)] = 1;
  std::vector<std::size_t> rows;
  for (std::size_t h = 0; h < seen.size(); ++h) {
    if (seen[h]) rows.push_back(h);
  }
  return rows;
}

double agent_value(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy, int agent,
                   const SolveOptions& opts) {
  AugmentedChain chain = bind_policy(std::move(structure), policy);
  return initial_value(chain, solve_values(chain, agent, opts));
}

// Softmax parameters that put probability exactly 1 on `choice`.
constexpr double kOff = -1000.0;

BestResponse vertex_br(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy,
                           int agent, const BrOptions& opts) {
  const ChainStructure& c = *structure;
  const std::vector<std::size_t> rows = reachable_rows(c, agent);
  const int na = c.model().num_actions(agent);
  std::size_t count = 1;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (count > opts.budget / static_cast<std::size_t>(na) + 1) {
      count = opts.budget + 1;
      break;
    }
    count *= static_cast<std::size_t>(na);
  }
  if (count > opts.budget) {
    throw SizeError("exhaustive best response for agent " + std::to_string(agent) + " needs " +
                        std::to_string(na) + "^" + std::to_string(rows.size()) + " tables",
                    count);
  }
  std::vector<double> values(count);
  auto table_for = [&](std::size_t code) {
    PolicyTable t = policy.agents[agent];
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const int choice = static_cast<int>(code % na);
      code /= na;
      auto th = t.theta_row(rows[k]);
      for (int u = 0; u < na; ++u) th[u] = u == choice ? 0.0 : kOff;
    }
    return t;
  };
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t code = 0; code < static_cast<std::ptrdiff_t>(count); ++code) {
    JointPolicy p = policy;
    p.agents[agent] = table_for(code);
    values[code] = agent_value(structure, p, agent, opts.solve);
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < count; ++k) {
    if (values[k] > values[best]) best = k;
  }
  return {table_for(best), values[best], BrMethod::exhaustive, count};
}

BestResponse npg_br(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy, int agent,
                    const BrOptions& opts);

// Under partial observability a stochastic table can beat every
// deterministic one, so the vertex search is topped up with the NPG ascent
// from the current table.
BestResponse exhaustive_br(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy,
                           int agent, const BrOptions& opts) {
  BestResponse vertex = vertex_br(structure, policy, agent, opts);
  BestResponse ascent = npg_br(std::move(structure), policy, agent, opts);
  const std::size_t evaluated = vertex.evaluated + ascent.evaluated;
  BestResponse out = ascent.value > vertex.value ? std::move(ascent) : std::move(vertex);
  out.method = BrMethod::exhaustive;
  out.evaluated = evaluated;
  return out;
}

BestResponse npg_br(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy, int agent,
                    const BrOptions& opts) {
  const double beta = structure->model().discount;
  const double eta = opts.npg_eta > 0.0 ? opts.npg_eta : 1.0;
  JointPolicy cur = policy;
  BestResponse best{policy.agents[agent], -std::numeric_limits<double>::infinity(), BrMethod::npg_br, 0};
  for (std::size_t it = 0; it <= opts.npg_iterations; ++it) {
    AugmentedChain chain = bind_policy(structure, cur);
    ValueTables v = solve_values(chain, agent, opts.solve);
    const double value = initial_value(chain, v);
    if (value > best.value) {
      best.value = value;
      best.policy = cur.agents[agent];
    }
    best.evaluated = it + 1;
    if (it == opts.npg_iterations) break;
    OccupancyMeasure occ = compute_occupancy(chain, opts.solve);
    AgentAdvantage adv = marginal_advantage(chain, v, occ, agent);
    double top = 0.0;
    for (std::size_t h = 0; h < adv.rows; ++h) {
      if (!adv.visited[h]) continue;
      for (int u = 0; u < adv.actions; ++u) top = std::max(top, adv.A[h * adv.actions + u]);
    }
    if (top < opts.npg_tolerance) break;
    cur = npg_step_agent(cur, agent, adv.A, eta, beta).next;
  }
  // The greedy rounding of the last iterate removes the leftover mass on
  // dominated actions.
  JointPolicy rounded = cur;
  auto& table = rounded.agents[agent];
  for (std::size_t h = 0; h < table.rows(); ++h) {
    const int choice = cur.agents[agent].argmax(h);
    auto th = table.theta_row(h);
    for (int u = 0; u < table.actions(); ++u) th[u] = u == choice ? 0.0 : kOff;
  }
  const double value = agent_value(structure, rounded, agent, opts.solve);
  if (value > best.value) {
    best.value = value;
    best.policy = table;
  }
  return best;
}

}  // namespace

BestResponse best_response_fsc(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy,
                               int agent, const BrOptions& opts) {
  if (agent < 0 || agent >= policy.n_agents()) throw ContractError("best_response_fsc: agent out of range");
  switch (opts.method) {
    case BrMethod::exhaustive:
      return exhaustive_br(std::move(structure), policy, agent, opts);
    case BrMethod::npg_br:
      return npg_br(std::move(structure), policy, agent, opts);
    case BrMethod::automatic:
      try {
        return exhaustive_br(structure, policy, agent, opts);
      } catch (const SizeError&) {
        return npg_br(std::move(structure), policy, agent, opts);
      }
  }
  throw ContractError("best_response_fsc: unknown method");
}

GapReport ne_gap(std::shared_ptr<const ChainStructure> structure, const JointPolicy& policy,
                 const BrOptions& opts) {
  const int n = policy.n_agents();
  GapReport rep;
  AugmentedChain chain = bind_policy(structure, policy);
  for (int i = 0; i < n; ++i) {
    rep.value.push_back(initial_value(chain, solve_values(chain, i, opts.solve)));
    rep.responses.push_back(best_response_fsc(structure, policy, i, opts));
    const double raw = rep.responses.back().value - rep.value.back();
    rep.raw_gap.push_back(raw);
    if (raw < 0.0) rep.clamped = true;
    rep.gap.push_back(std::max(raw, 0.0));
    rep.ne_gap = std::max(rep.ne_gap, rep.gap.back());
  }
  return rep;
}

double compute_a(const JointPolicy& policy, const std::vector<AgentAdvantage>& q_tables) {
  double a = 1.0;
  for (const auto& t : q_tables) {
    const auto probs = policy.agents[t.agent].probability_table();
    const int na = t.actions;
    for (std::size_t h = 0; h < t.rows; ++h) {
      if (!t.visited[h]) continue;
      const double* q = t.Q.data() + h * na;
      const double top = *std::max_element(q, q + na);
      double mass = 0.0;
      for (int u = 0; u < na; ++u) {
        if (q[u] >= top - 1e-9) mass += probs[h * na + u];
      }
      a = std::min(a, mass);
    }
  }
  return a;
}

void MSurrogate::add(const OccupancyMeasure& occ) {
  value_ = std::max(value_, occ.max_inverse);
  ++count_;
}

double compute_M(const std::vector<OccupancyMeasure>& history) {
  if (history.empty()) throw ContractError("compute_M: empty occupancy history");
  MSurrogate m;
  for (const auto& occ : history) m.add(occ);
  return m.value();
}

double phi_scale(const TabularPomg& model) { return model.potential_scale(); }

double joint_advantage_expectation(const PolicyEvaluation& a, const PolicyEvaluation& b) {
  if (a.chain.structure != b.chain.structure) {
    throw ContractError("joint_advantage_expectation: policies bound to different chains");
  }
  const ChainStructure& c = a.chain.chain();
  const std::size_t ns = c.size(), nu = c.num_joint_actions();
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<std::size_t> idx(ns);
  for (std::size_t s = 0; s < ns; ++s) idx[s] = slot.emplace(c.joint_info(s), slot.size()).first->second;
  const std::size_t nh = slot.size();
  std::vector<double> q(nh * nu, 0.0), w(nh, 0.0);
  const auto& Q = a.potential_values.Q;
  for (std::size_t s = 0; s < ns; ++s) {
    const double d = a.occupancy.d[s];
    if (d <= 0.0) continue;
    w[idx[s]] += d;
    for (std::size_t u = 0; u < nu; ++u) q[idx[s] * nu + u] += d * Q[s * nu + u];
  }
  std::vector<double> adv(nh * nu, 0.0), done(nh, 0);
  for (std::size_t s = 0; s < ns; ++s) {
    const std::size_t h = idx[s];
    if (done[h] || w[h] <= 0.0) continue;
    done[h] = 1;
    double base = 0.0;
    for (std::size_t u = 0; u < nu; ++u) {
      q[h * nu + u] /= w[h];
      base += a.chain.joint_probs[s * nu + u] * q[h * nu + u];
    }
    for (std::size_t u = 0; u < nu; ++u) adv[h * nu + u] = q[h * nu + u] - base;
  }
  double total = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    const double d = b.occupancy.d[s];
    if (d <= 0.0) continue;
    double acc = 0.0;
    for (std::size_t u = 0; u < nu; ++u) acc += b.chain.joint_probs[s * nu + u] * adv[idx[s] * nu + u];
    total += d * acc;
  }
  return total;
}

Lemma1Result lemma1_check(const PolicyEvaluation& a, const PolicyEvaluation& b, const BeliefTree& tree) {
  const TabularPomg& m = a.chain.chain().model();
  const double beta = m.discount;
  const double phi = phi_scale(m);
  Lemma1Result r;
  r.lhs = b.objective.potential - a.objective.potential;
  r.advantage = joint_advantage_expectation(a, b) / (1.0 - beta);
  TvExpectation tv = history_tv_expectation(tree, b.chain, a.chain, a.occupancy);
  r.tv = std::min(1.0, tv.head + tv.tail);
  r.tv_head = tv.head;
  r.tv_occupancy = occupancy_tv(b.chain, b.occupancy, a.chain, a.occupancy);
  r.rhs_literal = r.advantage + 2.0 * phi / (1.0 - beta) * r.tv;
  r.rhs_corrected = r.advantage + 2.0 * phi / ((1.0 - beta) * (1.0 - beta)) * r.tv;
  r.rhs_head = r.advantage + 2.0 * phi / ((1.0 - beta) * (1.0 - beta)) * r.tv_head;
  r.residual_literal = r.rhs_literal - r.lhs;
  r.residual_corrected = r.rhs_corrected - r.lhs;
  return r;
}

Lemma2Result lemma2_check(const PolicyEvaluation& eval, const GapReport& gap, double d_b) {
  const TabularPomg& m = eval.chain.chain().model();
  const double beta = m.discount;
  const double phi = phi_scale(m);
  Lemma2Result r;
  r.gap = gap.ne_gap;
  r.d_b = d_b;
  r.max_advantage = -std::numeric_limits<double>::infinity();
  for (const auto& t : eval.advantages) {
    for (std::size_t h = 0; h < t.rows; ++h) {
      if (!t.visited[h]) continue;
      for (int u = 0; u < t.actions; ++u) r.max_advantage = std::max(r.max_advantage, t.A[h * t.actions + u]);
    }
  }
  r.rhs_literal = r.max_advantage / (1.0 - beta) + 2.0 * d_b * phi / (1.0 - beta);
  r.rhs_corrected = r.max_advantage / (1.0 - beta) + 2.0 * d_b * phi / ((1.0 - beta) * (1.0 - beta));
  r.residual_literal = r.rhs_literal - r.gap;
  r.residual_corrected = r.rhs_corrected - r.gap;
  r.method = gap.responses.empty() ? BrMethod::exhaustive : gap.responses.front().method;
  for (const auto& br : gap.responses) {
    if (br.method == BrMethod::npg_br) r.method = BrMethod::npg_br;
  }
  return r;
}

namespace {

AdvantageSet advantage_tables(const PolicyEvaluation& e) {
  AdvantageSet out;
  for (const auto& t : e.advantages) out.push_back(t.A);
  return out;
}

}  // namespace

Lemma3Result lemma3_check(const JointPolicy& current_policy, const PolicyEvaluation& current,
                          const PolicyEvaluation& next, const NpgStep& step, double eta) {
  const TabularPomg& m = current.chain.chain().model();
  const double beta = m.discount;
  const int n = m.n_agents();
  if (current.chain.stamp != current_policy.stamp()) {
    throw ContractError("lemma3_check: evaluation does not belong to the current policy");
  }
  NpgStep again = npg_step(current_policy, advantage_tables(current), eta, beta);
  if (!(again.next.agents == step.next.agents) || next.chain.stamp != step.next.stamp()) {
    throw ContractError("lemma3_check: policies are not consecutive iterates");
  }
  Lemma3Result r;
  r.kappa = 1.0 / eta - 2.0 * n * phi_scale(m) / ((1.0 - beta) * (1.0 - beta));
  r.lhs = joint_advantage_expectation(current, next) / (1.0 - beta);
  for (int i = 0; i < n; ++i) {
    const auto& d = next.occupancy.marginal[i];
    const auto& pn = step.next.agents[i];
    const auto& pc = current_policy.agents[i];
    for (std::size_t h = 0; h < d.size(); ++h) {
      if (d[h] <= 0.0) continue;
      r.kl_agent += d[h] * policy_kl(pn, pc, h);
      r.log_g += d[h] * step.log_g[i][h];
    }
  }
  r.kl_summed = n * r.kl_agent;
  r.rhs_agent = r.kappa * r.kl_agent + r.log_g / eta;
  r.rhs_summed = r.kappa * r.kl_summed + r.log_g / eta;
  r.residual_agent = r.lhs - r.rhs_agent;
  r.residual_summed = r.lhs - r.rhs_summed;
  return r;
}

Lemma4Result lemma4_check(const PolicyEvaluation& current, const OccupancyMeasure& next_occupancy,
                          const NpgStep& step, double eta, double a, double M, double gap, double d_b) {
  const TabularPomg& m = current.chain.chain().model();
  const double beta = m.discount;
  if (eta > (1.0 - beta) * (1.0 - beta) * (1.0 + 1e-12)) {
    throw ContractError("lemma4_check: step size exceeds (1 - beta)^2");
  }
  if (next_occupancy.stamp != step.next.stamp()) {
    throw ContractError("lemma4_check: occupancy does not belong to the next iterate");
  }
  const double phi = phi_scale(m);
  Lemma4Result r;
  r.a = a;
  r.M = M;
  r.gap = gap;
  r.d_b = d_b;
  r.pointwise_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < current.advantages.size(); ++i) {
    const auto& t = current.advantages[i];
    const auto& d = next_occupancy.marginal[i];
    for (std::size_t h = 0; h < t.rows; ++h) {
      if (d[h] > 0.0) r.lhs += d[h] * step.log_g[i][h];
      if (!t.visited[h]) continue;
      double top = 0.0;
      for (int u = 0; u < t.actions; ++u) top = std::max(top, t.A[h * t.actions + u]);
      const double x = eta * top / (1.0 - beta);
      r.pointwise_min = std::min(r.pointwise_min, step.log_g[i][h] - a / 3.0 * x * x);
    }
  }
  const double slack = std::max(gap - 2.0 * d_b * phi / (1.0 - beta), 0.0);
  r.rhs = a * eta * eta / (3.0 * M) * slack * slack;
  r.residual = r.lhs - r.rhs;
  return r;
}

double theorem_rhs(const BoundInputs& in, bool literal) {
  if (in.T == 0) throw ContractError("theorem_rhs: T must be >= 1");
  const double ob = 1.0 - in.beta;
  const double phi2 = in.phi * in.phi;
  const double cross = (literal ? 1.0 : 3.0) * in.M * in.n * in.d_b / (in.a * ob);
  const double t1 = 12.0 * in.M * in.n * phi2 / (in.a * ob * ob * ob * static_cast<double>(in.T));
  const double t2 = 8.0 * phi2 / (ob * ob) * (in.d_b * in.d_b + cross);
  return std::sqrt(t1 + t2);
}

double eps_fsc(const BoundInputs& in) {
  const double ob = 1.0 - in.beta;
  return 2.0 * std::sqrt(2.0) * in.phi / ob *
         std::sqrt(in.d_b * in.d_b + 3.0 * in.M * in.n * in.d_b / (in.a * ob));
}

BoundReport theorem_bound_check(const std::vector<double>& gaps, BoundInputs in, double eta) {
  if (gaps.empty()) throw ContractError("theorem_bound_check: no NE-gap entries");
  for (double g : gaps) {
    if (!std::isfinite(g)) throw ContractError("theorem_bound_check: missing NE-gap entry");
  }
  in.T = gaps.size();
  BoundReport r;
  for (double g : gaps) r.lhs += g;
  r.lhs /= static_cast<double>(gaps.size());
  r.rhs = theorem_rhs(in, false);
  r.rhs_literal = theorem_rhs(in, true);
  r.eps_fsc = eps_fsc(in);
  r.a = in.a;
  r.M_hat = in.M;
  r.d_b = in.d_b;
  r.eta = eta;
  r.T = in.T;
  r.residual = r.rhs - r.lhs;
  return r;
}

FisherResult fisher_consistency_check(std::shared_ptr<const ChainStructure> structure,
                                      const JointPolicy& policy, int agent, double eta, std::size_t cap) {
  const ChainStructure& c = *structure;
  const TabularPomg& m = c.model();
  const double beta = m.discount;
  const int na = m.num_actions(agent);
  const std::size_t rows = c.spec().num_info_points(agent);
  const std::size_t dim = rows * na;
  if (dim > cap) throw SizeError("fisher check needs " + std::to_string(dim) + " parameters", dim);

  AugmentedChain chain = bind_policy(structure, policy);
  ValueTables v = solve_values(chain, agent);
  OccupancyMeasure occ = compute_occupancy(chain);
  const auto probs = chain.agent_probs[agent];
  const std::size_t nu = c.num_joint_actions();
  const auto& ja = m.joint_actions();

  // Fisher matrix and gradient from their definitions over chain states.
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
  for (std::size_t s = 0; s < c.size(); ++s) {
    const double d = occ.d[s];
    if (d <= 0.0) continue;
    const std::size_t h = c.info(s, agent);
    const double* p = probs.data() + h * na;
    for (int ui = 0; ui < na; ++ui) {
      for (int a = 0; a < na; ++a) {
        for (int b = 0; b < na; ++b) {
          const double sa = (a == ui ? 1.0 : 0.0) - p[a];
          const double sb = (b == ui ? 1.0 : 0.0) - p[b];
          F(h * na + a, h * na + b) += d * p[ui] * sa * sb;
        }
      }
    }
    for (std::size_t u = 0; u < nu; ++u) {
      const double pu = chain.joint_probs[s * nu + u];
      if (pu <= 0.0) continue;
      const int ui = ja.digit(u, agent);
      for (int a = 0; a < na; ++a) {
        grad(h * na + a) += d * pu * ((a == ui ? 1.0 : 0.0) - p[a]) * v.Q[s * nu + u] / (1.0 - beta);
      }
    }
  }

  FisherResult r;
  r.dimension = dim;
  // Central differences of J_i.
  const double step = 1e-5;
  for (std::size_t k = 0; k < dim; ++k) {
    JointPolicy hi = policy, lo = policy;
    hi.agents[agent].theta()[k] += step;
    lo.agents[agent].theta()[k] -= step;
    const double fd = (agent_value(structure, hi, agent, {}) - agent_value(structure, lo, agent, {})) / (2.0 * step);
    r.gradient_error = std::max(r.gradient_error, std::abs(fd - grad(k)));
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(F, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cut = sv.size() > 0 ? sv(0) * 1e-12 * static_cast<double>(dim) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k) inv(k) = sv(k) > cut ? 1.0 / sv(k) : 0.0;
  Eigen::VectorXd delta = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * grad;

  JointPolicy fisher = policy;
  for (std::size_t k = 0; k < dim; ++k) fisher.agents[agent].theta()[k] += eta * delta(k);
  AgentAdvantage adv = marginal_advantage(chain, v, occ, agent);
  JointPolicy closed = npg_step_agent(policy, agent, adv.A, eta, beta).next;

  for (std::size_t h = 0; h < rows; ++h) {
    auto pf = fisher.agents[agent].probabilities(h);
    auto pc = closed.agents[agent].probabilities(h);
    double l1 = 0.0;
    for (int u = 0; u < na; ++u) {
      l1 += std::abs(pf[u] - pc[u]);
      r.theta_gap = std::max(r.theta_gap, std::abs(fisher.agents[agent].theta()[h * na + u] -
                                                   closed.agents[agent].theta()[h * na + u]));
    }
    r.deviation = std::max(r.deviation, l1);
  }
  return r;
}

}  // namespace isnpg
