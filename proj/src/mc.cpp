#include "isnpg/mc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "isnpg/errors.hpp"

namespace isnpg {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int sample_row(std::span<const int> idx, std::span<const double> p, std::mt19937_64& rng) {
  double r = unit(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    acc += p[k];
    if (r < acc) return idx[k];
  }
  return idx.back();
}

int sample_dense(const double* p, int n, std::mt19937_64& rng) {
  double r = unit(rng);
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    acc += p[k];
    if (r < acc) return k;
  }
  return n - 1;
}

// Simulates one trajectory and hands every step to the visitor.
class Simulator {
 public:
  Simulator(const TabularPomg& m, const InternalStateSpec& spec, const JointPolicy& policy)
      : m_(m), spec_(spec), n_(m.n_agents()) {
    if (policy.n_agents() != n_) throw ContractError("rollout: agent count mismatch");
    for (const auto& a : policy.agents) {
      if (a.rows() != spec.num_info_points(a.agent())) throw ContractError("rollout: policy does not match spec");
      probs_.push_back(a.probability_table());
    }
  }

  struct Step {
    int x;
    const std::vector<int>& y;
    std::size_t w;
    const std::vector<std::size_t>& l;
    const std::vector<int>& u;
    const std::vector<std::size_t>& info;
    std::size_t u_joint;
  };

  template <class Visit>
  void run(std::mt19937_64& rng, int horizon, Visit&& visit) const {
    std::vector<int> y(n_), u(n_);
    std::vector<std::size_t> l(n_), info(n_);
    int x = sample_dense(m_.initial_state_dist.data(), m_.num_states(), rng);
    for (int i = 0; i < n_; ++i) {
      y[i] = sample_row(m_.initial_observation[i].indices(x), m_.initial_observation[i].probs(x), rng);
      l[i] = spec_.initial_local(i);
    }
    std::size_t w = spec_.initial_shared();
    const auto& ja = m_.joint_actions();
    for (int k = 0; k < horizon; ++k) {
      for (int i = 0; i < n_; ++i) {
        info[i] = spec_.info_index(i, w, l[i], y[i]);
        const int na = m_.num_actions(i);
        u[i] = sample_dense(probs_[i].data() + info[i] * na, na, rng);
      }
      const std::size_t uj = ja.encode(u);
      visit(Step{x, y, w, l, u, info, uj}, k);
      std::size_t wn = spec_.update_shared(w, y, u);
      for (int i = 0; i < n_; ++i) l[i] = spec_.update_local(i, l[i], y[i], u[i], y[i]);
      w = wn;
      const std::size_t row = m_.row(x, uj);
      x = sample_row(m_.transition.indices(row), m_.transition.probs(row), rng);
      const std::size_t orow = m_.row(x, uj);
      for (int i = 0; i < n_; ++i) {
        y[i] = sample_row(m_.observation_kernel[i].indices(orow), m_.observation_kernel[i].probs(orow), rng);
      }
    }
  }

 private:
  const TabularPomg& m_;
  const InternalStateSpec& spec_;
  int n_;
  std::vector<std::vector<double>> probs_;
};

double max_abs_reward(const TabularPomg& m) {
  double r = 0.0;
  for (const auto& t : m.reward) {
    for (double v : t) r = std::max(r, std::abs(v));
  }
  for (double v : m.potential) r = std::max(r, std::abs(v));
  return r;
}

McEstimate summarize(const std::vector<double>& values, std::size_t stride, std::size_t col,
                     std::size_t n) {
  McEstimate e;
  e.samples = n;
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) s += values[t * stride + col];
  e.mean = s / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double d = values[t * stride + col] - e.mean;
    ss += d * d;
  }
  e.stderr_ = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  return e;
}

}  // namespace

std::mt19937_64 trajectory_stream(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x5851f42d4c957f2dull)));
}

Trajectory rollout(const TabularPomg& m, const InternalStateSpec& spec, const JointPolicy& policy,
                   std::mt19937_64& rng, int horizon) {
  if (horizon < 1) throw ParameterError("rollout horizon must be >= 1");
  Simulator sim(m, spec, policy);
  Trajectory t;
  t.horizon = horizon;
  t.returns.assign(m.n_agents(), 0.0);
  double disc = 1.0;
  sim.run(rng, horizon, [&](const Simulator::Step& s, int) {
    TrajectoryStep rec;
    rec.x = s.x;
    rec.y = s.y;
    rec.w = s.w;
    rec.l = s.l;
    rec.u = s.u;
    const std::size_t row = m.row(s.x, s.u_joint);
    for (int i = 0; i < m.n_agents(); ++i) {
      rec.reward.push_back(m.reward[i][row]);
      t.returns[i] += disc * m.reward[i][row];
    }
    rec.potential = m.potential[row];
    t.potential_return += disc * rec.potential;
    disc *= m.discount;
    t.steps.push_back(std::move(rec));
  });
  return t;
}

std::string trajectory_jsonl(const Trajectory& t) {
  nlohmann::json j;
  j["seed"] = t.seed;
  j["horizon"] = t.horizon;
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"x", s.x}, {"y", s.y}, {"w", s.w}, {"l", s.l}, {"u", s.u},
                     {"r", s.reward}, {"phi", s.potential}});
  }
  j["steps"] = std::move(steps);
  j["returns"] = t.returns;
  j["potential_return"] = t.potential_return;
  return j.dump() + "\n";
}

McObjective mc_objective(const TabularPomg& m, const InternalStateSpec& spec, const JointPolicy& policy,
                         std::size_t n_samples, int horizon, std::uint64_t seed) {
  if (n_samples < 2) throw ParameterError("mc_objective needs at least 2 samples");
  if (horizon < 1) throw ParameterError("rollout horizon must be >= 1");
  Simulator sim(m, spec, policy);
  const int n = m.n_agents();
  const std::size_t stride = static_cast<std::size_t>(n) + 1;
  std::vector<double> ret(n_samples * stride, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(n_samples); ++t) {
    auto rng = trajectory_stream(seed, static_cast<std::uint64_t>(t));
    double* out = ret.data() + t * stride;
    double disc = 1.0;
    sim.run(rng, horizon, [&](const Simulator::Step& s, int) {
      const std::size_t row = m.row(s.x, s.u_joint);
      for (int i = 0; i < n; ++i) out[i] += disc * m.reward[i][row];
      out[n] += disc * m.potential[row];
      disc *= m.discount;
    });
  }
  McObjective res;
  const double bias = std::pow(m.discount, horizon) * max_abs_reward(m) / (1.0 - m.discount);
  for (int i = 0; i < n; ++i) {
    res.J.push_back(summarize(ret, stride, i, n_samples));
    res.J.back().bias_bound = bias;
  }
  res.potential = summarize(ret, stride, n, n_samples);
  res.potential.bias_bound = bias;
  return res;
}

namespace {

// Per-agent sums over trajectories. For every row and action pair (a, b):
// sum N_a N_b, N_a D_b, D_a D_b where N and D are the per-trajectory
// weighted return and weight totals.
struct AgentAccumulator {
  int na = 0;
  std::size_t rows = 0;
  std::vector<double> sn, sd, sb;
  std::vector<double> snn, snd, sdd;
  std::vector<std::size_t> visits;
  std::vector<char> seen;
};

struct TouchedRow {
  int agent;
  std::size_t row;
  std::vector<double> n, d, b;
  std::vector<std::size_t> visits;
};

}  // namespace

std::vector<McAdvantage> mc_advantages(const TabularPomg& m, const InternalStateSpec& spec,
                                       const JointPolicy& policy, std::size_t n_samples, int horizon,
                                       std::uint64_t seed, McVisit mode) {
  if (n_samples < 1) throw ParameterError("mc_advantage needs at least 1 sample");
  if (horizon < 1) throw ParameterError("rollout horizon must be >= 1");
  Simulator sim(m, spec, policy);
  const int n = m.n_agents();
  const double beta = m.discount;
  std::vector<AgentAccumulator> acc(n);
  for (int i = 0; i < n; ++i) {
    auto& a = acc[i];
    a.na = m.num_actions(i);
    a.rows = spec.num_info_points(i);
    a.sn.assign(a.rows * a.na, 0.0);
    a.sd = a.sn;
    a.sb = a.sn;
    a.snn.assign(a.rows * a.na * a.na, 0.0);
    a.snd = a.snn;
    a.sdd = a.snn;
    a.visits.assign(a.rows * a.na, 0);
    a.seen.assign(a.rows, 0);
  }
  std::vector<double> beta_pow(horizon + 1, 1.0);
  for (int k = 1; k <= horizon; ++k) beta_pow[k] = beta_pow[k - 1] * beta;

  // Fixed-size blocks keep the merge order independent of the thread count.
  constexpr std::size_t kBlock = 512;
  std::vector<std::vector<TouchedRow>> block(kBlock);
  for (std::size_t start = 0; start < n_samples; start += kBlock) {
    const std::size_t count = std::min(kBlock, n_samples - start);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(count); ++b) {
      auto rng = trajectory_stream(seed, start + b);
      std::vector<std::size_t> rows_k(static_cast<std::size_t>(horizon) * n);
      std::vector<int> acts_k(static_cast<std::size_t>(horizon) * n);
      std::vector<double> rew_k(static_cast<std::size_t>(horizon) * n);
      sim.run(rng, horizon, [&](const Simulator::Step& s, int k) {
        const std::size_t row = m.row(s.x, s.u_joint);
        for (int i = 0; i < n; ++i) {
          rows_k[k * n + i] = s.info[i];
          acts_k[k * n + i] = s.u[i];
          rew_k[k * n + i] = m.reward[i][row];
        }
      });
      auto& touched = block[b];
      touched.clear();
      for (int i = 0; i < n; ++i) {
        const int na = m.num_actions(i);
        // Tail returns, newest first.
        std::vector<double> g(horizon);
        double tail = 0.0;
        for (int k = horizon - 1; k >= 0; --k) {
          tail = rew_k[k * n + i] + beta * tail;
          g[k] = tail;
        }
        std::vector<std::pair<std::size_t, int>> order;  // (row, k)
        for (int k = 0; k < horizon; ++k) order.emplace_back(rows_k[k * n + i], k);
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& c) { return a.first < c.first; });
        std::size_t pos = 0;
        while (pos < order.size()) {
          TouchedRow tr{i, order[pos].first, std::vector<double>(na, 0.0), std::vector<double>(na, 0.0),
                        std::vector<double>(na, 0.0), std::vector<std::size_t>(na, 0)};
          std::vector<char> first_done(na, 0);
          for (; pos < order.size() && order[pos].first == tr.row; ++pos) {
            const int k = order[pos].second;
            const int a = acts_k[k * n + i];
            double wgt = beta_pow[k];
            if (mode == McVisit::first) {
              if (first_done[a]) continue;
              first_done[a] = 1;
              wgt = 1.0;
            }
            tr.n[a] += wgt * g[k];
            tr.d[a] += wgt;
            tr.b[a] += wgt * beta_pow[horizon - k];
            ++tr.visits[a];
          }
          touched.push_back(std::move(tr));
        }
      }
    }
    for (std::size_t b = 0; b < count; ++b) {
      for (const auto& tr : block[b]) {
        auto& a = acc[tr.agent];
        const int na = a.na;
        a.seen[tr.row] = 1;
        for (int x = 0; x < na; ++x) {
          const std::size_t e = tr.row * na + x;
          a.sn[e] += tr.n[x];
          a.sd[e] += tr.d[x];
          a.sb[e] += tr.b[x];
          a.visits[e] += tr.visits[x];
          for (int y = 0; y < na; ++y) {
            const std::size_t f = (tr.row * na + x) * na + y;
            a.snn[f] += tr.n[x] * tr.n[y];
            a.snd[f] += tr.n[x] * tr.d[y];
            a.sdd[f] += tr.d[x] * tr.d[y];
          }
        }
      }
    }
  }

  const double rmax = max_abs_reward(m);
  std::vector<McAdvantage> out;
  const double ns = static_cast<double>(n_samples);
  for (int i = 0; i < n; ++i) {
    const auto& a = acc[i];
    const int na = a.na;
    const std::vector<double> pi = policy.agents[i].probability_table();
    McAdvantage r;
    r.agent = i;
    r.actions = na;
    r.rows = a.rows;
    r.samples = n_samples;
    r.A.assign(a.rows * na, 0.0);
    r.Q.assign(a.rows * na, 0.0);
    r.stderr_.assign(a.rows * na, 0.0);
    r.weight = a.sd;
    r.visits = a.visits;
    r.visited.assign(a.rows, 0);
    r.partial.assign(a.rows, 0);
    for (std::size_t h = 0; h < a.rows; ++h) {
      if (!a.seen[h]) {
        ++r.unvisited;
        continue;
      }
      r.visited[h] = 1;
      double taken_mass = 0.0, taken_q = 0.0;
      for (int x = 0; x < na; ++x) {
        const std::size_t e = h * na + x;
        if (a.sd[e] > 0.0) {
          r.Q[e] = a.sn[e] / a.sd[e];
          taken_mass += pi[e];
          taken_q += pi[e] * r.Q[e];
          r.bias_bound = std::max(r.bias_bound, 2.0 * rmax / (1.0 - beta) * a.sb[e] / a.sd[e]);
        } else {
          r.partial[h] = 1;
        }
      }
      const double fill = taken_q / taken_mass;
      double base = 0.0;
      for (int x = 0; x < na; ++x) {
        const std::size_t e = h * na + x;
        if (a.sd[e] <= 0.0) r.Q[e] = fill;
        base += pi[e] * r.Q[e];
      }
      for (int x = 0; x < na; ++x) r.A[h * na + x] = r.Q[h * na + x] - base;
      // Delta-method variance of A from the trajectory-level sums.
      std::vector<double> dbar(na, 0.0);
      for (int x = 0; x < na; ++x) dbar[x] = a.sd[h * na + x] / ns;
      auto cov = [&](int b, int c) {
        if (dbar[b] <= 0.0 || dbar[c] <= 0.0) return 0.0;
        const std::size_t f = (h * na + b) * na + c;
        const std::size_t g = (h * na + c) * na + b;
        const double qb = r.Q[h * na + b], qc = r.Q[h * na + c];
        double v = a.snn[f] - qc * a.snd[f] - qb * a.snd[g] + qb * qc * a.sdd[f];
        return v / (dbar[b] * dbar[c]);
      };
      for (int x = 0; x < na; ++x) {
        double var = 0.0;
        for (int b = 0; b < na; ++b) {
          double cb = (b == x ? 1.0 : 0.0) - pi[h * na + b];
          if (cb == 0.0) continue;
          for (int c = 0; c < na; ++c) {
            double cc = (c == x ? 1.0 : 0.0) - pi[h * na + c];
            if (cc == 0.0) continue;
            var += cb * cc * cov(b, c);
          }
        }
        r.stderr_[h * na + x] = n_samples > 1 ? std::sqrt(std::max(var, 0.0) / (ns * (ns - 1.0))) : 0.0;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

McAdvantage mc_advantage(const TabularPomg& m, const InternalStateSpec& spec, const JointPolicy& policy,
                         int agent, std::size_t n_samples, int horizon, std::uint64_t seed, McVisit mode) {
  if (agent < 0 || agent >= m.n_agents()) throw ContractError("mc_advantage: agent out of range");
  auto all = mc_advantages(m, spec, policy, n_samples, horizon, seed, mode);
  return std::move(all[agent]);
}

}  // namespace isnpg
