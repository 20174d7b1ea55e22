#include "isnpg/belief.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "isnpg/errors.hpp"

namespace isnpg {

double total_variation(const SparseDist& a, const SparseDist& b) {
  // Both inputs are sorted by index.
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      s += std::abs(a[i++].second);
    } else if (i == a.size() || b[j].first < a[i].first) {
      s += std::abs(b[j++].second);
    } else {
      s += std::abs(a[i++].second - b[j++].second);
    }
  }
  return std::min(1.0, 0.5 * s);
}

namespace {

SparseDist from_map(const std::unordered_map<std::int64_t, double>& acc) {
  SparseDist out(acc.begin(), acc.end());
  std::sort(out.begin(), out.end());
  return out;
}

void normalize(SparseDist& d) {
  double s = 0.0;
  for (const auto& e : d) s += e.second;
  for (auto& e : d) e.second /= s;
}

std::string node_key(std::size_t w, const std::vector<std::size_t>& l, const SparseDist& post) {
  std::string key;
  auto put = [&key](std::int64_t v) { key.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(static_cast<std::int64_t>(w));
  for (std::size_t v : l) put(static_cast<std::int64_t>(v));
  for (const auto& [idx, p] : post) {
    put(idx);
    put(std::llround(p * 1e12));
  }
  return key;
}

double joint_action_prob(const InternalStateSpec& spec, const TabularPomg& m,
                         const std::vector<std::vector<double>>& probs, std::size_t w,
                         const std::vector<std::size_t>& l, std::span<const int> y,
                         std::span<const int> u) {
  double p = 1.0;
  for (int i = 0; i < m.n_agents(); ++i) {
    p *= probs[i][spec.info_index(i, w, l[i], y[i]) * m.num_actions(i) + u[i]];
  }
  return p;
}

// Occupancy conditional over x for every joint information point.
std::unordered_map<std::uint64_t, SparseDist> conditional_x(const AugmentedChain& chain,
                                                            const OccupancyMeasure& occ) {
  const ChainStructure& c = chain.chain();
  std::unordered_map<std::uint64_t, std::unordered_map<std::int64_t, double>> acc;
  for (std::size_t s = 0; s < c.size(); ++s) {
    if (occ.d[s] > 0.0) acc[c.joint_info(s)][c.x(s)] += occ.d[s];
  }
  std::unordered_map<std::uint64_t, SparseDist> out;
  for (auto& [k, m] : acc) {
    SparseDist d = from_map(m);
    normalize(d);
    out.emplace(k, std::move(d));
  }
  return out;
}

}  // namespace

BeliefTree BeliefTree::build(const TabularPomg& m, const InternalStateSpec& spec, int horizon,
                             std::size_t cap) {
  if (horizon < 0) throw ParameterError("belief horizon must be >= 0");
  BeliefTree t;
  t.model_ = &m;
  t.spec_ = &spec;
  t.horizon_ = horizon;
  const int n = m.n_agents();
  const auto& jo = m.joint_observations();
  const auto& ja = m.joint_actions();
  const std::int64_t ny = static_cast<std::int64_t>(jo.size());

  Node root;
  root.l.resize(n);
  for (int i = 0; i < n; ++i) root.l[i] = spec.initial_local(i);
  root.w = spec.initial_shared();
  {
    std::unordered_map<std::int64_t, double> acc;
    std::vector<int> y(n);
    for (int x = 0; x < m.num_states(); ++x) {
      double px = m.initial_state_dist[x];
      if (px <= 0.0) continue;
      for (std::size_t yj = 0; yj < jo.size(); ++yj) {
        jo.decode(yj, y);
        double q = px;
        for (int i = 0; i < n && q > 0.0; ++i) q *= m.initial_observation[i].at(x, y[i]);
        if (q > 0.0) acc[x * ny + static_cast<std::int64_t>(yj)] += q;
      }
    }
    root.posterior = from_map(acc);
    normalize(root.posterior);
  }
  t.nodes_.push_back(std::move(root));
  t.histories_ = 1;

  std::size_t level_begin = 0, level_end = 1;
  std::vector<int> yd(n), ud(n);
  std::vector<std::size_t> ln(n);
  for (int depth = 0; depth < horizon; ++depth) {
    std::unordered_map<std::string, int> level_index;
    std::size_t level_histories = 0;
    for (std::size_t p = level_begin; p < level_end; ++p) {
      // Group the posterior by the broadcast observation.
      std::map<std::size_t, std::vector<std::pair<int, double>>> by_y;
      for (const auto& [idx, pr] : t.nodes_[p].posterior) {
        by_y[static_cast<std::size_t>(idx % ny)].emplace_back(static_cast<int>(idx / ny), pr);
      }
      for (const auto& [yhat, xs] : by_y) {
        double py = 0.0;
        for (const auto& e : xs) py += e.second;
        if (py <= 0.0) continue;
        jo.decode(yhat, yd);
        for (std::size_t u = 0; u < ja.size(); ++u) {
          ja.decode(u, ud);
          std::unordered_map<std::int64_t, double> acc;
          for (const auto& [x, px] : xs) {
            const std::size_t row = m.row(x, u);
            auto xn_idx = m.transition.indices(row);
            auto xn_p = m.transition.probs(row);
            for (std::size_t k = 0; k < xn_idx.size(); ++k) {
              const int xn = xn_idx[k];
              const double base = px / py * xn_p[k];
              if (base <= 0.0) continue;
              const std::size_t orow = m.row(xn, u);
              // Joint observation product, agent by agent.
              std::vector<std::pair<std::int64_t, double>> partial{{0, base}};
              for (int i = 0; i < n; ++i) {
                std::vector<std::pair<std::int64_t, double>> next;
                auto oi = m.observation_kernel[i].indices(orow);
                auto op = m.observation_kernel[i].probs(orow);
                for (const auto& [code, q] : partial) {
                  for (std::size_t r = 0; r < oi.size(); ++r) {
                    if (op[r] > 0.0) next.emplace_back(code + oi[r] * static_cast<std::int64_t>(jo.stride(i)), q * op[r]);
                  }
                }
                partial.swap(next);
              }
              for (const auto& [yj, q] : partial) acc[xn * ny + yj] += q;
            }
          }
          SparseDist post = from_map(acc);
          normalize(post);
          std::size_t wn = spec.update_shared(t.nodes_[p].w, yd, ud);
          for (int i = 0; i < n; ++i) ln[i] = spec.update_local(i, t.nodes_[p].l[i], yd[i], ud[i], yd[i]);
          std::string key = node_key(wn, ln, post);
          auto [it, fresh] = level_index.emplace(key, static_cast<int>(t.nodes_.size()));
          if (fresh) {
            if (t.nodes_.size() >= cap) {
              throw SizeError("belief tree to horizon " + std::to_string(horizon) + " needs more than " +
                                  std::to_string(cap) + " nodes",
                              static_cast<std::uint64_t>(cap) + 1);
            }
            Node child;
            child.depth = depth + 1;
            child.parent = static_cast<int>(p);
            child.y_joint = yhat;
            child.u_joint = u;
            child.w = wn;
            child.l = ln;
            child.posterior = std::move(post);
            t.nodes_.push_back(std::move(child));
          }
          t.edges_.push_back({static_cast<int>(p), it->second, yhat, u, py});
          ++level_histories;
        }
      }
    }
    t.histories_ += level_histories;
    level_begin = level_end;
    level_end = t.nodes_.size();
  }
  return t;
}

std::vector<double> BeliefTree::masses(const std::vector<std::vector<double>>& probs) const {
  const TabularPomg& m = *model_;
  const int n = m.n_agents();
  std::vector<double> mass(nodes_.size(), 0.0);
  mass[0] = 1.0;
  std::vector<int> yd(n), ud(n);
  for (const Edge& e : edges_) {
    const Node& p = nodes_[e.parent];
    if (mass[e.parent] <= 0.0) continue;
    m.joint_observations().decode(e.y_joint, yd);
    m.joint_actions().decode(e.u_joint, ud);
    mass[e.child] += mass[e.parent] * e.obs_prob * joint_action_prob(*spec_, m, probs, p.w, p.l, yd, ud);
  }
  return mass;
}

std::string BeliefTree::history_label(int node) const {
  const TabularPomg& m = *model_;
  const int n = m.n_agents();
  std::vector<std::string> steps;
  std::vector<int> yd(n), ud(n);
  for (int k = node; nodes_[k].parent >= 0; k = nodes_[k].parent) {
    m.joint_observations().decode(nodes_[k].y_joint, yd);
    m.joint_actions().decode(nodes_[k].u_joint, ud);
    std::string s = "(";
    for (int i = 0; i < n; ++i) {
      s += (i ? "," : "") + m.observation_names[i][yd[i]] + "/" + m.action_names[i][ud[i]];
    }
    steps.push_back(s + ")");
  }
  std::string out;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) out += *it;
  return out.empty() ? "()" : out;
}

BeliefTable exact_beliefs(std::shared_ptr<const BeliefTree> tree, const AugmentedChain& chain,
                          const OccupancyMeasure& occ) {
  if (occ.stamp != chain.stamp) throw ContractError("exact_beliefs: occupancy belongs to a different policy");
  const ChainStructure& c = chain.chain();
  const std::int64_t ny = static_cast<std::int64_t>(c.model().joint_observations().size());
  BeliefTable out;
  out.beta = c.model().discount;
  out.mass = tree->masses(chain.agent_probs);
  out.tree = std::move(tree);
  out.structure = chain.structure;
  out.conditional = conditional_x(chain, occ);
  std::unordered_map<std::size_t, std::unordered_map<std::int64_t, double>> acc;
  for (std::size_t s = 0; s < c.size(); ++s) {
    if (occ.d[s] <= 0.0) continue;
    acc[c.w(s)][c.x(s) * ny + static_cast<std::int64_t>(c.y_joint(s))] += occ.d[s];
  }
  for (auto& [w, m] : acc) {
    SparseDist d = from_map(m);
    normalize(d);
    out.compressed.emplace(w, std::move(d));
  }
  return out;
}

namespace {

// Largest TV(b(x | c, y), b(x | w, l, y)) over the broadcasts y of a node.
double node_conditional_tv(const BeliefTable& b, const BeliefTree::Node& node) {
  const ChainStructure& c = *b.structure;
  const TabularPomg& m = c.model();
  const std::int64_t ny = static_cast<std::int64_t>(m.joint_observations().size());
  std::vector<int> yd(m.n_agents());
  std::map<std::int64_t, SparseDist> by_y;
  for (const auto& [idx, p] : node.posterior) by_y[idx % ny].emplace_back(idx / ny, p);
  double worst = 0.0;
  for (auto& [y, xs] : by_y) {
    double py = 0.0;
    for (const auto& e : xs) py += e.second;
    if (py <= 0.0) continue;
    for (auto& e : xs) e.second /= py;
    m.joint_observations().decode(static_cast<std::size_t>(y), yd);
    auto it = b.conditional.find(c.pack_info(node.w, node.l, yd));
    worst = std::max(worst, it == b.conditional.end() ? 1.0 : total_variation(xs, it->second));
  }
  return worst;
}

double node_shared_tv(const BeliefTable& b, const BeliefTree::Node& node) {
  auto it = b.compressed.find(node.w);
  return it == b.compressed.end() ? 1.0 : total_variation(node.posterior, it->second);
}

}  // namespace

DbReport distance_db(const BeliefTable& b) {
  const BeliefTree& t = *b.tree;
  DbReport rep;
  rep.horizon = t.horizon();
  rep.histories = t.histories();
  rep.tail_weight = std::pow(b.beta, t.horizon()) / (1.0 - b.beta);
  std::map<std::size_t, double> per_w;
  for (std::size_t k = 0; k < t.nodes().size(); ++k) {
    if (b.mass[k] <= 0.0) continue;
    const auto& node = t.nodes()[k];
    const double tv = node_conditional_tv(b, node);
    rep.d_b_shared = std::max(rep.d_b_shared, node_shared_tv(b, node));
    auto& slot = per_w[node.w];
    slot = std::max(slot, tv);
    if (tv > rep.d_b || rep.worst_node < 0) {
      rep.d_b = std::max(rep.d_b, tv);
      rep.worst_node = static_cast<int>(k);
    }
  }
  if (rep.worst_node >= 0) rep.worst_history = t.history_label(rep.worst_node);
  rep.per_w.assign(per_w.begin(), per_w.end());
  return rep;
}

std::string belief_csv(const BeliefTable& b) {
  const BeliefTree& t = *b.tree;
  std::ostringstream os;
  os.precision(17);
  os << "history,depth,w,mass,tv,tv_shared\n";
  for (std::size_t k = 0; k < t.nodes().size(); ++k) {
    if (b.mass[k] <= 0.0) continue;
    const auto& node = t.nodes()[k];
    os << "\"" << t.history_label(static_cast<int>(k)) << "\"," << node.depth << "," << node.w << ","
       << b.mass[k] << "," << node_conditional_tv(b, node) << "," << node_shared_tv(b, node) << "\n";
  }
  return os.str();
}

TvExpectation history_tv_expectation(const BeliefTree& tree, const AugmentedChain& visit,
                                     const AugmentedChain& reference,
                                     const OccupancyMeasure& reference_occ) {
  if (visit.structure != reference.structure) {
    throw ContractError("history_tv_expectation: policies bound to different chains");
  }
  const ChainStructure& c = reference.chain();
  const TabularPomg& m = c.model();
  const int n = m.n_agents();
  const double beta = m.discount;
  const std::int64_t ny = static_cast<std::int64_t>(m.joint_observations().size());
  auto ref = conditional_x(reference, reference_occ);
  std::vector<double> mass = tree.masses(visit.agent_probs);
  TvExpectation out;
  std::vector<int> yd(n);
  for (std::size_t k = 0; k < tree.nodes().size(); ++k) {
    if (mass[k] <= 0.0) continue;
    const auto& node = tree.nodes()[k];
    std::map<std::int64_t, SparseDist> by_y;
    for (const auto& [idx, p] : node.posterior) by_y[idx % ny].emplace_back(idx / ny, p);
    double term = 0.0;
    for (auto& [y, xs] : by_y) {
      double py = 0.0;
      for (const auto& e : xs) py += e.second;
      if (py <= 0.0) continue;
      for (auto& e : xs) e.second /= py;
      m.joint_observations().decode(static_cast<std::size_t>(y), yd);
      auto it = ref.find(c.pack_info(node.w, node.l, yd));
      double tv = it == ref.end() ? 1.0 : total_variation(xs, it->second);
      term += py * tv;
    }
    out.head += (1.0 - beta) * std::pow(beta, node.depth) * mass[k] * term;
  }
  out.tail = std::pow(beta, tree.horizon() + 1);
  out.normalized = out.head / (1.0 - out.tail);
  return out;
}

double occupancy_tv(const AugmentedChain& a, const OccupancyMeasure& occ_a, const AugmentedChain& b,
                    const OccupancyMeasure& occ_b) {
  if (a.structure != b.structure) throw ContractError("occupancy_tv: policies bound to different chains");
  auto ca = conditional_x(a, occ_a);
  auto cb = conditional_x(b, occ_b);
  const ChainStructure& c = a.chain();
  std::unordered_map<std::uint64_t, double> weight;
  for (std::size_t s = 0; s < c.size(); ++s) weight[c.joint_info(s)] += occ_a.d[s];
  // Sum in key order so the result does not depend on hash layout.
  std::vector<std::pair<std::uint64_t, double>> items(weight.begin(), weight.end());
  std::sort(items.begin(), items.end());
  double total = 0.0;
  for (const auto& [key, wgt] : items) {
    if (wgt <= 0.0) continue;
    auto ia = ca.find(key);
    auto ib = cb.find(key);
    if (ia == ca.end()) continue;
    total += wgt * (ib == cb.end() ? 1.0 : total_variation(ia->second, ib->second));
  }
  return total;
}

}  // namespace isnpg
