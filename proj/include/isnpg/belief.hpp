#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "isnpg/chain.hpp"
#include "isnpg/oracle.hpp"

namespace isnpg {

// Sparse distribution over (x, joint y), index x * |Y_joint| + y.
using SparseDist = std::vector<std::pair<std::int64_t, double>>;

double total_variation(const SparseDist& a, const SparseDist& b);

// Common-information histories (joint broadcasts and joint actions) up to a
// horizon. The posterior over (x, y) given a history does not depend on the
// policy; only the history probabilities do. Histories at the same depth
// with equal internal states and posteriors share a node.
class BeliefTree {
 public:
  struct Node {
    int depth = 0;
    int parent = -1;  // representative history
    std::size_t y_joint = 0;
    std::size_t u_joint = 0;
    std::size_t w = 0;
    std::vector<std::size_t> l;
    SparseDist posterior;
  };
  struct Edge {
    int parent = 0;
    int child = 0;
    std::size_t y_joint = 0;  // broadcast observation
    std::size_t u_joint = 0;
    double obs_prob = 0.0;  // b(y | parent history)
  };

  // Throws SizeError when more than cap nodes would be created.
  static BeliefTree build(const TabularPomg& model, const InternalStateSpec& spec, int horizon,
                          std::size_t cap);

  int horizon() const { return horizon_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t histories() const { return histories_; }

  // Pr(history) under per-agent probability tables.
  std::vector<double> masses(const std::vector<std::vector<double>>& agent_probs) const;
  std::string history_label(int node) const;

 private:
  const TabularPomg* model_ = nullptr;
  const InternalStateSpec* spec_ = nullptr;
  int horizon_ = 0;
  std::size_t histories_ = 0;
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
};

// Beliefs of one policy: history weights plus b(. | w) taken from the chain
// occupancy (mixture over all histories compressing to w), and the
// occupancy conditional b(x | w, l, y) per joint information point.
struct BeliefTable {
  std::shared_ptr<const BeliefTree> tree;
  std::shared_ptr<const ChainStructure> structure;
  std::vector<double> mass;
  std::unordered_map<std::size_t, SparseDist> compressed;
  std::unordered_map<std::uint64_t, SparseDist> conditional;
  double beta = 0.0;
};

BeliefTable exact_beliefs(std::shared_ptr<const BeliefTree> tree, const AugmentedChain& chain,
                          const OccupancyMeasure& occ);

struct DbReport {
  // Max over reachable (c, y) of TV(b(x | c, y), b(x | w, l, y)).
  double d_b = 0.0;
  // Max over reachable c of TV(b(x, y | c), b(x, y | w)).
  double d_b_shared = 0.0;
  int worst_node = -1;
  std::string worst_history;
  std::vector<std::pair<std::size_t, double>> per_w;  // sorted by w
  double tail_weight = 0.0;                         // beta^H / (1 - beta)
  int horizon = 0;
  std::size_t histories = 0;
};

DbReport distance_db(const BeliefTable& beliefs);

// CSV rows: history, depth, w, mass, TV of both kinds.
std::string belief_csv(const BeliefTable& beliefs);

// Discounted expectation under the histories of `visit` of
// sum_y b(y | c) TV(b(x | c, y), b_ref(x | w, l, y)), where b_ref is the
// occupancy conditional of `reference`. head covers depths 0..H with weights
// (1 - beta) beta^k; tail = beta^(H+1) is the uncovered weight.
struct TvExpectation {
  double head = 0.0;
  double normalized = 0.0;  // head / (1 - tail)
  double tail = 0.0;
};
TvExpectation history_tv_expectation(const BeliefTree& tree, const AugmentedChain& visit,
                                     const AugmentedChain& reference,
                                     const OccupancyMeasure& reference_occ);

// sum_h d_a(h) TV(b_a(x | h), b_b(x | h)) over joint info points h = (w, l, y)
// for two policies bound to the same chain structure.
double occupancy_tv(const AugmentedChain& a, const OccupancyMeasure& occ_a,
                    const AugmentedChain& b, const OccupancyMeasure& occ_b);

}  // namespace isnpg
