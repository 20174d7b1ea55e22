#include "isnpg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "isnpg/errors.hpp"
#include "isnpg/model_io.hpp"

namespace isnpg {

using nlohmann::json;

PolicyTable::PolicyTable(int agent, std::size_t rows, int actions)
    : agent_(agent), rows_(rows), actions_(actions), theta_(rows * actions, 0.0) {}

void PolicyTable::probabilities(std::size_t row, std::span<double> out) const {
  auto th = theta_row(row);
  double m = *std::max_element(th.begin(), th.end());
  double s = 0.0;
  for (int u = 0; u < actions_; ++u) {
    out[u] = std::exp(th[u] - m);
    s += out[u];
  }
  for (int u = 0; u < actions_; ++u) out[u] /= s;
}

std::vector<double> PolicyTable::probabilities(std::size_t row) const {
  std::vector<double> p(actions_);
  probabilities(row, p);
  return p;
}

std::vector<double> PolicyTable::probability_table() const {
  std::vector<double> out(theta_.size());
  for (std::size_t r = 0; r < rows_; ++r) {
    probabilities(r, std::span<double>(out.data() + r * actions_, actions_));
  }
  return out;
}

int PolicyTable::argmax(std::size_t row) const {
  auto th = theta_row(row);
  return static_cast<int>(std::max_element(th.begin(), th.end()) - th.begin());
}

std::uint64_t JointPolicy::stamp() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < bytes; ++k) {
      h ^= p[k];
      h *= 1099511628211ull;
    }
  };
  for (const auto& a : agents) {
    std::uint64_t dims[2] = {a.rows(), static_cast<std::uint64_t>(a.actions())};
    mix(dims, sizeof dims);
    mix(a.theta().data(), a.theta().size() * sizeof(double));
  }
  return h;
}

JointPolicy init_policy(const InternalStateSpec& spec, const TabularPomg& model, InitMode mode,
                        const std::vector<std::vector<double>>& given, std::uint64_t seed,
                        double scale) {
  const int n = model.n_agents();
  if (spec.n_agents() != n) throw ContractError("init_policy: spec and model disagree on agent count");
  JointPolicy pol;
  for (int i = 0; i < n; ++i) pol.agents.emplace_back(i, spec.num_info_points(i), model.num_actions(i));
  if (mode == InitMode::uniform) return pol;
  if (mode == InitMode::random) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw ParameterError("random init scale must be >= 0");
    std::mt19937_64 rng(seed);
    for (auto& a : pol.agents) {
      for (double& t : a.theta()) {
        double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        t = scale * (2.0 * unit - 1.0);
      }
    }
    return pol;
  }
  if (static_cast<int>(given.size()) != n) throw ParameterError("given policy needs one table per agent");
  for (int i = 0; i < n; ++i) {
    auto& a = pol.agents[i];
    if (given[i].size() != a.theta().size()) {
      throw ParameterError("given policy table for agent " + std::to_string(i) + " has wrong size");
    }
    for (std::size_t r = 0; r < a.rows(); ++r) {
      double s = 0.0;
      for (int u = 0; u < a.actions(); ++u) {
        double p = given[i][r * a.actions() + u];
        if (!(p > 0.0) || !std::isfinite(p)) {
          throw ParameterError("given policy row " + std::to_string(r) + " of agent " +
                               std::to_string(i) + " needs strictly positive entries");
        }
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) {
        throw ParameterError("given policy row " + std::to_string(r) + " of agent " +
                             std::to_string(i) + " does not sum to 1");
      }
      for (int u = 0; u < a.actions(); ++u) a.theta_row(r)[u] = std::log(given[i][r * a.actions() + u]);
    }
  }
  return pol;
}

namespace {

// Updates one agent in place and fills its normalizers.
double update_agent(PolicyTable& table, std::span<const double> adv, double scale,
                    std::vector<double>& g, std::vector<double>& log_g) {
  const int na = table.actions();
  if (adv.size() != table.theta().size()) throw ContractError("npg_step: advantage table size mismatch");
  for (double a : adv) {
    if (!std::isfinite(a)) throw ContractError("npg_step: non-finite advantage");
  }
  g.assign(table.rows(), 1.0);
  log_g.assign(table.rows(), 0.0);
  std::vector<double> p(na), mult(na), soft(na);
  double worst = 0.0;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    table.probabilities(r, p);
    const double* a = adv.data() + r * na;
    double m = -INFINITY;
    for (int u = 0; u < na; ++u) m = std::max(m, scale * a[u]);
    double s = 0.0;
    for (int u = 0; u < na; ++u) {
      mult[u] = p[u] * std::exp(scale * a[u] - m);
      s += mult[u];
    }
    for (int u = 0; u < na; ++u) mult[u] /= s;
    log_g[r] = m + std::log(s);
    g[r] = std::exp(log_g[r]);

    auto th = table.theta_row(r);
    for (int u = 0; u < na; ++u) th[u] += scale * a[u];
    table.probabilities(r, soft);
    for (int u = 0; u < na; ++u) worst = std::max(worst, std::abs(soft[u] - mult[u]));
  }
  return worst;
}

}  // namespace

NpgStep npg_step(const JointPolicy& policy, const AdvantageSet& advantages, double eta,
                 double beta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ContractError("npg_step: eta must be > 0");
  if (!(beta > 0.0 && beta < 1.0)) throw ContractError("npg_step: beta must lie in (0,1)");
  if (advantages.size() != policy.agents.size()) throw ContractError("npg_step: one advantage table per agent");
  NpgStep out;
  out.next = policy;
  out.next.iteration = policy.iteration + 1;
  const int n = policy.n_agents();
  out.g.resize(n);
  out.log_g.resize(n);
  const double scale = eta / (1.0 - beta);
  for (int i = 0; i < n; ++i) {
    out.form_deviation = std::max(
        out.form_deviation, update_agent(out.next.agents[i], advantages[i], scale, out.g[i], out.log_g[i]));
  }
  if (out.form_deviation > 1e-10) {
    throw ContractError("npg_step: parameter and multiplicative forms disagree by " +
                        std::to_string(out.form_deviation));
  }
  return out;
}

NpgStep npg_step_agent(const JointPolicy& policy, int agent, std::span<const double> advantage,
                       double eta, double beta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ContractError("npg_step: eta must be > 0");
  if (!(beta > 0.0 && beta < 1.0)) throw ContractError("npg_step: beta must lie in (0,1)");
  if (agent < 0 || agent >= policy.n_agents()) throw ContractError("npg_step: agent out of range");
  NpgStep out;
  out.next = policy;
  out.g.resize(policy.n_agents());
  out.log_g.resize(policy.n_agents());
  out.form_deviation = update_agent(out.next.agents[agent], advantage, eta / (1.0 - beta),
                                    out.g[agent], out.log_g[agent]);
  if (out.form_deviation > 1e-10) throw ContractError("npg_step: forms disagree");
  return out;
}

double policy_kl(const PolicyTable& p, const PolicyTable& q, std::size_t row) {
  if (p.actions() != q.actions() || p.rows() != q.rows()) throw ContractError("policy_kl: shape mismatch");
  // Log-probabilities straight from theta keep tiny entries accurate.
  auto tp = p.theta_row(row), tq = q.theta_row(row);
  auto log_norm = [](std::span<const double> th) {
    double m = *std::max_element(th.begin(), th.end());
    double s = 0.0;
    for (double t : th) s += std::exp(t - m);
    return m + std::log(s);
  };
  double zp = log_norm(tp), zq = log_norm(tq);
  double kl = 0.0;
  for (int u = 0; u < p.actions(); ++u) {
    double lp = tp[u] - zp;
    kl += std::exp(lp) * (lp - (tq[u] - zq));
  }
  return std::max(kl, 0.0);
}

json policy_to_json(const JointPolicy& policy, const InternalStateSpec& spec,
                    const TabularPomg& model) {
  json doc;
  doc["iteration"] = policy.iteration;
  doc["internal_state"] = spec.describe();
  json agents = json::array();
  for (const auto& a : policy.agents) {
    json ja;
    ja["agent"] = a.agent();
    ja["actions"] = model.action_names[a.agent()];
    ja["info_point_labels"] = spec.info_labels(model, a.agent());
    json theta = json::array();
    for (std::size_t r = 0; r < a.rows(); ++r) {
      auto row = a.theta_row(r);
      theta.push_back(std::vector<double>(row.begin(), row.end()));
    }
    ja["theta"] = std::move(theta);
    agents.push_back(std::move(ja));
  }
  doc["agents"] = std::move(agents);
  return doc;
}

JointPolicy policy_from_json(const json& doc, const InternalStateSpec& spec,
                             const TabularPomg& model) {
  auto fail = [](const std::string& field, const std::string& msg) -> void {
    throw LoadError(field + ": " + msg);
  };
  if (!doc.is_object()) fail("<root>", "expected a JSON object");
  if (!doc.contains("agents") || !doc["agents"].is_array()) fail("agents", "missing");
  if (doc.contains("internal_state")) {
    if (!doc["internal_state"].is_string() || doc["internal_state"].get<std::string>() != spec.describe()) {
      fail("internal_state", "policy was written for a different internal-state spec than " + spec.describe());
    }
  }
  const json& agents = doc["agents"];
  if (static_cast<int>(agents.size()) != model.n_agents()) fail("agents", "agent count differs from the model");
  JointPolicy pol;
  if (doc.contains("iteration")) {
    if (!doc["iteration"].is_number_integer()) fail("iteration", "expected an integer");
    pol.iteration = doc["iteration"].get<int>();
  }
  for (int i = 0; i < model.n_agents(); ++i) {
    const std::string field = "agents[" + std::to_string(i) + "]";
    const json& ja = agents[i];
    if (!ja.is_object() || !ja.contains("theta")) fail(field + ".theta", "missing");
    const json& th = ja["theta"];
    PolicyTable t(i, spec.num_info_points(i), model.num_actions(i));
    if (!th.is_array() || th.size() != t.rows()) {
      fail(field + ".theta", "expected " + std::to_string(t.rows()) + " rows for " + spec.describe());
    }
    for (std::size_t r = 0; r < t.rows(); ++r) {
      if (!th[r].is_array() || static_cast<int>(th[r].size()) != t.actions()) {
        fail(field + ".theta[" + std::to_string(r) + "]", "wrong number of actions");
      }
      for (int u = 0; u < t.actions(); ++u) {
        if (!th[r][u].is_number()) fail(field + ".theta[" + std::to_string(r) + "]", "expected numbers");
        double v = th[r][u].get<double>();
        if (!std::isfinite(v)) fail(field + ".theta[" + std::to_string(r) + "]", "non-finite entry");
        t.theta_row(r)[u] = v;
      }
    }
    pol.agents.push_back(std::move(t));
  }
  return pol;
}

void save_policy(const JointPolicy& policy, const InternalStateSpec& spec,
                 const TabularPomg& model, const std::string& path) {
  write_text_file(path, dump_json(policy_to_json(policy, spec, model)));
}

JointPolicy load_policy(const std::string& path, const InternalStateSpec& spec,
                        const TabularPomg& model) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw LoadError(path + ": " + e.what());
  }
  return policy_from_json(doc, spec, model);
}

}  // namespace isnpg
