#include "isnpg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "isnpg/errors.hpp"

namespace isnpg {

double default_step_size(const TabularPomg& model) {
  if (!(model.phi_max() > 0.0)) {
    throw ParameterError("default step size needs phi_max > 0; shift the potential");
  }
  const double ob = 1.0 - model.discount;
  return ob * ob / (2.0 * model.n_agents() * model.phi_max());
}

double theorem_step_size(const TabularPomg& model) {
  const double scale = phi_scale(model);
  if (!(scale > 0.0)) throw ParameterError("theorem step size needs a non-zero potential");
  const double ob = 1.0 - model.discount;
  return ob * ob / (2.0 * model.n_agents() * scale);
}

std::string to_string(AdvantageSource s) { return s == AdvantageSource::exact ? "exact" : "monte-carlo"; }

AdvantageSource parse_advantage_source(const std::string& s) {
  if (s == "exact") return AdvantageSource::exact;
  if (s == "monte-carlo" || s == "mc") return AdvantageSource::monte_carlo;
  throw ParameterError("unknown advantage source '" + s + "' (exact, monte-carlo)");
}

int default_mc_horizon(double beta) {
  return std::max(1, static_cast<int>(std::ceil(std::log(1e-3) / std::log(beta))));
}

namespace {

bool due(std::size_t t, std::size_t every, std::size_t last) {
  if (every == 0) return false;
  return t == 0 || t == last || t % every == 0;
}

std::uint64_t iteration_seed(std::uint64_t seed, std::size_t t) {
  std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ull * (t + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void check_finite(double v, std::size_t t, const char* what) {
  if (!std::isfinite(v)) {
    throw SolverError(std::string("non-finite ") + what + " at iteration " + std::to_string(t), v);
  }
}

}  // namespace

TrainResult train(const TabularPomg& model, const InternalStateSpec& spec, const TrainConfig& config,
                  const TrainHooks& hooks) {
  if (config.iterations < 1) throw ParameterError("train: iterations must be >= 1");
  if (!config.eta_theorem && !(config.eta > 0.0)) throw ParameterError("train: eta must be > 0");
  if (config.source == AdvantageSource::monte_carlo && config.mc_samples < 1) {
    throw ParameterError("train: monte-carlo mode needs mc_samples >= 1");
  }
  const double beta = model.discount;
  const std::size_t T = config.iterations;
  const int mc_horizon = config.mc_horizon > 0 ? config.mc_horizon : default_mc_horizon(beta);

  TrainResult out;
  out.eta = config.eta_theorem ? theorem_step_size(model) : config.eta;
  out.structure = std::make_shared<const ChainStructure>(ChainStructure::build(model, spec, config.chain_cap));
  std::shared_ptr<const BeliefTree> tree;
  if (config.db_every > 0) {
    tree = std::make_shared<const BeliefTree>(
        BeliefTree::build(model, spec, config.belief_horizon, config.belief_cap));
  }
  const double phi = phi_scale(model);

  JointPolicy policy = init_policy(spec, model, config.init, {}, config.seed, config.init_scale);
  PolicyEvaluation eval = evaluate_policy(out.structure, policy, config.solve);
  MSurrogate m_hat;
  m_hat.add(eval.occupancy);

  auto t_start = std::chrono::steady_clock::now();
  auto make_record = [&](std::size_t t, const JointPolicy& p, const PolicyEvaluation& e) {
    TrainRecord r;
    r.iter = t;
    r.potential = e.objective.potential;
    r.J = e.objective.J;
    check_finite(r.potential, t, "potential");
    for (double j : r.J) check_finite(j, t, "value");
    r.a = compute_a(p, e.advantages);
    r.min_occupancy = std::numeric_limits<double>::infinity();
    for (double v : e.occupancy.min_positive) r.min_occupancy = std::min(r.min_occupancy, v);
    for (const auto& adv : e.advantages) r.max_abs_adv = std::max(r.max_abs_adv, adv.max_abs());
    if (due(t, config.gap_every, T)) r.ne_gap = ne_gap(out.structure, p, config.br).ne_gap;
    if (tree && due(t, config.db_every, T)) {
      r.d_b = distance_db(exact_beliefs(tree, e.chain, e.occupancy)).d_b;
    }
    if (config.record_wall_time) {
      r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    }
    return r;
  };

  for (std::size_t t = 0; t < T; ++t) {
    if (eval.chain.stamp != policy.stamp()) throw ContractError("train: evaluation is stale");
    AdvantageSet adv;
    if (config.source == AdvantageSource::exact) {
      for (const auto& a : eval.advantages) adv.push_back(a.A);
    } else {
      auto est = mc_advantages(model, spec, policy, config.mc_samples, mc_horizon,
                               iteration_seed(config.seed, t), config.mc_visit);
      for (auto& a : est) adv.push_back(std::move(a.A));
    }
    for (const auto& table : adv) {
      for (double v : table) check_finite(v, t, "advantage");
    }
    NpgStep step = npg_step(policy, adv, out.eta, beta);
    PolicyEvaluation next = evaluate_policy(out.structure, step.next, config.solve);
    m_hat.add(next.occupancy);

    std::optional<TrainRecord> rec;
    if (due(t, config.log_every, T) || due(t, config.gap_every, T) || due(t, config.db_every, T)) {
      rec = make_record(t, policy, eval);
      if (rec->d_b) {
        const double slack = 2.0 * *rec->d_b * phi / (1.0 - beta);
        if (next.objective.potential + slack < eval.objective.potential - 1e-10) out.potential_drops.push_back(t);
      }
    }
    if (hooks.on_step) hooks.on_step(IterationView{t, policy, eval, step, next, out.eta});
    if (rec) {
      if (hooks.on_record) hooks.on_record(*rec);
      out.records.push_back(std::move(*rec));
    }
    policy = std::move(step.next);
    eval = std::move(next);
  }
  TrainRecord last = make_record(T, policy, eval);
  if (hooks.on_record) hooks.on_record(last);
  out.records.push_back(std::move(last));
  out.M_hat = m_hat.value();
  out.policy = std::move(policy);
  return out;
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

}  // namespace

std::string records_csv(const std::vector<TrainRecord>& records, int n_agents) {
  std::ostringstream os;
  os << "iter,potential";
  for (int i = 0; i < n_agents; ++i) os << ",j_agent_" << i;
  os << ",ne_gap,a,d_b,min_occupancy,max_abs_adv,wall_ms\n";
  for (const auto& r : records) {
    os << r.iter << "," << num(r.potential);
    for (double j : r.J) os << "," << num(j);
    os << "," << opt(r.ne_gap) << "," << num(r.a) << "," << opt(r.d_b) << "," << num(r.min_occupancy) << ","
       << num(r.max_abs_adv) << "," << opt(r.wall_ms) << "\n";
  }
  return os.str();
}

std::vector<TrainRecord> parse_records_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw LoadError("metrics csv: empty file");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 8 || header[0] != "iter" || header[1] != "potential") {
    throw LoadError("metrics csv: unexpected header");
  }
  const std::size_t n = header.size() - 8;
  std::vector<TrainRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != header.size()) {
      throw LoadError("metrics csv line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " cells");
    }
    auto value = [&](std::size_t k) {
      try {
        return std::stod(cells[k]);
      } catch (const std::exception&) {
        throw LoadError("metrics csv line " + std::to_string(lineno) + ": bad " + header[k]);
      }
    };
    auto maybe = [&](std::size_t k) -> std::optional<double> {
      if (cells[k].empty()) return std::nullopt;
      return value(k);
    };
    TrainRecord r;
    r.iter = static_cast<std::size_t>(value(0));
    r.potential = value(1);
    for (std::size_t i = 0; i < n; ++i) r.J.push_back(value(2 + i));
    r.ne_gap = maybe(2 + n);
    r.a = value(3 + n);
    r.d_b = maybe(4 + n);
    r.min_occupancy = value(5 + n);
    r.max_abs_adv = value(6 + n);
    r.wall_ms = maybe(7 + n);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace isnpg
