#include "isnpg/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>
#include <omp.h>

#include "isnpg/envs.hpp"
#include "isnpg/errors.hpp"
#include "isnpg/model_io.hpp"
#include "isnpg/verify.hpp"

namespace isnpg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir.empty() ? "." : dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ParameterError("cannot create output directory " + p.string() + ": " + ec.message());
  return p;
}

json libraries() {
  return {{"isnpg", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"tomlplusplus", toml_library_version()},
          {"cli11", CLI11_VERSION},
          {"openmp", _OPENMP},
          {"compiler", __VERSION__}};
}

json model_summary(const TabularPomg& model, const InternalStateSpec& spec) {
  json info = json::array();
  for (int i = 0; i < model.n_agents(); ++i) info.push_back(spec.num_info_points(i));
  return {{"name", model.name},
          {"agents", model.n_agents()},
          {"states", model.num_states()},
          {"discount", model.discount},
          {"phi_min", model.phi_min()},
          {"phi_max", model.phi_max()},
          {"phi_scale", phi_scale(model)},
          {"internal_state", spec.describe()},
          {"info_points", info}};
}

struct Run {
  ExperimentConfig config;
  json manifest;
  std::vector<TrainRecord> records;
};

Run load_run(const std::string& dir) {
  const fs::path p(dir);
  if (!fs::is_directory(p)) throw LoadError(dir + ": not a directory");
  if (!fs::exists(p / "metrics.csv")) throw LoadError(dir + ": no metrics.csv (not a train run)");
  if (!fs::exists(p / "manifest.json")) throw LoadError(dir + ": no manifest.json (not a train run)");
  Run run;
  try {
    run.manifest = json::parse(read_text_file((p / "manifest.json").string()));
  } catch (const json::exception& e) {
    throw LoadError((p / "manifest.json").string() + ": " + e.what());
  }
  if (!run.manifest.contains("config") || !run.manifest["config"].is_string()) {
    throw LoadError((p / "manifest.json").string() + ": config: missing");
  }
  run.config = parse_config(run.manifest["config"].get<std::string>(), (p / "manifest.json").string());
  run.records = parse_records_csv(read_text_file((p / "metrics.csv").string()));
  if (run.records.empty()) throw LoadError((p / "metrics.csv").string() + ": no records");
  return run;
}

double manifest_number(const json& manifest, const char* section, const char* key) {
  if (!manifest.contains(section) || !manifest[section].contains(key) || !manifest[section][key].is_number()) {
    throw LoadError(std::string("manifest.json: ") + section + "." + key + ": missing");
  }
  return manifest[section][key].get<double>();
}

BoundInputs run_bound_inputs(const Run& run) {
  BoundInputs in;
  in.n = static_cast<int>(manifest_number(run.manifest, "model", "agents"));
  in.beta = manifest_number(run.manifest, "model", "discount");
  in.phi = manifest_number(run.manifest, "model", "phi_scale");
  in.M = manifest_number(run.manifest, "results", "M_hat");
  in.a = std::numeric_limits<double>::infinity();
  for (const auto& r : run.records) {
    if (r.d_b) in.d_b = std::max(in.d_b, *r.d_b);
  }
  return in;
}

}  // namespace

TabularPomg config_model(const ExperimentConfig& config) { return build_env(config.env); }

InternalStateSpec config_spec(const TabularPomg& model, const ExperimentConfig& config) {
  if (config.env.id == EnvId::custom && model.compressor) return InternalStateSpec::from_tables(model, *model.compressor);
  return InternalStateSpec::window(model, config.t_w, config.internal_state_cap);
}

int cmd_train(const ExperimentConfig& config, std::ostream& log) {
  const TabularPomg model = config_model(config);
  const InternalStateSpec spec = config_spec(model, config);
  const fs::path dir = prepare_dir(config.out_dir);

  TrainHooks hooks;
  hooks.on_record = [&](const TrainRecord& r) {
    if (!r.ne_gap && r.iter != config.train.iterations) return;
    log << "iter " << r.iter << "  potential " << num(r.potential);
    if (r.ne_gap) log << "  ne_gap " << num(*r.ne_gap);
    if (r.d_b) log << "  d_b " << num(*r.d_b);
    log << "\n";
  };
  TrainResult run = train(model, spec, config.train, hooks);

  write_text_file((dir / "metrics.csv").string(), records_csv(run.records, model.n_agents()));
  save_policy(run.policy, spec, model, (dir / "policy.json").string());
  const std::string toml_text = config_to_toml(config);
  write_text_file((dir / "config.toml").string(), toml_text);

  json drops = json::array();
  for (auto t : run.potential_drops) drops.push_back(t);
  json manifest = {{"command", "train"},
                   {"seed", config.seed},
                   {"config", toml_text},
                   {"versions", libraries()},
                   {"model", model_summary(model, spec)},
                   {"results",
                    {{"eta", run.eta},
                     {"M_hat", run.M_hat},
                     {"iterations", config.train.iterations},
                     {"records", run.records.size()},
                     {"final_potential", run.records.back().potential},
                     {"potential_drops", drops}}},
                   {"outputs", {"metrics.csv", "policy.json", "config.toml"}}};
  write_text_file((dir / "manifest.json").string(), dump_json(manifest));
  log << "wrote " << dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const ExperimentConfig& config, std::ostream& log) {
  if (config.eval.policy.empty()) throw ParameterError("eval: no policy file (set eval.policy or --policy)");
  const TabularPomg model = config_model(config);
  const InternalStateSpec spec = config_spec(model, config);
  JointPolicy policy = load_policy(config.eval.policy, spec, model);
  const fs::path dir = prepare_dir(config.out_dir);

  auto structure =
      std::make_shared<const ChainStructure>(ChainStructure::build(model, spec, config.train.chain_cap));
  PolicyEvaluation eval = evaluate_policy(structure, policy, config.train.solve);
  GapReport gap = ne_gap(structure, policy, config.eval.br);
  const double a = compute_a(policy, eval.advantages);
  auto tree = std::make_shared<const BeliefTree>(
      BeliefTree::build(model, spec, config.train.belief_horizon, config.train.belief_cap));
  DbReport db = distance_db(exact_beliefs(tree, eval.chain, eval.occupancy));

  json responses = json::array();
  for (int i = 0; i < model.n_agents(); ++i) {
    responses.push_back({{"agent", i},
                         {"value", gap.value[i]},
                         {"best_response", gap.responses[i].value},
                         {"gap", gap.gap[i]},
                         {"method", to_string(gap.responses[i].method)}});
  }
  json report = {{"policy", config.eval.policy},
                 {"J", eval.objective.J},
                 {"potential", eval.objective.potential},
                 {"ne_gap", gap.ne_gap},
                 {"agents", responses},
                 {"a", a},
                 {"d_b", db.d_b},
                 {"d_b_shared", db.d_b_shared},
                 {"d_b_horizon", db.horizon},
                 {"d_b_tail_weight", db.tail_weight}};
  write_text_file((dir / "eval.json").string(), dump_json(report));
  for (int i = 0; i < model.n_agents(); ++i) log << "J_" << i << " " << num(eval.objective.J[i]) << "\n";
  log << "potential " << num(eval.objective.potential) << "\nne_gap " << num(gap.ne_gap) << "\na " << num(a)
      << "\nd_b " << num(db.d_b) << "\n";
  return kExitOk;
}

int cmd_verify(const ExperimentConfig& config, const std::string& run_dir, std::ostream& log) {
  const TabularPomg model = config_model(config);
  const InternalStateSpec spec = config_spec(model, config);
  const fs::path dir = prepare_dir(config.out_dir);

  TabularPomg sweep_model = model;
  if (config.eval.lemma_discount > 0.0) sweep_model.discount = config.eval.lemma_discount;
  SweepOptions opts;
  opts.instances = config.eval.lemma_instances;
  opts.belief_horizon = config.eval.lemma_horizon;
  opts.init_scale = config.eval.lemma_init_scale;
  opts.seed = config.seed;
  opts.chain_cap = config.train.chain_cap;
  opts.belief_cap = config.train.belief_cap;
  opts.br = config.eval.br;
  opts.solve = config.train.solve;
  log << "lemma sweep: " << opts.instances << " instances, discount " << num(sweep_model.discount) << "\n";
  SweepReport sweep = lemma_sweep(sweep_model, spec, opts);

  json theorem;
  bool theorem_ok = true;
  if (run_dir.empty()) {
    TrainConfig tc = config.train;
    tc.iterations = config.eval.theorem_iterations;
    log << "theorem run: " << tc.iterations << " iterations\n";
    TheoremRun tr = theorem_run(model, spec, tc);
    theorem = to_json(tr);
    theorem_ok = tr.passed();
  } else {
    Run run = load_run(run_dir);
    BoundInputs in = run_bound_inputs(run);
    std::vector<double> gaps;
    const std::size_t T = run.config.train.iterations;
    for (const auto& r : run.records) {
      if (r.iter >= T) continue;
      if (!r.ne_gap) {
        throw ContractError(run_dir + ": NE-gap missing at iteration " + std::to_string(r.iter) +
                            " (train with gap_every = 1 and log_every = 1)");
      }
      gaps.push_back(*r.ne_gap);
      in.a = std::min(in.a, r.a);
    }
    if (gaps.size() != T) throw ContractError(run_dir + ": gap log is incomplete");
    BoundReport br = theorem_bound_check(gaps, in, manifest_number(run.manifest, "results", "eta"));
    theorem = to_json(br);
    theorem["run"] = run_dir;
    theorem_ok = br.residual >= -kResidualTolerance;
    theorem["passed"] = theorem_ok;
  }

  json report = to_json(sweep);
  report["theorem"] = theorem;
  const bool ok = sweep.passed() && theorem_ok;
  report["passed"] = ok;
  write_text_file((dir / "verify.json").string(), dump_json(report));
  auto line = [&](const char* name, const LemmaSummary& s) {
    log << name << " min_residual " << num(s.min_residual) << " alt " << num(s.min_residual_alt)
        << (s.passed() ? "  ok" : "  VIOLATED") << "\n";
  };
  line("lemma1", sweep.lemma1);
  line("lemma2", sweep.lemma2);
  line("lemma3", sweep.lemma3);
  line("lemma4", sweep.lemma4);
  log << "fisher max_deviation " << num(sweep.fisher.max_deviation) << " (" << sweep.fisher.checked
      << " checked, " << sweep.fisher.skipped << " skipped)\n";
  log << "theorem lhs " << num(theorem["lhs"].get<double>()) << " rhs " << num(theorem["rhs"].get<double>())
      << (theorem_ok ? "  ok" : "  VIOLATED") << "\n";
  return ok ? kExitOk : kExitVerification;
}

int cmd_plot_data(const std::vector<std::string>& run_dirs, const std::string& out_dir, std::ostream& log) {
  if (run_dirs.empty()) throw ParameterError("plot-data: no run directories given");
  std::vector<Run> runs;
  std::vector<std::string> labels;
  for (const auto& d : run_dirs) {
    runs.push_back(load_run(d));
    std::string label = fs::path(d).lexically_normal().filename().string();
    if (label.empty()) label = fs::path(d).lexically_normal().parent_path().filename().string();
    if (std::find(labels.begin(), labels.end(), label) != labels.end()) label += "_" + std::to_string(labels.size());
    labels.push_back(label);
  }
  const fs::path dir = prepare_dir(out_dir.empty() ? run_dirs.front() : out_dir);
  const bool single = runs.size() == 1;

  for (std::size_t k = 0; k < runs.size(); ++k) {
    const Run& run = runs[k];
    const std::string prefix = single ? "" : labels[k] + "_";
    std::ostringstream pot, gap, bound;
    pot << "iter,potential\n";
    gap << "iter,ne_gap\n";
    for (const auto& r : run.records) {
      pot << r.iter << "," << num(r.potential) << "\n";
      if (r.ne_gap) gap << r.iter << "," << num(*r.ne_gap) << "\n";
    }
    write_text_file((dir / (prefix + "potential.csv")).string(), pot.str());
    write_text_file((dir / (prefix + "ne_gap.csv")).string(), gap.str());

    // Running average of the logged gaps against the explicit bound at the
    // same T, with a, d_b and M_hat as measured on the run.
    BoundInputs in = run_bound_inputs(run);
    bound << "iter,T,avg_ne_gap,rhs,eps_fsc,a,d_b,M_hat\n";
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : run.records) {
      in.a = std::min(in.a, r.a);
      if (!r.ne_gap || r.iter >= run.config.train.iterations) continue;
      sum += *r.ne_gap;
      ++count;
      in.T = r.iter + 1;
      bound << r.iter << "," << in.T << "," << num(sum / static_cast<double>(count)) << ","
            << num(theorem_rhs(in)) << "," << num(eps_fsc(in)) << "," << num(in.a) << "," << num(in.d_b) << ","
            << num(in.M) << "\n";
    }
    write_text_file((dir / (prefix + "bound.csv")).string(), bound.str());
  }

  if (!single) {
    std::map<std::size_t, std::vector<std::string>> rows;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      for (const auto& r : runs[k].records) {
        auto& cells = rows[r.iter];
        cells.resize(runs.size());
        cells[k] = num(r.potential);
      }
    }
    std::ostringstream cmp;
    cmp << "iter";
    for (const auto& l : labels) cmp << ",potential_" << l;
    cmp << "\n";
    for (auto& [iter, cells] : rows) {
      cells.resize(runs.size());
      cmp << iter;
      for (const auto& c : cells) cmp << "," << c;
      cmp << "\n";
    }
    write_text_file((dir / "comparison_potential.csv").string(), cmp.str());
  }
  log << "wrote plot data for " << runs.size() << " run(s) to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_gen_model(const ExperimentConfig& config, std::ostream& log) {
  const TabularPomg model = config_model(config);
  const fs::path dir = prepare_dir(config.out_dir);
  const fs::path path = dir / "model.json";
  save_model(model, path.string());
  log << "wrote " << path.string() << "\n";
  return kExitOk;
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const LoadError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const SizeError& e) {
    err << "error: " << e.what() << " (required " << e.required() << ")\n";
    return kExitCompute;
  } catch (const SolverError& e) {
    err << "error: " << e.what() << " (residual " << e.residual() << ")\n";
    return kExitCompute;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCompute;
  }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Internal-state natural policy gradient for partially observable Markov potential games"};
  app.footer("Config keys (TOML):\n" + config_reference());
  app.require_subcommand(1);

  std::string config_path, out_dir, policy_path, run_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  std::vector<std::string> run_dirs;
  auto* opt_seed = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--config", config_path, "TOML config, or a run manifest.json");
  app.add_option("--out", out_dir, "Output directory (overrides output.dir)");
  app.add_option("--policy", policy_path, "Policy JSON for eval (overrides eval.policy)");
  app.add_option("--threads", threads, "OpenMP threads")->check(CLI::PositiveNumber);
  app.fallthrough();

  auto* train_cmd = app.add_subcommand("train", "Run internal-state NPG and write metrics, policy and manifest");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy file: J_i, potential, NE-gap, a, d_b");
  auto* verify_cmd = app.add_subcommand("verify", "Lemma sweeps and the explicit convergence bound");
  verify_cmd->add_option("--run", run_dir, "Check the bound on this train run instead of a fresh one");
  auto* plot_cmd = app.add_subcommand("plot-data", "Per-series CSV files and bound overlay from train runs");
  plot_cmd->add_option("runs", run_dirs, "Train run directories")->required();
  auto* gen_cmd = app.add_subcommand("gen-model", "Write the configured environment as model JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  if (threads > 0) omp_set_num_threads(threads);

  return run_guarded(
      [&]() -> int {
        ExperimentConfig cfg;
        if (!config_path.empty()) {
          if (fs::path(config_path).extension() == ".json") {
            json manifest;
            try {
              manifest = json::parse(read_text_file(config_path));
            } catch (const json::exception& e) {
              throw LoadError(config_path + ": " + e.what());
            }
            if (!manifest.contains("config") || !manifest["config"].is_string()) {
              throw LoadError(config_path + ": config: missing");
            }
            cfg = parse_config(manifest["config"].get<std::string>(), config_path);
          } else {
            cfg = load_config(config_path);
          }
        }
        if (*opt_seed) {
          cfg.seed = seed;
          cfg.train.seed = seed;
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!policy_path.empty()) cfg.eval.policy = policy_path;

        if (*train_cmd) return cmd_train(cfg, out);
        if (*eval_cmd) return cmd_eval(cfg, out);
        if (*verify_cmd) return cmd_verify(cfg, run_dir, out);
        if (*plot_cmd) return cmd_plot_data(run_dirs, out_dir, out);
        if (*gen_cmd) return cmd_gen_model(cfg, out);
        return kExitValidation;
      },
      err);
}

}  // namespace isnpg
