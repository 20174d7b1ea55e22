#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "isnpg/config.hpp"
#include "isnpg/internal_state.hpp"
#include "isnpg/model.hpp"

namespace isnpg {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitCompute = 2, kExitVerification = 3 };

// Model and internal-state spec described by a config. Custom models that
// carry compressor tables use them instead of a window.
TabularPomg config_model(const ExperimentConfig& config);
InternalStateSpec config_spec(const TabularPomg& model, const ExperimentConfig& config);

// Each command writes into config.out_dir (created if missing) and returns
// an exit code. Errors propagate as exceptions; run_guarded maps them.
int cmd_train(const ExperimentConfig& config, std::ostream& log);
int cmd_eval(const ExperimentConfig& config, std::ostream& log);
// run_dir, when set, checks the bound on a finished train run instead of a
// fresh one.
int cmd_verify(const ExperimentConfig& config, const std::string& run_dir, std::ostream& log);
int cmd_plot_data(const std::vector<std::string>& run_dirs, const std::string& out_dir, std::ostream& log);
int cmd_gen_model(const ExperimentConfig& config, std::ostream& log);

// Validation problems map to 1, compute failures to 2.
int run_guarded(const std::function<int()>& body, std::ostream& err);

// Full command line: subcommands train, eval, verify, plot-data, gen-model.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace isnpg
