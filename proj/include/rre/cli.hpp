#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "rre/config.hpp"

namespace rre::cli {

// Exit codes: 0 success, 1 runtime failure, 2 config error, 3 checkpoint error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCheckpoint = 3;

// Relative improvement of `ours` over `baseline`: (baseline - ours) / baseline
// as a percentage; 0 when the baseline is 0.
double improvement_pct(double baseline, double ours);

// Trains per seed, writes per-seed checkpoints and training logs plus an
// aggregate metrics.json under the configured output directory. Returns the
// metrics JSON text (also used by tests).
std::string run_train(const RunConfig& cfg);

// Writes the comparison table to <out>/bench.csv and returns its text.
std::string run_bench(const RunConfig& cfg);

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override);
int cmd_infer(const std::string& checkpoint_path, const std::string& input_csv,
              const std::string& output_csv);
int cmd_bench(const std::string& config_path);
int cmd_synth(const std::string& out_csv, int steps, double noise_frac, std::uint64_t seed);

}  // namespace rre::cli
