#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rre/agent.hpp"
#include "rre/data.hpp"
#include "rre/dts.hpp"
#include "rre/env.hpp"
#include "rre/ppo.hpp"
#include "rre/trainer.hpp"

namespace rre::cli {

enum class Mode { Rre, NaiveAll, NaiveLast };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);

// Flat key-value run configuration with [section] headers. Every key has a
// default; unknown sections or keys are rejected. Shared values (alpha between
// env and dts, gamma between ppo and dts) are set once in their home section.
//
//   [data]  source = synth|csv, csv, target, T, H,
//           synth_steps, synth_noise_frac, synth_noise_amp, synth_obs_noise,
//           synth_lag, synth_seed
//   [env]   cell, d_h, K, alpha, c
//   [agent] d_e, layers, heads, ff, dropout
//   [dts]   beta, lambda_min, lambda_max, mu, omega, minibatch
//   [ppo]   clip, gamma, lr_policy, lr_value, agent_epochs
//   [train] rounds, env_epochs, pretrain_epochs, pretrain_patience,
//           env_patience, round_patience, min_improvement, batch_size, lr_env,
//           stochastic_inference
//   [run]   mode, out, seeds (comma list), cells (bench backbones)
struct RunConfig {
    // data
    std::string source = "synth";
    std::string csv_path;
    std::string target = "y";
    int T = 24;
    int H = 6;
    data::SynthConfig synth;

    env::EnvConfig env;
    agent::AgentConfig agent;
    dts::DtsConfig dts;
    ppo::PpoConfig ppo;
    trainer::TrainConfig train;

    Mode mode = Mode::Rre;
    std::string out_dir = "out";
    std::vector<std::uint64_t> seeds = {1};
    std::vector<env::CellKind> cells = {env::CellKind::Gru};

    void finalize();  // propagate shared fields and validate
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace rre::cli
