#pragma once

#include <span>
#include <vector>

#include "rre/agent.hpp"
#include "rre/dts.hpp"
#include "rre/tape.hpp"

namespace rre::ppo {

struct PpoConfig {
    double clip = 0.2;  // epsilon
    double gamma = 0.95;
    double lr_policy = 1e-3;  // eta_pi
    double lr_value = 1e-3;   // eta_upsilon
    int agent_epochs = 50;    // G_pi

    void validate() const;
};

// One-step TD advantage (GAE with parameter zero); the value net is treated
// as a constant here.
double advantage(const dts::ValueFn& value, const dts::Transition& t, double gamma);

// R = r + gamma * v(s'), with the zero bootstrap on terminal transitions.
double bootstrapped_return(const dts::ValueFn& value, const dts::Transition& t, double gamma);

// Clipped surrogate objective over a sampled index set; the returned scalar is
// the quantity to MAXIMIZE. Advantages enter as constants. The log-ratio is
// clamped to +-30 purely as an overflow guard; the clip term already zeroes
// gradients out there.
Var policy_loss(Tape& tape, const agent::NetVars& policy_net, const agent::AgentConfig& cfg,
                const dts::ReplayBuffer& buffer, std::span<const int> idx,
                std::span<const double> advantages, double clip, agent::FwdMode mode);

// Mean squared error between predicted values and the bootstrapped returns
// (constants); the quantity to MINIMIZE.
Var value_loss(Tape& tape, const agent::NetVars& value_net, const agent::AgentConfig& cfg,
               const dts::ReplayBuffer& buffer, std::span<const int> idx,
               std::span<const double> returns, agent::FwdMode mode);

// Reusable tape arenas for the epoch loop; keeping them across calls makes
// steady-state epochs allocation-free.
struct AgentWorkspace {
    Tape eval_tape{false};
    Tape policy_tape{true};
    Tape value_tape{true};
};

struct EpochStats {
    double policy_objective = 0.0;
    double value_loss = 0.0;
    double mean_advantage = 0.0;
    std::vector<int> sampled;
};

// One PPO4Pred epoch step on one replay buffer: recompute the DTS pass with
// the current value net, sample the minibatch, build advantage/return targets,
// then take one Adam ascent step on the policy and one descent step on the
// value net.
EpochStats agent_epoch(agent::AgentParams& params, const agent::AgentConfig& acfg,
                       const dts::ReplayBuffer& buffer, const dts::DtsConfig& dts_cfg,
                       const PpoConfig& ppo_cfg, int g, AgentWorkspace& ws, Rng& rng);

}  // namespace rre::ppo
