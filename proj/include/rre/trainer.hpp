#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rre/agent.hpp"
#include "rre/data.hpp"
#include "rre/dts.hpp"
#include "rre/env.hpp"
#include "rre/ppo.hpp"

namespace rre::trainer {

struct TrainConfig {
    int rounds = 20;        // I
    int env_epochs = 20;    // G_F per round
    int pretrain_epochs = 20;
    int pretrain_patience = 10;
    int env_patience = 6;
    int round_patience = 5;
    double min_improvement = 1e-3;
    int batch_size = 32;  // |D|
    double lr_env = 1e-2; // eta_theta
    std::uint64_t seed = 1;
    bool stochastic_inference = false;

    void validate() const;
};

// Scaled-space dataset: chronological split, scaler fitted on train only,
// sliding windows per segment. Original-scale test targets are kept for
// metric reporting.
struct Dataset {
    data::Scaler scaler;
    int target = 0;
    int T = 0;
    int H = 0;
    std::vector<data::WindowedExample> train;
    std::vector<data::WindowedExample> val;
    std::vector<data::WindowedExample> test;
    std::vector<Tensor> test_y_orig;  // original-scale last-step targets
};

Dataset prepare_dataset(const data::RawSeries& series, int T, int H);

// Per-step action source for environment rollouts.
class ActionProvider {
public:
    virtual ~ActionProvider() = default;
    virtual void begin_example() {}
    virtual env::Action act(int t, const env::MdpState& s) = 0;
};

// u=1, k=0, q per mode: Naive-all supervises every step, Naive-last only the
// final one.
class FixedActionProvider : public ActionProvider {
public:
    FixedActionProvider(int T, bool last_only) : T_(T), last_only_(last_only) {}
    env::Action act(int t, const env::MdpState&) override {
        return {1, 0, last_only_ ? (t == T_ ? 1 : 0) : 1};
    }

private:
    int T_;
    bool last_only_;
};

// Greedy (or sampled) actions from a trained policy, dropout off.
class PolicyActionProvider : public ActionProvider {
public:
    PolicyActionProvider(ParamStore& policy, const agent::AgentConfig& cfg,
                         bool stochastic = false, Rng* rng = nullptr);
    void begin_example() override;
    env::Action act(int t, const env::MdpState& s) override;

private:
    ParamStore* policy_;
    agent::AgentConfig cfg_;
    bool stochastic_;
    Rng* rng_;
    Tape tape_{false};
    agent::NetVars net_;
    bool bound_ = false;
};

struct LogRow {
    int round = 0;
    int epoch = 0;
    std::string phase;  // pretrain | agent | env | round
    double train_loss = 0.0;
    double val_loss = 0.0;
    double mean_reward = 0.0;
};

using TrainLog = std::vector<LogRow>;

// Patience-based early stopping. Any strict improvement updates the best
// score (and should trigger a caller-side snapshot); only improvements of at
// least min_improvement reset the patience counter.
class EarlyStopper {
public:
    EarlyStopper(int patience, double min_improvement);
    // Returns true when training should stop after this score.
    bool record(double score);
    bool last_improved_best() const { return last_improved_; }
    double best() const { return best_; }

private:
    int patience_;
    double min_improvement_;
    double best_ = std::numeric_limits<double>::infinity();
    double best_significant_ = std::numeric_limits<double>::infinity();
    int since_ = 0;
    bool last_improved_ = false;
};

// Last-step MSE over a window list in scaled space; the model-selection score.
double validation_score(ParamStore& env_params, const env::EnvConfig& cfg,
                        std::span<const data::WindowedExample> examples,
                        ActionProvider& provider);

struct EnvTrainResult {
    int epochs_run = 0;
    double best_val = 0.0;
    double last_train_loss = 0.0;
};

// Masked-objective training of the forecaster under a fixed action source,
// with early stopping on the validation score and best-checkpoint restore.
EnvTrainResult train_env(ParamStore& env_params, const env::EnvConfig& cfg, const Dataset& ds,
                         ActionProvider& provider, int max_epochs, int patience,
                         double min_improvement, double lr, int batch_size, TrainLog* log,
                         const char* phase, int round);

// Algorithm: roll the frozen policy through the frozen environment over one
// batch of examples, storing T transitions per example (terminal at t = T).
dts::ReplayBuffer collect_experience(ParamStore& env_params, const env::EnvConfig& env_cfg,
                                     ParamStore& policy, const agent::AgentConfig& agent_cfg,
                                     std::span<const data::WindowedExample> batch, Rng& rng);

// G_pi epochs over all buffers (one agent_epoch per buffer per epoch).
void train_agent_round(agent::AgentParams& params, const agent::AgentConfig& acfg,
                       const std::vector<dts::ReplayBuffer>& buffers,
                       const dts::DtsConfig& dts_cfg, const ppo::PpoConfig& ppo_cfg,
                       ppo::AgentWorkspace& ws, Rng& rng, TrainLog* log, int round,
                       double mean_reward);

struct CoEvolveResult {
    ParamStore env_params;
    agent::AgentParams agent_params;
    bool use_policy = false;  // false: best checkpoint predates any policy round
    double best_val = 0.0;
    int best_round = 0;
    int rounds_run = 0;
    TrainLog log;
};

// Full pipeline: pretrain with the conventional configuration, then
// alternating agent / environment rounds with round-level early stopping;
// returns the best checkpoint pair by validation score.
CoEvolveResult co_evolve(const Dataset& ds, const env::EnvConfig& env_cfg,
                         const agent::AgentConfig& agent_cfg, const dts::DtsConfig& dts_cfg,
                         const ppo::PpoConfig& ppo_cfg, const TrainConfig& cfg);

struct BaselineResult {
    ParamStore env_params;
    double best_val = 0.0;
    TrainLog log;
};

// Standalone Naive-all / Naive-last training (fixed actions, no agent).
BaselineResult train_baseline(const Dataset& ds, const env::EnvConfig& env_cfg,
                              const TrainConfig& cfg, bool last_only);

// Scaled-space H-step prediction for one input window. Pass a null policy for
// the conventional forward pass (u=1, k=0). Actions, when requested, record
// the per-step (u, k) choices (q is ignored at inference).
Tensor infer_scaled(ParamStore& env_params, const env::EnvConfig& cfg, const Tensor& X,
                    ActionProvider& provider, std::vector<env::Action>* actions_out = nullptr);

struct TestMetrics {
    double mse = 0.0;
    double mae = 0.0;
};

// Mean per-window MSE/MAE of last-step predictions on the test split, in the
// original scale.
TestMetrics evaluate_test(ParamStore& env_params, const env::EnvConfig& cfg, const Dataset& ds,
                          ActionProvider& provider);

}  // namespace rre::trainer
