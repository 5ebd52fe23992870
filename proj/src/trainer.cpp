#include "rre/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "rre/errors.hpp"
#include "rre/log.hpp"

namespace rre::trainer {

namespace {

std::vector<std::pair<size_t, size_t>> batch_ranges(size_t n, int batch_size) {
    std::vector<std::pair<size_t, size_t>> out;
    for (size_t b = 0; b < n; b += static_cast<size_t>(batch_size)) {
        out.emplace_back(b, std::min(n, b + static_cast<size_t>(batch_size)));
    }
    return out;
}

Tensor row_of(const Tensor& m, int r) {
    std::vector<double> v(static_cast<size_t>(m.cols()));
    for (int c = 0; c < m.cols(); ++c) v[static_cast<size_t>(c)] = m.at(r, c);
    return Tensor::vector(std::move(v));
}

std::uint64_t derive2(std::uint64_t seed, std::string_view tag, int i) {
    return Rng::derive(Rng::derive(seed, tag), static_cast<std::uint64_t>(i));
}

}  // namespace

void TrainConfig::validate() const {
    if (rounds < 0) throw ConfigError("rounds must be nonnegative");
    if (env_epochs < 1 || pretrain_epochs < 1) throw ConfigError("epoch counts must be positive");
    if (pretrain_patience < 1 || env_patience < 1 || round_patience < 1) {
        throw ConfigError("patience values must be positive");
    }
    if (pretrain_patience > pretrain_epochs || env_patience > env_epochs) {
        throw ConfigError("patience cannot exceed the epoch budget");
    }
    if (min_improvement < 0.0) throw ConfigError("min improvement must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (!(lr_env > 0.0)) throw ConfigError("env learning rate must be positive");
}

Dataset prepare_dataset(const data::RawSeries& series, int T, int H) {
    if (T < 1 || H < 1) throw ConfigError("T and H must be positive");
    data::Split split = data::chronological_split(series, T, H);
    Dataset ds;
    ds.target = series.target;
    ds.T = T;
    ds.H = H;
    ds.scaler = data::fit_scaler(split.train);
    ds.train = data::make_windows(ds.scaler.transform(split.train), T, H, series.target);
    ds.val = data::make_windows(ds.scaler.transform(split.val), T, H, series.target);
    ds.test = data::make_windows(ds.scaler.transform(split.test), T, H, series.target);

    // original-scale targets aligned with the scaled test windows
    auto raw_windows = data::make_windows(split.test, T, H, series.target);
    ds.test_y_orig.reserve(raw_windows.size());
    for (auto& w : raw_windows) ds.test_y_orig.push_back(w.y_last);
    return ds;
}

PolicyActionProvider::PolicyActionProvider(ParamStore& policy, const agent::AgentConfig& cfg,
                                           bool stochastic, Rng* rng)
    : policy_(&policy), cfg_(cfg), stochastic_(stochastic), rng_(rng) {
    if (stochastic_ && !rng_) throw ConfigError("stochastic inference needs an rng");
}

void PolicyActionProvider::begin_example() {
    tape_.reset();
    net_ = agent::bind_policy(tape_, *policy_, cfg_);
    bound_ = true;
}

env::Action PolicyActionProvider::act(int, const env::MdpState& s) {
    if (!bound_) begin_example();
    agent::ActionDistribution dist = agent::policy_forward(tape_, net_, cfg_, s, {});
    if (stochastic_) return agent::sample_action(dist, *rng_).first;
    return agent::greedy_action(dist);
}

EarlyStopper::EarlyStopper(int patience, double min_improvement)
    : patience_(patience), min_improvement_(min_improvement) {}

bool EarlyStopper::record(double score) {
    last_improved_ = score < best_;
    if (last_improved_) best_ = score;
    if (score < best_significant_ - min_improvement_) {
        best_significant_ = score;
        since_ = 0;
        return false;
    }
    ++since_;
    return since_ >= patience_;
}

namespace {

struct Rollout {
    std::vector<Var> preds;
    std::vector<int> q;
    std::vector<env::Action> actions;
};

// One rollout: per-step state -> action -> gated cell update, predictions
// collected for the masked objective or the final-step readout.
Rollout run_example(Tape& tape, const env::EnvVars& vars, const env::EnvConfig& cfg,
                    env::HiddenHistory& hist, ActionProvider& provider,
                    const data::WindowedExample& ex, bool with_targets) {
    const int T = ex.X.rows();
    Rollout out;
    out.preds.reserve(static_cast<size_t>(T));
    out.q.reserve(static_cast<size_t>(T));
    hist.reset(tape);
    provider.begin_example();
    Tensor h_prev_val = Tensor::zeros({cfg.d_h});
    for (int t = 1; t <= T; ++t) {
        Tensor x_t = row_of(ex.X, t - 1);
        env::MdpState s = env::make_state(h_prev_val, x_t);
        env::Action a = provider.act(t, s);
        Tensor y_t;
        const Tensor* y_ptr = nullptr;
        if (with_targets) {
            y_t = row_of(ex.Y_all, t - 1);
            y_ptr = &y_t;
        }
        env::StepResult step = env::env_step(tape, vars, cfg, hist, x_t, a, y_ptr, nullptr);
        h_prev_val = tape.val(step.h);
        out.preds.push_back(step.y_hat);
        out.q.push_back(a.q);
        out.actions.push_back(a);
    }
    return out;
}

}  // namespace

double validation_score(ParamStore& env_params, const env::EnvConfig& cfg,
                        std::span<const data::WindowedExample> examples,
                        ActionProvider& provider) {
    if (examples.empty()) throw TrainingError("validation over empty split");
    Tape tape(false);
    env::HiddenHistory hist(cfg.d_h, cfg.skip_window);
    double total = 0.0;
    for (const auto& ex : examples) {
        tape.reset();
        env::EnvVars vars = env::bind_env(tape, env_params, cfg);
        Rollout roll = run_example(tape, vars, cfg, hist, provider, ex, false);
        auto [mse, mae] = data::mse_mae(tape.val(roll.preds.back()), ex.y_last);
        (void)mae;
        total += mse;
    }
    return total / static_cast<double>(examples.size());
}

EnvTrainResult train_env(ParamStore& env_params, const env::EnvConfig& cfg, const Dataset& ds,
                         ActionProvider& provider, int max_epochs, int patience,
                         double min_improvement, double lr, int batch_size, TrainLog* log,
                         const char* phase, int round) {
    if (ds.train.empty()) throw TrainingError("training split is empty");
    const auto batches = batch_ranges(ds.train.size(), batch_size);

    EnvTrainResult result;
    EarlyStopper stopper(patience, min_improvement);
    ParamStore best = env_params;

    // Incoming parameters are the epoch-0 candidate, so a fine-tuning round
    // can never end worse than it started.
    double score = validation_score(env_params, cfg, ds.val, provider);
    stopper.record(score);
    result.best_val = score;

    Tape tape(true);
    env::HiddenHistory hist(cfg.d_h, cfg.skip_window);
    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        double train_loss_sum = 0.0;
        for (const auto& [lo, hi] : batches) {
            tape.reset();
            env::EnvVars vars = env::bind_env(tape, env_params, cfg);
            Var batch_loss{};
            bool first = true;
            for (size_t e = lo; e < hi; ++e) {
                Rollout roll = run_example(tape, vars, cfg, hist, provider, ds.train[e], true);
                Var loss = env::masked_training_loss(tape, roll.preds, ds.train[e].Y_all, roll.q);
                batch_loss = first ? loss : tape.add(batch_loss, loss);
                first = false;
            }
            batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(hi - lo));
            const double loss_val = tape.scalar(batch_loss);
            if (!std::isfinite(loss_val)) throw TrainingError("environment training diverged");
            train_loss_sum += loss_val * static_cast<double>(hi - lo);
            tape.backward(batch_loss);
            adam_step(env_params, tape.param_grads(env_params), lr, false);
        }
        result.last_train_loss = train_loss_sum / static_cast<double>(ds.train.size());
        result.epochs_run = epoch;

        score = validation_score(env_params, cfg, ds.val, provider);
        if (log) {
            log->push_back({round, epoch, phase, result.last_train_loss, score, 0.0});
        }
        const bool stop = stopper.record(score);
        if (stopper.last_improved_best()) {
            best = env_params;
            result.best_val = score;
        }
        if (stop) break;
    }
    env_params = best;
    return result;
}

dts::ReplayBuffer collect_experience(ParamStore& env_params, const env::EnvConfig& env_cfg,
                                     ParamStore& policy, const agent::AgentConfig& agent_cfg,
                                     std::span<const data::WindowedExample> batch, Rng& rng) {
    dts::ReplayBuffer buffer;
    if (batch.empty()) throw BufferError("experience collection over an empty batch");
    const int T = batch.front().X.rows();
    buffer.reserve(batch.size() * static_cast<size_t>(T));

    Tape env_tape(false);
    Tape pol_tape(false);
    env::HiddenHistory hist(env_cfg.d_h, env_cfg.skip_window);
    for (const auto& ex : batch) {
        env_tape.reset();
        pol_tape.reset();
        env::EnvVars vars = env::bind_env(env_tape, env_params, env_cfg);
        agent::NetVars pnet = agent::bind_policy(pol_tape, policy, agent_cfg);
        hist.reset(env_tape);
        Tensor h_prev_val = Tensor::zeros({env_cfg.d_h});
        for (int t = 1; t <= T; ++t) {
            Tensor x_t = row_of(ex.X, t - 1);
            env::MdpState s = env::make_state(h_prev_val, x_t);
            agent::ActionDistribution dist = agent::policy_forward(pol_tape, pnet, agent_cfg, s, {});
            auto [a, lp] = agent::sample_action(dist, rng);
            Tensor y_t = row_of(ex.Y_all, t - 1);
            Tensor x_next;
            const Tensor* x_next_ptr = nullptr;
            if (t < T) {
                x_next = row_of(ex.X, t);
                x_next_ptr = &x_next;
            }
            env::StepResult step =
                env::env_step(env_tape, vars, env_cfg, hist, x_t, a, &y_t, x_next_ptr);
            dts::Transition tr;
            tr.s = std::move(s);
            tr.a = a;
            tr.old_log_prob = lp;
            tr.r = step.r;
            tr.s_next = step.next;
            tr.y_hat = env_tape.val(step.y_hat);
            tr.y = std::move(y_t);
            tr.terminal = (t == T);
            buffer.push_back(std::move(tr));
            h_prev_val = env_tape.val(step.h);
        }
    }
    if (buffer.size() != batch.size() * static_cast<size_t>(T)) {
        throw BufferError("replay buffer size != T * |D|");
    }
    return buffer;
}

void train_agent_round(agent::AgentParams& params, const agent::AgentConfig& acfg,
                       const std::vector<dts::ReplayBuffer>& buffers,
                       const dts::DtsConfig& dts_cfg, const ppo::PpoConfig& ppo_cfg,
                       ppo::AgentWorkspace& ws, Rng& rng, TrainLog* log, int round,
                       double mean_reward) {
    for (int g = 1; g <= ppo_cfg.agent_epochs; ++g) {
        double pol_sum = 0.0, val_sum = 0.0;
        for (const auto& buffer : buffers) {
            ppo::EpochStats st = ppo::agent_epoch(params, acfg, buffer, dts_cfg, ppo_cfg, g, ws, rng);
            pol_sum += st.policy_objective;
            val_sum += st.value_loss;
        }
        if (log) {
            const double nb = static_cast<double>(buffers.size());
            log->push_back({round, g, "agent", pol_sum / nb, val_sum / nb, mean_reward});
        }
    }
}

CoEvolveResult co_evolve(const Dataset& ds, const env::EnvConfig& env_cfg,
                         const agent::AgentConfig& agent_cfg, const dts::DtsConfig& dts_cfg,
                         const ppo::PpoConfig& ppo_cfg, const TrainConfig& cfg) {
    cfg.validate();
    env_cfg.validate();
    agent_cfg.validate();
    dts_cfg.validate();
    ppo_cfg.validate();

    CoEvolveResult res;
    Rng env_rng(Rng::derive(cfg.seed, "env-init"));
    res.env_params = env::init_env_params(env_cfg, env_rng);
    Rng agent_rng(Rng::derive(cfg.seed, "agent-init"));
    res.agent_params = agent::init_agent(agent_cfg, agent_rng);

    // Stage 0: conventional pretraining (u=1, k=0, q=1).
    FixedActionProvider naive(ds.T, false);
    train_env(res.env_params, env_cfg, ds, naive, cfg.pretrain_epochs, cfg.pretrain_patience,
              cfg.min_improvement, cfg.lr_env, cfg.batch_size, &res.log, "pretrain", 0);

    ParamStore best_env = res.env_params;
    agent::AgentParams best_agent = res.agent_params;
    bool best_uses_policy = false;
    int best_round = 0;

    const double base_val = validation_score(res.env_params, env_cfg, ds.val, naive);
    double best_val = base_val;
    res.log.push_back({0, 0, "baseline", 0.0, base_val, 0.0});

    EarlyStopper round_stopper(cfg.round_patience, cfg.min_improvement);
    round_stopper.record(base_val);

    const auto batches = batch_ranges(ds.train.size(), cfg.batch_size);
    ppo::AgentWorkspace ws;

    int i = 1;
    for (; i <= cfg.rounds; ++i) {
        // Experience from the previous round's policy against the frozen env.
        Rng collect_rng(derive2(cfg.seed, "collect", i));
        std::vector<dts::ReplayBuffer> buffers;
        buffers.reserve(batches.size());
        double reward_sum = 0.0;
        size_t reward_n = 0;
        for (const auto& [lo, hi] : batches) {
            buffers.push_back(collect_experience(
                res.env_params, env_cfg, res.agent_params.policy, agent_cfg,
                std::span<const data::WindowedExample>(ds.train.data() + lo, hi - lo),
                collect_rng));
            for (const auto& tr : buffers.back()) reward_sum += tr.r;
            reward_n += buffers.back().size();
        }
        const double mean_reward = reward_sum / static_cast<double>(reward_n);

        Rng agent_train_rng(derive2(cfg.seed, "agent-train", i));
        train_agent_round(res.agent_params, agent_cfg, buffers, dts_cfg, ppo_cfg, ws,
                          agent_train_rng, &res.log, i, mean_reward);

        // Environment fine-tuning under the freshly trained policy.
        PolicyActionProvider policy_actions(res.agent_params.policy, agent_cfg);
        EnvTrainResult ft = train_env(res.env_params, env_cfg, ds, policy_actions,
                                      cfg.env_epochs, cfg.env_patience, cfg.min_improvement,
                                      cfg.lr_env, cfg.batch_size, &res.log, "env", i);

        res.log.push_back({i, 0, "round", ft.last_train_loss, ft.best_val, mean_reward});
        res.rounds_run = i;

        if (ft.best_val < best_val) {
            best_val = ft.best_val;
            best_env = res.env_params;
            best_agent = res.agent_params;
            best_uses_policy = true;
            best_round = i;
        }
        if (round_stopper.record(ft.best_val)) {
            logging::info("round-level early stopping at round " + std::to_string(i));
            break;
        }
    }

    res.env_params = std::move(best_env);
    res.agent_params = std::move(best_agent);
    res.use_policy = best_uses_policy;
    res.best_val = best_val;
    res.best_round = best_round;
    return res;
}

BaselineResult train_baseline(const Dataset& ds, const env::EnvConfig& env_cfg,
                              const TrainConfig& cfg, bool last_only) {
    cfg.validate();
    env_cfg.validate();
    BaselineResult res;
    Rng env_rng(Rng::derive(cfg.seed, "env-init"));
    res.env_params = env::init_env_params(env_cfg, env_rng);
    FixedActionProvider provider(ds.T, last_only);
    EnvTrainResult r = train_env(res.env_params, env_cfg, ds, provider, cfg.pretrain_epochs,
                                 cfg.pretrain_patience, cfg.min_improvement, cfg.lr_env,
                                 cfg.batch_size, &res.log, "pretrain", 0);
    res.best_val = r.best_val;
    res.log.push_back({0, 0, "round", r.last_train_loss, r.best_val, 0.0});
    return res;
}

Tensor infer_scaled(ParamStore& env_params, const env::EnvConfig& cfg, const Tensor& X,
                    ActionProvider& provider, std::vector<env::Action>* actions_out) {
    if (X.cols() != cfg.d_in) throw ShapeError("input window has wrong variable count");
    Tape tape(false);
    env::EnvVars vars = env::bind_env(tape, env_params, cfg);
    env::HiddenHistory hist(cfg.d_h, cfg.skip_window);
    data::WindowedExample ex;
    ex.X = X;
    Rollout roll = run_example(tape, vars, cfg, hist, provider, ex, false);
    if (actions_out) *actions_out = roll.actions;
    return tape.val(roll.preds.back());
}

TestMetrics evaluate_test(ParamStore& env_params, const env::EnvConfig& cfg, const Dataset& ds,
                          ActionProvider& provider) {
    if (ds.test.empty()) throw TrainingError("test split is empty");
    TestMetrics out;
    for (size_t i = 0; i < ds.test.size(); ++i) {
        Tensor pred = infer_scaled(env_params, cfg, ds.test[i].X, provider);
        Tensor pred_orig = Tensor::zeros(pred.shape());
        for (int h = 0; h < pred.size(); ++h) {
            pred_orig[h] = ds.scaler.inverse_value(pred[h], ds.target);
        }
        auto [mse, mae] = data::mse_mae(pred_orig, ds.test_y_orig[i]);
        out.mse += mse;
        out.mae += mae;
    }
    out.mse /= static_cast<double>(ds.test.size());
    out.mae /= static_cast<double>(ds.test.size());
    return out;
}

}  // namespace rre::trainer
