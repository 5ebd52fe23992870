#include "rre/ppo.hpp"

#include <algorithm>
#include <cmath>

#include "rre/errors.hpp"

namespace rre::ppo {

void PpoConfig::validate() const {
    if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("clip epsilon must be in (0,1)");
    if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("gamma must be in (0,1]");
    if (!(lr_policy > 0.0) || !(lr_value > 0.0)) throw ConfigError("learning rates must be positive");
    if (agent_epochs < 0) throw ConfigError("agent epochs must be nonnegative");
}

double advantage(const dts::ValueFn& value, const dts::Transition& t, double gamma) {
    return dts::td_error(value, t, gamma);
}

double bootstrapped_return(const dts::ValueFn& value, const dts::Transition& t, double gamma) {
    const double v_next = t.terminal ? 0.0 : value(t.s_next);
    return t.r + gamma * v_next;
}

Var policy_loss(Tape& tape, const agent::NetVars& policy_net, const agent::AgentConfig& cfg,
                const dts::ReplayBuffer& buffer, std::span<const int> idx,
                std::span<const double> advantages, double clip, agent::FwdMode mode) {
    if (idx.empty()) throw BufferError("policy loss over empty minibatch");
    if (advantages.size() != idx.size()) throw ShapeError("advantage count mismatch");
    Var acc{};
    for (size_t i = 0; i < idx.size(); ++i) {
        const dts::Transition& tr = buffer[static_cast<size_t>(idx[i])];
        Var state = tape.constant_ref(tr.s.v);
        agent::PolicyLogits logits = agent::policy_logits(tape, policy_net, cfg, state, mode);
        Var lp_new = agent::log_prob_var(tape, logits, tr.a);
        Var log_ratio = tape.sub(lp_new, tape.constant_scalar(tr.old_log_prob));
        Var ratio = tape.exp(tape.clamp(log_ratio, -30.0, 30.0));
        const double adv = advantages[i];
        Var unclipped = tape.scale(ratio, adv);
        Var clipped = tape.scale(tape.clamp(ratio, 1.0 - clip, 1.0 + clip), adv);
        Var term = tape.minimum(unclipped, clipped);
        acc = i == 0 ? term : tape.add(acc, term);
    }
    return tape.scale(acc, 1.0 / static_cast<double>(idx.size()));
}

Var value_loss(Tape& tape, const agent::NetVars& value_net, const agent::AgentConfig& cfg,
               const dts::ReplayBuffer& buffer, std::span<const int> idx,
               std::span<const double> returns, agent::FwdMode mode) {
    if (idx.empty()) throw BufferError("value loss over empty minibatch");
    if (returns.size() != idx.size()) throw ShapeError("return count mismatch");
    Var acc{};
    for (size_t i = 0; i < idx.size(); ++i) {
        const dts::Transition& tr = buffer[static_cast<size_t>(idx[i])];
        Var state = tape.constant_ref(tr.s.v);
        Var v = agent::value_forward(tape, value_net, cfg, state, mode);
        Var diff = tape.sub(v, tape.constant_scalar(returns[i]));
        Var sq = tape.square(diff);
        acc = i == 0 ? sq : tape.add(acc, sq);
    }
    return tape.scale(acc, 1.0 / static_cast<double>(idx.size()));
}

EpochStats agent_epoch(agent::AgentParams& params, const agent::AgentConfig& acfg,
                       const dts::ReplayBuffer& buffer, const dts::DtsConfig& dts_cfg,
                       const PpoConfig& ppo_cfg, int g, AgentWorkspace& ws, Rng& rng) {
    if (buffer.empty()) throw BufferError("agent_epoch on empty buffer");
    const int big_g = ppo_cfg.agent_epochs;

    // DTS pass with the current value net; one binding per pass.
    ws.eval_tape.reset();
    agent::NetVars eval_net = agent::bind_value(ws.eval_tape, params.value, acfg);
    dts::ValueFn vfn = [&](const env::MdpState& s) {
        Var v = agent::value_forward(ws.eval_tape, eval_net, acfg,
                                     ws.eval_tape.constant_ref(s.v), {});
        return ws.eval_tape.scalar(v);
    };
    dts::Pass pass = dts::compute_pass(buffer, vfn, g, big_g, dts_cfg);

    const int m_check = std::min<int>(dts_cfg.minibatch, static_cast<int>(buffer.size()));
    EpochStats stats;
    stats.sampled = dts::sample_minibatch(buffer.size(), pass.prob, m_check, rng);

    std::vector<double> adv(stats.sampled.size());
    std::vector<double> ret(stats.sampled.size());
    for (size_t i = 0; i < stats.sampled.size(); ++i) {
        const size_t m = static_cast<size_t>(stats.sampled[i]);
        adv[i] = pass.delta[m];
        ret[i] = buffer[m].r + dts_cfg.gamma * pass.v_next[m];
        stats.mean_advantage += adv[i];
    }
    stats.mean_advantage /= static_cast<double>(stats.sampled.size());

    const agent::FwdMode train_mode{acfg.dropout, &rng};

    ws.policy_tape.reset();
    agent::NetVars pnet = agent::bind_policy(ws.policy_tape, params.policy, acfg);
    Var pl = policy_loss(ws.policy_tape, pnet, acfg, buffer, stats.sampled, adv, ppo_cfg.clip,
                         train_mode);
    stats.policy_objective = ws.policy_tape.scalar(pl);
    ws.policy_tape.backward(pl);
    adam_step(params.policy, ws.policy_tape.param_grads(params.policy), ppo_cfg.lr_policy,
              /*ascend=*/true);

    ws.value_tape.reset();
    agent::NetVars vnet = agent::bind_value(ws.value_tape, params.value, acfg);
    Var vl = value_loss(ws.value_tape, vnet, acfg, buffer, stats.sampled, ret, train_mode);
    stats.value_loss = ws.value_tape.scalar(vl);
    ws.value_tape.backward(vl);
    adam_step(params.value, ws.value_tape.param_grads(params.value), ppo_cfg.lr_value,
              /*ascend=*/false);

    return stats;
}

}  // namespace rre::ppo
