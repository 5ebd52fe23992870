#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rre/env.hpp"
#include "rre/param_store.hpp"
#include "rre/tape.hpp"

namespace rre::agent {

struct AgentConfig {
    int d_e = 256;
    int layers = 3;
    int heads = 8;
    int ff = 1024;
    double dropout = 0.1;
    int skip_window = 8;  // K; the k head emits K+1 logits
    int d_h = 32;         // state layout: concat(h, x)
    int d_in = 1;

    void validate() const;
};

// Policy and value networks with identical architecture and fully separate
// parameter sets ("policy.*" vs "value.*").
struct AgentParams {
    ParamStore policy;
    ParamStore value;
};

AgentParams init_agent(const AgentConfig& cfg, Rng& rng);

// Per-head categorical distributions. Probabilities drive sampling; logits
// carry the exact log-probability arithmetic shared with the tape path.
struct ActionDistribution {
    Tensor p_u, p_k, p_q;
    Tensor logit_u, logit_k, logit_q;

    static ActionDistribution from_probs(Tensor pu, Tensor pk, Tensor pq);
};

// Dropout switch for a forward pass; active only inside agent training
// epochs. rng must be set when rate > 0.
struct FwdMode {
    double dropout = 0.0;
    Rng* rng = nullptr;
};

// Tape-bound handles for one network; rebind after a tape reset.
struct NetVars {
    struct Layer {
        Var ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        Var ln2_g, ln2_b, ff_w1, ff_b1, ff_w2, ff_b2;
    };
    struct Head {
        Var w1, b1, w2, b2;
    };
    Var h_proj, x_proj, type0, type1;
    std::vector<Layer> layers;
    Var lnf_g, lnf_b;
    Head head_u, head_k, head_q, head_v;
    bool is_policy = false;
};

NetVars bind_policy(Tape& tape, ParamStore& store, const AgentConfig& cfg);
NetVars bind_value(Tape& tape, ParamStore& store, const AgentConfig& cfg);

// Two-token Transformer encoder over a state vector: the h and x parts are
// projected to d_e, given token-type embeddings, run through pre-norm
// encoder layers, then layer-normed and mean-pooled.
Var embed_state(Tape& tape, const NetVars& net, const AgentConfig& cfg, Var state, FwdMode mode);

struct PolicyLogits {
    Var u, k, q;
};

PolicyLogits policy_logits(Tape& tape, const NetVars& net, const AgentConfig& cfg, Var state,
                           FwdMode mode);

ActionDistribution policy_forward(Tape& tape, const NetVars& net, const AgentConfig& cfg,
                                  const env::MdpState& s, FwdMode mode = {});

Var value_forward(Tape& tape, const NetVars& net, const AgentConfig& cfg, Var state,
                  FwdMode mode);

// Factored joint: components sampled independently; the joint log-probability
// is the sum of the per-head logit[a] - logsumexp(logits) terms.
std::pair<env::Action, double> sample_action(const ActionDistribution& dist, Rng& rng);
env::Action greedy_action(const ActionDistribution& dist);
double log_prob(const ActionDistribution& dist, const env::Action& a);

// Host-side mirror of the tape log-prob arithmetic for one head.
double log_prob_from_logits(const Tensor& logits, int idx);

// Tape path: sum over heads of logits[a] - logsumexp(logits).
Var log_prob_var(Tape& tape, const PolicyLogits& logits, const env::Action& a);

// Convenience no-grad evaluators reusing one tape across calls.
class PolicyEvaluator {
public:
    PolicyEvaluator(const AgentConfig& cfg, ParamStore& store);
    ActionDistribution dist(const env::MdpState& s);

private:
    AgentConfig cfg_;
    ParamStore* store_;
    Tape tape_{false};
};

class ValueEvaluator {
public:
    ValueEvaluator(const AgentConfig& cfg, ParamStore& store);
    double value(const env::MdpState& s);

private:
    AgentConfig cfg_;
    ParamStore* store_;
    Tape tape_{false};
};

}  // namespace rre::agent
