#include "rre/agent.hpp"

#include <cmath>

#include "rre/errors.hpp"

namespace rre::agent {

void AgentConfig::validate() const {
    if (d_e <= 0 || layers <= 0 || heads <= 0 || ff <= 0) {
        throw ConfigError("agent dims must be positive");
    }
    if (d_e % heads != 0) throw ConfigError("embedding dim must be divisible by head count");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    if (skip_window < 1) throw ConfigError("skip window K must be >= 1");
    if (d_h <= 0 || d_in <= 0) throw ConfigError("state dims must be positive");
}

namespace {

void init_net(ParamStore& store, const std::string& prefix, const AgentConfig& cfg,
              bool is_policy, Rng& rng) {
    auto add_linear = [&](const std::string& name, int out, int in) {
        store.add(prefix + "." + name + ".w", uniform_fan_in({out, in}, in, rng));
        store.add(prefix + "." + name + ".b", Tensor::zeros({out}));
    };
    store.add(prefix + ".embed.h_proj", uniform_fan_in({cfg.d_e, cfg.d_h}, cfg.d_h, rng));
    store.add(prefix + ".embed.x_proj", uniform_fan_in({cfg.d_e, cfg.d_in}, cfg.d_in, rng));
    store.add(prefix + ".embed.type0", Tensor::zeros({cfg.d_e}));
    store.add(prefix + ".embed.type1", Tensor::zeros({cfg.d_e}));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string enc = prefix + ".enc" + std::to_string(l);
        store.add(enc + ".ln1.g", Tensor::full({cfg.d_e}, 1.0));
        store.add(enc + ".ln1.b", Tensor::zeros({cfg.d_e}));
        add_linear("enc" + std::to_string(l) + ".attn.q", cfg.d_e, cfg.d_e);
        add_linear("enc" + std::to_string(l) + ".attn.k", cfg.d_e, cfg.d_e);
        add_linear("enc" + std::to_string(l) + ".attn.v", cfg.d_e, cfg.d_e);
        add_linear("enc" + std::to_string(l) + ".attn.o", cfg.d_e, cfg.d_e);
        store.add(enc + ".ln2.g", Tensor::full({cfg.d_e}, 1.0));
        store.add(enc + ".ln2.b", Tensor::zeros({cfg.d_e}));
        add_linear("enc" + std::to_string(l) + ".ff.1", cfg.ff, cfg.d_e);
        add_linear("enc" + std::to_string(l) + ".ff.2", cfg.d_e, cfg.ff);
    }
    store.add(prefix + ".lnf.g", Tensor::full({cfg.d_e}, 1.0));
    store.add(prefix + ".lnf.b", Tensor::zeros({cfg.d_e}));
    auto add_head = [&](const std::string& name, int out) {
        add_linear("head_" + name + ".1", cfg.d_e, cfg.d_e);
        add_linear("head_" + name + ".2", out, cfg.d_e);
    };
    if (is_policy) {
        add_head("u", 2);
        add_head("k", cfg.skip_window + 1);
        add_head("q", 2);
    } else {
        add_head("v", 1);
    }
}

NetVars bind_net(Tape& tape, ParamStore& store, const std::string& prefix,
                 const AgentConfig& cfg, bool is_policy) {
    NetVars net;
    net.is_policy = is_policy;
    auto p = [&](const std::string& name) { return tape.param(store, prefix + "." + name); };
    net.h_proj = p("embed.h_proj");
    net.x_proj = p("embed.x_proj");
    net.type0 = p("embed.type0");
    net.type1 = p("embed.type1");
    net.layers.resize(static_cast<size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string enc = "enc" + std::to_string(l);
        auto& lay = net.layers[static_cast<size_t>(l)];
        lay.ln1_g = p(enc + ".ln1.g");
        lay.ln1_b = p(enc + ".ln1.b");
        lay.wq = p(enc + ".attn.q.w");
        lay.bq = p(enc + ".attn.q.b");
        lay.wk = p(enc + ".attn.k.w");
        lay.bk = p(enc + ".attn.k.b");
        lay.wv = p(enc + ".attn.v.w");
        lay.bv = p(enc + ".attn.v.b");
        lay.wo = p(enc + ".attn.o.w");
        lay.bo = p(enc + ".attn.o.b");
        lay.ln2_g = p(enc + ".ln2.g");
        lay.ln2_b = p(enc + ".ln2.b");
        lay.ff_w1 = p(enc + ".ff.1.w");
        lay.ff_b1 = p(enc + ".ff.1.b");
        lay.ff_w2 = p(enc + ".ff.2.w");
        lay.ff_b2 = p(enc + ".ff.2.b");
    }
    net.lnf_g = p("lnf.g");
    net.lnf_b = p("lnf.b");
    auto head = [&](const std::string& name) {
        NetVars::Head h;
        h.w1 = p("head_" + name + ".1.w");
        h.b1 = p("head_" + name + ".1.b");
        h.w2 = p("head_" + name + ".2.w");
        h.b2 = p("head_" + name + ".2.b");
        return h;
    };
    if (is_policy) {
        net.head_u = head("u");
        net.head_k = head("k");
        net.head_q = head("q");
    } else {
        net.head_v = head("v");
    }
    return net;
}

Var maybe_drop(Tape& tape, Var v, FwdMode mode) {
    if (mode.dropout <= 0.0) return v;
    if (!mode.rng) throw ConfigError("dropout requested without an rng");
    return tape.dropout(v, mode.dropout, *mode.rng);
}

Var linear(Tape& t, Var w, Var b, Var x) { return t.add(t.matvec(w, x), b); }

Var head_logits(Tape& t, const NetVars::Head& h, Var e) {
    return linear(t, h.w2, h.b2, t.tanh(linear(t, h.w1, h.b1, e)));
}

}  // namespace

AgentParams init_agent(const AgentConfig& cfg, Rng& rng) {
    cfg.validate();
    AgentParams out;
    init_net(out.policy, "policy", cfg, true, rng);
    init_net(out.value, "value", cfg, false, rng);
    return out;
}

NetVars bind_policy(Tape& tape, ParamStore& store, const AgentConfig& cfg) {
    return bind_net(tape, store, "policy", cfg, true);
}

NetVars bind_value(Tape& tape, ParamStore& store, const AgentConfig& cfg) {
    return bind_net(tape, store, "value", cfg, false);
}

Var embed_state(Tape& t, const NetVars& net, const AgentConfig& cfg, Var state, FwdMode mode) {
    if (t.val(state).size() != cfg.d_h + cfg.d_in) {
        throw ShapeError("state length != d_h + d_in");
    }
    const int dh = cfg.d_e / cfg.heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Var h_part = t.slice(state, 0, cfg.d_h);
    Var x_part = t.slice(state, cfg.d_h, cfg.d_in);
    Var tok[2];
    tok[0] = maybe_drop(t, t.add(t.matvec(net.h_proj, h_part), net.type0), mode);
    tok[1] = maybe_drop(t, t.add(t.matvec(net.x_proj, x_part), net.type1), mode);

    for (const auto& lay : net.layers) {
        // attention sublayer (pre-norm)
        Var n0 = t.layer_norm(tok[0], lay.ln1_g, lay.ln1_b);
        Var n1 = t.layer_norm(tok[1], lay.ln1_g, lay.ln1_b);
        Var q[2] = {linear(t, lay.wq, lay.bq, n0), linear(t, lay.wq, lay.bq, n1)};
        Var k[2] = {linear(t, lay.wk, lay.bk, n0), linear(t, lay.wk, lay.bk, n1)};
        Var v[2] = {linear(t, lay.wv, lay.bv, n0), linear(t, lay.wv, lay.bv, n1)};
        for (int i = 0; i < 2; ++i) {
            Var cat{};
            for (int hd = 0; hd < cfg.heads; ++hd) {
                const int off = hd * dh;
                Var qi = t.slice(q[i], off, dh);
                Var k0 = t.slice(k[0], off, dh);
                Var k1 = t.slice(k[1], off, dh);
                Var v0 = t.slice(v[0], off, dh);
                Var v1 = t.slice(v[1], off, dh);
                Var scores = t.scale(t.concat(t.dot(qi, k0), t.dot(qi, k1)), inv_sqrt_dh);
                Var w = t.softmax(scores);
                Var head_out = t.add(t.smul(v0, t.index(w, 0)), t.smul(v1, t.index(w, 1)));
                cat = hd == 0 ? head_out : t.concat(cat, head_out);
            }
            Var att = maybe_drop(t, linear(t, lay.wo, lay.bo, cat), mode);
            tok[i] = t.add(tok[i], att);
        }
        // feed-forward sublayer (pre-norm)
        for (int i = 0; i < 2; ++i) {
            Var n = t.layer_norm(tok[i], lay.ln2_g, lay.ln2_b);
            Var f = linear(t, lay.ff_w2, lay.ff_b2, t.gelu(linear(t, lay.ff_w1, lay.ff_b1, n)));
            tok[i] = t.add(tok[i], maybe_drop(t, f, mode));
        }
    }
    Var z0 = t.layer_norm(tok[0], net.lnf_g, net.lnf_b);
    Var z1 = t.layer_norm(tok[1], net.lnf_g, net.lnf_b);
    return t.scale(t.add(z0, z1), 0.5);
}

PolicyLogits policy_logits(Tape& t, const NetVars& net, const AgentConfig& cfg, Var state,
                           FwdMode mode) {
    if (!net.is_policy) throw ConfigError("policy_logits on a value network");
    Var e = embed_state(t, net, cfg, state, mode);
    PolicyLogits out;
    out.u = head_logits(t, net.head_u, e);
    out.k = head_logits(t, net.head_k, e);
    out.q = head_logits(t, net.head_q, e);
    return out;
}

ActionDistribution policy_forward(Tape& t, const NetVars& net, const AgentConfig& cfg,
                                  const env::MdpState& s, FwdMode mode) {
    Var state = t.constant(s.v);
    PolicyLogits logits = policy_logits(t, net, cfg, state, mode);
    ActionDistribution dist;
    dist.logit_u = t.val(logits.u);
    dist.logit_k = t.val(logits.k);
    dist.logit_q = t.val(logits.q);
    dist.p_u = t.val(t.softmax(logits.u));
    dist.p_k = t.val(t.softmax(logits.k));
    dist.p_q = t.val(t.softmax(logits.q));
    return dist;
}

Var value_forward(Tape& t, const NetVars& net, const AgentConfig& cfg, Var state, FwdMode mode) {
    if (net.is_policy) throw ConfigError("value_forward on a policy network");
    Var e = embed_state(t, net, cfg, state, mode);
    return t.index(head_logits(t, net.head_v, e), 0);
}

ActionDistribution ActionDistribution::from_probs(Tensor pu, Tensor pk, Tensor pq) {
    ActionDistribution d;
    auto to_logits = [](const Tensor& p) {
        Tensor l = Tensor::zeros(p.shape());
        for (int i = 0; i < p.size(); ++i) l[i] = std::log(p[i]);
        return l;
    };
    d.logit_u = to_logits(pu);
    d.logit_k = to_logits(pk);
    d.logit_q = to_logits(pq);
    d.p_u = std::move(pu);
    d.p_k = std::move(pk);
    d.p_q = std::move(pq);
    return d;
}

double log_prob_from_logits(const Tensor& logits, int idx) {
    if (idx < 0 || idx >= logits.size()) throw ShapeError("log_prob: action index out of range");
    double mx = logits[0];
    for (int i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    double s = 0.0;
    for (int i = 0; i < logits.size(); ++i) s += std::exp(logits[i] - mx);
    const double lse = mx + std::log(s);
    return logits[idx] - lse;
}

std::pair<env::Action, double> sample_action(const ActionDistribution& dist, Rng& rng) {
    env::Action a;
    a.u = rng.categorical({dist.p_u.data(), static_cast<size_t>(dist.p_u.size())});
    a.k = rng.categorical({dist.p_k.data(), static_cast<size_t>(dist.p_k.size())});
    a.q = rng.categorical({dist.p_q.data(), static_cast<size_t>(dist.p_q.size())});
    return {a, log_prob(dist, a)};
}

env::Action greedy_action(const ActionDistribution& dist) {
    auto argmax = [](const Tensor& p) {
        int best = 0;
        for (int i = 1; i < p.size(); ++i) {
            if (p[i] > p[best]) best = i;
        }
        return best;
    };
    env::Action a;
    a.u = argmax(dist.p_u);
    a.k = argmax(dist.p_k);
    a.q = argmax(dist.p_q);
    return a;
}

double log_prob(const ActionDistribution& dist, const env::Action& a) {
    return log_prob_from_logits(dist.logit_u, a.u) + log_prob_from_logits(dist.logit_k, a.k) +
           log_prob_from_logits(dist.logit_q, a.q);
}

Var log_prob_var(Tape& t, const PolicyLogits& logits, const env::Action& a) {
    Var lp_u = t.sub(t.index(logits.u, a.u), t.logsumexp(logits.u));
    Var lp_k = t.sub(t.index(logits.k, a.k), t.logsumexp(logits.k));
    Var lp_q = t.sub(t.index(logits.q, a.q), t.logsumexp(logits.q));
    return t.add(t.add(lp_u, lp_k), lp_q);
}

PolicyEvaluator::PolicyEvaluator(const AgentConfig& cfg, ParamStore& store)
    : cfg_(cfg), store_(&store) {}

ActionDistribution PolicyEvaluator::dist(const env::MdpState& s) {
    tape_.reset();
    NetVars net = bind_policy(tape_, *store_, cfg_);
    return policy_forward(tape_, net, cfg_, s, {});
}

ValueEvaluator::ValueEvaluator(const AgentConfig& cfg, ParamStore& store)
    : cfg_(cfg), store_(&store) {}

double ValueEvaluator::value(const env::MdpState& s) {
    tape_.reset();
    NetVars net = bind_value(tape_, *store_, cfg_);
    Var v = value_forward(tape_, net, cfg_, tape_.constant(s.v), {});
    return tape_.scalar(v);
}

}  // namespace rre::agent
