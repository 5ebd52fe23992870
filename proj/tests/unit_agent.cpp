#include <doctest.h>

#include <cmath>
#include <set>

#include "fd_check.hpp"
#include "rre/agent.hpp"
#include "rre/errors.hpp"

using namespace rre;
using namespace rre::agent;

namespace {

AgentConfig tiny_cfg(int d_h = 3, int d_in = 2, int K = 3) {
    AgentConfig cfg;
    cfg.d_e = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff = 8;
    cfg.dropout = 0.1;
    cfg.skip_window = K;
    cfg.d_h = d_h;
    cfg.d_in = d_in;
    return cfg;
}

env::MdpState random_state(const AgentConfig& cfg, Rng& rng) {
    Tensor v = Tensor::zeros({cfg.d_h + cfg.d_in});
    for (int i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1, 1);
    return env::MdpState{std::move(v)};
}

}  // namespace

TEST_CASE("policy and value parameter names are disjoint") {
    AgentConfig cfg = tiny_cfg();
    Rng rng(1);
    AgentParams params = init_agent(cfg, rng);
    std::set<std::string> policy_names;
    for (const auto& n : params.policy.names()) policy_names.insert(n);
    for (const auto& n : params.value.names()) {
        CHECK(policy_names.count(n) == 0);
    }
    CHECK(params.policy.count() > 0);
    CHECK(params.value.count() > 0);
}

TEST_CASE("embedding shape contract and determinism without dropout") {
    for (int d_h : {2, 5}) {
        for (int d_in : {1, 4}) {
            AgentConfig cfg = tiny_cfg(d_h, d_in);
            Rng rng(7);
            AgentParams params = init_agent(cfg, rng);
            Rng srng(8);
            env::MdpState s = random_state(cfg, srng);

            Tape tape(false);
            NetVars net = bind_policy(tape, params.policy, cfg);
            Var e1 = embed_state(tape, net, cfg, tape.constant(s.v), {});
            CHECK(tape.val(e1).size() == cfg.d_e);

            Var e2 = embed_state(tape, net, cfg, tape.constant(s.v), {});
            for (int i = 0; i < cfg.d_e; ++i) CHECK(tape.val(e1)[i] == tape.val(e2)[i]);
        }
    }
}

TEST_CASE("token permutation with zeroed type embeddings pools identically") {
    // d_h == d_in so the two projections can be swapped
    AgentConfig cfg = tiny_cfg(3, 3);
    Rng rng(42);
    AgentParams a = init_agent(cfg, rng);
    a.policy.value("policy.embed.type0").fill(0.0);
    a.policy.value("policy.embed.type1").fill(0.0);

    Rng rng2(42);
    AgentParams b = init_agent(cfg, rng2);
    b.policy.value("policy.embed.type0").fill(0.0);
    b.policy.value("policy.embed.type1").fill(0.0);
    // swap the token projections so b reads the swapped state halves
    Tensor tmp = b.policy.value("policy.embed.h_proj");
    b.policy.value("policy.embed.h_proj") = b.policy.value("policy.embed.x_proj");
    b.policy.value("policy.embed.x_proj") = tmp;

    Rng srng(5);
    env::MdpState s = random_state(cfg, srng);
    Tensor swapped = Tensor::zeros({6});
    for (int i = 0; i < 3; ++i) swapped[i] = s.v[3 + i];
    for (int i = 0; i < 3; ++i) swapped[3 + i] = s.v[i];

    Tape ta(false), tb(false);
    NetVars na = bind_policy(ta, a.policy, cfg);
    NetVars nb = bind_policy(tb, b.policy, cfg);
    Var ea = embed_state(ta, na, cfg, ta.constant(s.v), {});
    Var eb = embed_state(tb, nb, cfg, tb.constant(swapped), {});
    for (int i = 0; i < cfg.d_e; ++i) CHECK(ta.val(ea)[i] == tb.val(eb)[i]);
}

TEST_CASE("zero head weights give uniform action distributions") {
    AgentConfig cfg = tiny_cfg();
    Rng rng(9);
    AgentParams params = init_agent(cfg, rng);
    for (const char* head : {"u", "k", "q"}) {
        params.policy.value(std::string("policy.head_") + head + ".1.w").fill(0.0);
        params.policy.value(std::string("policy.head_") + head + ".1.b").fill(0.0);
        params.policy.value(std::string("policy.head_") + head + ".2.w").fill(0.0);
        params.policy.value(std::string("policy.head_") + head + ".2.b").fill(0.0);
    }
    Rng srng(3);
    env::MdpState s = random_state(cfg, srng);
    Tape tape(false);
    NetVars net = bind_policy(tape, params.policy, cfg);
    ActionDistribution dist = policy_forward(tape, net, cfg, s, {});
    CHECK(dist.p_u[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(dist.p_u[1] == doctest::Approx(0.5).epsilon(1e-15));
    for (int i = 0; i < dist.p_k.size(); ++i) {
        CHECK(dist.p_k[i] == doctest::Approx(1.0 / (cfg.skip_window + 1)).epsilon(1e-12));
    }
    CHECK(dist.p_q[0] == doctest::Approx(0.5).epsilon(1e-15));

    double su = 0, sk = 0, sq = 0;
    for (int i = 0; i < 2; ++i) su += dist.p_u[i];
    for (int i = 0; i < dist.p_k.size(); ++i) sk += dist.p_k[i];
    for (int i = 0; i < 2; ++i) sq += dist.p_q[i];
    CHECK(std::abs(su - 1.0) < 1e-12);
    CHECK(std::abs(sk - 1.0) < 1e-12);
    CHECK(std::abs(sq - 1.0) < 1e-12);
}

TEST_CASE("softmax heads are shift invariant") {
    Tensor logits = Tensor::vector({0.3, -1.2, 2.0, 0.0});
    Tensor shifted = Tensor::zeros({4});
    for (int i = 0; i < 4; ++i) shifted[i] = logits[i] + 7.5;
    Tape t(false);
    const Tensor& p1 = t.val(t.softmax(t.constant(logits)));
    const Tensor& p2 = t.val(t.softmax(t.constant(shifted)));
    for (int i = 0; i < 4; ++i) CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
}

TEST_CASE("sampling, greedy, and log-prob semantics") {
    // degenerate distribution pins the action and gives log-prob 0
    ActionDistribution dist = ActionDistribution::from_probs(
        Tensor::vector({1.0, 0.0}), Tensor::vector({0, 0, 0, 1.0}), Tensor::vector({0.0, 1.0}));
    Rng rng(5);
    auto [a, lp] = sample_action(dist, rng);
    CHECK(a.u == 0);
    CHECK(a.k == 3);
    CHECK(a.q == 1);
    CHECK(lp == 0.0);

    env::Action g = greedy_action(dist);
    CHECK(g.u == 0);
    CHECK(g.k == 3);
    CHECK(g.q == 1);

    // greedy tie-break picks the lowest index
    ActionDistribution tie = ActionDistribution::from_probs(
        Tensor::vector({0.5, 0.5}), Tensor::vector({0.25, 0.25, 0.25, 0.25}),
        Tensor::vector({0.5, 0.5}));
    env::Action gt = greedy_action(tie);
    CHECK(gt.u == 0);
    CHECK(gt.k == 0);
    CHECK(gt.q == 0);

    // greedy is invariant to positive rescaling of the logits
    Tensor l1 = Tensor::vector({0.2, 1.4, -0.3});
    Tensor l2 = Tensor::zeros({3});
    for (int i = 0; i < 3; ++i) l2[i] = 3.0 * l1[i];
    Tape t(false);
    ActionDistribution d1 = ActionDistribution::from_probs(
        t.val(t.softmax(t.constant(l1))), Tensor::vector({1.0}), Tensor::vector({1.0}));
    ActionDistribution d2 = ActionDistribution::from_probs(
        t.val(t.softmax(t.constant(l2))), Tensor::vector({1.0}), Tensor::vector({1.0}));
    CHECK(greedy_action(d1).u == greedy_action(d2).u);

    // sampled log-probs are never positive
    AgentConfig cfg = tiny_cfg();
    Rng prng(11);
    AgentParams params = init_agent(cfg, prng);
    Tape tape(false);
    NetVars net = bind_policy(tape, params.policy, cfg);
    Rng srng(100);
    for (int i = 0; i < 50; ++i) {
        tape.reset();
        net = bind_policy(tape, params.policy, cfg);
        env::MdpState s = random_state(cfg, srng);
        ActionDistribution d = policy_forward(tape, net, cfg, s, {});
        auto [act, lgp] = sample_action(d, srng);
        (void)act;
        CHECK(lgp <= 0.0);
    }
}

TEST_CASE("empirical head frequency within the binomial bound") {
    ActionDistribution dist = ActionDistribution::from_probs(
        Tensor::vector({0.3, 0.7}), Tensor::vector({1.0}), Tensor::vector({1.0}));
    Rng rng(777);
    int ones = 0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        ones += sample_action(dist, rng).first.u == 1 ? 1 : 0;
    }
    const double freq = static_cast<double>(ones) / n;
    CHECK(freq > 0.7 - 0.007);
    CHECK(freq < 0.7 + 0.007);
}

TEST_CASE("joint log-prob normalizes over the full ternary support") {
    AgentConfig cfg = tiny_cfg();
    Rng rng(21);
    AgentParams params = init_agent(cfg, rng);
    Rng srng(22);
    env::MdpState s = random_state(cfg, srng);
    Tape tape(false);
    NetVars net = bind_policy(tape, params.policy, cfg);
    ActionDistribution dist = policy_forward(tape, net, cfg, s, {});

    double total = 0.0;
    for (int u = 0; u < 2; ++u) {
        for (int k = 0; k <= cfg.skip_window; ++k) {
            for (int q = 0; q < 2; ++q) {
                total += std::exp(log_prob(dist, {u, k, q}));
            }
        }
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("value head outputs a finite scalar; zero weights give the bias") {
    AgentConfig cfg = tiny_cfg();
    Rng rng(31);
    AgentParams params = init_agent(cfg, rng);
    Rng srng(32);
    env::MdpState s = random_state(cfg, srng);

    ValueEvaluator eval(cfg, params.value);
    const double v = eval.value(s);
    CHECK(std::isfinite(v));

    params.value.value("value.head_v.2.w").fill(0.0);
    params.value.value("value.head_v.2.b").fill(0.75);
    CHECK(eval.value(s) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("policy-head and value gradients match finite differences") {
    AgentConfig cfg = tiny_cfg();
    Rng rng(41);
    AgentParams params = init_agent(cfg, rng);
    Rng srng(42);
    env::MdpState s = random_state(cfg, srng);
    const env::Action action{1, 2, 0};

    auto policy_graph = [&](Tape& t) {
        NetVars net = bind_policy(t, params.policy, cfg);
        PolicyLogits logits = policy_logits(t, net, cfg, t.constant(s.v), {});
        return log_prob_var(t, logits, action);
    };
    auto pres = evaluate_with_gradients(params.policy, policy_graph);
    auto peval = [&] {
        Tape t(false);
        return t.scalar(policy_graph(t));
    };
    auto pfd = test::finite_difference_grads(params.policy, peval);
    CHECK(test::max_rel_error(pres.grads, pfd) < 1e-4);

    auto value_graph = [&](Tape& t) {
        NetVars net = bind_value(t, params.value, cfg);
        return value_forward(t, net, cfg, t.constant(s.v), {});
    };
    auto vres = evaluate_with_gradients(params.value, value_graph);
    auto veval = [&] {
        Tape t(false);
        return t.scalar(value_graph(t));
    };
    auto vfd = test::finite_difference_grads(params.value, veval);
    CHECK(test::max_rel_error(vres.grads, vfd) < 1e-4);
}

TEST_CASE("dropout draws change activations only when enabled") {
    AgentConfig cfg = tiny_cfg();
    Rng rng(51);
    AgentParams params = init_agent(cfg, rng);
    Rng srng(52);
    env::MdpState s = random_state(cfg, srng);

    Tape tape(true);
    NetVars net = bind_policy(tape, params.policy, cfg);
    Rng drop_rng(1);
    FwdMode train{0.5, &drop_rng};
    ActionDistribution d1 = policy_forward(tape, net, cfg, s, train);
    ActionDistribution d2 = policy_forward(tape, net, cfg, s, train);
    bool any_diff = false;
    for (int i = 0; i < d1.logit_u.size(); ++i) any_diff |= (d1.logit_u[i] != d2.logit_u[i]);
    CHECK(any_diff);

    ActionDistribution e1 = policy_forward(tape, net, cfg, s, {});
    ActionDistribution e2 = policy_forward(tape, net, cfg, s, {});
    for (int i = 0; i < e1.logit_u.size(); ++i) CHECK(e1.logit_u[i] == e2.logit_u[i]);
}
