#pragma once

#include <functional>
#include <span>
#include <vector>

#include "rre/agent.hpp"
#include "rre/env.hpp"
#include "rre/rng.hpp"
#include "rre/tensor.hpp"

namespace rre::dts {

// One MDP step as stored in the replay buffer. The log-probability under the
// collecting policy and the (prediction, target) pair are kept alongside the
// classic (s, a, r, s') tuple so sampling priorities and PPO ratios never
// need a second pass over the environment.
struct Transition {
    env::MdpState s;
    env::Action a;
    double old_log_prob = 0.0;
    double r = 0.0;
    env::MdpState s_next;
    Tensor y_hat;
    Tensor y;
    bool terminal = false;  // next-state value treated as 0
};

using ReplayBuffer = std::vector<Transition>;

struct DtsConfig {
    double beta = 0.5;        // priority blend between TD and forecast error
    double lambda_min = 0.1;  // temperature range
    double lambda_max = 2.0;
    double mu = 0.2;          // cyclical amplitude
    int omega = 2;            // cyclical frequency
    double alpha = 1.0;       // shared with the reward
    double gamma = 0.95;
    int minibatch = 64;  // M-check

    void validate() const;
};

using ValueFn = std::function<double(const env::MdpState&)>;

// delta = r + gamma * v(s') - v(s), with v(s') = 0 on terminal transitions.
double td_error(const ValueFn& value, const Transition& t, double gamma);

// E = 1 - alpha / (alpha + |y_hat - y|_1), bounded to [0, 1).
double forecast_error_metric(const Tensor& y_hat, const Tensor& y, double alpha);

// p = beta * |delta|/delta_max + (1-beta) * E. A zero delta_max (perfectly
// consistent value function) contributes 0 for the TD term.
double priority(double delta, double delta_max, double e, double beta);

// lambda = lambda_min + p (lambda_max - lambda_min), annealed toward
// lambda_min by epoch g of G with a sinusoidal modulation.
double effective_temperature(double p, int g, int big_g, const DtsConfig& cfg);

// Temperature-scaled softmax over p_m / lambda_m (max-subtracted).
std::vector<double> sampling_distribution(std::span<const double> priorities,
                                          std::span<const double> temperatures);

// m_check independent draws with replacement; returns buffer indices.
std::vector<int> sample_minibatch(size_t buffer_size, std::span<const double> probs,
                                  int m_check, Rng& rng);

// Per-transition diagnostics of one full pass (Algorithm steps: TD errors,
// forecast metric, priorities, temperatures, probabilities).
struct Pass {
    std::vector<double> delta;
    std::vector<double> error;
    std::vector<double> prio;
    std::vector<double> temp;
    std::vector<double> prob;
    std::vector<double> vs;      // v(s_m)
    std::vector<double> v_next;  // v(s_{m+1}), 0 on terminal transitions
    double delta_max = 0.0;
};

// Recomputes every quantity with the current value network. Exploits buffer
// layout (s_next of a non-terminal transition is the next transition's s) to
// evaluate the value network once per transition.
Pass compute_pass(const ReplayBuffer& buffer, const ValueFn& value, int g, int big_g,
                  const DtsConfig& cfg);

}  // namespace rre::dts
