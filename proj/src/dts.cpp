#include "rre/dts.hpp"

#include <algorithm>
#include <cmath>

#include "rre/errors.hpp"

namespace rre::dts {

void DtsConfig::validate() const {
    if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must be in [0,1]");
    if (!(lambda_min > 0.0) || lambda_max < lambda_min) {
        throw ConfigError("need 0 < lambda_min <= lambda_max");
    }
    if (omega < 1) throw ConfigError("omega must be a positive integer");
    if (mu < 0.0 || mu >= 1.0) throw ConfigError("mu must be in [0,1)");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0,1]");
    if (minibatch < 1) throw ConfigError("minibatch size must be positive");
}

double td_error(const ValueFn& value, const Transition& t, double gamma) {
    const double v_next = t.terminal ? 0.0 : value(t.s_next);
    return t.r + gamma * v_next - value(t.s);
}

double forecast_error_metric(const Tensor& y_hat, const Tensor& y, double alpha) {
    if (!y_hat.same_shape(y)) throw ShapeError("forecast error: length mismatch");
    double l1 = 0.0;
    for (int i = 0; i < y.size(); ++i) l1 += std::abs(y_hat[i] - y[i]);
    return 1.0 - alpha / (alpha + l1);
}

double priority(double delta, double delta_max, double e, double beta) {
    const double td_term = delta_max > 0.0 ? std::abs(delta) / delta_max : 0.0;
    return beta * td_term + (1.0 - beta) * e;
}

double effective_temperature(double p, int g, int big_g, const DtsConfig& cfg) {
    if (g < 1 || g > big_g) throw ConfigError("epoch g outside [1, G]");
    const double lambda = cfg.lambda_min + p * (cfg.lambda_max - cfg.lambda_min);
    const double frac = static_cast<double>(g) / static_cast<double>(big_g);
    const double decay = std::pow(cfg.lambda_min / lambda, frac);
    const double cyc = 1.0 + cfg.mu * std::sin(2.0 * M_PI * cfg.omega * frac);
    return lambda * decay * cyc;
}

std::vector<double> sampling_distribution(std::span<const double> priorities,
                                          std::span<const double> temperatures) {
    const size_t m = priorities.size();
    if (m == 0) throw BufferError("sampling distribution over empty buffer");
    if (temperatures.size() != m) throw ShapeError("priorities/temperatures length mismatch");
    std::vector<double> logits(m);
    for (size_t i = 0; i < m; ++i) {
        if (!(temperatures[i] > 0.0)) throw DistributionError("non-positive temperature");
        logits[i] = priorities[i] / temperatures[i];
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (size_t i = 0; i < m; ++i) {
        logits[i] = std::exp(logits[i] - mx);
        denom += logits[i];
    }
    for (auto& v : logits) v /= denom;
    return logits;
}

std::vector<int> sample_minibatch(size_t buffer_size, std::span<const double> probs,
                                  int m_check, Rng& rng) {
    if (buffer_size == 0) throw BufferError("sample from empty buffer");
    if (probs.size() != buffer_size) throw ShapeError("probability vector length mismatch");
    // cumulative distribution, then binary search per draw
    std::vector<double> cdf(buffer_size);
    double acc = 0.0;
    for (size_t i = 0; i < buffer_size; ++i) {
        acc += probs[i];
        cdf[i] = acc;
    }
    std::vector<int> out(static_cast<size_t>(m_check));
    for (int d = 0; d < m_check; ++d) {
        const double u = rng.uniform() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        out[static_cast<size_t>(d)] = static_cast<int>(it - cdf.begin());
    }
    return out;
}

namespace {
bool same_vector(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}
}  // namespace

Pass compute_pass(const ReplayBuffer& buffer, const ValueFn& value, int g, int big_g,
                  const DtsConfig& cfg) {
    const size_t m = buffer.size();
    if (m == 0) throw BufferError("compute_pass on empty buffer");
    Pass pass;
    pass.delta.resize(m);
    pass.error.resize(m);
    pass.prio.resize(m);
    pass.temp.resize(m);

    // One value evaluation per transition; a non-terminal next state is the
    // following transition's state whenever the buffer keeps rollout order.
    pass.vs.resize(m);
    pass.v_next.resize(m);
    for (size_t i = 0; i < m; ++i) pass.vs[i] = value(buffer[i].s);
    for (size_t i = 0; i < m; ++i) {
        const Transition& t = buffer[i];
        double v_next = 0.0;
        if (!t.terminal) {
            if (i + 1 < m && same_vector(t.s_next.v, buffer[i + 1].s.v)) {
                v_next = pass.vs[i + 1];
            } else {
                v_next = value(t.s_next);
            }
        }
        pass.v_next[i] = v_next;
        pass.delta[i] = t.r + cfg.gamma * v_next - pass.vs[i];
        pass.error[i] = forecast_error_metric(t.y_hat, t.y, cfg.alpha);
    }
    pass.delta_max = 0.0;
    for (double d : pass.delta) pass.delta_max = std::max(pass.delta_max, std::abs(d));
    for (size_t i = 0; i < m; ++i) {
        pass.prio[i] = priority(pass.delta[i], pass.delta_max, pass.error[i], cfg.beta);
        pass.temp[i] = effective_temperature(pass.prio[i], g, big_g, cfg);
    }
    pass.prob = sampling_distribution(pass.prio, pass.temp);
    return pass;
}

}  // namespace rre::dts
