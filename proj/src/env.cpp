#include "rre/env.hpp"

#include <atomic>
#include <cmath>

#include "rre/errors.hpp"
#include "rre/log.hpp"

namespace rre::env {

namespace {
std::atomic<long> g_degenerate_mask_events{0};
}

long degenerate_mask_events() { return g_degenerate_mask_events.load(); }

CellKind cell_kind_from_string(const std::string& s) {
    if (s == "rnn") return CellKind::Rnn;
    if (s == "mgu") return CellKind::Mgu;
    if (s == "gru") return CellKind::Gru;
    if (s == "lstm") return CellKind::Lstm;
    throw ConfigError("unknown cell kind: " + s);
}

std::string to_string(CellKind kind) {
    switch (kind) {
        case CellKind::Rnn: return "rnn";
        case CellKind::Mgu: return "mgu";
        case CellKind::Gru: return "gru";
        case CellKind::Lstm: return "lstm";
    }
    return "?";
}

void EnvConfig::validate() const {
    if (d_in <= 0 || d_h <= 0 || horizon <= 0) throw ConfigError("env dims must be positive");
    if (skip_window < 1) throw ConfigError("skip window K must be >= 1");
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("reward threshold c must be in (0,1)");
    if (!(alpha > 0.0)) throw ConfigError("reward sensitivity alpha must be positive");
}

ParamStore init_env_params(const EnvConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamStore store;
    auto gate = [&](const std::string& stem) {
        store.add("env." + stem + ".wx", uniform_fan_in({cfg.d_h, cfg.d_in}, cfg.d_in, rng));
        store.add("env." + stem + ".uh", uniform_fan_in({cfg.d_h, cfg.d_h}, cfg.d_h, rng));
        store.add("env." + stem + ".b", Tensor::zeros({cfg.d_h}));
    };
    switch (cfg.cell) {
        case CellKind::Rnn:
            gate("cell");
            break;
        case CellKind::Mgu:
            gate("f");
            gate("n");
            break;
        case CellKind::Gru:
            gate("z");
            gate("r");
            gate("n");
            break;
        case CellKind::Lstm:
            gate("i");
            gate("f");
            gate("o");
            gate("g");
            break;
    }
    store.add("env.w_skip", Tensor::zeros({cfg.d_h, cfg.d_h}));
    store.add("env.out.w", uniform_fan_in({cfg.horizon, cfg.d_h}, cfg.d_h, rng));
    store.add("env.out.b", Tensor::zeros({cfg.horizon}));
    return store;
}

MdpState make_state(const Tensor& h_prev, const Tensor& x_t) {
    h_prev.check_finite("make_state h_prev");
    x_t.check_finite("make_state x_t");
    std::vector<double> v;
    v.reserve(static_cast<size_t>(h_prev.size() + x_t.size()));
    for (int i = 0; i < h_prev.size(); ++i) v.push_back(h_prev[i]);
    for (int i = 0; i < x_t.size(); ++i) v.push_back(x_t[i]);
    return MdpState{Tensor::vector(std::move(v))};
}

HiddenHistory::HiddenHistory(int d_h, int skip_window) : d_h_(d_h), K_(skip_window) {
    if (K_ < 1) throw ActionError("skip window K must be >= 1");
    ring_.assign(static_cast<size_t>(K_ + 1), Var{});
}

void HiddenHistory::reset(Tape& tape) {
    t_ = 1;
    zero_ = tape.constant(Tensor::zeros({d_h_}));
    c_ = zero_;
    for (auto& v : ring_) v = zero_;
    ring_[0] = zero_;  // h_0
}

Var HiddenHistory::h_prev() const { return ring_[static_cast<size_t>((t_ - 1) % (K_ + 1))]; }

Var HiddenHistory::cell_mem() const { return c_; }

Var HiddenHistory::candidate(int k) const {
    if (k < 1 || k > K_) {
        throw ActionError("skip action k=" + std::to_string(k) + " outside [1," +
                          std::to_string(K_) + "]");
    }
    const int j = t_ - k - 1;
    if (j <= 0) return zero_;  // padded slot (h_0 itself is the zero vector)
    return ring_[static_cast<size_t>(j % (K_ + 1))];
}

int HiddenHistory::zero_pad_count() const {
    int n = K_ - t_ + 2;
    if (n < 0) n = 0;
    if (n > K_) n = K_;
    return n;
}

void HiddenHistory::advance(Var h_t, Var c_t) {
    ring_[static_cast<size_t>(t_ % (K_ + 1))] = h_t;
    c_ = c_t;
    ++t_;
}

EnvVars bind_env(Tape& tape, ParamStore& params, const EnvConfig& cfg) {
    EnvVars v;
    v.cell = cfg.cell;
    v.d_h = cfg.d_h;
    auto gate = [&](const std::string& stem, Var& wx, Var& uh, Var& b) {
        wx = tape.param(params, "env." + stem + ".wx");
        uh = tape.param(params, "env." + stem + ".uh");
        b = tape.param(params, "env." + stem + ".b");
    };
    switch (cfg.cell) {
        case CellKind::Rnn:
            gate("cell", v.wx, v.uh, v.b);
            break;
        case CellKind::Mgu:
            gate("f", v.wx_f, v.uh_f, v.b_f);
            gate("n", v.wx_n, v.uh_n, v.b_n);
            break;
        case CellKind::Gru:
            gate("z", v.wx_z, v.uh_z, v.b_z);
            gate("r", v.wx_r, v.uh_r, v.b_r);
            gate("n", v.wx_n, v.uh_n, v.b_n);
            break;
        case CellKind::Lstm:
            gate("i", v.wx_i, v.uh_i, v.b_i);
            gate("f", v.wx_f, v.uh_f, v.b_f);
            gate("o", v.wx_o, v.uh_o, v.b_o);
            gate("g", v.wx_g, v.uh_g, v.b_g);
            break;
    }
    v.w_skip = tape.param(params, "env.w_skip");
    v.out_w = tape.param(params, "env.out.w");
    v.out_b = tape.param(params, "env.out.b");
    return v;
}

namespace {

Var preact(Tape& t, Var wx, Var x, Var uh, Var d, Var b) {
    return t.add(t.add(t.matvec(wx, x), t.matvec(uh, d)), b);
}

// n = tanh(Wn x + gate . (Un d) + bn)
Var gated_candidate(Tape& t, Var wx, Var x, Var gate, Var uh, Var d, Var b) {
    return t.tanh(t.add(t.add(t.matvec(wx, x), t.mul(gate, t.matvec(uh, d))), b));
}

// (1 - gate) . d + gate . n
Var leak_mix(Tape& t, Var ones, Var gate, Var d, Var n) {
    return t.add(t.mul(t.sub(ones, gate), d), t.mul(gate, n));
}

}  // namespace

CellOut cell_forward(Tape& t, const EnvVars& p, Var x_gated, Var h_prev, Var h_skip,
                     Var c_prev) {
    const Var drive = t.add(h_prev, t.matvec(p.w_skip, h_skip));
    switch (p.cell) {
        case CellKind::Rnn: {
            Var h = t.tanh(preact(t, p.wx, x_gated, p.uh, drive, p.b));
            return {h, h};
        }
        case CellKind::Mgu: {
            Var ones = t.constant(Tensor::full({p.d_h}, 1.0));
            Var f = t.sigmoid(preact(t, p.wx_f, x_gated, p.uh_f, drive, p.b_f));
            Var n = gated_candidate(t, p.wx_n, x_gated, f, p.uh_n, drive, p.b_n);
            Var h = leak_mix(t, ones, f, drive, n);
            return {h, h};
        }
        case CellKind::Gru: {
            Var ones = t.constant(Tensor::full({p.d_h}, 1.0));
            Var z = t.sigmoid(preact(t, p.wx_z, x_gated, p.uh_z, drive, p.b_z));
            Var r = t.sigmoid(preact(t, p.wx_r, x_gated, p.uh_r, drive, p.b_r));
            Var n = gated_candidate(t, p.wx_n, x_gated, r, p.uh_n, drive, p.b_n);
            Var h = leak_mix(t, ones, z, drive, n);
            return {h, h};
        }
        case CellKind::Lstm: {
            Var i = t.sigmoid(preact(t, p.wx_i, x_gated, p.uh_i, drive, p.b_i));
            Var f = t.sigmoid(preact(t, p.wx_f, x_gated, p.uh_f, drive, p.b_f));
            Var o = t.sigmoid(preact(t, p.wx_o, x_gated, p.uh_o, drive, p.b_o));
            Var g = t.tanh(preact(t, p.wx_g, x_gated, p.uh_g, drive, p.b_g));
            Var c = t.add(t.mul(f, c_prev), t.mul(i, g));
            Var h = t.mul(o, t.tanh(c));
            return {h, c};
        }
    }
    throw ActionError("unreachable cell kind");
}

Var output_layer(Tape& t, const EnvVars& p, Var h) {
    return t.add(t.matvec(p.out_w, h), p.out_b);
}

double reward(const Tensor& y_hat, const Tensor& y, int q, double alpha, double c) {
    if (!y_hat.same_shape(y)) throw ShapeError("reward: prediction/target length mismatch");
    if (q == 0) return 0.0;
    double l1 = 0.0;
    for (int i = 0; i < y.size(); ++i) l1 += std::abs(y_hat[i] - y[i]);
    return q * (alpha / (alpha + l1) - c);
}

StepResult env_step(Tape& tape, const EnvVars& p, const EnvConfig& cfg, HiddenHistory& hist,
                    const Tensor& x_t, const Action& action, const Tensor* y_t,
                    const Tensor* x_next) {
    if (action.u != 0 && action.u != 1) throw ActionError("input gate u must be 0 or 1");
    if (action.q != 0 && action.q != 1) throw ActionError("output flag q must be 0 or 1");
    if (action.k < 0 || action.k > cfg.skip_window) {
        throw ActionError("skip action k=" + std::to_string(action.k) + " outside [0," +
                          std::to_string(cfg.skip_window) + "]");
    }
    const Var x = tape.constant(x_t);
    const Var x_gated = tape.scale(x, static_cast<double>(action.u));
    const Var h_skip = action.k == 0 ? tape.constant(Tensor::zeros({cfg.d_h}))
                                     : hist.candidate(action.k);
    CellOut cell = cell_forward(tape, p, x_gated, hist.h_prev(), h_skip, hist.cell_mem());
    StepResult out;
    out.h = cell.h;
    out.y_hat = output_layer(tape, p, cell.h);
    if (y_t) {
        out.r = reward(tape.val(out.y_hat), *y_t, action.q, cfg.alpha, cfg.c);
    }
    const Tensor& h_val = tape.val(cell.h);
    out.next = x_next ? make_state(h_val, *x_next) : make_state(h_val, Tensor::zeros({cfg.d_in}));
    hist.advance(cell.h, cell.c);
    return out;
}

Var masked_training_loss(Tape& tape, std::span<const Var> preds, const Tensor& targets,
                         std::span<const int> q) {
    const int T = static_cast<int>(preds.size());
    if (targets.rows() != T) throw ShapeError("masked loss: target row count mismatch");
    if (static_cast<int>(q.size()) != T) throw ShapeError("masked loss: q length mismatch");
    const int H = targets.cols();

    int selected = 0;
    for (int t = 0; t < T; ++t) selected += q[t] ? 1 : 0;

    std::vector<int> mask(q.begin(), q.end());
    if (selected == 0) {
        g_degenerate_mask_events.fetch_add(1);
        logging::info("all-zero q mask; supervising the last step");
        mask.assign(static_cast<size_t>(T), 0);
        mask[static_cast<size_t>(T - 1)] = 1;
        selected = 1;
    }

    Var acc{};
    bool first = true;
    for (int t = 0; t < T; ++t) {
        if (!mask[static_cast<size_t>(t)]) continue;
        std::vector<double> row(static_cast<size_t>(H));
        for (int h = 0; h < H; ++h) row[static_cast<size_t>(h)] = targets.at(t, h);
        Var target = tape.constant(Tensor::vector(std::move(row)));
        Var step_loss = tape.mean(tape.square(tape.sub(preds[static_cast<size_t>(t)], target)));
        acc = first ? step_loss : tape.add(acc, step_loss);
        first = false;
    }
    return tape.scale(acc, 1.0 / selected);
}

}  // namespace rre::env
