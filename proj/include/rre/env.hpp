#pragma once

#include <span>
#include <string>
#include <vector>

#include "rre/param_store.hpp"
#include "rre/tape.hpp"
#include "rre/tensor.hpp"

namespace rre::env {

enum class CellKind { Rnn, Mgu, Gru, Lstm };

CellKind cell_kind_from_string(const std::string& s);
std::string to_string(CellKind kind);

struct EnvConfig {
    CellKind cell = CellKind::Gru;
    int d_in = 1;
    int d_h = 32;
    int horizon = 1;      // H
    int skip_window = 8;  // K
    double alpha = 1.0;   // reward sensitivity
    double c = 0.5;       // reward threshold

    void validate() const;
};

// Creates the forecaster parameters ("env.*"). The skip projection starts at
// zero so the augmented cell is exactly the plain cell until training moves it.
ParamStore init_env_params(const EnvConfig& cfg, Rng& rng);

// Ternary per-step decision: input gate, skip choice (0 = none, else the
// candidate h_{t-k-1}), and supervision flag.
struct Action {
    int u = 1;
    int k = 0;
    int q = 1;
};

struct MdpState {
    Tensor v;  // concat(h_prev, x_t), length d_h + d_in
};

MdpState make_state(const Tensor& h_prev, const Tensor& x_t);

// Recurrent state carrier for one rollout: the ring of the last K+1 hidden
// outputs (zero vectors standing in for steps that never happened), the LSTM
// cell memory, and the 1-based step counter. Vars reference the tape passed
// to reset(); call reset() again after the tape is reset.
class HiddenHistory {
public:
    HiddenHistory(int d_h, int skip_window);

    void reset(Tape& tape);
    int step() const { return t_; }

    Var h_prev() const;
    Var cell_mem() const;

    // Candidate h_{t-k-1} for k in [1, K]; the zero vector when that step
    // does not exist. Throws ActionError for k outside [1, K].
    Var candidate(int k) const;

    // Number of zero candidates at the current step: clamp(K - t + 2, 0, K).
    int zero_pad_count() const;

    void advance(Var h_t, Var c_t);

private:
    int d_h_;
    int K_;
    int t_ = 1;
    Var zero_;
    Var c_;
    std::vector<Var> ring_;  // slot j % (K+1) holds h_j
};

// Tape-bound parameter handles; rebind after each tape reset.
struct EnvVars {
    CellKind cell;
    int d_h = 0;
    Var w_skip, out_w, out_b;
    Var wx, uh, b;                                   // rnn
    Var wx_f, uh_f, b_f, wx_n, uh_n, b_n;            // mgu / gru candidate
    Var wx_z, uh_z, b_z, wx_r, uh_r, b_r;            // gru gates
    Var wx_i, uh_i, b_i, wx_o, uh_o, b_o, wx_g, uh_g, b_g;  // lstm
};

EnvVars bind_env(Tape& tape, ParamStore& params, const EnvConfig& cfg);

struct CellOut {
    Var h;
    Var c;  // LSTM cell memory; mirrors h for other kinds
};

// One cell update where the recurrent drive is h_prev + W_skip * h_skip.
// With h_skip = 0 (or W_skip = 0) this is exactly the standard cell.
//   rnn:  h = tanh(Wx x + U d + b)
//   mgu:  f = s(Wf x + Uf d + bf); n = tanh(Wn x + f . (Un d) + bn)
//         h = (1-f) . d + f . n
//   gru:  z, r gates; n = tanh(Wn x + r . (Un d) + bn); h = (1-z) . d + z . n
//   lstm: i, f, o, g from x and d; c = f . c_prev + i . g; h = o . tanh(c)
CellOut cell_forward(Tape& tape, const EnvVars& p, Var x_gated, Var h_prev, Var h_skip,
                     Var c_prev);

// Linear output head projecting h to the H-step prediction.
Var output_layer(Tape& tape, const EnvVars& p, Var h);

// r = q * (alpha / (alpha + |y_hat - y|_1) - c); the L1 term is the raw sum
// of absolute errors over the H outputs.
double reward(const Tensor& y_hat, const Tensor& y, int q, double alpha, double c);

struct StepResult {
    Var h;
    Var y_hat;
    double r = 0.0;
    MdpState next;
};

// One environment step: gate the input, resolve the skip candidate, advance
// the cell and the history, emit the prediction and (when y_t is given) the
// reward. x_next may be null at the terminal step (the stored next state then
// uses a zero input slot).
StepResult env_step(Tape& tape, const EnvVars& p, const EnvConfig& cfg, HiddenHistory& hist,
                    const Tensor& x_t, const Action& action, const Tensor* y_t,
                    const Tensor* x_next);

// (1/|q|_1) sum_t q_t * mse(pred_t, target_t). If every q_t is zero, falls
// back to supervising the last step and counts a degenerate-mask event.
Var masked_training_loss(Tape& tape, std::span<const Var> preds, const Tensor& targets,
                         std::span<const int> q);

long degenerate_mask_events();

}  // namespace rre::env
