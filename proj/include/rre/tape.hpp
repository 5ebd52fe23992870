#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "rre/param_store.hpp"
#include "rre/rng.hpp"
#include "rre/tensor.hpp"

namespace rre {

// Handle to a tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape. Every forward computation in the project runs
// through a Tape so training and inference share one arithmetic path; with
// gradients disabled the tape only evaluates. reset() keeps node storage so
// steady-state forwards allocate nothing.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_(grad_enabled) {}

    bool grad_enabled() const { return grad_; }
    void reset();
    int node_count() const { return used_; }

    // --- graph entry points -------------------------------------------------
    Var constant(const Tensor& t);  // no gradient tracked (copies)
    Var constant_scalar(double v);
    // Like constant() but keeps a pointer instead of copying; the tensor must
    // outlive every use of this tape generation (including backward).
    Var constant_ref(const Tensor& t);
    Var leaf(const Tensor& t);      // gradient-tracked, not store-bound
    // Gradient-tracked leaf referencing store[name] (no copy; the store must
    // stay alive and unmodified for this tape generation). Repeated calls with
    // the same name return the same node. Parameter names are globally unique
    // (enforced by the "env." / "policy." / "value." prefixes).
    Var param(ParamStore& store, const std::string& name);

    // --- elementwise and linear ops ----------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var smul(Var a, Var s);    // tensor a times scalar node s
    Var matvec(Var w, Var x);  // (r x c) * (c) -> (r)
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var gelu(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var square(Var a);
    Var minimum(Var a, Var b);
    Var clamp(Var a, double lo, double hi);
    Var dropout(Var a, double rate, Rng& rng);  // inverted dropout; rate 0 is identity

    // --- reductions / structure ---------------------------------------------
    Var sum(Var a);
    Var mean(Var a);
    Var dot(Var a, Var b);
    Var softmax(Var a);    // vector -> simplex
    Var logsumexp(Var a);  // vector -> scalar, max-subtracted
    Var concat(Var a, Var b);  // rank 0 or 1 inputs, flattened
    Var slice(Var a, int offset, int len);
    Var index(Var a, int i);  // vector element -> scalar
    Var layer_norm(Var x, Var gain, Var bias);  // eps = 1e-5

    // --- access ---------------------------------------------------------------
    const Tensor& val(Var v) const;
    double scalar(Var v) const;

    // --- gradients -------------------------------------------------------------
    // Backprop from a scalar loss. May be called once per reset cycle.
    void backward(Var loss);
    const Tensor& grad(Var v) const;  // zero tensor if the node got no gradient
    // Gradients for every parameter of `store` (zeros for untouched ones).
    std::map<std::string, Tensor> param_grads(const ParamStore& store) const;

private:
    enum class Op : unsigned char {
        Leaf, Const, Add, Sub, Mul, Scale, SMul, MatVec, Tanh, Sigmoid, Gelu, Exp, Log,
        Square, Minimum, Clamp, Dropout, Sum, Mean, Dot, Softmax, LogSumExp,
        Concat, Slice, Index, LayerNorm,
    };

    struct Node {
        Op op = Op::Const;
        int in[3] = {-1, -1, -1};
        bool track = false;   // participates in backprop
        double a = 0.0;       // op payload (scale factor, clamp lo, offset, ...)
        double b = 0.0;
        Tensor val;
        const Tensor* ext = nullptr;  // external value for ref-bound nodes
        Tensor aux;   // dropout mask
        Tensor grad;  // allocated during backward
        bool grad_set = false;
        const ParamStore* bound_store = nullptr;
        std::string bound_name;
    };

    Node& fresh(Op op, int i0, int i1, int i2);
    const Tensor& v_of(const Node& n) const { return n.ext ? *n.ext : n.val; }
    Tensor& out(Node& n, const std::vector<int>& shape);
    void accum(int id, const double* g, int n);
    Tensor& grad_buf(Node& n);
    void check_node(const Node& n, int id) const;
    static const char* op_name(Op op);

    bool grad_ = true;
    int used_ = 0;
    bool backward_done_ = false;
    // deque: references to nodes stay valid while the tape grows
    std::deque<Node> nodes_;
    std::unordered_map<std::string, int> param_cache_;
    Tensor zero_grad_;  // shared empty-grad return
};

// Runs `fn` on a fresh tape, backprops the scalar it returns, and reports the
// loss plus a gradient for every parameter in `store` (zeros if untouched).
struct EvalResult {
    double loss = 0.0;
    std::map<std::string, Tensor> grads;
};
EvalResult evaluate_with_gradients(ParamStore& store, const std::function<Var(Tape&)>& fn);

}  // namespace rre
