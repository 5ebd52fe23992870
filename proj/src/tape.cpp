#include "rre/tape.hpp"

#include <algorithm>
#include <cmath>

#include "rre/errors.hpp"

namespace rre {

namespace {
constexpr double kLnEps = 1e-5;  // layer-norm variance floor
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

const char* Tape::op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Const: return "const";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::SMul: return "smul";
        case Op::MatVec: return "matvec";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Gelu: return "gelu";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Square: return "square";
        case Op::Minimum: return "minimum";
        case Op::Clamp: return "clamp";
        case Op::Dropout: return "dropout";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Dot: return "dot";
        case Op::Softmax: return "softmax";
        case Op::LogSumExp: return "logsumexp";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Index: return "index";
        case Op::LayerNorm: return "layer_norm";
    }
    return "?";
}

void Tape::reset() {
    used_ = 0;
    backward_done_ = false;
    param_cache_.clear();
}

Tape::Node& Tape::fresh(Op op, int i0, int i1, int i2) {
    if (used_ == static_cast<int>(nodes_.size())) nodes_.emplace_back();
    Node& n = nodes_[static_cast<size_t>(used_)];
    ++used_;
    n.op = op;
    n.in[0] = i0;
    n.in[1] = i1;
    n.in[2] = i2;
    n.a = n.b = 0.0;
    n.grad_set = false;
    n.ext = nullptr;
    n.bound_store = nullptr;
    n.track = false;
    if (grad_) {
        for (int k = 0; k < 3; ++k) {
            if (n.in[k] >= 0 && nodes_[static_cast<size_t>(n.in[k])].track) n.track = true;
        }
    }
    return n;
}

Tensor& Tape::out(Node& n, const std::vector<int>& shape) {
    // size check matters: a default Tensor has shape {} but zero elements,
    // while a rank-0 scalar holds one
    if (n.val.shape() != shape || n.val.size() != shape_size(shape)) {
        n.val = Tensor::zeros(shape);
    }
    return n.val;
}

void Tape::check_node(const Node& n, int id) const {
    if (!v_of(n).all_finite()) {
        throw NumericalError(std::string("non-finite value from op '") + op_name(n.op) +
                             "' (node #" + std::to_string(id) + ")");
    }
}

const Tensor& Tape::val(Var v) const { return v_of(nodes_[static_cast<size_t>(v.id)]); }

double Tape::scalar(Var v) const {
    const Tensor& t = val(v);
    if (t.size() != 1) throw ShapeError("scalar() on non-scalar tape node");
    return t[0];
}

Var Tape::constant(const Tensor& t) {
    Node& n = fresh(Op::Const, -1, -1, -1);
    Tensor& o = out(n, t.shape());
    std::copy(t.data(), t.data() + t.size(), o.data());
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::constant_scalar(double v) {
    Node& n = fresh(Op::Const, -1, -1, -1);
    Tensor& o = out(n, {});
    o[0] = v;
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::constant_ref(const Tensor& t) {
    Node& n = fresh(Op::Const, -1, -1, -1);
    n.ext = &t;
    return {used_ - 1};
}

Var Tape::leaf(const Tensor& t) {
    Node& n = fresh(Op::Leaf, -1, -1, -1);
    Tensor& o = out(n, t.shape());
    std::copy(t.data(), t.data() + t.size(), o.data());
    n.track = grad_;
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::param(ParamStore& store, const std::string& name) {
    auto it = param_cache_.find(name);
    if (it != param_cache_.end()) return {it->second};
    Node& n = fresh(Op::Leaf, -1, -1, -1);
    n.ext = &store.value(name);
    n.track = grad_;
    n.bound_store = &store;
    n.bound_name = name;
    int id = used_ - 1;
    param_cache_.emplace(name, id);
    return {id};
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("add: shape mismatch");
    Node& n = fresh(Op::Add, a.id, b.id, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = ta[i] + tb[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("sub: shape mismatch");
    Node& n = fresh(Op::Sub, a.id, b.id, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = ta[i] - tb[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("mul: shape mismatch");
    Node& n = fresh(Op::Mul, a.id, b.id, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = ta[i] * tb[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::scale(Var a, double c) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Scale, a.id, -1, -1);
    n.a = c;
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = c * ta[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::smul(Var a, Var s) {
    const Tensor& ta = val(a);
    const Tensor& ts = val(s);
    if (ts.size() != 1) throw ShapeError("smul: scalar operand must have size 1");
    Node& n = fresh(Op::SMul, a.id, s.id, -1);
    Tensor& o = out(n, ta.shape());
    const double sv = ts[0];
    for (int i = 0; i < o.size(); ++i) o[i] = ta[i] * sv;
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::matvec(Var w, Var x) {
    const Tensor& tw = val(w);
    const Tensor& tx = val(x);
    if (tw.rank() != 2 || tx.rank() != 1 || tw.cols() != tx.size()) {
        throw ShapeError("matvec: shape mismatch " + shape_str(tw.shape()) + " * " +
                         shape_str(tx.shape()));
    }
    Node& n = fresh(Op::MatVec, w.id, x.id, -1);
    const int r = tw.rows();
    const int c = tw.cols();
    Tensor& o = out(n, {r});
    const double* wd = tw.data();
    const double* xd = tx.data();
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        const double* row = wd + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) s += row[j] * xd[j];
        o[i] = s;
    }
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::tanh(Var a) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Tanh, a.id, -1, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = std::tanh(ta[i]);
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::sigmoid(Var a) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Sigmoid, a.id, -1, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = 1.0 / (1.0 + std::exp(-ta[i]));
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::gelu(Var a) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Gelu, a.id, -1, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) {
        o[i] = 0.5 * ta[i] * (1.0 + std::erf(ta[i] * kInvSqrt2));
    }
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::exp(Var a) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Exp, a.id, -1, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = std::exp(ta[i]);
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::log(Var a) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Log, a.id, -1, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = std::log(ta[i]);
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::square(Var a) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Square, a.id, -1, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = ta[i] * ta[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::minimum(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("minimum: shape mismatch");
    Node& n = fresh(Op::Minimum, a.id, b.id, -1);
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = ta[i] <= tb[i] ? ta[i] : tb[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::clamp(Var a, double lo, double hi) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Clamp, a.id, -1, -1);
    n.a = lo;
    n.b = hi;
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = std::min(std::max(ta[i], lo), hi);
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw DistributionError("dropout rate must be < 1");
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Dropout, a.id, -1, -1);
    if (n.aux.shape() != ta.shape()) n.aux = Tensor::zeros(ta.shape());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (int i = 0; i < n.aux.size(); ++i) {
        n.aux[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    }
    Tensor& o = out(n, ta.shape());
    for (int i = 0; i < o.size(); ++i) o[i] = ta[i] * n.aux[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::sum(Var a) {
    const Tensor& ta = val(a);
    Node& n = fresh(Op::Sum, a.id, -1, -1);
    double s = 0.0;
    for (int i = 0; i < ta.size(); ++i) s += ta[i];
    Tensor& o = out(n, {});
    o[0] = s;
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::mean(Var a) {
    const Tensor& ta = val(a);
    const int m = ta.size();
    if (m == 0) throw ShapeError("mean of empty tensor");
    Node& n = fresh(Op::Mean, a.id, -1, -1);
    double s = 0.0;
    for (int i = 0; i < ta.size(); ++i) s += ta[i];
    Tensor& o = out(n, {});
    o[0] = s / m;
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::dot(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeError("dot: shape mismatch");
    Node& n = fresh(Op::Dot, a.id, b.id, -1);
    double s = 0.0;
    for (int i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
    Tensor& o = out(n, {});
    o[0] = s;
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::softmax(Var a) {
    const Tensor& ta = val(a);
    if (ta.size() == 0) throw ShapeError("softmax of empty tensor");
    Node& n = fresh(Op::Softmax, a.id, -1, -1);
    Tensor& o = out(n, ta.shape());
    double mx = ta[0];
    for (int i = 1; i < ta.size(); ++i) mx = std::max(mx, ta[i]);
    double denom = 0.0;
    for (int i = 0; i < ta.size(); ++i) {
        o[i] = std::exp(ta[i] - mx);
        denom += o[i];
    }
    for (int i = 0; i < o.size(); ++i) o[i] /= denom;
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::logsumexp(Var a) {
    const Tensor& ta = val(a);
    if (ta.size() == 0) throw ShapeError("logsumexp of empty tensor");
    Node& n = fresh(Op::LogSumExp, a.id, -1, -1);
    double mx = ta[0];
    for (int i = 1; i < ta.size(); ++i) mx = std::max(mx, ta[i]);
    double s = 0.0;
    for (int i = 0; i < ta.size(); ++i) s += std::exp(ta[i] - mx);
    Tensor& o = out(n, {});
    o[0] = mx + std::log(s);
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::concat(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() > 1 || tb.rank() > 1) throw ShapeError("concat expects scalars or vectors");
    Node& n = fresh(Op::Concat, a.id, b.id, -1);
    Tensor& o = out(n, {ta.size() + tb.size()});
    for (int i = 0; i < ta.size(); ++i) o[i] = ta[i];
    for (int i = 0; i < tb.size(); ++i) o[ta.size() + i] = tb[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::slice(Var a, int offset, int len) {
    const Tensor& ta = val(a);
    if (ta.rank() != 1 || offset < 0 || len < 0 || offset + len > ta.size()) {
        throw ShapeError("slice out of range");
    }
    Node& n = fresh(Op::Slice, a.id, -1, -1);
    n.a = offset;
    n.b = len;
    Tensor& o = out(n, {len});
    for (int i = 0; i < len; ++i) o[i] = ta[offset + i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::index(Var a, int i) {
    const Tensor& ta = val(a);
    if (i < 0 || i >= ta.size()) throw ShapeError("index out of range");
    Node& n = fresh(Op::Index, a.id, -1, -1);
    n.a = i;
    Tensor& o = out(n, {});
    o[0] = ta[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gain);
    const Tensor& tb = val(bias);
    if (tx.rank() != 1 || !tg.same_shape(tx) || !tb.same_shape(tx)) {
        throw ShapeError("layer_norm: shape mismatch");
    }
    Node& n = fresh(Op::LayerNorm, x.id, gain.id, bias.id);
    const int m = tx.size();
    double mu = 0.0;
    for (int i = 0; i < m; ++i) mu += tx[i];
    mu /= m;
    double var = 0.0;
    for (int i = 0; i < m; ++i) {
        const double d = tx[i] - mu;
        var += d * d;
    }
    var /= m;
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    n.a = mu;
    n.b = rstd;
    Tensor& o = out(n, tx.shape());
    for (int i = 0; i < m; ++i) o[i] = (tx[i] - mu) * rstd * tg[i] + tb[i];
    int id = used_ - 1;
    check_node(n, id);
    return {id};
}

Tensor& Tape::grad_buf(Node& n) {
    if (!n.grad_set) {
        const auto& shape = v_of(n).shape();
        if (n.grad.shape() != shape || n.grad.size() != shape_size(shape)) {
            n.grad = Tensor::zeros(shape);
        } else {
            n.grad.fill(0.0);
        }
        n.grad_set = true;
    }
    return n.grad;
}

void Tape::accum(int id, const double* g, int count) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.track) return;
    Tensor& gt = grad_buf(n);
    for (int i = 0; i < count; ++i) gt[i] += g[i];
}

void Tape::backward(Var loss) {
    if (!grad_) throw std::logic_error("backward() on a gradient-disabled tape");
    if (backward_done_) throw std::logic_error("backward() called twice without reset()");
    backward_done_ = true;
    Node& ln = nodes_[static_cast<size_t>(loss.id)];
    if (v_of(ln).size() != 1) throw ShapeError("backward: loss is not scalar");
    grad_buf(ln)[0] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad_set || !n.track) continue;
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::Add: {
                accum(n.in[0], g.data(), g.size());
                accum(n.in[1], g.data(), g.size());
                break;
            }
            case Op::Sub: {
                accum(n.in[0], g.data(), g.size());
                Node& nb = nodes_[static_cast<size_t>(n.in[1])];
                if (nb.track) {
                    Tensor& gb = grad_buf(nb);
                    for (int i = 0; i < g.size(); ++i) gb[i] -= g[i];
                }
                break;
            }
            case Op::Mul: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                Node& nb = nodes_[static_cast<size_t>(n.in[1])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const Tensor& vb = v_of(nb);
                    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
                }
                if (nb.track) {
                    Tensor& gb = grad_buf(nb);
                    const Tensor& va = v_of(na);
                    for (int i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
                }
                break;
            }
            case Op::Scale: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    for (int i = 0; i < g.size(); ++i) ga[i] += n.a * g[i];
                }
                break;
            }
            case Op::SMul: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                Node& ns = nodes_[static_cast<size_t>(n.in[1])];
                const double sv = v_of(ns)[0];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
                }
                if (ns.track) {
                    const Tensor& va = v_of(na);
                    double acc_s = 0.0;
                    for (int i = 0; i < g.size(); ++i) acc_s += g[i] * va[i];
                    grad_buf(ns)[0] += acc_s;
                }
                break;
            }
            case Op::MatVec: {
                Node& nw = nodes_[static_cast<size_t>(n.in[0])];
                Node& nx = nodes_[static_cast<size_t>(n.in[1])];
                const Tensor& vw = v_of(nw);
                const Tensor& vx = v_of(nx);
                const int r = vw.rows();
                const int c = vw.cols();
                if (nw.track) {
                    Tensor& gw = grad_buf(nw);
                    for (int i = 0; i < r; ++i) {
                        const double gi = g[i];
                        double* row = gw.data() + static_cast<size_t>(i) * c;
                        const double* xd = vx.data();
                        for (int j = 0; j < c; ++j) row[j] += gi * xd[j];
                    }
                }
                if (nx.track) {
                    Tensor& gx = grad_buf(nx);
                    const double* wd = vw.data();
                    for (int i = 0; i < r; ++i) {
                        const double gi = g[i];
                        const double* row = wd + static_cast<size_t>(i) * c;
                        for (int j = 0; j < c; ++j) gx[j] += gi * row[j];
                    }
                }
                break;
            }
            case Op::Tanh: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    for (int i = 0; i < g.size(); ++i) {
                        ga[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
                    }
                }
                break;
            }
            case Op::Sigmoid: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    for (int i = 0; i < g.size(); ++i) {
                        ga[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
                    }
                }
                break;
            }
            case Op::Gelu: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const Tensor& va = v_of(na);
                    for (int i = 0; i < g.size(); ++i) {
                        const double x = va[i];
                        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                        ga[i] += g[i] * (cdf + x * pdf);
                    }
                }
                break;
            }
            case Op::Exp: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * n.val[i];
                }
                break;
            }
            case Op::Log: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const Tensor& va = v_of(na);
                    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
                }
                break;
            }
            case Op::Square: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const Tensor& va = v_of(na);
                    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * 2.0 * va[i];
                }
                break;
            }
            case Op::Minimum: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                Node& nb = nodes_[static_cast<size_t>(n.in[1])];
                const Tensor& va = v_of(na);
                const Tensor& vb = v_of(nb);
                for (int i = 0; i < g.size(); ++i) {
                    if (va[i] <= vb[i]) {
                        if (na.track) grad_buf(na)[i] += g[i];
                    } else {
                        if (nb.track) grad_buf(nb)[i] += g[i];
                    }
                }
                break;
            }
            case Op::Clamp: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const Tensor& va = v_of(na);
                    for (int i = 0; i < g.size(); ++i) {
                        if (va[i] >= n.a && va[i] <= n.b) ga[i] += g[i];
                    }
                }
                break;
            }
            case Op::Dropout: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * n.aux[i];
                }
                break;
            }
            case Op::Sum: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    for (int i = 0; i < ga.size(); ++i) ga[i] += g[0];
                }
                break;
            }
            case Op::Mean: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const double gi = g[0] / v_of(na).size();
                    for (int i = 0; i < ga.size(); ++i) ga[i] += gi;
                }
                break;
            }
            case Op::Dot: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                Node& nb = nodes_[static_cast<size_t>(n.in[1])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const Tensor& vb = v_of(nb);
                    for (int i = 0; i < ga.size(); ++i) ga[i] += g[0] * vb[i];
                }
                if (nb.track) {
                    Tensor& gb = grad_buf(nb);
                    const Tensor& va = v_of(na);
                    for (int i = 0; i < gb.size(); ++i) gb[i] += g[0] * va[i];
                }
                break;
            }
            case Op::Softmax: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    double gy = 0.0;
                    for (int i = 0; i < g.size(); ++i) gy += g[i] * n.val[i];
                    Tensor& ga = grad_buf(na);
                    for (int i = 0; i < g.size(); ++i) {
                        ga[i] += n.val[i] * (g[i] - gy);
                    }
                }
                break;
            }
            case Op::LogSumExp: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const Tensor& va = v_of(na);
                    for (int i = 0; i < ga.size(); ++i) {
                        ga[i] += g[0] * std::exp(va[i] - n.val[0]);
                    }
                }
                break;
            }
            case Op::Concat: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                Node& nb = nodes_[static_cast<size_t>(n.in[1])];
                const int asz = v_of(na).size();
                accum(n.in[0], g.data(), asz);
                if (nb.track) {
                    Tensor& gb = grad_buf(nb);
                    for (int i = 0; i < gb.size(); ++i) gb[i] += g[asz + i];
                }
                break;
            }
            case Op::Slice: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) {
                    Tensor& ga = grad_buf(na);
                    const int off = static_cast<int>(n.a);
                    for (int i = 0; i < g.size(); ++i) ga[off + i] += g[i];
                }
                break;
            }
            case Op::Index: {
                Node& na = nodes_[static_cast<size_t>(n.in[0])];
                if (na.track) grad_buf(na)[static_cast<int>(n.a)] += g[0];
                break;
            }
            case Op::LayerNorm: {
                Node& nx = nodes_[static_cast<size_t>(n.in[0])];
                Node& ng = nodes_[static_cast<size_t>(n.in[1])];
                Node& nb = nodes_[static_cast<size_t>(n.in[2])];
                const Tensor& vx = v_of(nx);
                const Tensor& vg = v_of(ng);
                const int m = vx.size();
                const double mu = n.a;
                const double rstd = n.b;
                if (ng.track) {
                    Tensor& gg = grad_buf(ng);
                    for (int i = 0; i < m; ++i) gg[i] += g[i] * (vx[i] - mu) * rstd;
                }
                if (nb.track) {
                    Tensor& gb = grad_buf(nb);
                    for (int i = 0; i < m; ++i) gb[i] += g[i];
                }
                if (nx.track) {
                    double s1 = 0.0, s2 = 0.0;
                    for (int i = 0; i < m; ++i) {
                        const double dxhat = g[i] * vg[i];
                        const double xhat = (vx[i] - mu) * rstd;
                        s1 += dxhat;
                        s2 += dxhat * xhat;
                    }
                    Tensor& gx = grad_buf(nx);
                    for (int i = 0; i < m; ++i) {
                        const double dxhat = g[i] * vg[i];
                        const double xhat = (vx[i] - mu) * rstd;
                        gx[i] += rstd * (dxhat - s1 / m - xhat * s2 / m);
                    }
                }
                break;
            }
        }
    }
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    if (n.grad_set) return n.grad;
    auto* self = const_cast<Tape*>(this);
    const auto& shape = v_of(n).shape();
    if (self->zero_grad_.shape() != shape || self->zero_grad_.size() != shape_size(shape)) {
        self->zero_grad_ = Tensor::zeros(shape);
    } else {
        self->zero_grad_.fill(0.0);
    }
    return zero_grad_;
}

std::map<std::string, Tensor> Tape::param_grads(const ParamStore& store) const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, slot] : store) {
        auto it = param_cache_.find(name);
        if (it != param_cache_.end()) {
            const Node& n = nodes_[static_cast<size_t>(it->second)];
            if (n.bound_store == &store && n.grad_set) {
                out.emplace(name, n.grad);
                continue;
            }
        }
        out.emplace(name, Tensor::zeros(slot.value.shape()));
    }
    return out;
}

EvalResult evaluate_with_gradients(ParamStore& store, const std::function<Var(Tape&)>& fn) {
    Tape tape(true);
    Var loss = fn(tape);
    if (tape.val(loss).size() != 1) {
        throw ShapeError("evaluate_with_gradients: loss_fn did not yield a scalar");
    }
    tape.backward(loss);
    EvalResult res;
    res.loss = tape.scalar(loss);
    res.grads = tape.param_grads(store);
    return res;
}

}  // namespace rre
