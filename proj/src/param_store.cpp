#include "rre/param_store.hpp"

#include <cmath>
#include <cstring>

#include "rre/errors.hpp"

namespace rre {

void ParamStore::add(const std::string& name, Tensor init) {
    if (slots_.count(name)) throw ShapeError("duplicate parameter name: " + name);
    init.check_finite("parameter " + name);
    Slot s;
    s.m = Tensor::zeros(init.shape());
    s.v = Tensor::zeros(init.shape());
    s.value = std::move(init);
    slots_.emplace(name, std::move(s));
}

bool ParamStore::has(const std::string& name) const { return slots_.count(name) > 0; }

Tensor& ParamStore::value(const std::string& name) { return slot(name).value; }

const Tensor& ParamStore::value(const std::string& name) const { return slot(name).value; }

ParamStore::Slot& ParamStore::slot(const std::string& name) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second;
}

const ParamStore::Slot& ParamStore::slot(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(slots_.size());
    for (const auto& [k, _] : slots_) out.push_back(k);
    return out;
}

std::int64_t ParamStore::scalar_count() const {
    std::int64_t n = 0;
    for (const auto& [_, s] : slots_) n += s.value.size();
    return n;
}

std::uint64_t ParamStore::digest() const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto feed = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001B3ull;
        }
    };
    feed(&step_, sizeof(step_));
    for (const auto& [name, s] : slots_) {
        feed(name.data(), name.size());
        feed(s.value.data(), sizeof(double) * static_cast<size_t>(s.value.size()));
        feed(s.m.data(), sizeof(double) * static_cast<size_t>(s.m.size()));
        feed(s.v.data(), sizeof(double) * static_cast<size_t>(s.v.size()));
    }
    return h;
}

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr,
               bool ascend) {
    if (lr < 0.0) throw TrainingError("adam_step: negative learning rate");
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    store.step_ += 1;
    const double t = static_cast<double>(store.step_);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);

    for (const auto& [name, g] : grads) {
        auto it = store.slots_.find(name);
        if (it == store.slots_.end()) throw ShapeError("adam_step: gradient for unknown parameter " + name);
        auto& s = it->second;
        if (!s.value.same_shape(g)) {
            throw ShapeError("adam_step: gradient shape mismatch for " + name);
        }
        const double sign = ascend ? -1.0 : 1.0;
        double* p = s.value.data();
        double* m = s.m.data();
        double* v = s.v.data();
        const double* gd = g.data();
        const int n = g.size();
        for (int i = 0; i < n; ++i) {
            const double gi = sign * gd[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        s.value.check_finite("adam-updated parameter " + name);
    }
}

Tensor uniform_fan_in(std::vector<int> shape, int fan_in, Rng& rng) {
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 1.0;
    Tensor t = Tensor::zeros(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace rre
