#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rre/rng.hpp"
#include "rre/tensor.hpp"

namespace rre {

// Named parameter tensors with per-parameter Adam moment accumulators.
// std::map keeps iteration order deterministic for updates and checkpoints.
class ParamStore {
public:
    struct Slot {
        Tensor value;
        Tensor m;  // first moment
        Tensor v;  // second moment
    };

    void add(const std::string& name, Tensor init);
    bool has(const std::string& name) const;

    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Slot& slot(const std::string& name);
    const Slot& slot(const std::string& name) const;

    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s) { step_ = s; }

    std::vector<std::string> names() const;
    size_t count() const { return slots_.size(); }

    auto begin() { return slots_.begin(); }
    auto end() { return slots_.end(); }
    auto begin() const { return slots_.begin(); }
    auto end() const { return slots_.end(); }

    // Total number of scalar parameters.
    std::int64_t scalar_count() const;

    // FNV-1a digest of all values, moments and the step counter; used by
    // tests to assert that a store was not touched.
    std::uint64_t digest() const;

private:
    friend void adam_step(ParamStore&, const std::map<std::string, Tensor>&, double, bool);
    std::map<std::string, Slot> slots_;
    std::int64_t step_ = 0;
};

// One Adam update (beta1=0.9, beta2=0.999, eps=1e-8) over the given named
// gradients. Parameters without a gradient entry keep value and moments.
// `ascend` flips the gradient sign for objectives that are maximized.
void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr,
               bool ascend);

// Weight init: uniform in +-1/sqrt(fan_in).
Tensor uniform_fan_in(std::vector<int> shape, int fan_in, Rng& rng);

}  // namespace rre
