#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dipro/errors.hpp"
#include "dipro/rng.hpp"
#include "dipro/tensor.hpp"

namespace dipro {

// Ordered registry of trainable parameters. Registration order is the
// canonical order for the optimizer, checkpoints and gradient checks.
class ParamStore {
public:
    // Xavier-uniform init over fan_in/fan_out taken from the shape.
    Tensor create(const std::string& name, std::vector<int> shape, Rng& rng) {
        int fan_in = shape.size() == 2 ? shape[0] : static_cast<int>(shape.back());
        int fan_out = static_cast<int>(shape.back());
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        return insert(name, Tensor::uniform(std::move(shape), limit, rng, true));
    }

    Tensor create_const(const std::string& name, std::vector<int> shape, double fill) {
        return insert(name, Tensor::full(std::move(shape), fill, true));
    }

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

    Tensor get(const std::string& name) const {
        for (const auto& [n, t] : entries_) {
            if (n == name) return t;
        }
        throw ContractError("unknown parameter: " + name);
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, t] : entries_) n += t.size();
        return n;
    }

    void zero_grads() {
        for (auto& [name, t] : entries_) t.zero_grad();
    }

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        out.reserve(entries_.size());
        for (const auto& [name, t] : entries_) out.push_back(t);
        return out;
    }

private:
    Tensor insert(const std::string& name, Tensor t) {
        for (const auto& [n, existing] : entries_) {
            if (n == name) throw ContractError("duplicate parameter name: " + name);
        }
        entries_.emplace_back(name, t);
        return t;
    }

    std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace dipro
