#pragma once

#include <span>
#include <string>

#include "sslseg/tensor.hpp"

namespace sslseg {

/// A named trainable tensor.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> tensor;
};

/// Adam with bias correction. Moment buffers are keyed by position in the
/// parameter list handed to step(), so the list must stay stable for the
/// lifetime of the state.
template <typename T>
struct AdamState {
    T learning_rate = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);
    int64_t step_count = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;

    explicit AdamState(T lr = T(1e-3)) : learning_rate(lr) {}

    void step(std::span<Param<T>> params) {
        if (m.empty()) {
            m.resize(params.size());
            v.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m[i].assign(static_cast<size_t>(params[i].tensor.numel()), T(0));
                v[i].assign(static_cast<size_t>(params[i].tensor.numel()), T(0));
            }
        }
        if (m.size() != params.size())
            throw ShapeError("adam: state tracks " + std::to_string(m.size()) +
                             " params, got " + std::to_string(params.size()));
        ++step_count;
        const T bc1 = T(1) - std::pow(beta1, static_cast<T>(step_count));
        const T bc2 = T(1) - std::pow(beta2, static_cast<T>(step_count));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].tensor;
            if (m[i].size() != static_cast<size_t>(p.numel()))
                throw ShapeError("adam: moment shape mismatch for " + params[i].name);
            if (!p.has_grad()) continue;  // no gradient reached this param
            auto g = p.grad();
            auto w = p.values();
            for (size_t j = 0; j < m[i].size(); ++j) {
                m[i][j] = beta1 * m[i][j] + (T(1) - beta1) * g[j];
                v[i][j] = beta2 * v[i][j] + (T(1) - beta2) * g[j] * g[j];
                const T mh = m[i][j] / bc1;
                const T vh = v[i][j] / bc2;
                w[j] -= learning_rate * mh / (std::sqrt(vh) + epsilon);
            }
        }
    }
};

template <typename T>
void zero_grads(std::span<Param<T>> params) {
    for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace sslseg
