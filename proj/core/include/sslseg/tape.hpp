#pragma once

#include <memory>

#include "sslseg/tensor.hpp"

namespace sslseg {

/// Reverse-mode differentiation tape.
///
/// Forward ops append a backward closure as they execute, so the list is in
/// topological order by construction. backward() seeds d(loss)/d(loss) = 1
/// and runs the closures once each, in reverse. Gradients accumulate by
/// summation, which makes fan-out (a tensor consumed twice) correct for free.
///
/// A tape and the tensors recorded on it are owned by a single thread.
template <typename T>
class Tape {
    struct Op {
        virtual ~Op() = default;
        virtual void run() = 0;
    };
    template <typename F>
    struct FnOp final : Op {
        F fn;
        explicit FnOp(F f) : fn(std::move(f)) {}
        void run() override { fn(); }
    };

public:
    template <typename F>
    void record(F backward_fn) {
        ops_.push_back(std::make_unique<FnOp<F>>(std::move(backward_fn)));
    }

    size_t size() const { return ops_.size(); }

    /// Runs the backward pass for a scalar loss. Consumes the tape.
    void backward(Tensor<T> loss) {
        if (loss.numel() != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        loss.ensure_grad();
        loss.grad()[0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)->run();
        ops_.clear();
    }

private:
    std::vector<std::unique_ptr<Op>> ops_;
};

}  // namespace sslseg
