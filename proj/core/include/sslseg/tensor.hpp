#pragma once

#include <cassert>
#include <memory>
#include <span>

#include "sslseg/common.hpp"

namespace sslseg {

/// Dense N-d float tensor with value semantics over shared storage.
///
/// A Tensor is a handle: copies alias the same buffer, which is what ties
/// recorded tape operations to the gradient buffers they accumulate into.
/// Gradients are allocated lazily by ensure_grad() during the backward pass.
template <typename T>
class Tensor {
    struct Data {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;  // empty until ensure_grad()
        bool requires_grad = false;
    };

public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return Tensor(std::move(shape), {}, requires_grad, true);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (T& x : t.values()) x = v;
        return t;
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return full({1}, v, requires_grad);
    }

    static Tensor from_vector(Shape shape, std::vector<T> v, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(v.size()))
            throw ShapeError("from_vector: " + shape_str(shape) + " does not hold " +
                             std::to_string(v.size()) + " elements");
        Tensor t;
        t.data_ = std::make_shared<Data>();
        t.data_->shape = std::move(shape);
        t.data_->value = std::move(v);
        t.data_->requires_grad = requires_grad;
        return t;
    }

    // A Tensor is a handle onto shared storage: a const handle still exposes
    // mutable buffers, the way shared tensor handles usually do.
    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return data_->shape; }
    int dim(int i) const { return data_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(data_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_->value.size()); }

    std::span<T> values() const { return data_->value; }

    bool requires_grad() const { return data_->requires_grad; }
    void set_requires_grad(bool rg) const { data_->requires_grad = rg; }

    bool has_grad() const { return !data_->grad.empty(); }

    /// Allocates a zeroed gradient buffer if none exists yet.
    void ensure_grad() const {
        if (data_->grad.empty()) data_->grad.assign(data_->value.size(), T(0));
    }

    std::span<T> grad() const {
        assert(has_grad());
        return data_->grad;
    }

    void zero_grad() const {
        if (!data_->grad.empty()) std::fill(data_->grad.begin(), data_->grad.end(), T(0));
    }

    /// Value of a scalar (1-element) tensor.
    T item() const {
        if (numel() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
        return data_->value[0];
    }

    /// Deep copy; the clone shares nothing with the source.
    Tensor clone() const {
        return from_vector(shape(), std::vector<T>(data_->value), requires_grad());
    }

    bool same_storage(const Tensor& other) const { return data_ == other.data_; }

private:
    Tensor(Shape shape, std::vector<T>, bool requires_grad, bool /*zeroed*/) {
        data_ = std::make_shared<Data>();
        int64_t n = shape_numel(shape);
        data_->shape = std::move(shape);
        data_->value.assign(static_cast<size_t>(n), T(0));
        data_->requires_grad = requires_grad;
    }

    std::shared_ptr<Data> data_;
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape();
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!same_shape(a, b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

#ifndef NDEBUG
template <typename T>
void debug_check_finite(const Tensor<T>& t, const char* op) {
    for (T v : t.values())
        if (!std::isfinite(static_cast<double>(v)))
            throw NumericError(std::string(op) + " produced a non-finite value");
}
#else
template <typename T>
void debug_check_finite(const Tensor<T>&, const char*) {}
#endif

}  // namespace sslseg
