#pragma once

#include <iostream>
#include <numeric>

#include "sslseg/ops.hpp"

namespace sslseg {

struct CorruptionConfig {
    double fraction = 0.10;  // share of pixels replaced per image
    double sigma = 0.01;     // stddev of the replacement noise
    uint64_t seed = 0;

    void validate() const {
        if (fraction < 0.0 || fraction > 1.0)
            throw ConfigError("regression.fraction must be in [0,1]");
        if (sigma <= 0.0) throw ConfigError("regression.sigma must be positive");
    }
};

/// Binary mask of corrupted pixel locations, one plane per batch image.
template <typename T>
struct CorruptionMask {
    Tensor<T> mask;        // [B,1,H,W], entries in {0,1}
    int64_t popcount = 0;  // total number of ones
};

/// Replaces exactly round(fraction*H*W) pixels per image with draws from
/// N(0, sigma^2); every other pixel of the output is the input, bit for bit.
/// Pixel choices come from a seeded partial shuffle, so a given rng stream
/// always corrupts the same locations.
template <typename T>
std::pair<Tensor<T>, CorruptionMask<T>> corrupt_image(const Tensor<T>& x,
                                                      const CorruptionConfig& cfg, Rng& rng) {
    detail::check_image(x, "corrupt_image");
    cfg.validate();
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (x.dim(1) != 1) throw ShapeError("corrupt_image: expected single-channel images");
    const int64_t hw = static_cast<int64_t>(H) * W;
    const int64_t per_image = std::llround(cfg.fraction * static_cast<double>(hw));

    Tensor<T> corrupted = x.clone();
    corrupted.set_requires_grad(false);
    CorruptionMask<T> m;
    m.mask = Tensor<T>::zeros(x.shape());
    m.popcount = per_image * B;

    std::vector<int64_t> order(static_cast<size_t>(hw));
    auto cv = corrupted.values();
    auto mv = m.mask.values();
    for (int b = 0; b < B; ++b) {
        std::iota(order.begin(), order.end(), 0);
        // partial Fisher-Yates: the first per_image entries are the sample
        for (int64_t i = 0; i < per_image; ++i) {
            int64_t j = i + rng.below(hw - i);
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        std::sort(order.begin(), order.begin() + per_image);
        const int64_t base = static_cast<int64_t>(b) * hw;
        for (int64_t i = 0; i < per_image; ++i) {
            const int64_t p = base + order[static_cast<size_t>(i)];
            cv[p] = static_cast<T>(rng.normal(0.0, cfg.sigma));
            mv[p] = T(1);
        }
    }
    return {corrupted, m};
}

/// Mean absolute difference over masked pixels only. The gradient w.r.t.
/// the reconstruction is exactly zero off-mask. An empty mask yields 0
/// with a warning (degenerate pretext batch).
template <typename T>
Tensor<T> masked_l1_loss(const Tensor<T>& recon, const Tensor<T>& ref,
                         const CorruptionMask<T>& m, Tape<T>* tape) {
    check_same_shape(recon, ref, "masked_l1_loss");
    check_same_shape(recon, m.mask, "masked_l1_loss");
    if (m.popcount == 0) {
        std::cerr << "sslseg: masked_l1_loss called with an empty mask\n";
        return Tensor<T>::scalar(T(0));
    }
    Tensor<T> diff = mul(sub(recon, ref, tape), m.mask, tape);
    Tensor<T> total = sum_all(abs(diff, tape), tape);
    return scale(total, T(1) / static_cast<T>(m.popcount), tape);
}

}  // namespace sslseg
