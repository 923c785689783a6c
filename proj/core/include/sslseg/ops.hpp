#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sslseg/gemm.hpp"
#include "sslseg/tape.hpp"

namespace sslseg {

// Differentiable tensor operations. Every op computes its output eagerly
// and, when a tape is supplied and some input requires a gradient, records
// a closure that accumulates input gradients from the output gradient.
// Closures skip inputs whose requires_grad is false, so frozen parameters
// cost nothing in the backward pass.

namespace detail {

template <typename T, typename F>
void mark_and_record(Tape<T>* tape, bool any_rg, Tensor<T>& out, F fn) {
    if (!any_rg) return;
    out.set_requires_grad(true);
    if (tape) tape->record(std::move(fn));
}

template <typename T>
void check_image(const Tensor<T>& x, const char* op) {
    if (x.ndim() != 4)
        throw ShapeError(std::string(op) + ": expected a [B,C,H,W] tensor, got " + shape_str(x.shape()));
}

/// col[(c*k+i)*k+j, y*W+x] = x[c, y+i-r, x+j-r], zero outside. One image.
template <typename T>
void im2col(const T* x, int C, int H, int W, int k, T* col) {
    const int r = k / 2;
    const int64_t hw = static_cast<int64_t>(H) * W;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < k; ++i) {
            const int dy = i - r;
            for (int j = 0; j < k; ++j) {
                const int dx = j - r;
                T* dst = col + (static_cast<int64_t>(c) * k * k + i * k + j) * hw;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    T* drow = dst + static_cast<int64_t>(y) * W;
                    if (sy < 0 || sy >= H) {
                        std::fill(drow, drow + W, T(0));
                        continue;
                    }
                    const T* srow = x + (static_cast<int64_t>(c) * H + sy) * W;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(W, W - dx);
                    std::fill(drow, drow + x0, T(0));
                    if (x1 > x0) std::memcpy(drow + x0, srow + x0 + dx, sizeof(T) * (x1 - x0));
                    std::fill(drow + std::max(x0, x1), drow + W, T(0));
                }
            }
        }
    }
}

/// Scatter-add transpose of im2col. One image.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int k, T* dx) {
    const int r = k / 2;
    const int64_t hw = static_cast<int64_t>(H) * W;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < k; ++i) {
            const int dy = i - r;
            for (int j = 0; j < k; ++j) {
                const int dx_off = j - r;
                const T* src = col + (static_cast<int64_t>(c) * k * k + i * k + j) * hw;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    const T* srow = src + static_cast<int64_t>(y) * W;
                    T* drow = dx + (static_cast<int64_t>(c) * H + sy) * W;
                    const int x0 = std::max(0, -dx_off);
                    const int x1 = std::min(W, W - dx_off);
                    for (int xx = x0; xx < x1; ++xx) drow[xx + dx_off] += srow[xx];
                }
            }
        }
    }
}

}  // namespace detail

/// 2D convolution, stride 1, zero same-padding, odd square kernel.
/// input [B,Cin,H,W] * kernel [Cout,Cin,k,k] + bias [Cout] -> [B,Cout,H,W]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Tape<T>* tape) {
    detail::check_image(input, "conv2d");
    if (kernel.ndim() != 4 || kernel.dim(2) != kernel.dim(3))
        throw ShapeError("conv2d: kernel must be [Cout,Cin,k,k], got " + shape_str(kernel.shape()));
    const int B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int Cout = kernel.dim(0), k = kernel.dim(2);
    if (kernel.dim(1) != Cin)
        throw ShapeError("conv2d: input channels " + std::to_string(Cin) +
                         " do not match kernel channels " + std::to_string(kernel.dim(1)));
    if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (bias.ndim() != 1 || bias.dim(0) != Cout)
        throw ShapeError("conv2d: bias must be [Cout]=" + std::to_string(Cout) + ", got " +
                         shape_str(bias.shape()));

    const int64_t hw = static_cast<int64_t>(H) * W;
    const int64_t ckk = static_cast<int64_t>(Cin) * k * k;
    Tensor<T> out = Tensor<T>::zeros({B, Cout, H, W});
    {
        std::vector<T> col(static_cast<size_t>(ckk * hw));
        const T* xp = input.values().data();
        const T* wp = kernel.values().data();
        const T* bp = bias.values().data();
        T* yp = out.values().data();
        for (int b = 0; b < B; ++b) {
            detail::im2col(xp + static_cast<int64_t>(b) * Cin * hw, Cin, H, W, k, col.data());
            T* yb = yp + static_cast<int64_t>(b) * Cout * hw;
            gemm_nn(Cout, static_cast<int>(hw), static_cast<int>(ckk), wp, col.data(), yb);
            for (int o = 0; o < Cout; ++o) {
                T* row = yb + static_cast<int64_t>(o) * hw;
                for (int64_t p = 0; p < hw; ++p) row[p] += bp[o];
            }
        }
    }
    debug_check_finite(out, "conv2d");

    bool rg = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
    detail::mark_and_record(tape, rg, out, [input, kernel, bias, out, B, Cin, Cout, H, W, k,
                                            hw, ckk]() mutable {
        if (!out.has_grad()) return;
        auto gy = out.grad();
        if (bias.requires_grad()) {
            bias.ensure_grad();
            auto gb = bias.grad();
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < Cout; ++o) {
                    const T* row = gy.data() + (static_cast<int64_t>(b) * Cout + o) * hw;
                    T acc = T(0);
                    for (int64_t p = 0; p < hw; ++p) acc += row[p];
                    gb[o] += acc;
                }
        }
        const bool need_w = kernel.requires_grad();
        const bool need_x = input.requires_grad();
        if (!need_w && !need_x) return;
        if (need_w) kernel.ensure_grad();
        if (need_x) input.ensure_grad();
        std::vector<T> col(static_cast<size_t>(ckk * hw));
        std::vector<T> dcol(need_x ? static_cast<size_t>(ckk * hw) : 0);
        const T* xp = input.values().data();
        const T* wp = kernel.values().data();
        for (int b = 0; b < B; ++b) {
            const T* gyb = gy.data() + static_cast<int64_t>(b) * Cout * hw;
            if (need_w) {
                detail::im2col(xp + static_cast<int64_t>(b) * Cin * hw, Cin, H, W, k, col.data());
                gemm_nt(Cout, static_cast<int>(ckk), static_cast<int>(hw), gyb, col.data(),
                        kernel.grad().data());
            }
            if (need_x) {
                std::fill(dcol.begin(), dcol.end(), T(0));
                gemm_tn(static_cast<int>(ckk), static_cast<int>(hw), Cout, wp, gyb, dcol.data());
                detail::col2im_add(dcol.data(), Cin, H, W, k,
                                   input.grad().data() + static_cast<int64_t>(b) * Cin * hw);
            }
        }
    });
    return out;
}

/// Elementwise max(0, x). Subgradient at 0 is 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
    detail::mark_and_record(tape, x.requires_grad(), out, [x, out]() mutable {
        if (!out.has_grad()) return;
        x.ensure_grad();
        auto gx = x.grad();
        auto gy = out.grad();
        auto xv = x.values();
        for (int64_t i = 0; i < x.numel(); ++i)
            if (xv[i] > T(0)) gx[i] += gy[i];
    });
    return out;
}

/// 2x2 non-overlapping max pooling. Ties go to the first element in
/// row-major scan order, so the backward routing is deterministic.
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x, Tape<T>* tape) {
    detail::check_image(x, "max_pool2");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("max_pool2: H and W must be even, got " + shape_str(x.shape()));
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> out = Tensor<T>::zeros({B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
    auto xv = x.values();
    auto ov = out.values();
    int64_t oi = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        const T* plane = xv.data() + static_cast<int64_t>(bc) * H * W;
        for (int y = 0; y < Ho; ++y)
            for (int xx = 0; xx < Wo; ++xx, ++oi) {
                int64_t base = static_cast<int64_t>(2 * y) * W + 2 * xx;
                int64_t best = base;
                T bv = plane[base];
                const int64_t cand[3] = {base + 1, base + W, base + W + 1};
                for (int64_t c : cand)
                    if (plane[c] > bv) {
                        bv = plane[c];
                        best = c;
                    }
                ov[oi] = bv;
                (*argmax)[static_cast<size_t>(oi)] = static_cast<int64_t>(bc) * H * W + best;
            }
    }
    detail::mark_and_record(tape, x.requires_grad(), out, [x, out, argmax]() mutable {
        if (!out.has_grad()) return;
        x.ensure_grad();
        auto gx = x.grad();
        auto gy = out.grad();
        for (int64_t i = 0; i < out.numel(); ++i) gx[(*argmax)[static_cast<size_t>(i)]] += gy[i];
    });
    return out;
}

/// Nearest-neighbour 2x upsampling; backward sums the four fan-out grads.
template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x, Tape<T>* tape) {
    detail::check_image(x, "upsample_nearest2");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out = Tensor<T>::zeros({B, C, 2 * H, 2 * W});
    auto xv = x.values();
    auto ov = out.values();
    for (int bc = 0; bc < B * C; ++bc) {
        const T* src = xv.data() + static_cast<int64_t>(bc) * H * W;
        T* dst = ov.data() + static_cast<int64_t>(bc) * 4 * H * W;
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                T v = src[y * W + xx];
                T* d = dst + static_cast<int64_t>(2 * y) * 2 * W + 2 * xx;
                d[0] = v;
                d[1] = v;
                d[2 * W] = v;
                d[2 * W + 1] = v;
            }
    }
    detail::mark_and_record(tape, x.requires_grad(), out, [x, out, B, C, H, W]() mutable {
        if (!out.has_grad()) return;
        x.ensure_grad();
        auto gx = x.grad();
        auto gy = out.grad();
        for (int bc = 0; bc < B * C; ++bc) {
            T* g = gx.data() + static_cast<int64_t>(bc) * H * W;
            const T* d = gy.data() + static_cast<int64_t>(bc) * 4 * H * W;
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    const T* s = d + static_cast<int64_t>(2 * y) * 2 * W + 2 * xx;
                    g[y * W + xx] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
                }
        }
    });
    return out;
}

/// Per-(sample, channel) normalization to zero mean / unit variance,
/// followed by a per-channel affine. eps = 1e-5.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                        Tape<T>* tape) {
    detail::check_image(x, "instance_norm");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    if (hw < 2) throw ShapeError("instance_norm: needs H*W >= 2");
    if (gain.ndim() != 1 || gain.dim(0) != C || shift.ndim() != 1 || shift.dim(0) != C)
        throw ShapeError("instance_norm: gain/shift must be [C]=" + std::to_string(C));
    const T eps = T(1e-5);
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    auto stats = std::make_shared<std::vector<T>>(static_cast<size_t>(2 * B * C));  // mean, istd
    auto xv = x.values();
    auto ov = out.values();
    auto gv = gain.values();
    auto sv = shift.values();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* p = xv.data() + (static_cast<int64_t>(b) * C + c) * hw;
            T* o = ov.data() + (static_cast<int64_t>(b) * C + c) * hw;
            T mean = T(0);
            for (int64_t i = 0; i < hw; ++i) mean += p[i];
            mean /= static_cast<T>(hw);
            T var = T(0);
            for (int64_t i = 0; i < hw; ++i) {
                T d = p[i] - mean;
                var += d * d;
            }
            var /= static_cast<T>(hw);
            T istd = T(1) / std::sqrt(var + eps);
            (*stats)[static_cast<size_t>(2 * (b * C + c))] = mean;
            (*stats)[static_cast<size_t>(2 * (b * C + c) + 1)] = istd;
            const T g = gv[c], s = sv[c];
            for (int64_t i = 0; i < hw; ++i) o[i] = g * (p[i] - mean) * istd + s;
        }
    debug_check_finite(out, "instance_norm");

    bool rg = x.requires_grad() || gain.requires_grad() || shift.requires_grad();
    detail::mark_and_record(tape, rg, out, [x, gain, shift, out, stats, B, C, hw]() mutable {
        if (!out.has_grad()) return;
        auto gy = out.grad();
        auto xv = x.values();
        auto gv = gain.values();
        if (shift.requires_grad()) shift.ensure_grad();
        if (gain.requires_grad()) gain.ensure_grad();
        if (x.requires_grad()) x.ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const int64_t off = (static_cast<int64_t>(b) * C + c) * hw;
                const T mean = (*stats)[static_cast<size_t>(2 * (b * C + c))];
                const T istd = (*stats)[static_cast<size_t>(2 * (b * C + c) + 1)];
                const T* xp = xv.data() + off;
                const T* gyp = gy.data() + off;
                if (shift.requires_grad()) {
                    T acc = T(0);
                    for (int64_t i = 0; i < hw; ++i) acc += gyp[i];
                    shift.grad()[c] += acc;
                }
                if (gain.requires_grad()) {
                    T acc = T(0);
                    for (int64_t i = 0; i < hw; ++i) acc += gyp[i] * (xp[i] - mean) * istd;
                    gain.grad()[c] += acc;
                }
                if (x.requires_grad()) {
                    T sum_dy = T(0), sum_dyx = T(0);
                    for (int64_t i = 0; i < hw; ++i) {
                        sum_dy += gyp[i];
                        sum_dyx += gyp[i] * (xp[i] - mean) * istd;
                    }
                    const T inv_n = T(1) / static_cast<T>(hw);
                    const T g = gv[c];
                    T* gx = x.grad().data() + off;
                    for (int64_t i = 0; i < hw; ++i) {
                        const T xhat = (xp[i] - mean) * istd;
                        gx[i] += g * istd * (gyp[i] - sum_dy * inv_n - xhat * sum_dyx * inv_n);
                    }
                }
            }
    });
    return out;
}

/// Affine map: input [B,F] * weight [G,F]^T + bias [G] -> [B,G]
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Tape<T>* tape) {
    if (input.ndim() != 2 || weight.ndim() != 2 || input.dim(1) != weight.dim(1))
        throw ShapeError("linear: inner dims disagree, input " + shape_str(input.shape()) +
                         " vs weight " + shape_str(weight.shape()));
    const int B = input.dim(0), F = input.dim(1), G = weight.dim(0);
    if (bias.ndim() != 1 || bias.dim(0) != G)
        throw ShapeError("linear: bias must be [G]=" + std::to_string(G));
    Tensor<T> out = Tensor<T>::zeros({B, G});
    gemm_nt(B, G, F, input.values().data(), weight.values().data(), out.values().data());
    auto ov = out.values();
    auto bv = bias.values();
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < G; ++g) ov[static_cast<int64_t>(b) * G + g] += bv[g];
    debug_check_finite(out, "linear");

    bool rg = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
    detail::mark_and_record(tape, rg, out, [input, weight, bias, out, B, F, G]() mutable {
        if (!out.has_grad()) return;
        auto gy = out.grad();
        if (bias.requires_grad()) {
            bias.ensure_grad();
            auto gb = bias.grad();
            for (int b = 0; b < B; ++b)
                for (int g = 0; g < G; ++g) gb[g] += gy[static_cast<int64_t>(b) * G + g];
        }
        if (weight.requires_grad()) {
            weight.ensure_grad();
            gemm_tn(G, F, B, gy.data(), input.values().data(), weight.grad().data());
        }
        if (input.requires_grad()) {
            input.ensure_grad();
            gemm_nn(B, F, G, gy.data(), weight.values().data(), input.grad().data());
        }
    });
    return out;
}

/// a [n,k] * b [m,k]^T -> [n,m]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int n = a.dim(0), m = b.dim(0), k = a.dim(1);
    Tensor<T> out = Tensor<T>::zeros({n, m});
    gemm_nt(n, m, k, a.values().data(), b.values().data(), out.values().data());
    bool rg = a.requires_grad() || b.requires_grad();
    detail::mark_and_record(tape, rg, out, [a, b, out, n, m, k]() mutable {
        if (!out.has_grad()) return;
        auto gy = out.grad();
        if (a.requires_grad()) {
            a.ensure_grad();
            gemm_nn(n, k, m, gy.data(), b.values().data(), a.grad().data());
        }
        if (b.requires_grad()) {
            b.ensure_grad();
            gemm_tn(m, k, n, gy.data(), a.values().data(), b.grad().data());
        }
    });
    return out;
}

/// Concatenate two [B,*,H,W] tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
    detail::check_image(a, "concat_channels");
    detail::check_image(b, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor<T> out = Tensor<T>::zeros({B, Ca + Cb, H, W});
    auto ov = out.values();
    for (int bb = 0; bb < B; ++bb) {
        std::memcpy(ov.data() + static_cast<int64_t>(bb) * (Ca + Cb) * hw,
                    a.values().data() + static_cast<int64_t>(bb) * Ca * hw, sizeof(T) * Ca * hw);
        std::memcpy(ov.data() + (static_cast<int64_t>(bb) * (Ca + Cb) + Ca) * hw,
                    b.values().data() + static_cast<int64_t>(bb) * Cb * hw, sizeof(T) * Cb * hw);
    }
    bool rg = a.requires_grad() || b.requires_grad();
    detail::mark_and_record(tape, rg, out, [a, b, out, B, Ca, Cb, hw]() mutable {
        if (!out.has_grad()) return;
        auto gy = out.grad();
        for (int bb = 0; bb < B; ++bb) {
            if (a.requires_grad()) {
                a.ensure_grad();
                T* ga = a.grad().data() + static_cast<int64_t>(bb) * Ca * hw;
                const T* s = gy.data() + static_cast<int64_t>(bb) * (Ca + Cb) * hw;
                for (int64_t i = 0; i < Ca * hw; ++i) ga[i] += s[i];
            }
            if (b.requires_grad()) {
                b.ensure_grad();
                T* gb = b.grad().data() + static_cast<int64_t>(bb) * Cb * hw;
                const T* s = gy.data() + (static_cast<int64_t>(bb) * (Ca + Cb) + Ca) * hw;
                for (int64_t i = 0; i < Cb * hw; ++i) gb[i] += s[i];
            }
        }
    });
    return out;
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape,
                             const char* name, Fwd fwd, Bwd bwd) {
    check_same_shape(a, b, name);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (int64_t i = 0; i < a.numel(); ++i) ov[i] = fwd(av[i], bv[i]);
    bool rg = a.requires_grad() || b.requires_grad();
    mark_and_record(tape, rg, out, [a, b, out, bwd]() mutable {
        if (!out.has_grad()) return;
        auto gy = out.grad();
        auto av = a.values();
        auto bv = b.values();
        const bool na = a.requires_grad(), nb = b.requires_grad();
        if (na) a.ensure_grad();
        if (nb) b.ensure_grad();
        for (int64_t i = 0; i < out.numel(); ++i) {
            auto [da, db] = bwd(av[i], bv[i]);
            if (na) a.grad()[i] += gy[i] * da;
            if (nb) b.grad()[i] += gy[i] * db;
        }
    });
    return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
    return detail::binary_elementwise(
        a, b, tape, "add", [](T x, T y) { return x + y; },
        [](T, T) { return std::pair<T, T>(T(1), T(1)); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
    return detail::binary_elementwise(
        a, b, tape, "sub", [](T x, T y) { return x - y; },
        [](T, T) { return std::pair<T, T>(T(1), T(-1)); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
    return detail::binary_elementwise(
        a, b, tape, "mul", [](T x, T y) { return x * y; },
        [](T x, T y) { return std::pair<T, T>(y, x); });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
    return detail::binary_elementwise(
        a, b, tape, "div", [](T x, T y) { return x / y; },
        [](T x, T y) { return std::pair<T, T>(T(1) / y, -x / (y * y)); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c, Tape<T>* tape) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] * c;
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out, c]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        auto ga = a.grad();
        for (int64_t i = 0; i < out.numel(); ++i) ga[i] += gy[i] * c;
    });
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c, Tape<T>* tape) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] + c;
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        auto ga = a.grad();
        for (int64_t i = 0; i < out.numel(); ++i) ga[i] += gy[i];
    });
    return out;
}

/// Elementwise |x| with subgradient 0 at x == 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& a, Tape<T>* tape) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] < T(0) ? -av[i] : av[i];
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        auto ga = a.grad();
        auto av = a.values();
        for (int64_t i = 0; i < out.numel(); ++i) {
            if (av[i] > T(0))
                ga[i] += gy[i];
            else if (av[i] < T(0))
                ga[i] -= gy[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a, Tape<T>* tape) {
    T acc = T(0);
    for (T v : a.values()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        const T g = out.grad()[0];
        auto ga = a.grad();
        for (int64_t i = 0; i < a.numel(); ++i) ga[i] += g;
    });
    return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a, Tape<T>* tape) {
    return scale(sum_all(a, tape), T(1) / static_cast<T>(a.numel()), tape);
}

/// [B,C,H,W] -> [C]: sum over batch and spatial dims.
template <typename T>
Tensor<T> channel_sums(const Tensor<T>& a, Tape<T>* tape) {
    detail::check_image(a, "channel_sums");
    const int B = a.dim(0), C = a.dim(1);
    const int64_t hw = static_cast<int64_t>(a.dim(2)) * a.dim(3);
    Tensor<T> out = Tensor<T>::zeros({C});
    auto av = a.values();
    auto ov = out.values();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* p = av.data() + (static_cast<int64_t>(b) * C + c) * hw;
            T acc = T(0);
            for (int64_t i = 0; i < hw; ++i) acc += p[i];
            ov[c] += acc;
        }
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out, B, C, hw]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                T* g = a.grad().data() + (static_cast<int64_t>(b) * C + c) * hw;
                const T gc = gy[c];
                for (int64_t i = 0; i < hw; ++i) g[i] += gc;
            }
    });
    return out;
}

/// [B,C,H,W] -> [B,C]: spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& a, Tape<T>* tape) {
    detail::check_image(a, "global_avg_pool");
    const int B = a.dim(0), C = a.dim(1);
    const int64_t hw = static_cast<int64_t>(a.dim(2)) * a.dim(3);
    Tensor<T> out = Tensor<T>::zeros({B, C});
    auto av = a.values();
    auto ov = out.values();
    for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
        const T* p = av.data() + bc * hw;
        T acc = T(0);
        for (int64_t i = 0; i < hw; ++i) acc += p[i];
        ov[bc] = acc / static_cast<T>(hw);
    }
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out, B, C, hw]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        const T inv = T(1) / static_cast<T>(hw);
        for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
            T* g = a.grad().data() + bc * hw;
            const T gv = gy[bc] * inv;
            for (int64_t i = 0; i < hw; ++i) g[i] += gv;
        }
    });
    return out;
}

/// Numerically stable softmax along the channel axis of [B,C,H,W].
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& a, Tape<T>* tape) {
    detail::check_image(a, "softmax_channels");
    const int B = a.dim(0), C = a.dim(1);
    const int64_t hw = static_cast<int64_t>(a.dim(2)) * a.dim(3);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto av = a.values();
    auto ov = out.values();
    for (int b = 0; b < B; ++b) {
        const T* xb = av.data() + static_cast<int64_t>(b) * C * hw;
        T* ob = ov.data() + static_cast<int64_t>(b) * C * hw;
        for (int64_t p = 0; p < hw; ++p) {
            T mx = xb[p];
            for (int c = 1; c < C; ++c) mx = std::max(mx, xb[c * hw + p]);
            T denom = T(0);
            for (int c = 0; c < C; ++c) {
                T e = std::exp(xb[c * hw + p] - mx);
                ob[c * hw + p] = e;
                denom += e;
            }
            const T inv = T(1) / denom;
            for (int c = 0; c < C; ++c) ob[c * hw + p] *= inv;
        }
    }
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out, B, C, hw]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        auto pv = out.values();
        for (int b = 0; b < B; ++b) {
            const int64_t base = static_cast<int64_t>(b) * C * hw;
            for (int64_t p = 0; p < hw; ++p) {
                T dot = T(0);
                for (int c = 0; c < C; ++c) dot += gy[base + c * hw + p] * pv[base + c * hw + p];
                for (int c = 0; c < C; ++c) {
                    const int64_t i = base + c * hw + p;
                    a.grad()[i] += pv[i] * (gy[i] - dot);
                }
            }
        }
    });
    return out;
}

namespace detail {

// Shared L2-normalization kernel over strided vectors.
template <typename T>
Tensor<T> l2_normalize_strided(const Tensor<T>& a, int64_t nvec, int64_t dim, int64_t stride,
                               int64_t group, int64_t group_stride, Tape<T>* tape) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    auto norms = std::make_shared<std::vector<T>>(static_cast<size_t>(nvec));
    auto av = a.values();
    auto ov = out.values();
    for (int64_t v = 0; v < nvec; ++v) {
        const int64_t base = (v / group) * group_stride + (v % group);
        T ss = T(0);
        for (int64_t d = 0; d < dim; ++d) {
            T x = av[base + d * stride];
            ss += x * x;
        }
        T n = std::sqrt(ss);
        if (n < T(1e-12)) n = T(1e-12);
        (*norms)[static_cast<size_t>(v)] = n;
        const T inv = T(1) / n;
        for (int64_t d = 0; d < dim; ++d) ov[base + d * stride] = av[base + d * stride] * inv;
    }
    mark_and_record(tape, a.requires_grad(), out,
                    [a, out, norms, nvec, dim, stride, group, group_stride]() mutable {
                        if (!out.has_grad()) return;
                        a.ensure_grad();
                        auto gy = out.grad();
                        auto yv = out.values();
                        auto ga = a.grad();
                        for (int64_t v = 0; v < nvec; ++v) {
                            const int64_t base = (v / group) * group_stride + (v % group);
                            const T inv = T(1) / (*norms)[static_cast<size_t>(v)];
                            T dot = T(0);
                            for (int64_t d = 0; d < dim; ++d)
                                dot += gy[base + d * stride] * yv[base + d * stride];
                            for (int64_t d = 0; d < dim; ++d) {
                                const int64_t i = base + d * stride;
                                ga[i] += (gy[i] - yv[i] * dot) * inv;
                            }
                        }
                    });
    return out;
}

}  // namespace detail

/// Row-wise L2 normalization of [N,D].
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& a, Tape<T>* tape) {
    if (a.ndim() != 2) throw ShapeError("l2_normalize_rows: expected [N,D], got " + shape_str(a.shape()));
    const int64_t N = a.dim(0), D = a.dim(1);
    return detail::l2_normalize_strided(a, N, D, /*stride=*/1, /*group=*/1, /*group_stride=*/D, tape);
}

/// Per-pixel L2 normalization along the channel axis of [B,C,H,W].
template <typename T>
Tensor<T> l2_normalize_channels(const Tensor<T>& a, Tape<T>* tape) {
    detail::check_image(a, "l2_normalize_channels");
    const int64_t B = a.dim(0), C = a.dim(1);
    const int64_t hw = static_cast<int64_t>(a.dim(2)) * a.dim(3);
    return detail::l2_normalize_strided(a, B * hw, C, /*stride=*/hw, /*group=*/hw,
                                        /*group_stride=*/C * hw, tape);
}

/// Row-wise log(sum(exp(x))) of [N,M] with max subtraction, -> [N].
template <typename T>
Tensor<T> logsumexp_rows(const Tensor<T>& a, Tape<T>* tape) {
    if (a.ndim() != 2) throw ShapeError("logsumexp_rows: expected [N,M], got " + shape_str(a.shape()));
    const int N = a.dim(0), M = a.dim(1);
    Tensor<T> out = Tensor<T>::zeros({N});
    auto av = a.values();
    auto ov = out.values();
    for (int i = 0; i < N; ++i) {
        const T* row = av.data() + static_cast<int64_t>(i) * M;
        T mx = row[0];
        for (int j = 1; j < M; ++j) mx = std::max(mx, row[j]);
        T acc = T(0);
        for (int j = 0; j < M; ++j) acc += std::exp(row[j] - mx);
        ov[i] = mx + std::log(acc);
    }
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out, N, M]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        auto av = a.values();
        auto lse = out.values();
        auto ga = a.grad();
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < M; ++j) {
                const int64_t k = static_cast<int64_t>(i) * M + j;
                ga[k] += gy[i] * std::exp(av[k] - lse[i]);
            }
    });
    return out;
}

/// out[i] = a[i, idx[i]] for a [N,M] matrix -> [N].
template <typename T>
Tensor<T> select_columns(const Tensor<T>& a, const std::vector<int>& idx, Tape<T>* tape) {
    if (a.ndim() != 2 || static_cast<int64_t>(idx.size()) != a.dim(0))
        throw ShapeError("select_columns: index count must match rows of " + shape_str(a.shape()));
    const int N = a.dim(0), M = a.dim(1);
    for (int i : idx)
        if (i < 0 || i >= M) throw ShapeError("select_columns: index " + std::to_string(i) + " out of range");
    Tensor<T> out = Tensor<T>::zeros({N});
    auto av = a.values();
    auto ov = out.values();
    for (int i = 0; i < N; ++i) ov[i] = av[static_cast<int64_t>(i) * M + idx[static_cast<size_t>(i)]];
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out, idx, N, M]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        for (int i = 0; i < N; ++i)
            a.grad()[static_cast<int64_t>(i) * M + idx[static_cast<size_t>(i)]] += gy[i];
    });
    return out;
}

/// Copies into a new shape with identical element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape, Tape<T>* tape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    Tensor<T> out = Tensor<T>::from_vector(std::move(shape),
                                           std::vector<T>(a.values().begin(), a.values().end()));
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        auto ga = a.grad();
        for (int64_t i = 0; i < a.numel(); ++i) ga[i] += gy[i];
    });
    return out;
}

/// Rows [start, start+count) of the leading axis.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int start, int count, Tape<T>* tape) {
    if (a.ndim() < 1 || start < 0 || count < 1 || start + count > a.dim(0))
        throw ShapeError("slice_rows: [" + std::to_string(start) + "," +
                         std::to_string(start + count) + ") out of " + shape_str(a.shape()));
    const int64_t row = a.numel() / a.dim(0);
    Shape s = a.shape();
    s[0] = count;
    Tensor<T> out = Tensor<T>::zeros(s);
    std::memcpy(out.values().data(), a.values().data() + start * row,
                sizeof(T) * static_cast<size_t>(count * row));
    detail::mark_and_record(tape, a.requires_grad(), out, [a, out, start, count, row]() mutable {
        if (!out.has_grad()) return;
        a.ensure_grad();
        auto gy = out.grad();
        T* ga = a.grad().data() + start * row;
        for (int64_t i = 0; i < count * row; ++i) ga[i] += gy[i];
    });
    return out;
}

/// One sampled patch location inside a [B,C,H,W] feature map.
struct PatchLoc {
    int image;     // batch index
    int center_y;
    int center_x;
};

/// Average-pools a p x p window at each location -> [K,C]. Windows must lie
/// fully inside the map; callers resample out-of-bounds draws instead.
template <typename T>
Tensor<T> extract_patch_means(const Tensor<T>& map, const std::vector<PatchLoc>& locs, int p,
                              Tape<T>* tape) {
    detail::check_image(map, "extract_patch_means");
    if (p < 1 || p % 2 == 0) throw ShapeError("extract_patch_means: patch size must be odd");
    const int B = map.dim(0), C = map.dim(1), H = map.dim(2), W = map.dim(3);
    const int h = p / 2;
    for (const auto& l : locs)
        if (l.image < 0 || l.image >= B || l.center_y - h < 0 || l.center_y + h >= H ||
            l.center_x - h < 0 || l.center_x + h >= W)
            throw ShapeError("extract_patch_means: window outside map");
    const int K = static_cast<int>(locs.size());
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor<T> out = Tensor<T>::zeros({K, C});
    auto mv = map.values();
    auto ov = out.values();
    const T inv = T(1) / static_cast<T>(p * p);
    for (int kk = 0; kk < K; ++kk) {
        const auto& l = locs[static_cast<size_t>(kk)];
        for (int c = 0; c < C; ++c) {
            const T* plane = mv.data() + (static_cast<int64_t>(l.image) * C + c) * hw;
            T acc = T(0);
            for (int y = l.center_y - h; y <= l.center_y + h; ++y)
                for (int x = l.center_x - h; x <= l.center_x + h; ++x) acc += plane[y * W + x];
            ov[static_cast<int64_t>(kk) * C + c] = acc * inv;
        }
    }
    detail::mark_and_record(tape, map.requires_grad(), out, [map, out, locs, p, C, W, hw, h,
                                                             inv]() mutable {
        if (!out.has_grad()) return;
        map.ensure_grad();
        auto gy = out.grad();
        for (size_t kk = 0; kk < locs.size(); ++kk) {
            const auto& l = locs[kk];
            for (int c = 0; c < C; ++c) {
                T* plane = map.grad().data() + (static_cast<int64_t>(l.image) * C + c) * hw;
                const T g = gy[static_cast<int64_t>(kk) * C + c] * inv;
                for (int y = l.center_y - h; y <= l.center_y + h; ++y)
                    for (int x = l.center_x - h; x <= l.center_x + h; ++x) plane[y * W + x] += g;
            }
        }
    });
    return out;
}

}  // namespace sslseg
